// htstab command-line front end.
//
// Exit codes: 0 success, 1 validation failure, 2 runtime failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "htstab/experiments.hpp"

namespace fs = std::filesystem;
using namespace htstab;

namespace {

constexpr int kOk = 0;
constexpr int kInvalid = 1;
constexpr int kRuntime = 2;

void print_issues(const config_error& e) {
  for (const auto& i : e.issues()) std::cerr << "config error at " << (i.path.empty() ? "/" : i.path) << ": " << i.message << "\n";
}

int cmd_run(const std::string& path, const std::optional<std::string>& out, std::optional<std::int64_t> threads) {
  ExperimentConfig cfg = load_config(path);
  if (threads) cfg.threads = *threads;
  std::optional<fs::path> dir;
  if (out) dir = *out;
  const ExperimentOutputs o = run_experiment(cfg, dir);
  std::cout << "report: " << o.report.string() << "\n";
  std::cout << "table:  " << o.csv.string() << "\n";
  for (const auto& c : o.charts) std::cout << "chart:  " << c.string() << "\n";
  if (o.failed_cells > 0) std::cerr << "warning: " << o.failed_cells << " sweep cell(s) failed; see the report\n";
  if (cfg.kind == ExperimentKind::LemmaSuite && !o.all_passed) {
    std::cerr << "one or more lemma checks failed\n";
    return kRuntime;
  }
  return kOk;
}

int cmd_validate(const std::string& path, bool report) {
  if (report) {
    std::ifstream f(path);
    if (!f) throw io_error("cannot open " + path);
    json doc;
    try {
      doc = json::parse(f);
    } catch (const json::parse_error& e) {
      std::cerr << "parse error: " << e.what() << "\n";
      return kInvalid;
    }
    const auto errs = validate_report(doc);
    for (const auto& e : errs) std::cerr << "report error: " << e << "\n";
    if (!errs.empty()) return kInvalid;
    std::cout << "report is valid (schema version " << kReportSchemaVersion << ")\n";
    return kOk;
  }
  const ExperimentConfig cfg = load_config(path);
  std::cout << "config is valid: " << to_string(cfg.kind) << " '" << cfg.name << "'\n";
  return kOk;
}

int cmd_bounds(const std::string& alg_name, std::int64_t n, double p, double scale, double L, double G, double Delta, double sigma) {
  const auto alg = parse_algorithm(alg_name);
  if (!alg) {
    std::cerr << "unknown algorithm '" << alg_name << "' (expected clipped_sgd, nsgd_b, nsgd_m or nsgd_cm)\n";
    return kInvalid;
  }
  const Schedule s = schedule_for(*alg, n, p, scale);
  const BoundReport r = theoretical_report(*alg, s, {L, G, Delta}, {p, sigma}, n);
  json j = to_json(r);
  j["n"] = n;
  j["p"] = p;
  j["scale"] = scale;
  j["predicted_rate_exponent"] = predicted_rate_exponent(*alg, p);
  j["tau_star"] = p < 2.0 ? json(tau_star(p, n, sigma)) : json("inf");
  j["C_p"] = c_p_constant(p);
  std::cout << j.dump(2) << "\n";
  return kOk;
}

int cmd_lemmas(std::uint64_t seed, const std::optional<std::string>& out) {
  LemmaSuiteOptions o;
  o.seed = seed;
  const auto checks = run_lemma_suite(o);
  bool ok = true;
  for (const auto& c : checks) {
    ok = ok && c.passed;
    std::printf("%s  %-64s  n=%lld  worst_margin=%.3g  %.2fs\n", c.passed ? "PASS" : "FAIL", c.name.c_str(),
                static_cast<long long>(c.instances), c.worst_margin, c.seconds);
  }
  if (out) {
    ExperimentConfig cfg = parse_config(json{{"kind", "lemma_suite"}, {"name", "lemmas"}, {"seed", seed}});
    run_experiment(cfg, fs::path(*out));
  }
  return ok ? kOk : kRuntime;
}

int cmd_dataset(const std::string& family, std::int64_t n, std::int64_t dim, std::uint64_t seed, const std::string& out,
                const std::optional<std::string>& inspect) {
  if (inspect) {
    const Dataset ds = load_dataset(*inspect);
    std::cout << json{{"family", to_string(ds.kind())}, {"n", ds.size()}, {"width", ds.width()},
                      {"content_hash", detail::hex64(ds.content_hash())}}
                     .dump(2)
              << "\n";
    return kOk;
  }
  ExperimentConfig cfg = parse_config(json{{"kind", "lemma_suite"}, {"problem", {{"family", family}, {"dim", dim}}}, {"seed", seed}});
  const auto fam = detail::build_family(cfg.problem, seed);
  SeededRng rng(seed, 0xDA7A);
  save_dataset(fam->draw_dataset(n, rng), out);
  std::cout << "wrote " << out << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"htstab: heavy-tailed stochastic optimizers, stability and generalization experiments"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kLibraryVersion);

  std::string config_path, csv_path, alg_name;
  std::optional<std::string> out_dir, metric, chart_out, inspect;
  std::optional<std::int64_t> threads;
  bool as_report = false;
  std::int64_t n = 1000, dim = 8;
  double p = 2.0, scale = 1.0, L = 1.0, G = 1.0, Delta = 1.0, sigma = 1.0;
  std::uint64_t seed = 2024;
  std::string family = "quad_plus_sine", ds_out = "dataset.htds";

  auto* run = app.add_subcommand("run", "run an experiment config");
  run->add_option("config", config_path, "experiment config (JSON)")->required();
  run->add_option("-o,--out", out_dir, std::string("output directory (default: config output_dir, then $") + kOutputDirEnv + ")");
  run->add_option("-j,--threads", threads, "worker threads (0 = all cores)");

  auto* validate = app.add_subcommand("validate", "validate a config (or a report with --report)");
  validate->add_option("file", config_path, "config or report file")->required();
  validate->add_flag("--report", as_report, "validate a report against the report schema");

  auto* bounds = app.add_subcommand("bounds", "print the schedule and theoretical bound breakdown");
  bounds->add_option("algorithm", alg_name, "clipped_sgd | nsgd_b | nsgd_m | nsgd_cm")->required();
  bounds->add_option("--n", n, "sample size")->check(CLI::PositiveNumber);
  bounds->add_option("--p", p, "moment order in (1, 2]");
  bounds->add_option("--scale", scale, "schedule scale factor");
  bounds->add_option("--L", L, "smoothness constant");
  bounds->add_option("--G", G, "gradient noise scale G");
  bounds->add_option("--Delta", Delta, "initial suboptimality");
  bounds->add_option("--sigma", sigma, "p-th moment bound sigma_p");

  auto* lemmas = app.add_subcommand("lemmas", "run the inequality and identity check suite");
  lemmas->add_option("--seed", seed, "suite seed");
  lemmas->add_option("-o,--out", out_dir, "also write a report into this directory");

  auto* chart = app.add_subcommand("chart", "render a log-log SVG chart from a sweep CSV");
  chart->add_option("csv", csv_path, "sweep CSV")->required();
  chart->add_option("--metric", metric, "column to plot (default: first known metric column)");
  chart->add_option("-o,--out", chart_out, "output SVG path");

  auto* dataset = app.add_subcommand("dataset", "write a sampled dataset as .htds, or inspect one");
  dataset->add_option("--family", family, "logistic_pair | robust_regression | quad_plus_sine");
  dataset->add_option("--n", n, "number of records")->check(CLI::PositiveNumber);
  dataset->add_option("--dim", dim, "problem dimension")->check(CLI::PositiveNumber);
  dataset->add_option("--seed", seed, "sampling seed");
  dataset->add_option("-o,--out", ds_out, "output .htds path");
  dataset->add_option("--inspect", inspect, "print the header of an existing .htds file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kInvalid;
  }

  try {
    if (*run) return cmd_run(config_path, out_dir, threads);
    if (*validate) return cmd_validate(config_path, as_report);
    if (*bounds) return cmd_bounds(alg_name, n, p, scale, L, G, Delta, sigma);
    if (*lemmas) return cmd_lemmas(seed, out_dir);
    if (*chart) {
      std::optional<fs::path> target;
      if (chart_out) target = *chart_out;
      std::cout << "chart: " << chart_csv(csv_path, metric, target).string() << "\n";
      return kOk;
    }
    if (*dataset) return cmd_dataset(family, n, dim, seed, ds_out, inspect);
  } catch (const config_error& e) {
    print_issues(e);
    return kInvalid;
  } catch (const invalid_argument& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return kInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kRuntime;
}
