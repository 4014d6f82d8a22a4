#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "htstab/experiments.hpp"

using namespace htstab;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("htstab_test_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

json small_sweep(const std::string& kind) {
  return json{{"name", "t"},
              {"kind", kind},
              {"problem", {{"family", "quad_plus_sine"}, {"dim", 3}, {"noise", {{"family", "student_t"}, {"tail_index", 3.0}}}}},
              {"algorithms", {"nsgd_b", "nsgd_m"}},
              {"n_grid", {64, 128, 256}},
              {"p", 2.0},
              {"reps", 12},
              {"probes", 4},
              {"bootstrap", 50},
              {"seed", 9}};
}

std::vector<std::string> issue_paths(const json& doc) {
  try {
    parse_config(doc);
  } catch (const config_error& e) {
    std::vector<std::string> out;
    for (const auto& i : e.issues()) out.push_back(i.path);
    return out;
  }
  return {};
}

bool has(const std::vector<std::string>& v, const std::string& s) { return std::find(v.begin(), v.end(), s) != v.end(); }

}  // namespace

TEST(FitRate, ExactPowerLaw) {
  std::vector<std::pair<double, double>> pts;
  for (int k = 8; k <= 14; ++k) {
    const double n = std::ldexp(1.0, k);
    pts.emplace_back(n, std::pow(n, -0.125));
  }
  const RateFit f = fit_rate(pts, -0.125);
  EXPECT_NEAR(f.slope, -0.125, 1e-12);
  EXPECT_NEAR(f.r_squared, 1.0, 1e-12);
  EXPECT_NEAR(f.intercept, 0.0, 1e-10);
  EXPECT_EQ(f.predicted_slope, -0.125);
  EXPECT_EQ(f.points.size(), 7u);
}

TEST(FitRate, TwoPointsInterpolate) {
  const RateFit f = fit_rate({{10.0, 3.0}, {1000.0, 0.3}}, -0.5);
  EXPECT_NEAR(f.slope, -0.5, 1e-14);
  EXPECT_EQ(f.slope_stderr, 0.0);
}

TEST(FitRate, NoisyPowerLaw) {
  SeededRng rng(1, 0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::pair<double, double>> pts;
    for (int k = 8; k <= 14; ++k) {
      const double n = std::ldexp(1.0, k);
      pts.emplace_back(n, 2.0 * std::pow(n, -0.25) * (1.0 + 0.1 * rng.uniform(-1.0, 1.0)));
    }
    const RateFit f = fit_rate(pts, -0.25);
    EXPECT_NEAR(f.slope, -0.25, 0.05);
    EXPECT_GE(f.r_squared, 0.0);
    EXPECT_LE(f.r_squared, 1.0);
  }
}

TEST(FitRate, ScaleEquivariant) {
  SeededRng rng(2, 0);
  std::vector<std::pair<double, double>> pts, scaled;
  for (int k = 0; k < 6; ++k) {
    const double n = 100.0 * (k + 1), m = rng.uniform(0.1, 2.0);
    pts.emplace_back(n, m);
    scaled.emplace_back(n, 37.0 * m);
  }
  const RateFit a = fit_rate(pts, -0.1), b = fit_rate(scaled, -0.1);
  EXPECT_NEAR(a.slope, b.slope, 1e-12);
  EXPECT_NEAR(b.intercept - a.intercept, std::log(37.0), 1e-12);
}

TEST(FitRate, RejectsBadInput) {
  EXPECT_THROW(fit_rate({{10.0, 1.0}}, -0.1), invalid_argument);
  EXPECT_THROW(fit_rate({{10.0, 1.0}, {20.0, 0.0}}, -0.1), invalid_argument);
  EXPECT_THROW(fit_rate({{10.0, 1.0}, {20.0, -1.0}}, -0.1), invalid_argument);
}

TEST(CompareAlgorithms, ReferenceColumnAndRowCount) {
  std::vector<AlgorithmSeries> series;
  for (Algorithm a : {Algorithm::ClippedSGD, Algorithm::NsgdB, Algorithm::NsgdM, Algorithm::NsgdCM}) {
    AlgorithmSeries s{a, {}};
    for (std::int64_t n : {256, 1024, 4096}) s.points.push_back({n, std::pow(static_cast<double>(n), -0.1), 0.0});
    series.push_back(s);
  }
  const auto rows = compare_algorithms(series, 2.0);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_DOUBLE_EQ(rows[0].predicted_slope, -1.0 / 12.0);
  EXPECT_DOUBLE_EQ(rows[1].predicted_slope, -1.0 / 8.0);
  EXPECT_EQ(rows[2].predicted_slope, rows[3].predicted_slope);
  EXPECT_EQ(rows[0].predicted_rank, 4);
  EXPECT_EQ(rows[1].predicted_rank, 1);
  for (const auto& r : rows) {
    ASSERT_TRUE(r.fit);
    EXPECT_NEAR(r.fit->slope, -0.1, 1e-12);
  }
  EXPECT_THROW(compare_algorithms({series[0]}, 2.0), invalid_argument);
}

TEST(Config, ValidDocumentParses) {
  const ExperimentConfig c = parse_config(small_sweep("stability_sweep"));
  EXPECT_EQ(c.kind, ExperimentKind::StabilitySweep);
  EXPECT_EQ(c.n_grid, (std::vector<std::int64_t>{64, 128, 256}));
  EXPECT_EQ(c.algorithms.size(), 2u);
  ASSERT_TRUE(c.problem.noise);
  EXPECT_EQ(c.problem.noise->family, NoiseFamily::StudentT);
}

TEST(Config, DiagnosticsCarryFieldPaths) {
  json doc = small_sweep("stability_sweep");
  doc["n_grid"] = {512, 256};
  doc["algorithms"] = {"nsgd_m", "adam"};
  doc["reps"] = 5;
  doc["p"] = 2.5;
  doc["problem"]["noise"]["tail_index"] = 0.5;
  doc["bogus"] = 1;
  const auto paths = issue_paths(doc);
  EXPECT_TRUE(has(paths, "/n_grid/1"));
  EXPECT_TRUE(has(paths, "/algorithms/1"));
  EXPECT_TRUE(has(paths, "/reps"));
  EXPECT_TRUE(has(paths, "/p"));
  EXPECT_TRUE(has(paths, "/problem/noise"));
  EXPECT_TRUE(has(paths, "/bogus"));
}

TEST(Config, SweepNeedsTwoGridPoints) {
  json doc = small_sweep("gen_gap_sweep");
  doc["n_grid"] = {64};
  EXPECT_TRUE(has(issue_paths(doc), "/n_grid"));
}

TEST(Config, KindRequired) {
  json doc = small_sweep("stability_sweep");
  doc.erase("kind");
  EXPECT_TRUE(has(issue_paths(doc), "/kind"));
  EXPECT_TRUE(has(issue_paths(json::array()), ""));
}

TEST(Config, TypeErrors) {
  json doc = small_sweep("stability_sweep");
  doc["reps"] = "many";
  doc["problem"]["dim"] = 2.5;
  const auto paths = issue_paths(doc);
  EXPECT_TRUE(has(paths, "/reps"));
  EXPECT_TRUE(has(paths, "/problem/dim"));
}

TEST(Config, GenGapNeedsPopulationGradient) {
  json doc = small_sweep("gen_gap_sweep");
  doc["problem"] = {{"family", "robust_regression"}, {"dim", 2}, {"holdout", 0}};
  EXPECT_TRUE(has(issue_paths(doc), "/problem"));
}

TEST(Config, LoadWithComments) {
  const fs::path d = scratch("cfg");
  std::ofstream(d / "c.json") << "{\n  // comment\n  \"kind\": \"lemma_suite\"\n}\n";
  EXPECT_EQ(load_config(d / "c.json").kind, ExperimentKind::LemmaSuite);
  std::ofstream(d / "bad.json") << "{ \"kind\": ";
  EXPECT_THROW(load_config(d / "bad.json"), config_error);
  EXPECT_THROW(load_config(d / "missing.json"), io_error);
}

TEST(RunExperiment, StabilitySweepIsByteReproducible) {
  const ExperimentConfig c = parse_config(small_sweep("stability_sweep"));
  const fs::path d1 = scratch("rep1"), d2 = scratch("rep2");
  const auto o1 = run_experiment(c, d1);
  ExperimentConfig c4 = c;
  c4.threads = 3;
  const auto o2 = run_experiment(c4, d2);
  EXPECT_EQ(slurp(o1.csv), slurp(o2.csv));
  EXPECT_FALSE(slurp(o1.csv).empty());
  // every byte of the report outside metadata (and the echoed thread count) matches
  json r1 = json::parse(slurp(o1.report)), r2 = json::parse(slurp(o2.report));
  for (json* r : {&r1, &r2}) {
    r->erase("metadata");
    (*r)["environment"].erase("threads");
  }
  EXPECT_EQ(r1, r2);
}

TEST(RunExperiment, ReportsValidateAgainstSchema) {
  for (const char* kind : {"stability_sweep", "gen_gap_sweep", "rate_comparison"}) {
    json doc = small_sweep(kind);
    const auto out = run_experiment(parse_config(doc), scratch(std::string("schema_") + kind));
    const json r = json::parse(slurp(out.report));
    EXPECT_TRUE(validate_report(r).empty()) << kind;
    EXPECT_EQ(r["results"]["cells"].size(), 6u);
    EXPECT_EQ(r["status"], "ok");
    EXPECT_FALSE(r["caveats"].empty());
    EXPECT_EQ(out.charts.size(), 1u);
    EXPECT_EQ(slurp(out.charts[0]).rfind("<svg", 0), 0u);
  }
}

TEST(RunExperiment, RateComparisonTable) {
  const auto out = run_experiment(parse_config(small_sweep("rate_comparison")), scratch("rate"));
  const json r = json::parse(slurp(out.report));
  ASSERT_EQ(r["results"]["comparison"].size(), 2u);
  EXPECT_DOUBLE_EQ(r["results"]["comparison"][0]["predicted_slope"].get<double>(), -1.0 / 8.0);
}

TEST(RunExperiment, LemmaSuiteReport) {
  json doc{{"kind", "lemma_suite"}, {"name", "lem"}, {"lemmas", {{"random_instances", 500}, {"martingale_trials", 500}, {"grid_points", 200}}}};
  const auto out = run_experiment(parse_config(doc), scratch("lemmas"));
  EXPECT_TRUE(out.all_passed);
  const json r = json::parse(slurp(out.report));
  EXPECT_TRUE(validate_report(r).empty());
  EXPECT_GE(r["results"]["checks"].size(), 8u);
  for (const auto& c : r["results"]["checks"]) EXPECT_TRUE(c["passed"].get<bool>()) << c["name"];
}

TEST(RunExperiment, RandomWalkTable) {
  json doc{{"kind", "random_walk_demo"}, {"name", "rw"}, {"random_walk", {{"eta", 0.2}, {"steps", 100}, {"seeds", 400}, {"every", 10}}}};
  const auto out = run_experiment(parse_config(doc), scratch("rw"));
  const json r = json::parse(slurp(out.report));
  EXPECT_TRUE(validate_report(r).empty());
  const auto& table = r["results"]["table"];
  ASSERT_EQ(table.size(), 10u);
  EXPECT_EQ(table.back()["t"], 100);
  EXPECT_NEAR(table.back()["predicted_var"].get<double>(), 0.04 * 100, 1e-12);
  EXPECT_NEAR(table.back()["ratio"].get<double>(), 1.0, 0.25);
}

TEST(RunExperiment, HoldoutGapSweep) {
  json doc = small_sweep("gen_gap_sweep");
  doc["problem"] = {{"family", "robust_regression"}, {"dim", 2}, {"holdout", 100}};
  const auto out = run_experiment(parse_config(doc), scratch("cells"));
  const json r = json::parse(slurp(out.report));
  EXPECT_EQ(r["results"]["cells"].size(), 6u);
  EXPECT_TRUE(validate_report(r).empty());
  for (const auto& c : r["results"]["cells"]) EXPECT_GT(c["population_mc_error"].get<double>(), 0.0);
}

TEST(ValidateReport, CatchesMissingFields) {
  json r{{"schema_version", 1}, {"kind", "lemma_suite"}};
  EXPECT_FALSE(validate_report(r).empty());
  r = json{{"schema_version", 99}};
  EXPECT_FALSE(validate_report(r).empty());
}

TEST(Csv, ParseRoundTrip) {
  CsvTable t;
  t.header = {"a", "b"};
  t.rows = {{"1", "x,y"}, {"2", "say \"hi\""}};
  const CsvTable back = parse_csv(t.to_string());
  EXPECT_EQ(back.header, t.header);
  EXPECT_EQ(back.rows, t.rows);
}

TEST(Chart, RendersFromCsv) {
  const fs::path d = scratch("chart");
  std::ofstream(d / "s.csv") << "algorithm,n,epsilon_hat,predicted_slope\nnsgd_m,100,0.5,-0.125\nnsgd_m,1000,0.3,-0.125\nclipped_sgd,100,0.4,-0.083\n"
                                "clipped_sgd,1000,0.35,-0.083\n";
  const fs::path svg = chart_csv(d / "s.csv");
  const std::string s = slurp(svg);
  EXPECT_NE(s.find("<svg"), std::string::npos);
  EXPECT_NE(s.find("nsgd_m"), std::string::npos);
  EXPECT_NE(s.find("stroke-dasharray"), std::string::npos);
  EXPECT_THROW(chart_csv(d / "s.csv", std::string("nope")), invalid_argument);
}

TEST(Export, TrajectoryJsonAndDump) {
  const ProblemInstance P = make_logistic_pair();
  OptimizerConfig c;
  c.algorithm = Algorithm::NsgdB;
  c.schedule = {5, 0.1, std::nullopt, std::nullopt, 1};
  c.x0 = {0.0};
  const Trajectory t = run(P, c);
  const json j = to_json(t);
  EXPECT_EQ(j["T"], 5);
  EXPECT_EQ(j["iterates"].size(), 5u);
  const fs::path d = scratch("dump");
  write_iterate_dump(t, d / "it.bin");
  EXPECT_EQ(fs::file_size(d / "it.bin"), 5u * 8u);
}
