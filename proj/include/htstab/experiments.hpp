#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <bit>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "htstab/core_math.hpp"
#include "htstab/dataset.hpp"
#include "htstab/error.hpp"
#include "htstab/lemmas.hpp"
#include "htstab/noise.hpp"
#include "htstab/optimizers.hpp"
#include "htstab/problems.hpp"
#include "htstab/stability.hpp"

namespace htstab {

using json = nlohmann::json;

inline constexpr int kReportSchemaVersion = 1;
inline constexpr const char* kLibraryVersion = "0.3.0";
inline constexpr const char* kOutputDirEnv = "HTSTAB_OUTPUT_DIR";

// ---------------------------------------------------------------------------
// Rate fitting

struct RateFit {
  double slope = 0.0;
  double slope_stderr = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  double predicted_slope = 0.0;
  std::vector<std::pair<double, double>> points;  // (log n, log metric)
};

/// Least-squares line through (log n, log metric).
inline RateFit fit_rate(const std::vector<std::pair<double, double>>& data, double predicted) {
  detail::require(data.size() >= 2, "fit_rate: need at least two points");
  RateFit fit;
  fit.predicted_slope = predicted;
  for (const auto& [n, m] : data) {
    detail::require(n > 0.0 && std::isfinite(n), "fit_rate: n must be positive");
    detail::require(m > 0.0 && std::isfinite(m), "fit_rate: metric must be positive");
    fit.points.emplace_back(std::log(n), std::log(m));
  }
  const double k = static_cast<double>(fit.points.size());
  double mx = 0.0, my = 0.0;
  for (const auto& [x, y] : fit.points) {
    mx += x;
    my += y;
  }
  mx /= k;
  my /= k;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const auto& [x, y] : fit.points) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
    syy += (y - my) * (y - my);
  }
  detail::require(sxx > 0.0, "fit_rate: n values must not all be equal");
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ssr = 0.0;
  for (const auto& [x, y] : fit.points) {
    const double r = y - (fit.intercept + fit.slope * x);
    ssr += r * r;
  }
  fit.r_squared = syy > 0.0 ? std::clamp(1.0 - ssr / syy, 0.0, 1.0) : 1.0;
  fit.slope_stderr = fit.points.size() > 2 ? std::sqrt(ssr / (k - 2.0) / sxx) : 0.0;
  return fit;
}

struct SeriesPoint {
  std::int64_t n = 0;
  double metric = 0.0;
  double std_error = 0.0;
};

struct AlgorithmSeries {
  Algorithm algorithm;
  std::vector<SeriesPoint> points;
};

struct ComparisonRow {
  Algorithm algorithm;
  std::optional<RateFit> fit;  // absent when fewer than two positive points
  double mean_metric = 0.0;
  double predicted_slope = 0.0;
  int predicted_rank = 0;  // 1 = steepest predicted decay
};

/// Fitted slope and mean metric per algorithm next to the predicted exponent.
inline std::vector<ComparisonRow> compare_algorithms(const std::vector<AlgorithmSeries>& series, double p) {
  detail::require(series.size() >= 2, "compare_algorithms: need at least two algorithms");
  std::vector<ComparisonRow> rows;
  for (const auto& s : series) {
    ComparisonRow row{s.algorithm, std::nullopt, 0.0, predicted_rate_exponent(s.algorithm, p), 0};
    std::vector<std::pair<double, double>> pts;
    double sum = 0.0;
    for (const auto& pt : s.points) {
      sum += pt.metric;
      if (pt.metric > 0.0) pts.emplace_back(static_cast<double>(pt.n), pt.metric);
    }
    if (!s.points.empty()) row.mean_metric = sum / static_cast<double>(s.points.size());
    if (pts.size() >= 2) row.fit = fit_rate(pts, row.predicted_slope);
    rows.push_back(row);
  }
  for (auto& r : rows) {
    r.predicted_rank = 1;
    for (const auto& o : rows)
      if (o.predicted_slope < r.predicted_slope - 1e-15) ++r.predicted_rank;
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Configuration

enum class ExperimentKind { StabilitySweep, GenGapSweep, RateComparison, LemmaSuite, RandomWalkDemo };

inline std::string_view to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::StabilitySweep: return "stability_sweep";
    case ExperimentKind::GenGapSweep: return "gen_gap_sweep";
    case ExperimentKind::RateComparison: return "rate_comparison";
    case ExperimentKind::LemmaSuite: return "lemma_suite";
    case ExperimentKind::RandomWalkDemo: return "random_walk_demo";
  }
  return "unknown";
}

inline std::optional<ExperimentKind> parse_experiment_kind(std::string_view s) {
  for (auto k : {ExperimentKind::StabilitySweep, ExperimentKind::GenGapSweep, ExperimentKind::RateComparison, ExperimentKind::LemmaSuite,
                 ExperimentKind::RandomWalkDemo})
    if (to_string(k) == s) return k;
  return std::nullopt;
}

struct ProblemConfig {
  ProblemKind family = ProblemKind::QuadPlusSine;
  std::int64_t dim = 8;
  double c = 0.5;
  double mean = 0.0;
  std::optional<NoiseSpec> noise = NoiseSpec{};
  std::int64_t holdout = 100000;
};

struct RandomWalkConfig {
  double eta = 0.1;
  std::int64_t steps = 400;
  std::int64_t seeds = 1000;
  std::int64_t every = 25;
};

struct ExperimentConfig {
  std::string name = "experiment";
  ExperimentKind kind = ExperimentKind::StabilitySweep;
  ProblemConfig problem;
  std::vector<Algorithm> algorithms;
  std::vector<std::int64_t> n_grid;
  double p = 2.0;
  std::optional<double> sigma_p;
  double scale = 1.0;
  std::int64_t reps = 100;
  std::int64_t probes = 64;
  std::int64_t bootstrap = 1000;
  std::uint64_t seed = 1;
  std::int64_t threads = 1;
  std::string output_dir;
  bool charts = true;
  RandomWalkConfig random_walk;
  LemmaSuiteOptions lemmas;
  json source;  // the parsed document, echoed into reports
};

struct ConfigIssue {
  std::string path;  // JSON pointer into the config
  std::string message;
};

class config_error : public std::runtime_error {
 public:
  explicit config_error(std::vector<ConfigIssue> issues) : std::runtime_error(format(issues)), issues_(std::move(issues)) {}
  const std::vector<ConfigIssue>& issues() const noexcept { return issues_; }

 private:
  static std::string format(const std::vector<ConfigIssue>& issues) {
    std::string s;
    for (const auto& i : issues) s += i.path + ": " + i.message + "\n";
    return s;
  }
  std::vector<ConfigIssue> issues_;
};

namespace detail {

class ConfigReader {
 public:
  explicit ConfigReader(std::vector<ConfigIssue>& issues) : issues_(issues) {}

  void fail(const std::string& path, const std::string& msg) { issues_.push_back({path, msg}); }

  template <typename T>
  std::optional<T> get(const json& obj, const std::string& base, const std::string& key) {
    if (!obj.contains(key)) return std::nullopt;
    const json& v = obj.at(key);
    const std::string path = base + "/" + key;
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) return fail(path, "expected a boolean"), std::nullopt;
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) return fail(path, "expected an integer"), std::nullopt;
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) return fail(path, "expected a number"), std::nullopt;
    } else {
      if (!v.is_string()) return fail(path, "expected a string"), std::nullopt;
    }
    return v.get<T>();
  }

  void check_keys(const json& obj, const std::string& base, const std::set<std::string>& allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
      if (!allowed.count(it.key())) fail(base + "/" + it.key(), "unknown field");
  }

 private:
  std::vector<ConfigIssue>& issues_;
};

}  // namespace detail

/// Parses and validates an experiment document. Throws config_error listing
/// every problem found, each tagged with its JSON pointer.
inline ExperimentConfig parse_config(const json& doc) {
  std::vector<ConfigIssue> issues;
  detail::ConfigReader rd(issues);
  ExperimentConfig cfg;
  cfg.source = doc;
  if (!doc.is_object()) throw config_error(std::vector<ConfigIssue>{{"", "config must be an object"}});

  rd.check_keys(doc, "", {"name", "kind", "problem", "algorithms", "n_grid", "p", "sigma_p", "scale", "reps", "probes", "bootstrap", "seed",
                          "threads", "output_dir", "charts", "random_walk", "lemmas"});

  if (auto v = rd.get<std::string>(doc, "", "name")) cfg.name = *v;
  if (auto v = rd.get<std::string>(doc, "", "kind")) {
    if (auto k = parse_experiment_kind(*v)) cfg.kind = *k;
    else rd.fail("/kind", "unknown experiment kind '" + *v + "'");
  } else if (!doc.contains("kind")) {
    rd.fail("/kind", "required");
  }

  if (doc.contains("problem")) {
    const json& pj = doc.at("problem");
    if (!pj.is_object()) {
      rd.fail("/problem", "expected an object");
    } else {
      rd.check_keys(pj, "/problem", {"family", "dim", "c", "mean", "noise", "holdout"});
      if (auto v = rd.get<std::string>(pj, "/problem", "family")) {
        if (auto k = parse_problem_kind(*v)) cfg.problem.family = *k;
        else rd.fail("/problem/family", "unknown problem family '" + *v + "'");
      }
      if (auto v = rd.get<std::int64_t>(pj, "/problem", "dim")) cfg.problem.dim = *v;
      if (auto v = rd.get<double>(pj, "/problem", "c")) cfg.problem.c = *v;
      if (auto v = rd.get<double>(pj, "/problem", "mean")) cfg.problem.mean = *v;
      if (auto v = rd.get<std::int64_t>(pj, "/problem", "holdout")) cfg.problem.holdout = *v;
      if (cfg.problem.dim < 1) rd.fail("/problem/dim", "must be >= 1");
      if (cfg.problem.holdout < 0) rd.fail("/problem/holdout", "must be >= 0");
      if (pj.contains("noise")) {
        const json& nj = pj.at("noise");
        if (nj.is_null()) {
          cfg.problem.noise.reset();
        } else if (!nj.is_object()) {
          rd.fail("/problem/noise", "expected an object or null");
        } else {
          rd.check_keys(nj, "/problem/noise", {"family", "tail_index", "scale"});
          NoiseSpec ns;
          if (auto v = rd.get<std::string>(nj, "/problem/noise", "family")) {
            if (auto f = parse_noise_family(*v)) ns.family = *f;
            else rd.fail("/problem/noise/family", "unknown noise family '" + *v + "'");
          }
          if (auto v = rd.get<double>(nj, "/problem/noise", "tail_index")) ns.tail_index = *v;
          if (auto v = rd.get<double>(nj, "/problem/noise", "scale")) ns.scale = *v;
          ns.dim = std::max<std::int64_t>(1, cfg.problem.dim);
          try {
            validate(ns);
          } catch (const invalid_argument& e) {
            rd.fail("/problem/noise", e.what());
          }
          cfg.problem.noise = ns;
        }
      }
    }
  }

  if (doc.contains("algorithms")) {
    const json& aj = doc.at("algorithms");
    if (!aj.is_array()) {
      rd.fail("/algorithms", "expected an array");
    } else {
      for (std::size_t i = 0; i < aj.size(); ++i) {
        const std::string path = "/algorithms/" + std::to_string(i);
        if (!aj[i].is_string()) {
          rd.fail(path, "expected a string");
          continue;
        }
        if (auto a = parse_algorithm(aj[i].get<std::string>())) cfg.algorithms.push_back(*a);
        else rd.fail(path, "unknown algorithm '" + aj[i].get<std::string>() + "'");
      }
    }
  }

  if (doc.contains("n_grid")) {
    const json& nj = doc.at("n_grid");
    if (!nj.is_array()) {
      rd.fail("/n_grid", "expected an array");
    } else {
      for (std::size_t i = 0; i < nj.size(); ++i) {
        const std::string path = "/n_grid/" + std::to_string(i);
        if (!nj[i].is_number_integer()) {
          rd.fail(path, "expected an integer");
          continue;
        }
        const auto n = nj[i].get<std::int64_t>();
        if (n < 2) rd.fail(path, "n must be >= 2");
        if (!cfg.n_grid.empty() && n <= cfg.n_grid.back()) rd.fail(path, "n grid must be strictly increasing");
        cfg.n_grid.push_back(n);
      }
    }
  }

  if (auto v = rd.get<double>(doc, "", "p")) cfg.p = *v;
  if (!(cfg.p > 1.0 && cfg.p <= 2.0)) rd.fail("/p", "must lie in (1, 2]");
  if (auto v = rd.get<double>(doc, "", "sigma_p")) {
    cfg.sigma_p = *v;
    if (*v < 0.0) rd.fail("/sigma_p", "must be >= 0");
  }
  if (auto v = rd.get<double>(doc, "", "scale")) cfg.scale = *v;
  if (!(cfg.scale > 0.0)) rd.fail("/scale", "must be > 0");
  if (auto v = rd.get<std::int64_t>(doc, "", "reps")) cfg.reps = *v;
  if (cfg.reps < 10) rd.fail("/reps", "must be >= 10");
  if (auto v = rd.get<std::int64_t>(doc, "", "probes")) cfg.probes = *v;
  if (cfg.probes < 1) rd.fail("/probes", "must be >= 1");
  if (auto v = rd.get<std::int64_t>(doc, "", "bootstrap")) cfg.bootstrap = *v;
  if (cfg.bootstrap < 2) rd.fail("/bootstrap", "must be >= 2");
  if (auto v = rd.get<std::int64_t>(doc, "", "seed")) {
    if (*v < 0) rd.fail("/seed", "must be >= 0");
    cfg.seed = static_cast<std::uint64_t>(*v);
  }
  if (auto v = rd.get<std::int64_t>(doc, "", "threads")) cfg.threads = *v;
  if (cfg.threads < 0) rd.fail("/threads", "must be >= 0");
  if (auto v = rd.get<std::string>(doc, "", "output_dir")) cfg.output_dir = *v;
  if (auto v = rd.get<bool>(doc, "", "charts")) cfg.charts = *v;

  if (doc.contains("random_walk")) {
    const json& rj = doc.at("random_walk");
    if (!rj.is_object()) {
      rd.fail("/random_walk", "expected an object");
    } else {
      rd.check_keys(rj, "/random_walk", {"eta", "steps", "seeds", "every"});
      if (auto v = rd.get<double>(rj, "/random_walk", "eta")) cfg.random_walk.eta = *v;
      if (auto v = rd.get<std::int64_t>(rj, "/random_walk", "steps")) cfg.random_walk.steps = *v;
      if (auto v = rd.get<std::int64_t>(rj, "/random_walk", "seeds")) cfg.random_walk.seeds = *v;
      if (auto v = rd.get<std::int64_t>(rj, "/random_walk", "every")) cfg.random_walk.every = *v;
      if (!(cfg.random_walk.eta > 0.0)) rd.fail("/random_walk/eta", "must be > 0");
      if (cfg.random_walk.steps < 1) rd.fail("/random_walk/steps", "must be >= 1");
      if (cfg.random_walk.seeds < 2) rd.fail("/random_walk/seeds", "must be >= 2");
      if (cfg.random_walk.every < 1) rd.fail("/random_walk/every", "must be >= 1");
    }
  }

  if (doc.contains("lemmas")) {
    const json& lj = doc.at("lemmas");
    if (!lj.is_object()) {
      rd.fail("/lemmas", "expected an object");
    } else {
      rd.check_keys(lj, "/lemmas", {"random_instances", "martingale_trials", "grid_points"});
      if (auto v = rd.get<std::int64_t>(lj, "/lemmas", "random_instances")) cfg.lemmas.random_instances = *v;
      if (auto v = rd.get<std::int64_t>(lj, "/lemmas", "martingale_trials")) cfg.lemmas.martingale_trials = *v;
      if (auto v = rd.get<std::int64_t>(lj, "/lemmas", "grid_points")) cfg.lemmas.grid_points = *v;
      if (cfg.lemmas.random_instances < 1) rd.fail("/lemmas/random_instances", "must be >= 1");
      if (cfg.lemmas.martingale_trials < 1) rd.fail("/lemmas/martingale_trials", "must be >= 1");
      if (cfg.lemmas.grid_points < 2) rd.fail("/lemmas/grid_points", "must be >= 2");
    }
  }
  cfg.lemmas.seed = cfg.seed;

  const bool sweep = cfg.kind == ExperimentKind::StabilitySweep || cfg.kind == ExperimentKind::GenGapSweep ||
                     cfg.kind == ExperimentKind::RateComparison;
  if (sweep) {
    if (cfg.n_grid.size() < 2) rd.fail("/n_grid", "sweeps need at least two grid points");
    if (cfg.algorithms.empty()) rd.fail("/algorithms", "sweeps need at least one algorithm");
    if (cfg.kind == ExperimentKind::RateComparison && cfg.algorithms.size() < 2)
      rd.fail("/algorithms", "rate comparison needs at least two algorithms");
    if (cfg.kind != ExperimentKind::StabilitySweep) {
      const bool pop = cfg.problem.family != ProblemKind::RobustRegression || cfg.problem.holdout > 0;
      const bool mean_ok = cfg.problem.family != ProblemKind::QuadPlusSine || !cfg.problem.noise || has_finite_mean(*cfg.problem.noise);
      if (!pop || !mean_ok) rd.fail("/problem", "this experiment needs a population gradient, which the problem does not provide");
    }
    if (!cfg.sigma_p && cfg.problem.noise && cfg.problem.family != ProblemKind::LogisticPair &&
        cfg.p >= moment_limit(*cfg.problem.noise) && cfg.problem.family == ProblemKind::QuadPlusSine)
      rd.fail("/p", "p must be below the noise tail index for the p-th moment to exist");
  }

  if (!issues.empty()) throw config_error(std::move(issues));
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw io_error("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(f, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw config_error(std::vector<ConfigIssue>{{"", std::string("parse error: ") + e.what()}});
  }
  return parse_config(doc);
}

// ---------------------------------------------------------------------------
// Formatting helpers

namespace detail {

inline std::string fmt_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string fmt_opt(const std::optional<double>& v) { return v ? fmt_double(*v) : ""; }
inline std::string fmt_opt(const std::optional<std::int64_t>& v) { return v ? std::to_string(*v) : ""; }

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline json schedule_json(const Schedule& s) {
  json j{{"T", s.T}, {"eta", s.eta}};
  if (s.gamma) j["gamma"] = std::isinf(*s.gamma) ? json("inf") : json(*s.gamma);
  if (s.beta) j["beta"] = *s.beta;
  if (s.B) j["B"] = *s.B;
  return j;
}

inline json estimate_json(const Estimate& e) {
  return {{"value", e.value}, {"stderr", e.std_error}, {"ci_low", e.ci_low}, {"ci_high", e.ci_high}};
}

inline json fit_json(const RateFit& f) {
  json pts = json::array();
  for (const auto& [x, y] : f.points) pts.push_back({x, y});
  return {{"slope", f.slope},         {"slope_stderr", f.slope_stderr}, {"intercept", f.intercept},
          {"r_squared", f.r_squared}, {"predicted_slope", f.predicted_slope}, {"points", pts}};
}

inline std::uint64_t hash_string(std::string_view s) {
  std::uint64_t h = kFnvOffset;
  for (unsigned char c : s) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace detail

inline json to_json(const StabilityReport& r) {
  json j{{"algorithm", to_string(r.algorithm)},
         {"schedule", detail::schedule_json(r.schedule)},
         {"n", r.n},
         {"tail", {{"p", r.tail.p}, {"sigma_p", r.tail.sigma_p}}},
         {"epsilon_hat", detail::estimate_json(r.epsilon_hat)},
         {"epsilon_theory", r.epsilon_theory},
         {"replaced_index_hits", r.hits},
         {"G_hat", r.g_hat},
         {"gen_bound_theory", r.gen_bound_theory},
         {"replication_count", r.replication_count},
         {"failures", r.failures},
         {"population_mc_error", r.population_mc_error}};
  j["gen_gap_hat"] = r.gen_gap_hat ? detail::estimate_json(*r.gen_gap_hat) : json(nullptr);
  return j;
}

inline json to_json(const BoundReport& r) {
  json terms = json::array();
  for (const auto& t : r.terms) terms.push_back({{"label", t.label}, {"kind", to_string(t.kind)}, {"value", t.value}});
  return {{"algorithm", to_string(r.algorithm)},
          {"schedule", detail::schedule_json(r.schedule)},
          {"stability_epsilon", r.stability_epsilon},
          {"terms", terms},
          {"total", r.total}};
}

/// Trajectory export: summary record plus the recorded iterates.
inline json to_json(const Trajectory& t) {
  return {{"T", t.T},
          {"output_index", t.output_index},
          {"output", t.output},
          {"final_iterate", t.final_iterate},
          {"recorded_steps", t.recorded_steps},
          {"iterates", t.iterates},
          {"step_norms", t.step_norms},
          {"grad_norms", t.grad_norms},
          {"index_log", t.index_log}};
}

/// Raw little-endian f64 dump of the recorded iterates, row-major
/// (rows = recorded steps, columns = dimension).
inline void write_iterate_dump(const Trajectory& t, const std::filesystem::path& path) {
  std::string bytes;
  for (const auto& x : t.iterates)
    for (double v : x) detail::put_u64(bytes, std::bit_cast<std::uint64_t>(v));
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw io_error("cannot write " + path.string());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

// ---------------------------------------------------------------------------
// Report schema

/// Structural validation against the published report schema
/// (docs/report.schema.json). Returns the list of problems found.
inline std::vector<std::string> validate_report(const json& r) {
  std::vector<std::string> errs;
  auto need = [&](const json& obj, const std::string& key, auto pred, const char* what) {
    if (!obj.is_object() || !obj.contains(key)) {
      errs.push_back("missing field '" + key + "'");
      return;
    }
    if (!pred(obj.at(key))) errs.push_back("field '" + key + "' must be " + what);
  };
  auto is_int = [](const json& v) { return v.is_number_integer(); };
  auto is_str = [](const json& v) { return v.is_string(); };
  auto is_obj = [](const json& v) { return v.is_object(); };
  auto is_arr = [](const json& v) { return v.is_array(); };
  need(r, "schema_version", is_int, "an integer");
  if (r.contains("schema_version") && r["schema_version"] != kReportSchemaVersion) errs.push_back("unsupported schema_version");
  need(r, "kind", is_str, "a string");
  need(r, "name", is_str, "a string");
  need(r, "config", is_obj, "an object");
  need(r, "config_hash", is_str, "a string");
  need(r, "environment", is_obj, "an object");
  need(r, "metadata", is_obj, "an object");
  need(r, "results", is_obj, "an object");
  need(r, "caveats", is_arr, "an array");
  need(r, "status", is_str, "a string");
  if (r.contains("metadata") && r["metadata"].is_object()) need(r["metadata"], "timestamp", is_str, "a string");
  if (!errs.empty() || !r.contains("kind")) return errs;
  const json& res = r["results"];
  const std::string kind = r["kind"];
  if (kind == "stability_sweep" || kind == "gen_gap_sweep" || kind == "rate_comparison") {
    need(res, "cells", is_arr, "an array");
    need(res, "fits", is_arr, "an array");
    if (res.contains("cells") && res["cells"].is_array())
      for (const auto& c : res["cells"]) {
        need(c, "algorithm", is_str, "a string");
        need(c, "n", is_int, "an integer");
        need(c, "status", is_str, "a string");
      }
    if (kind == "rate_comparison") need(res, "comparison", is_arr, "an array");
  } else if (kind == "lemma_suite") {
    need(res, "checks", is_arr, "an array");
    if (res.contains("checks") && res["checks"].is_array())
      for (const auto& c : res["checks"]) {
        need(c, "name", is_str, "a string");
        need(c, "passed", [](const json& v) { return v.is_boolean(); }, "a boolean");
      }
  } else if (kind == "random_walk_demo") {
    need(res, "table", is_arr, "an array");
  } else {
    errs.push_back("unknown report kind '" + kind + "'");
  }
  return errs;
}

// ---------------------------------------------------------------------------
// Experiment execution

struct ExperimentOutputs {
  std::filesystem::path report;
  std::filesystem::path csv;
  std::vector<std::filesystem::path> charts;
  bool all_passed = true;    // lemma checks / bound checks
  std::int64_t failed_cells = 0;
};

namespace detail {

inline std::shared_ptr<const ProblemFamily> build_family(const ProblemConfig& pc, std::uint64_t seed) {
  switch (pc.family) {
    case ProblemKind::LogisticPair: return ProblemFamily::logistic_pair();
    case ProblemKind::QuadPlusSine: return ProblemFamily::quad_plus_sine(pc.dim, pc.noise, {pc.c, pc.mean});
    case ProblemKind::RobustRegression: {
      SeededRng rng(seed, 0xFA31);
      return ProblemFamily::robust_regression(pc.dim, pc.noise, rng, pc.holdout);
    }
  }
  throw invalid_argument("unknown problem family");
}

// sigma_p of the gradient noise: from the config, or estimated by fresh
// draws at the origin and two random points (max taken).
inline double resolve_sigma_p(const ExperimentConfig& cfg, const ProblemFamily& family) {
  if (cfg.sigma_p) return *cfg.sigma_p;
  if (!family.has_population_grad()) return 0.0;
  SeededRng rng(cfg.seed, 0x516A);
  std::vector<Vector> pts{zeros(family.dim())};
  for (int k = 0; k < 2; ++k) {
    Vector x(family.dim());
    for (double& v : x) v = rng.normal();
    pts.push_back(x);
  }
  struct Source {
    const ProblemFamily& f;
    Vector draw_sample(SeededRng& r) const { return f.draw_sample(r); }
    Vector sample_grad(std::span<const double> x, const Vector& rec) const { return f.sample_grad(x, rec); }
    Vector population_grad(std::span<const double> x) const { return f.population_grad(x); }
  } src{family};
  return verify_p_bcm(src, pts, cfg.p, 20000, rng).max_sigma_hat;
}

inline std::filesystem::path resolve_output_dir(const ExperimentConfig& cfg, const std::optional<std::filesystem::path>& override_dir) {
  if (override_dir) return *override_dir;
  if (!cfg.output_dir.empty()) return cfg.output_dir;
  if (const char* env = std::getenv(kOutputDirEnv); env && *env) return env;
  return "htstab-out";
}

inline std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline json environment_json(const ExperimentConfig& cfg) {
  return {{"library_version", kLibraryVersion},
#if defined(__clang__)
          {"compiler", std::string("clang ") + __clang_version__},
#elif defined(__GNUC__)
          {"compiler", std::string("gcc ") + __VERSION__},
#else
          {"compiler", "unknown"},
#endif
          {"cxx_standard", static_cast<long>(__cplusplus)},
          {"threads", cfg.threads}};
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw io_error("cannot write " + path.string());
  f << text;
  if (!f) throw io_error("write failed for " + path.string());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// CSV + SVG charts

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::string to_string() const {
    std::string out;
    auto line = [&](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out += ',';
        out += detail::csv_escape(cells[i]);
      }
      out += '\n';
    };
    line(header);
    for (const auto& r : rows) line(r);
    return out;
  }

  std::optional<std::size_t> column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    return std::nullopt;
  }
};

inline CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::vector<std::string> row;
  std::string cell;
  bool quoted = false;
  auto flush_row = [&] {
    row.push_back(cell);
    cell.clear();
    if (t.header.empty()) t.header = row;
    else t.rows.push_back(row);
    row.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
        cell += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cell += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      row.push_back(cell);
      cell.clear();
    } else if (c == '\n') {
      flush_row();
    } else if (c != '\r') {
      cell += c;
    }
  }
  if (!cell.empty() || !row.empty()) flush_row();
  if (t.header.empty()) throw malformed_file("empty CSV");
  return t;
}

/// Log-log line chart of `metric` vs n, one series per algorithm, with a
/// dashed reference line of the predicted slope anchored at each series'
/// first point.
inline std::string render_chart_svg(const CsvTable& t, const std::string& metric, const std::string& title) {
  const auto ci = t.column("algorithm");
  const auto cn = t.column("n");
  const auto cm = t.column(metric);
  const auto cp = t.column("predicted_slope");
  if (!ci || !cn || !cm) throw invalid_argument("chart: CSV needs algorithm, n and " + metric + " columns");

  std::map<std::string, std::vector<std::pair<double, double>>> series;
  std::map<std::string, double> slope;
  for (const auto& r : t.rows) {
    if (r.size() <= std::max({*ci, *cn, *cm})) continue;
    char* end = nullptr;
    const double n = std::strtod(r[*cn].c_str(), &end);
    const double m = std::strtod(r[*cm].c_str(), &end);
    if (!(n > 0.0) || !(m > 0.0) || !std::isfinite(m)) continue;
    series[r[*ci]].emplace_back(std::log10(n), std::log10(m));
    if (cp && r.size() > *cp && !r[*cp].empty()) slope[r[*ci]] = std::strtod(r[*cp].c_str(), &end);
  }
  if (series.empty()) throw invalid_argument("chart: no positive data points for " + metric);

  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (const auto& [_, pts] : series)
    for (const auto& [x, y] : pts) {
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  if (x1 - x0 < 1e-12) x1 = x0 + 1.0;
  if (y1 - y0 < 1e-12) y1 = y0 + 1.0;
  const double pad_y = 0.1 * (y1 - y0);
  y0 -= pad_y;
  y1 += pad_y;

  const double W = 640, H = 420, L = 70, R = 170, Tm = 40, B = 50;
  auto sx = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto sy = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - Tm - B); };
  const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

  std::ostringstream o;
  o.precision(6);
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << Tm << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  o << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">log10 n</text>\n";
  o << "<text x=\"16\" y=\"" << (Tm + H - B) / 2 << "\" transform=\"rotate(-90 16 " << (Tm + H - B) / 2
    << ")\" text-anchor=\"middle\">log10 " << metric << "</text>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = x0 + (x1 - x0) * k / 4.0, yv = y0 + (y1 - y0) * k / 4.0;
    o << "<text x=\"" << sx(xv) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">" << xv << "</text>\n";
    o << "<text x=\"" << L - 6 << "\" y=\"" << sy(yv) + 4 << "\" text-anchor=\"end\">" << yv << "</text>\n";
  }
  int idx = 0;
  for (const auto& [name, pts] : series) {
    const char* col = colors[idx % 6];
    o << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"2\" points=\"";
    for (const auto& [x, y] : pts) o << sx(x) << "," << sy(y) << " ";
    o << "\"/>\n";
    for (const auto& [x, y] : pts) o << "<circle cx=\"" << sx(x) << "\" cy=\"" << sy(y) << "\" r=\"3\" fill=\"" << col << "\"/>\n";
    if (auto it = slope.find(name); it != slope.end() && pts.size() >= 1) {
      const auto [ax, ay] = pts.front();
      const double bx = x1, by = ay + it->second * (x1 - ax);
      o << "<line x1=\"" << sx(ax) << "\" y1=\"" << sy(ay) << "\" x2=\"" << sx(bx) << "\" y2=\"" << sy(std::clamp(by, y0, y1))
        << "\" stroke=\"" << col << "\" stroke-dasharray=\"5,4\"/>\n";
    }
    o << "<text x=\"" << W - R + 10 << "\" y=\"" << Tm + 18 * idx + 10 << "\" fill=\"" << col << "\">" << name << "</text>\n";
    ++idx;
  }
  o << "<text x=\"" << W - R + 10 << "\" y=\"" << Tm + 18 * idx + 16 << "\" fill=\"#555\">dashed: predicted slope</text>\n";
  o << "</svg>\n";
  return o.str();
}

inline std::filesystem::path chart_csv(const std::filesystem::path& csv_path, std::optional<std::string> metric = std::nullopt,
                                       std::optional<std::filesystem::path> out = std::nullopt) {
  std::ifstream f(csv_path, std::ios::binary);
  if (!f) throw io_error("cannot open " + csv_path.string());
  const std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const CsvTable t = parse_csv(text);
  if (!metric) {
    for (const char* m : {"metric", "gen_gap", "epsilon_hat"})
      if (t.column(m)) {
        metric = m;
        break;
      }
    if (!metric) throw invalid_argument("chart: no known metric column in " + csv_path.string());
  }
  std::filesystem::path target = out ? *out : csv_path;
  if (!out) target.replace_extension("." + *metric + ".svg");
  detail::write_text(target, render_chart_svg(t, *metric, csv_path.stem().string() + ": " + *metric + " vs n"));
  return target;
}

// ---------------------------------------------------------------------------
// Sweeps

namespace detail {

inline std::vector<std::string> sweep_header(ExperimentKind kind) {
  std::vector<std::string> h{"algorithm", "n", "T", "eta", "gamma", "beta", "B"};
  if (kind == ExperimentKind::RateComparison) {
    for (const char* c : {"metric", "metric_stderr", "metric_ci_low", "metric_ci_high", "predicted_slope", "failures", "status"}) h.push_back(c);
    return h;
  }
  for (const char* c : {"epsilon_hat", "epsilon_stderr", "epsilon_ci_low", "epsilon_ci_high", "epsilon_theory", "hits"}) h.push_back(c);
  if (kind == ExperimentKind::GenGapSweep)
    for (const char* c : {"gen_gap", "gen_gap_stderr", "gen_bound", "bound_satisfied"}) h.push_back(c);
  for (const char* c : {"predicted_slope", "failures", "status"}) h.push_back(c);
  return h;
}

inline std::vector<std::string> schedule_cells(Algorithm a, std::int64_t n, const Schedule& s) {
  return {std::string(to_string(a)), std::to_string(n), std::to_string(s.T), fmt_double(s.eta), fmt_opt(s.gamma), fmt_opt(s.beta), fmt_opt(s.B)};
}

// Mean population-gradient norm ||grad F(A(S))|| over reps.
inline Estimate population_grad_norm(const ProblemFamily& family, std::int64_t n, const OptimizerConfig& cfg, const HarnessOptions& opts,
                                     std::int64_t& failures) {
  const SeededRng base(opts.seed, 0x9A7E);
  const auto reps = static_cast<std::size_t>(opts.reps);
  std::vector<double> v(reps, -1.0);
  std::shared_ptr<const ProblemFamily> fam(&family, [](const ProblemFamily*) {});
  parallel_for(reps, opts.threads, [&](std::size_t r) {
    const SeededRng rep = base.split(r);
    SeededRng data_rng = rep.split(0);
    const ProblemInstance P(fam, family.draw_dataset(n, data_rng));
    OptimizerConfig c = cfg;
    if (c.x0.empty()) c.x0 = zeros(family.dim());
    c.seed = rep.seed();
    c.stream = rep.split(7).stream();
    try {
      v[r] = norm(P.population_grad(run(P, c).output));
    } catch (const numerical_divergence&) {
      v[r] = -1.0;
    }
  });
  std::vector<double> ok;
  for (double x : v) {
    if (x < 0.0) ++failures;
    else ok.push_back(x);
  }
  if (ok.empty()) throw numerical_divergence(0, "every rep diverged");
  return bootstrap(ok, [](std::span<const double> s) { return mean_of(s); }, opts.bootstrap_resamples, base.split(0xB007));
}

}  // namespace detail

/// Runs one experiment and writes <name>.json, <name>.csv and optional charts
/// into the output directory.
inline ExperimentOutputs run_experiment(const ExperimentConfig& cfg, const std::optional<std::filesystem::path>& out_override = std::nullopt) {
  const std::filesystem::path dir = detail::resolve_output_dir(cfg, out_override);
  std::filesystem::create_directories(dir);
  ExperimentOutputs outs;
  outs.report = dir / (cfg.name + ".json");
  outs.csv = dir / (cfg.name + ".csv");

  json report{{"schema_version", kReportSchemaVersion},
              {"kind", to_string(cfg.kind)},
              {"name", cfg.name},
              {"config", cfg.source},
              {"config_hash", detail::hex64(detail::hash_string(cfg.source.dump()))},
              {"environment", detail::environment_json(cfg)},
              {"metadata", {{"timestamp", detail::utc_timestamp()}}},
              {"caveats", json::array()}};
  json results = json::object();
  CsvTable table;

  if (cfg.kind == ExperimentKind::LemmaSuite) {
    table.header = {"check", "passed", "instances", "violations", "worst_margin", "detail"};
    json checks = json::array();
    for (const auto& c : run_lemma_suite(cfg.lemmas)) {
      outs.all_passed = outs.all_passed && c.passed;
      checks.push_back({{"name", c.name},
                        {"passed", c.passed},
                        {"instances", c.instances},
                        {"violations", c.violations},
                        {"worst_margin", c.worst_margin},
                        {"seconds", c.seconds},
                        {"detail", c.detail}});
      table.rows.push_back({c.name, c.passed ? "true" : "false", std::to_string(c.instances), std::to_string(c.violations),
                            detail::fmt_double(c.worst_margin), c.detail});
    }
    results["checks"] = checks;
    results["all_passed"] = outs.all_passed;
  } else if (cfg.kind == ExperimentKind::RandomWalkDemo) {
    const auto& rw = cfg.random_walk;
    const ProblemInstance P = make_logistic_pair();
    OptimizerConfig oc;
    oc.algorithm = Algorithm::NsgdB;
    oc.schedule.T = rw.steps + 1;
    oc.schedule.eta = rw.eta;
    oc.schedule.B = 1;
    oc.x0 = {0.0};
    const auto T = static_cast<std::size_t>(rw.steps + 1);
    std::vector<double> sum(T, 0.0), sumsq(T, 0.0);
    for (std::int64_t s = 0; s < rw.seeds; ++s) {
      oc.seed = cfg.seed;
      oc.stream = static_cast<std::uint64_t>(s);
      const Trajectory tr = run(P, oc);
      for (std::size_t t = 0; t < T; ++t) {
        sum[t] += tr.iterates[t][0];
        sumsq[t] += tr.iterates[t][0] * tr.iterates[t][0];
      }
    }
    table.header = {"t", "empirical_var", "predicted_var", "ratio"};
    json rows = json::array();
    const double m = static_cast<double>(rw.seeds);
    for (std::size_t t = static_cast<std::size_t>(rw.every); t < T; t += static_cast<std::size_t>(rw.every)) {
      const double mean = sum[t] / m;
      const double var = (sumsq[t] - m * mean * mean) / (m - 1.0);
      const double pred = rw.eta * rw.eta * static_cast<double>(t);
      rows.push_back({{"t", t}, {"empirical_var", var}, {"predicted_var", pred}, {"ratio", var / pred}});
      table.rows.push_back({std::to_string(t), detail::fmt_double(var), detail::fmt_double(pred), detail::fmt_double(var / pred)});
    }
    results["table"] = rows;
    results["eta"] = rw.eta;
    results["seeds"] = rw.seeds;
  } else {
    const auto family = detail::build_family(cfg.problem, cfg.seed);
    const double sigma = detail::resolve_sigma_p(cfg, *family);
    const TailParams tail{cfg.p, sigma};
    results["tail"] = {{"p", cfg.p}, {"sigma_p", sigma}, {"sigma_p_source", cfg.sigma_p ? "config" : "estimated"}};
    HarnessOptions ho;
    ho.reps = cfg.reps;
    ho.probes = cfg.probes;
    ho.bootstrap_resamples = cfg.bootstrap;
    ho.seed = cfg.seed;
    ho.threads = static_cast<std::size_t>(cfg.threads);
    ho.moment_p = cfg.p;
    table.header = detail::sweep_header(cfg.kind);
    json cells = json::array();
    std::vector<AlgorithmSeries> series;

    for (const Algorithm a : cfg.algorithms) {
      AlgorithmSeries ser{a, {}};
      for (const std::int64_t n : cfg.n_grid) {
        const Schedule s = schedule_for(a, n, cfg.p, cfg.scale);
        OptimizerConfig oc;
        oc.algorithm = a;
        oc.schedule = s;
        oc.x0 = zeros(family->dim());
        std::vector<std::string> row = detail::schedule_cells(a, n, s);
        json cell{{"algorithm", to_string(a)}, {"n", n}, {"schedule", detail::schedule_json(s)}};
        try {
          if (cfg.kind == ExperimentKind::RateComparison) {
            std::int64_t failures = 0;
            const Estimate e = detail::population_grad_norm(*family, n, oc, ho, failures);
            ser.points.push_back({n, e.value, e.std_error});
            cell["metric"] = detail::estimate_json(e);
            cell["failures"] = failures;
            for (const auto& v : {detail::fmt_double(e.value), detail::fmt_double(e.std_error), detail::fmt_double(e.ci_low),
                                  detail::fmt_double(e.ci_high), detail::fmt_double(predicted_rate_exponent(a, cfg.p)), std::to_string(failures)})
              row.push_back(v);
          } else {
            StabilityReport rep;
            if (cfg.kind == ExperimentKind::GenGapSweep) {
              rep = stability_report(*family, n, oc, tail, ho);
            } else {
              const StabilityEstimate st = empirical_stability(*family, n, oc, ho);
              SeededRng probe(ho.seed, 0x1);
              rep.algorithm = a;
              rep.schedule = s;
              rep.n = n;
              rep.tail = tail;
              rep.epsilon_hat = st.epsilon;
              rep.hits = st.hits;
              rep.g_hat = st.g_hat;
              rep.failures = st.failures;
              rep.replication_count = static_cast<std::int64_t>(st.per_rep_sq.size());
              rep.epsilon_theory = stability_bound(a, s, family->smoothness(family->draw_dataset(n, probe)), n);
              rep.gen_bound_theory = generalization_bound(st.epsilon.ci_high, tail, n);
            }
            cell.update(to_json(rep));
            const double metric = cfg.kind == ExperimentKind::GenGapSweep ? rep.gen_gap_hat->value : rep.epsilon_hat.value;
            ser.points.push_back({n, metric, 0.0});
            for (const auto& v : {detail::fmt_double(rep.epsilon_hat.value), detail::fmt_double(rep.epsilon_hat.std_error),
                                  detail::fmt_double(rep.epsilon_hat.ci_low), detail::fmt_double(rep.epsilon_hat.ci_high),
                                  detail::fmt_double(rep.epsilon_theory), std::to_string(rep.hits)})
              row.push_back(v);
            if (cfg.kind == ExperimentKind::GenGapSweep) {
              const bool ok = rep.gen_gap_hat->value <= rep.gen_bound_theory + rep.population_mc_error;
              outs.all_passed = outs.all_passed && ok;
              cell["bound_satisfied"] = ok;
              for (const auto& v : {detail::fmt_double(rep.gen_gap_hat->value), detail::fmt_double(rep.gen_gap_hat->std_error),
                                    detail::fmt_double(rep.gen_bound_theory), std::string(ok ? "true" : "false")})
                row.push_back(v);
            }
            const bool eps_ok = rep.epsilon_hat.value <= rep.epsilon_theory + 3.0 * rep.epsilon_hat.std_error;
            cell["epsilon_bound_satisfied"] = eps_ok;
            outs.all_passed = outs.all_passed && eps_ok;
            row.push_back(detail::fmt_double(predicted_rate_exponent(a, cfg.p)));
            row.push_back(std::to_string(rep.failures));
          }
          row.push_back("ok");
          cell["status"] = "ok";
        } catch (const std::exception& e) {
          ++outs.failed_cells;
          row.resize(table.header.size() - 1);
          row.push_back(std::string("error: ") + e.what());
          cell["status"] = std::string("error: ") + e.what();
        }
        table.rows.push_back(row);
        cells.push_back(cell);
      }
      series.push_back(std::move(ser));
    }
    results["cells"] = cells;

    json fits = json::array();
    for (const auto& s : series) {
      std::vector<std::pair<double, double>> pts;
      for (const auto& pt : s.points)
        if (pt.metric > 0.0) pts.emplace_back(static_cast<double>(pt.n), pt.metric);
      json f{{"algorithm", to_string(s.algorithm)}};
      if (pts.size() >= 2) f.update(detail::fit_json(fit_rate(pts, predicted_rate_exponent(s.algorithm, cfg.p))));
      else f["status"] = "insufficient positive points";
      fits.push_back(f);
    }
    results["fits"] = fits;
    if (cfg.kind == ExperimentKind::RateComparison) {
      json cmp = json::array();
      for (const auto& r : compare_algorithms(series, cfg.p)) {
        json row{{"algorithm", to_string(r.algorithm)},
                 {"mean_metric", r.mean_metric},
                 {"predicted_slope", r.predicted_slope},
                 {"predicted_rank", r.predicted_rank}};
        if (r.fit) {
          row["fitted_slope"] = r.fit->slope;
          row["fitted_slope_stderr"] = r.fit->slope_stderr;
          row["r_squared"] = r.fit->r_squared;
        }
        cmp.push_back(row);
      }
      results["comparison"] = cmp;
    }
    report["caveats"].push_back(
        "predicted slopes are asymptotic upper-bound orders with unspecified constants; fitted slopes at desk scale are not expected to match");
    report["caveats"].push_back("epsilon_hat takes the max over a finite probe set and so estimates the supremum from below");
  }

  report["results"] = results;
  report["status"] = outs.failed_cells == 0 ? "ok" : "partial";
  detail::write_text(outs.csv, table.to_string());
  detail::write_text(outs.report, report.dump(2) + "\n");
  if (cfg.charts && (cfg.kind == ExperimentKind::StabilitySweep || cfg.kind == ExperimentKind::GenGapSweep ||
                     cfg.kind == ExperimentKind::RateComparison)) {
    try {
      outs.charts.push_back(chart_csv(outs.csv));
    } catch (const invalid_argument&) {
      // no positive points to draw
    }
  }
  return outs;
}

}  // namespace htstab
