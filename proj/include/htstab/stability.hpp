#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "htstab/core_math.hpp"
#include "htstab/dataset.hpp"
#include "htstab/error.hpp"
#include "htstab/linalg.hpp"
#include "htstab/noise.hpp"
#include "htstab/optimizers.hpp"
#include "htstab/parallel.hpp"
#include "htstab/problems.hpp"
#include "htstab/rng.hpp"

namespace htstab {

// ---------------------------------------------------------------------------
// Bootstrap

struct Estimate {
  double value = 0.0;
  double std_error = 0.0;  // bootstrap standard deviation of the statistic
  double ci_low = 0.0;   // 2.5% percentile
  double ci_high = 0.0;  // 97.5% percentile
};

/// Percentile bootstrap of statistic(resampled values).
template <typename Statistic>
Estimate bootstrap(std::span<const double> values, Statistic&& statistic, std::int64_t resamples, SeededRng rng) {
  detail::require(!values.empty(), "bootstrap: need at least one value");
  detail::require(resamples >= 2, "bootstrap: need at least two resamples");
  Estimate e;
  e.value = statistic(values);
  std::vector<double> stats(static_cast<std::size_t>(resamples));
  std::vector<double> buf(values.size());
  for (auto& s : stats) {
    for (auto& b : buf) b = values[static_cast<std::size_t>(rng.uniform_index(values.size()))];
    s = statistic(std::span<const double>(buf));
  }
  double mean = 0.0;
  for (double s : stats) mean += s;
  mean /= static_cast<double>(stats.size());
  double var = 0.0;
  for (double s : stats) var += (s - mean) * (s - mean);
  e.std_error = std::sqrt(var / static_cast<double>(stats.size() - 1));
  std::sort(stats.begin(), stats.end());
  auto pct = [&](double q) {
    const double pos = q * static_cast<double>(stats.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, stats.size() - 1);
    return stats[lo] + (pos - static_cast<double>(lo)) * (stats[hi] - stats[lo]);
  };
  e.ci_low = pct(0.025);
  e.ci_high = pct(0.975);
  return e;
}

inline double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double root_mean_of(std::span<const double> v) { return std::sqrt(mean_of(v)); }

// ---------------------------------------------------------------------------
// Neighbors and coupling

struct NeighborPair {
  Dataset S;
  Dataset S_prime;
  std::size_t replaced_index = 0;
  Vector replacement_sample;
};

/// S' = S with row i replaced by a fresh draw from the family.
inline NeighborPair make_neighbor(const ProblemFamily& family, const Dataset& S, std::size_t i, SeededRng& rng) {
  if (i >= S.size()) throw invalid_argument("make_neighbor: index out of range");
  Vector fresh = family.draw_sample(rng);
  Dataset S_prime = S.with_row_replaced(i, fresh);
  return NeighborPair{S, std::move(S_prime), i, std::move(fresh)};
}

/// Runs the same config (hence the same index and output streams) on both problems.
template <GradientOracle Problem>
std::pair<Trajectory, Trajectory> coupled_run(const Problem& S, const Problem& S_prime, const OptimizerConfig& cfg) {
  if (S.size() != S_prime.size() || S.dim() != S_prime.dim())
    throw invalid_argument("coupled_run: problems differ in size or dimension");
  return {run(S, cfg), run(S_prime, cfg)};
}

inline bool index_was_sampled(const Trajectory& traj, std::uint64_t index) {
  return std::find(traj.index_log.begin(), traj.index_log.end(), index) != traj.index_log.end();
}

// ---------------------------------------------------------------------------
// Empirical stability and generalization gap

struct HarnessOptions {
  std::int64_t reps = 200;
  std::int64_t probes = 64;  // fresh samples approximating sup over xi
  std::int64_t bootstrap_resamples = 1000;
  std::uint64_t seed = 1;
  std::size_t threads = 1;
  double moment_p = 2.0;  // exponent used for the gradient moment estimate
};

struct StabilityEstimate {
  Estimate epsilon;  // sqrt(mean over reps of max over probes ||.||^2); a lower estimate of the sup
  std::vector<double> per_rep_sq;
  std::int64_t hits = 0;      // reps whose index log contained the replaced index
  std::int64_t failures = 0;  // reps aborted by a run error
  double g_hat = 0.0;         // max over reps of gradient_moment along the run on S
};

struct GapEstimate {
  Estimate gap;
  double population_mc_error = 0.0;  // mean MC stderr of the population gradient (0 when analytic)
  std::vector<double> per_rep;
  std::int64_t failures = 0;
};

/// (mean over steps of ||g_t||^p)^{1/p} for the stochastic gradients a run
/// actually used.
inline double gradient_moment(const Trajectory& traj, double p) {
  detail::require(p > 1.0 && p <= 2.0, "gradient_moment: p must lie in (1, 2]");
  detail::require(!traj.grad_norms.empty(), "gradient_moment: trajectory has no steps");
  double s = 0.0;
  for (double g : traj.grad_norms) s += std::pow(g, p);
  return std::pow(s / static_cast<double>(traj.grad_norms.size()), 1.0 / p);
}

namespace detail {

inline OptimizerConfig rep_config(const OptimizerConfig& cfg, const SeededRng& rep_rng, std::size_t dim) {
  OptimizerConfig c = cfg;
  if (c.x0.empty()) c.x0 = zeros(dim);
  c.seed = rep_rng.seed();
  c.stream = rep_rng.split(7).stream();
  return c;
}

inline void check_options(const HarnessOptions& o) {
  detail::require(o.reps >= 10, "harness: reps must be >= 10");
  detail::require(o.probes >= 1, "harness: probe set must be nonempty");
  detail::require(o.bootstrap_resamples >= 2, "harness: need at least two bootstrap resamples");
}

}  // namespace detail

/// Per rep: draw S, replace a uniformly chosen index, coupled-run, and take
/// the max over fresh probes xi of ||grad f(A(S); xi) - grad f(A(S'); xi)||^2.
inline StabilityEstimate empirical_stability(const ProblemFamily& family, std::int64_t n, const OptimizerConfig& cfg,
                                             const HarnessOptions& opts) {
  detail::check_options(opts);
  detail::require(n >= 2, "empirical_stability: n must be >= 2");
  const SeededRng base(opts.seed, 0x57AB);
  const auto reps = static_cast<std::size_t>(opts.reps);
  std::vector<double> sq(reps, -1.0);
  std::vector<char> hit(reps, 0);
  std::vector<double> gm(reps, 0.0);

  // Family is held by the caller; wrap without ownership for ProblemInstance.
  std::shared_ptr<const ProblemFamily> fam(&family, [](const ProblemFamily*) {});

  parallel_for(reps, opts.threads, [&](std::size_t r) {
    const SeededRng rep = base.split(r);
    SeededRng data_rng = rep.split(0);
    SeededRng pick_rng = rep.split(1);
    SeededRng fresh_rng = rep.split(2);
    SeededRng probe_rng = rep.split(3);
    const Dataset S = family.draw_dataset(n, data_rng);
    const auto i = static_cast<std::size_t>(pick_rng.uniform_index(static_cast<std::uint64_t>(n)));
    const NeighborPair pair = make_neighbor(family, S, i, fresh_rng);
    const ProblemInstance PS(fam, pair.S);
    const ProblemInstance PSp(fam, pair.S_prime);
    const OptimizerConfig c = detail::rep_config(cfg, rep, family.dim());
    try {
      const auto [a, b] = coupled_run(PS, PSp, c);
      hit[r] = index_was_sampled(a, i) ? 1 : 0;
      gm[r] = gradient_moment(a, opts.moment_p);
      double worst = 0.0;
      for (std::int64_t k = 0; k < opts.probes; ++k) {
        const Vector xi = family.draw_sample(probe_rng);
        const double d = distance(family.sample_grad(a.output, xi), family.sample_grad(b.output, xi));
        worst = std::max(worst, d * d);
      }
      sq[r] = worst;
    } catch (const numerical_divergence&) {
      sq[r] = -1.0;
    }
  });

  StabilityEstimate out;
  for (std::size_t r = 0; r < reps; ++r) {
    if (sq[r] < 0.0) {
      ++out.failures;
      continue;
    }
    out.per_rep_sq.push_back(sq[r]);
    out.hits += hit[r];
    out.g_hat = std::max(out.g_hat, gm[r]);
  }
  if (out.per_rep_sq.empty()) throw numerical_divergence(0, "empirical_stability: every rep diverged");
  out.epsilon = bootstrap(out.per_rep_sq, [](std::span<const double> v) { return root_mean_of(v); }, opts.bootstrap_resamples,
                          base.split(0xB007));
  return out;
}

/// Mean over reps of ||grad F(A(S)) - grad F_S(A(S))||.
inline GapEstimate empirical_gen_gap(const ProblemFamily& family, std::int64_t n, const OptimizerConfig& cfg, const HarnessOptions& opts) {
  detail::check_options(opts);
  detail::require(n >= 1, "empirical_gen_gap: n must be >= 1");
  if (!family.has_population_grad()) throw not_available("empirical_gen_gap: family has no population gradient");
  const SeededRng base(opts.seed, 0x6A9);
  const auto reps = static_cast<std::size_t>(opts.reps);
  std::vector<double> gap(reps, -1.0), mc(reps, 0.0);
  std::shared_ptr<const ProblemFamily> fam(&family, [](const ProblemFamily*) {});

  parallel_for(reps, opts.threads, [&](std::size_t r) {
    const SeededRng rep = base.split(r);
    SeededRng data_rng = rep.split(0);
    const ProblemInstance P(fam, family.draw_dataset(n, data_rng));
    const OptimizerConfig c = detail::rep_config(cfg, rep, family.dim());
    try {
      const Trajectory tr = run(P, c);
      gap[r] = distance(P.population_grad(tr.output), P.empirical_grad(tr.output));
      mc[r] = family.population_grad_stderr(tr.output);
    } catch (const numerical_divergence&) {
      gap[r] = -1.0;
    }
  });

  GapEstimate out;
  double mc_sum = 0.0;
  for (std::size_t r = 0; r < reps; ++r) {
    if (gap[r] < 0.0) {
      ++out.failures;
      continue;
    }
    out.per_rep.push_back(gap[r]);
    mc_sum += mc[r];
  }
  if (out.per_rep.empty()) throw numerical_divergence(0, "empirical_gen_gap: every rep diverged");
  out.population_mc_error = mc_sum / static_cast<double>(out.per_rep.size());
  out.gap = bootstrap(out.per_rep, [](std::span<const double> v) { return mean_of(v); }, opts.bootstrap_resamples, base.split(0xB007));
  return out;
}

// ---------------------------------------------------------------------------
// Truncation decomposition

struct TruncationDecomposition {
  double tau = 0.0;
  double sigma_hat = 0.0;                   // (mean ||u||^p)^{1/p} of the supplied noise
  double clipped_noise_second_moment = 0.0;  // mean ||clip_tau(u) - M_tau||^2
  double residual_first_moment = 0.0;        // mean ||u - clip_tau(u)||
  double bound_a = 0.0;                      // tau^{2-p} sigma_hat^p
  double bound_b = 0.0;                      // 2 sigma_hat^p / tau^{p-1}
};

/// Empirical versions of the truncated-noise second moment and residual
/// first moment for centered noise samples u, with the matching bounds
/// evaluated at the sample moment sigma_hat.
inline TruncationDecomposition truncation_check(std::span<const Vector> noise, double p, double tau) {
  detail::require(tau > 0.0, "truncation_check: tau must be > 0");
  detail::require(p > 1.0 && p <= 2.0, "truncation_check: p must lie in (1, 2]");
  detail::require(!noise.empty(), "truncation_check: need samples");
  const std::size_t d = noise.front().size();
  const double m = static_cast<double>(noise.size());

  std::vector<Vector> clipped;
  clipped.reserve(noise.size());
  Vector M(d, 0.0);
  double resid = 0.0, pth = 0.0;
  for (const auto& u : noise) {
    detail::require(u.size() == d, "truncation_check: dimension mismatch");
    clipped.push_back(clip(u, tau));
    axpy(1.0, clipped.back(), M);
    resid += distance(u, clipped.back());
    pth += std::pow(norm(u), p);
  }
  scale(1.0 / m, M);
  double second = 0.0;
  for (const auto& c : clipped) {
    const double dd = distance(c, M);
    second += dd * dd;
  }

  TruncationDecomposition out;
  out.tau = tau;
  const double sp = pth / m;  // sigma_hat^p
  out.sigma_hat = std::pow(sp, 1.0 / p);
  out.clipped_noise_second_moment = second / m;
  out.residual_first_moment = resid / m;
  out.bound_a = std::pow(tau, 2.0 - p) * sp;
  out.bound_b = 2.0 * sp / std::pow(tau, p - 1.0);
  return out;
}

// ---------------------------------------------------------------------------
// Theoretical bound breakdown

enum class TermKind { Optimization, Stability, Moment };

inline std::string_view to_string(TermKind k) {
  switch (k) {
    case TermKind::Optimization: return "optimization";
    case TermKind::Stability: return "stability";
    case TermKind::Moment: return "moment";
  }
  return "unknown";
}

struct BoundTerm {
  std::string label;
  TermKind kind;
  double value;
};

struct BoundReport {
  Algorithm algorithm;
  Schedule schedule;
  double stability_epsilon = 0.0;
  std::vector<BoundTerm> terms;
  double total = 0.0;

  double term(std::string_view label) const {
    for (const auto& t : terms)
      if (t.label == label) return t.value;
    throw invalid_argument("no bound term named " + std::string(label));
  }
};

/// Additive terms of the population-gradient bound E||grad F(A(S))|| for a
/// constant-step run of `algorithm`.
inline BoundReport theoretical_report(Algorithm algorithm, const Schedule& s, const TheoryParams& th, const TailParams& tail,
                                      std::int64_t n) {
  validate_schedule(algorithm, s);
  validate_tail(tail);
  detail::require(th.L > 0.0 && th.G > 0.0 && th.Delta >= 0.0, "theoretical_report: need L > 0, G > 0, Delta >= 0");
  detail::require(n >= 1, "theoretical_report: n must be >= 1");
  detail::require(s.eta > 0.0, "theoretical_report: eta must be > 0");

  const double p = tail.p, L = th.L, G = th.G, D = th.Delta, eta = s.eta;
  const double T = static_cast<double>(s.T), nn = static_cast<double>(n);
  const double Gp = std::pow(G, p);
  const double moment = c_p_constant(p) * tail.sigma_p * std::pow(nn, -(p - 1.0) / p);

  BoundReport r{algorithm, s, stability_bound(algorithm, s, L, n), {}, 0.0};
  auto add = [&](std::string label, TermKind k, double v) { r.terms.push_back({std::move(label), k, v}); };
  using K = TermKind;

  switch (algorithm) {
    case Algorithm::ClippedSGD: {
      const double g = *s.gamma;
      add("sqrt(2*Delta/(eta*T))", K::Optimization, std::sqrt(2.0 * D / (eta * T)));
      add("G^p*gamma^(1-p)", K::Optimization, Gp * std::pow(g, 1.0 - p));
      add("sqrt(L*eta*G^p*gamma^(2-p))", K::Optimization, std::sqrt(L * eta * Gp * std::pow(g, 2.0 - p)));
      add("8*L*gamma*eta*T*sqrt(T/n)", K::Stability, 8.0 * L * g * eta * T * std::sqrt(T / nn));
      break;
    }
    case Algorithm::NsgdB: {
      const double B = static_cast<double>(*s.B);
      add("Delta/(eta*T)", K::Optimization, D / (eta * T));
      add("L*eta/2", K::Optimization, L * eta / 2.0);
      add("4*G*B^(-(p-1)/p)", K::Optimization, 4.0 * G * std::pow(B, -(p - 1.0) / p));
      add("8*L*eta*T*sqrt(B*T/n)", K::Stability, 8.0 * L * eta * T * std::sqrt(B * T / nn));
      break;
    }
    case Algorithm::NsgdM:
    case Algorithm::NsgdCM: {
      const double b = *s.beta;
      add("Delta/(eta*T)", K::Optimization, D / (eta * T));
      add("L*eta/2", K::Optimization, L * eta / 2.0);
      if (algorithm == Algorithm::NsgdM) {
        add("2*L*eta*beta/(1-beta)", K::Optimization, 2.0 * L * eta * b / (1.0 - b));
      } else {
        add("2*L*eta/(1-beta)", K::Optimization, 2.0 * L * eta / (1.0 - b));
        add("2*G^p*gamma^(1-p)", K::Optimization, 2.0 * Gp * std::pow(*s.gamma, 1.0 - p));
      }
      add("8*G*(1-beta)^((p-1)/p)", K::Optimization, 8.0 * G * std::pow(1.0 - b, (p - 1.0) / p));
      add("4*G/T", K::Optimization, 4.0 * G / T);
      add("4*G*beta/((1-beta)*T)", K::Optimization, 4.0 * G * b / ((1.0 - b) * T));
      add("8*L*eta*T*sqrt(T/n)", K::Stability, 8.0 * L * eta * T * std::sqrt(T / nn));
      break;
    }
  }
  add("C_p*sigma_p*n^(-(p-1)/p)", K::Moment, moment);
  for (const auto& t : r.terms) r.total += t.value;
  return r;
}

// ---------------------------------------------------------------------------
// Combined report

struct StabilityReport {
  Algorithm algorithm;
  Schedule schedule;
  std::int64_t n = 0;
  TailParams tail;
  Estimate epsilon_hat;
  double epsilon_theory = 0.0;
  std::int64_t hits = 0;
  double g_hat = 0.0;
  std::optional<Estimate> gen_gap_hat;  // absent when the family has no population gradient
  double population_mc_error = 0.0;
  double gen_bound_theory = 0.0;        // generalization_bound at the upper CI of epsilon_hat
  std::int64_t replication_count = 0;
  std::int64_t failures = 0;
};

/// Stability and generalization estimates for one (algorithm, schedule, n)
/// cell. The stability bound uses the smoothness constant of the first
/// sampled dataset.
inline StabilityReport stability_report(const ProblemFamily& family, std::int64_t n, const OptimizerConfig& cfg, const TailParams& tail,
                                        const HarnessOptions& opts) {
  StabilityReport rep;
  rep.algorithm = cfg.algorithm;
  rep.schedule = cfg.schedule;
  rep.n = n;
  rep.tail = tail;
  HarnessOptions o = opts;
  o.moment_p = tail.p;
  const StabilityEstimate st = empirical_stability(family, n, cfg, o);
  rep.epsilon_hat = st.epsilon;
  rep.hits = st.hits;
  rep.g_hat = st.g_hat;
  rep.failures = st.failures;
  rep.replication_count = static_cast<std::int64_t>(st.per_rep_sq.size());
  SeededRng probe(opts.seed, 0x1);
  const double L = family.smoothness(family.draw_dataset(n, probe));
  rep.epsilon_theory = stability_bound(cfg.algorithm, cfg.schedule, L, n);
  rep.gen_bound_theory = generalization_bound(st.epsilon.ci_high, tail, n);
  if (family.has_population_grad()) {
    const GapEstimate g = empirical_gen_gap(family, n, cfg, opts);
    rep.gen_gap_hat = g.gap;
    rep.population_mc_error = g.population_mc_error;
    rep.failures += g.failures;
  }
  return rep;
}

}  // namespace htstab
