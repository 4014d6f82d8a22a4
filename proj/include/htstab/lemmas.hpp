#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "htstab/core_math.hpp"
#include "htstab/linalg.hpp"
#include "htstab/noise.hpp"
#include "htstab/rng.hpp"

namespace htstab {

/// Outcome of one randomized inequality check. `worst_margin` is the
/// smallest (rhs + tolerance - lhs) seen; negative means a violation.
struct LemmaCheck {
  std::string name;
  bool passed = true;
  std::int64_t instances = 0;
  std::int64_t violations = 0;
  double worst_margin = std::numeric_limits<double>::infinity();
  double seconds = 0.0;
  std::string detail;
};

namespace detail {

class CheckTimer {
 public:
  explicit CheckTimer(LemmaCheck& c) : c_(c), start_(std::chrono::steady_clock::now()) {}
  ~CheckTimer() { c_.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }

 private:
  LemmaCheck& c_;
  std::chrono::steady_clock::time_point start_;
};

inline void record(LemmaCheck& c, double lhs, double rhs, double tol) {
  ++c.instances;
  const double margin = rhs + tol - lhs;
  c.worst_margin = std::min(c.worst_margin, margin);
  if (!(margin >= 0.0)) {
    ++c.violations;
    c.passed = false;
  }
}

// Random vector of dimension 1..16 with a log-uniform overall scale in [1e-2, 3].
inline Vector random_vector(SeededRng& rng, std::size_t d) {
  const double s = std::pow(10.0, rng.uniform(-2.0, 0.5));
  Vector v(d);
  for (double& x : v) x = s * rng.normal();
  return v;
}

}  // namespace detail

inline constexpr double kLemmaTolerance = 1e-12;

/// Clipping-operator properties over random (u, v, gamma, p):
///   (a) ||clip(u)||^2 <= gamma^{2-p} ||u||^p
///   (b) ||u - clip(u)|| <= ||u||^p / gamma^{p-1}
///   (c) ||clip(u) - clip(v)|| <= ||u - v||
///   and ||clip(u)|| = min(||u||, gamma) to a few ulps.
inline std::vector<LemmaCheck> check_clip_lemmas(std::int64_t count, std::uint64_t seed) {
  std::vector<LemmaCheck> out(4);
  out[0].name = "clip (a): ||clip(u)||^2 <= gamma^(2-p) ||u||^p";
  out[1].name = "clip (b): ||u - clip(u)|| <= ||u||^p / gamma^(p-1)";
  out[2].name = "clip (c): clip is 1-Lipschitz";
  out[3].name = "clip norm identity: ||clip(u)|| = min(||u||, gamma)";
  const auto t0 = std::chrono::steady_clock::now();
  SeededRng rng(seed, 0xC11B);
  for (std::int64_t k = 0; k < count; ++k) {
    const auto d = static_cast<std::size_t>(1 + rng.uniform_index(16));
    const Vector u = detail::random_vector(rng, d);
    Vector v = detail::random_vector(rng, d);
    if (k % 4 == 0) {  // nearby pairs stress the Lipschitz bound near equality
      for (std::size_t j = 0; j < d; ++j) v[j] = u[j] + 1e-3 * v[j];
    }
    const double gamma = std::pow(10.0, rng.uniform(-2.0, 0.5));
    const double p = 2.0 - rng.uniform01();  // (1, 2]
    const Vector cu = clip(u, gamma);
    const Vector cv = clip(v, gamma);
    const double nu = norm(u);
    detail::record(out[0], norm(cu) * norm(cu), std::pow(gamma, 2.0 - p) * std::pow(nu, p), kLemmaTolerance);
    detail::record(out[1], distance(u, cu), std::pow(nu, p) / std::pow(gamma, p - 1.0), kLemmaTolerance);
    detail::record(out[2], distance(cu, cv), distance(u, v), kLemmaTolerance);
    const double target = std::min(nu, gamma);
    const double ulps = 4.0 * std::numeric_limits<double>::epsilon() * std::max(target, std::numeric_limits<double>::min());
    detail::record(out[3], std::abs(norm(cu) - target), 0.0, ulps);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  for (auto& c : out) c.seconds = secs / 4.0;
  return out;
}

/// <u, v/||v||> >= ||u|| - 2 ||u - v|| for v != 0.
inline LemmaCheck check_normalized_inner_product(std::int64_t count, std::uint64_t seed) {
  LemmaCheck c;
  c.name = "normalized inner product: <u, v/||v||> >= ||u|| - 2||u - v||";
  detail::CheckTimer timer(c);
  SeededRng rng(seed, 0xA2);
  for (std::int64_t k = 0; k < count; ++k) {
    const auto d = static_cast<std::size_t>(1 + rng.uniform_index(16));
    const Vector u = detail::random_vector(rng, d);
    Vector v = detail::random_vector(rng, d);
    if (k % 3 == 0) {
      for (std::size_t j = 0; j < d; ++j) v[j] = u[j] + 1e-3 * v[j];
    }
    if (norm(v) == 0.0) continue;
    const double nv = norm(v);
    double lhs = 0.0;
    for (std::size_t j = 0; j < d; ++j) lhs += u[j] * (v[j] / nv);
    // inequality reads lhs >= rhs; record(rhs_side, lhs_side) flips it
    detail::record(c, norm(u) - 2.0 * distance(u, v), lhs, kLemmaTolerance);
  }
  return c;
}

/// C_2 = 1 exactly and 1 <= C_p <= 3 on a uniform grid of (1, 2].
inline LemmaCheck check_cp_range(std::int64_t grid) {
  LemmaCheck c;
  c.name = "C_p range: C_2 = 1 and 1 <= C_p <= 3 on (1, 2]";
  detail::CheckTimer timer(c);
  if (c_p_constant(2.0) != 1.0) {
    c.passed = false;
    c.detail = "C_2 != 1";
  }
  for (std::int64_t k = 1; k <= grid; ++k) {
    const double p = 1.0 + static_cast<double>(k) / static_cast<double>(grid);
    const double v = c_p_constant(p);
    detail::record(c, 1.0, v, 0.0);
    detail::record(c, v, 3.0, 0.0);
  }
  return c;
}

/// phi(tau*) = C_p sigma n^{-(p-1)/p} to relative 1e-9 over random (p, n, sigma).
inline LemmaCheck check_tau_star_identity(std::int64_t count, std::uint64_t seed) {
  LemmaCheck c;
  c.name = "phi(tau*) = C_p sigma_p n^(-(p-1)/p)";
  detail::CheckTimer timer(c);
  SeededRng rng(seed, 0x7A0);
  for (std::int64_t k = 0; k < count; ++k) {
    const double p = rng.uniform(1.02, 1.98);
    const auto n = static_cast<std::int64_t>(1 + rng.uniform_index(100000));
    const double sigma = std::pow(10.0, rng.uniform(-2.0, 2.0));
    const double lhs = phi(tau_star(p, n, sigma), p, n, sigma);
    const double rhs = generalization_bound(0.0, {p, sigma}, n);
    detail::record(c, std::abs(lhs - rhs), 0.0, 1e-9 * std::abs(rhs));
  }
  return c;
}

/// phi(tau*) <= min of phi over a log-spaced grid on [1e-3, 1e9], relative 1e-9.
inline LemmaCheck check_tau_star_grid(std::int64_t triples, std::int64_t grid, std::uint64_t seed) {
  LemmaCheck c;
  c.name = "tau* minimizes phi against a log grid";
  detail::CheckTimer timer(c);
  SeededRng rng(seed, 0x7A1);
  for (std::int64_t k = 0; k < triples; ++k) {
    const double p = rng.uniform(1.05, 1.95);
    const auto n = static_cast<std::int64_t>(1 + rng.uniform_index(10000));
    const double sigma = std::pow(10.0, rng.uniform(-1.0, 1.0));
    const double best = phi(tau_star(p, n, sigma), p, n, sigma);
    double grid_min = std::numeric_limits<double>::infinity();
    for (std::int64_t g = 0; g < grid; ++g) {
      const double tau = std::pow(10.0, -3.0 + 12.0 * static_cast<double>(g) / static_cast<double>(grid - 1));
      grid_min = std::min(grid_min, phi(tau, p, n, sigma));
    }
    detail::record(c, best, grid_min, 1e-9 * grid_min);
  }
  return c;
}

/// Monte Carlo check of E||sum_{i<=k} X_i||^q <= factor * sum_i E||X_i||^q for
/// i.i.d. centered draws, k in `ks`.
inline LemmaCheck check_martingale_moment(const NoiseSpec& spec, double q, std::vector<std::int64_t> ks, std::int64_t trials,
                                          std::uint64_t seed, double factor = 2.2) {
  LemmaCheck c;
  c.name = "martingale q-moment (" + std::string(to_string(spec.family)) + ", tail " + std::to_string(spec.tail_index) +
           ", q " + std::to_string(q) + ")";
  detail::CheckTimer timer(c);
  validate(spec);
  detail::require(q > 1.0 && q <= 2.0 && q < moment_limit(spec), "martingale check: need 1 < q <= 2 below the tail index");
  std::sort(ks.begin(), ks.end());
  const std::int64_t kmax = ks.back();
  std::vector<double> lhs(ks.size(), 0.0), rhs(ks.size(), 0.0);
  SeededRng rng(seed, 0xA3);
  Vector sum(static_cast<std::size_t>(spec.dim));
  for (std::int64_t t = 0; t < trials; ++t) {
    std::fill(sum.begin(), sum.end(), 0.0);
    double single = 0.0;
    std::size_t next = 0;
    for (std::int64_t i = 1; i <= kmax; ++i) {
      const Vector x = sample(spec, rng);
      axpy(1.0, x, sum);
      single += std::pow(norm(x), q);
      if (i == ks[next]) {
        lhs[next] += std::pow(norm(sum), q);
        rhs[next] += single;
        ++next;
      }
    }
  }
  for (std::size_t j = 0; j < ks.size(); ++j) {
    const double ratio = lhs[j] / rhs[j];
    detail::record(c, ratio, factor, 0.0);
    c.detail += "k=" + std::to_string(ks[j]) + " ratio=" + std::to_string(ratio) + "; ";
  }
  return c;
}

struct LemmaSuiteOptions {
  std::int64_t random_instances = 10000;
  std::int64_t cp_grid = 1000;
  std::int64_t identity_triples = 100;
  std::int64_t grid_triples = 20;
  std::int64_t grid_points = 10000;
  std::int64_t martingale_trials = 100000;
  std::int64_t martingale_dim = 4;
  std::uint64_t seed = 2024;
};

inline std::vector<LemmaCheck> run_lemma_suite(const LemmaSuiteOptions& o = {}) {
  std::vector<LemmaCheck> out = check_clip_lemmas(o.random_instances, o.seed);
  out.push_back(check_normalized_inner_product(o.random_instances, o.seed));
  out.push_back(check_cp_range(o.cp_grid));
  out.push_back(check_tau_star_identity(o.identity_triples, o.seed));
  out.push_back(check_tau_star_grid(o.grid_triples, o.grid_points, o.seed));
  const NoiseSpec gauss{NoiseFamily::Gaussian, 2.0, 1.0, o.martingale_dim};
  const NoiseSpec stable{NoiseFamily::SymmetricAlphaStable, 1.8, 1.0, o.martingale_dim};
  out.push_back(check_martingale_moment(gauss, 2.0, {2, 8, 32}, o.martingale_trials, o.seed));
  out.push_back(check_martingale_moment(gauss, 1.5, {2, 8, 32}, o.martingale_trials, o.seed + 1));
  out.push_back(check_martingale_moment(stable, 1.5, {2, 8, 32}, o.martingale_trials, o.seed + 2));
  return out;
}

}  // namespace htstab
