#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "htstab/error.hpp"
#include "htstab/linalg.hpp"
#include "htstab/rng.hpp"

namespace htstab {

enum class NoiseFamily { SymmetricAlphaStable, ParetoSymmetric, StudentT, Gaussian };

inline std::string_view to_string(NoiseFamily f) {
  switch (f) {
    case NoiseFamily::SymmetricAlphaStable: return "stable";
    case NoiseFamily::ParetoSymmetric: return "pareto";
    case NoiseFamily::StudentT: return "student_t";
    case NoiseFamily::Gaussian: return "gaussian";
  }
  return "unknown";
}

inline std::optional<NoiseFamily> parse_noise_family(std::string_view s) {
  if (s == "stable") return NoiseFamily::SymmetricAlphaStable;
  if (s == "pareto") return NoiseFamily::ParetoSymmetric;
  if (s == "student_t") return NoiseFamily::StudentT;
  if (s == "gaussian") return NoiseFamily::Gaussian;
  return std::nullopt;
}

/// Per-coordinate i.i.d. symmetric noise law.
///
/// `scale` means:
///   stable   - c in the characteristic function exp(-c |w|^alpha)
///   pareto   - multiplier on sign * Pareto(alpha, x_m = 1)
///   student  - multiplier on a standard t_nu variate
///   gaussian - standard deviation
struct NoiseSpec {
  NoiseFamily family = NoiseFamily::Gaussian;
  double tail_index = 2.0;
  double scale = 1.0;
  std::int64_t dim = 1;
};

inline void validate(const NoiseSpec& spec) {
  detail::require(spec.dim >= 1, "noise: dim must be >= 1");
  detail::require(spec.scale > 0.0 && std::isfinite(spec.scale), "noise: scale must be > 0");
  switch (spec.family) {
    case NoiseFamily::SymmetricAlphaStable:
      detail::require(spec.tail_index > 0.0 && spec.tail_index <= 2.0, "noise: stable alpha must lie in (0, 2]");
      break;
    case NoiseFamily::ParetoSymmetric:
      detail::require(spec.tail_index > 1.0 && std::isfinite(spec.tail_index), "noise: pareto alpha must be > 1");
      break;
    case NoiseFamily::StudentT:
      detail::require(spec.tail_index > 1.0 && std::isfinite(spec.tail_index), "noise: student-t nu must be > 1");
      break;
    case NoiseFamily::Gaussian:
      break;
  }
}

// Mean exists (and is zero by symmetry).
inline bool has_finite_mean(const NoiseSpec& spec) {
  return spec.family == NoiseFamily::Gaussian || spec.tail_index > 1.0;
}

// Moments of order q are finite exactly when q is below this value.
inline double moment_limit(const NoiseSpec& spec) {
  if (spec.family == NoiseFamily::Gaussian) return std::numeric_limits<double>::infinity();
  if (spec.family == NoiseFamily::SymmetricAlphaStable && spec.tail_index == 2.0) return std::numeric_limits<double>::infinity();
  return spec.tail_index;
}

namespace detail {

// Chambers-Mallows-Stuck, symmetric case: characteristic function exp(-|w|^alpha).
inline double standard_stable(double alpha, SeededRng& rng) {
  const double v = std::numbers::pi * (rng.uniform01() - 0.5);
  const double w = rng.exponential();
  if (alpha == 1.0) return std::tan(v);
  const double a = std::sin(alpha * v) / std::pow(std::cos(v), 1.0 / alpha);
  const double b = std::pow(std::cos(v - alpha * v) / w, (1.0 - alpha) / alpha);
  return a * b;
}

inline double scalar_draw(const NoiseSpec& spec, SeededRng& rng) {
  switch (spec.family) {
    case NoiseFamily::SymmetricAlphaStable:
      return std::pow(spec.scale, 1.0 / spec.tail_index) * standard_stable(spec.tail_index, rng);
    case NoiseFamily::ParetoSymmetric: {
      const double sign = rng.rademacher();
      return spec.scale * sign * std::pow(rng.uniform01(), -1.0 / spec.tail_index);
    }
    case NoiseFamily::StudentT: {
      const double z = rng.normal();
      const double chi2 = 2.0 * rng.gamma(0.5 * spec.tail_index);
      return spec.scale * z / std::sqrt(chi2 / spec.tail_index);
    }
    case NoiseFamily::Gaussian:
      return spec.scale * rng.normal();
  }
  return 0.0;
}

}  // namespace detail

/// One d-dimensional draw with i.i.d. coordinates.
inline Vector sample(const NoiseSpec& spec, SeededRng& rng) {
  validate(spec);
  Vector out(static_cast<std::size_t>(spec.dim));
  for (double& v : out) v = detail::scalar_draw(spec, rng);
  return out;
}

/// (mean_k ||s_k - center||^p)^{1/p}
inline double estimate_p_moment(std::span<const Vector> samples, std::span<const double> center, double p) {
  detail::require(!samples.empty(), "estimate_p_moment: need at least one sample");
  detail::require(p > 1.0 && p <= 2.0, "estimate_p_moment: p must lie in (1, 2]");
  double acc = 0.0;
  for (const auto& s : samples) {
    detail::require(s.size() == center.size(), "estimate_p_moment: dimension mismatch");
    acc += std::pow(distance(s, center), p);
  }
  return std::pow(acc / static_cast<double>(samples.size()), 1.0 / p);
}

/// Anything that can draw fresh data points and evaluate per-sample and
/// population gradients. ProblemInstance models this.
template <typename P>
concept FreshGradientSource = requires(const P& p, SeededRng& rng, std::span<const double> x, const Vector& rec) {
  { p.draw_sample(rng) } -> std::convertible_to<Vector>;
  { p.sample_grad(x, rec) } -> std::convertible_to<Vector>;
  { p.population_grad(x) } -> std::convertible_to<Vector>;
};

struct PBcmReport {
  double max_sigma_hat = 0.0;
  std::vector<double> per_point;
};

/// Estimates sigma_p of grad f(x; xi) - grad F(x) over fresh draws at each probe point.
template <FreshGradientSource Problem>
PBcmReport verify_p_bcm(const Problem& problem, std::span<const Vector> points, double p, std::int64_t draws, SeededRng& rng) {
  detail::require(draws >= 100, "verify_p_bcm: draws must be >= 100");
  detail::require(p > 1.0 && p <= 2.0, "verify_p_bcm: p must lie in (1, 2]");
  PBcmReport report;
  report.per_point.reserve(points.size());
  for (const auto& x : points) {
    const Vector pop = problem.population_grad(x);
    double acc = 0.0;
    for (std::int64_t k = 0; k < draws; ++k) {
      const Vector rec = problem.draw_sample(rng);
      const Vector g = problem.sample_grad(x, rec);
      acc += std::pow(distance(g, pop), p);
    }
    const double s = std::pow(acc / static_cast<double>(draws), 1.0 / p);
    report.per_point.push_back(s);
    report.max_sigma_hat = std::max(report.max_sigma_hat, s);
  }
  return report;
}

}  // namespace htstab
