#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "htstab/error.hpp"
#include "htstab/linalg.hpp"

namespace htstab {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

// Tail model: E||grad f(x; xi) - grad F(x)||^p <= sigma_p^p with 1 < p <= 2.
struct TailParams {
  double p = 2.0;
  double sigma_p = 0.0;
};

struct TheoryParams {
  double L = 1.0;      // smoothness
  double G = 1.0;      // p-th moment bound on stochastic gradients along the run
  double Delta = 0.0;  // initial suboptimality E[F_S(x0) - F_S*]
};

enum class Algorithm { ClippedSGD, NsgdB, NsgdM, NsgdCM };

inline std::string_view to_string(Algorithm a) {
  switch (a) {
    case Algorithm::ClippedSGD: return "clipped_sgd";
    case Algorithm::NsgdB: return "nsgd_b";
    case Algorithm::NsgdM: return "nsgd_m";
    case Algorithm::NsgdCM: return "nsgd_cm";
  }
  return "unknown";
}

inline std::optional<Algorithm> parse_algorithm(std::string_view s) {
  if (s == "clipped_sgd" || s == "ClippedSGD") return Algorithm::ClippedSGD;
  if (s == "nsgd_b" || s == "NsgdB") return Algorithm::NsgdB;
  if (s == "nsgd_m" || s == "NsgdM") return Algorithm::NsgdM;
  if (s == "nsgd_cm" || s == "NsgdCM") return Algorithm::NsgdCM;
  return std::nullopt;
}

// Constant-step schedule. gamma may be +infinity (clipping disabled).
struct Schedule {
  std::int64_t T = 1;
  double eta = 0.1;
  std::optional<double> gamma;
  std::optional<double> beta;
  std::optional<std::int64_t> B;
};

inline void validate_tail(const TailParams& tail) {
  detail::require(tail.p > 1.0 && tail.p <= 2.0, "tail exponent p must lie in (1, 2]");
  detail::require(tail.sigma_p >= 0.0 && std::isfinite(tail.sigma_p), "sigma_p must be finite and >= 0");
}

/// Checks the schedule fields required by `algorithm`.
/// eta = 0 is accepted so that degenerate "no movement" runs can be expressed.
inline void validate_schedule(Algorithm algorithm, const Schedule& s) {
  detail::require(s.T >= 1, "schedule: T must be >= 1");
  detail::require(s.eta >= 0.0 && std::isfinite(s.eta), "schedule: eta must be finite and >= 0");
  if (s.gamma) detail::require(*s.gamma > 0.0, "schedule: gamma must be > 0");
  if (s.beta) detail::require(*s.beta >= 0.0 && *s.beta < 1.0, "schedule: beta must lie in [0, 1)");
  if (s.B) detail::require(*s.B >= 1, "schedule: B must be >= 1");
  switch (algorithm) {
    case Algorithm::ClippedSGD:
      detail::require(s.gamma.has_value(), "clipped_sgd requires gamma");
      break;
    case Algorithm::NsgdB:
      detail::require(s.B.has_value(), "nsgd_b requires B");
      break;
    case Algorithm::NsgdM:
      detail::require(s.beta.has_value(), "nsgd_m requires beta");
      break;
    case Algorithm::NsgdCM:
      detail::require(s.beta.has_value(), "nsgd_cm requires beta");
      detail::require(s.gamma.has_value(), "nsgd_cm requires gamma");
      break;
  }
}

/// Projection onto the closed ball of radius gamma: u if ||u|| <= gamma,
/// otherwise gamma * u / ||u||. gamma = +infinity is the identity.
inline Vector clip(std::span<const double> u, double gamma) {
  detail::require(gamma > 0.0, "clip: gamma must be > 0");
  detail::require(all_finite(u), "clip: input must be finite");
  Vector out(u.begin(), u.end());
  const double n = norm(u);
  if (n > gamma) scale(gamma / n, out);
  return out;
}

/// Constant of the heavy-tail generalization bound; 1 at p = 2.
inline double c_p_constant(double p) {
  detail::require(p > 1.0 && p <= 2.0, "c_p_constant: p must lie in (1, 2]");
  if (p == 2.0) return 1.0;
  return p / (2.0 * (p - 1.0)) * std::pow(4.0 * (p - 1.0) / (2.0 - p), (2.0 - p) / p);
}

/// Truncation-level objective: sqrt(sigma^p / n) tau^{(2-p)/2} + 2 sigma^p tau^{1-p}.
inline double phi(double tau, double p, std::int64_t n, double sigma_p) {
  detail::require(tau > 0.0, "phi: tau must be > 0");
  validate_tail({p, sigma_p});
  detail::require(n >= 1, "phi: n must be >= 1");
  const double sp = std::pow(sigma_p, p);
  return std::sqrt(sp / static_cast<double>(n)) * std::pow(tau, (2.0 - p) / 2.0) + 2.0 * sp * std::pow(tau, 1.0 - p);
}

/// Minimizer of phi. Returns +infinity at p = 2, where phi decreases
/// monotonically and the bound is attained in the tau -> infinity limit.
inline double tau_star(double p, std::int64_t n, double sigma_p) {
  detail::require(p > 1.0 && p <= 2.0, "tau_star: p must lie in (1, 2]");
  detail::require(sigma_p > 0.0 && std::isfinite(sigma_p), "tau_star: sigma_p must be > 0");
  detail::require(n >= 1, "tau_star: n must be >= 1");
  if (p == 2.0) return kInfinity;
  const double k = 4.0 * (p - 1.0) / (2.0 - p);
  return std::pow(k * std::sqrt(static_cast<double>(n) * std::pow(sigma_p, p)), 2.0 / p);
}

/// 4 eps + C_p sigma_p n^{-(p-1)/p}
inline double generalization_bound(double epsilon, const TailParams& tail, std::int64_t n) {
  detail::require(n >= 1, "generalization_bound: n must be >= 1");
  detail::require(epsilon >= 0.0, "generalization_bound: epsilon must be >= 0");
  validate_tail(tail);
  return 4.0 * epsilon + c_p_constant(tail.p) * tail.sigma_p * std::pow(static_cast<double>(n), -(tail.p - 1.0) / tail.p);
}

/// Uniform-stability-in-gradients bound for a constant-step run.
///   clipped SGD: 2 L gamma sqrt(T/n) sum eta_t
///   NSGD-B:      2 L sqrt(B T/n) sum eta_t
///   NSGD-M/CM:   2 L sqrt(T/n) sum eta_t
inline double stability_bound(Algorithm algorithm, const Schedule& s, double L, std::int64_t n) {
  validate_schedule(algorithm, s);
  detail::require(L > 0.0, "stability_bound: L must be > 0");
  detail::require(n >= 1, "stability_bound: n must be >= 1");
  const double T = static_cast<double>(s.T);
  const double eta_sum = T * s.eta;
  const double root = std::sqrt(T / static_cast<double>(n));
  switch (algorithm) {
    case Algorithm::ClippedSGD: return 2.0 * L * *s.gamma * root * eta_sum;
    case Algorithm::NsgdB: return 2.0 * L * std::sqrt(static_cast<double>(*s.B)) * root * eta_sum;
    case Algorithm::NsgdM:
    case Algorithm::NsgdCM: return 2.0 * L * root * eta_sum;
  }
  return 0.0;
}

namespace detail {

// ceil() that treats values within rounding noise of an integer as that
// integer, so 1000^{1/3} gives 10 rather than 11.
inline std::int64_t snapped_ceil(double x) {
  const double r = std::round(x);
  if (std::abs(x - r) <= 1e-9 * std::max(1.0, std::abs(x))) return static_cast<std::int64_t>(r);
  return static_cast<std::int64_t>(std::ceil(x));
}

}  // namespace detail

/// Parameter schedule with the orders prescribed for each method; `scale`
/// stands in for the unspecified constants. Integers are rounded up with a
/// floor of 1 and beta = max(0, 1 - scale n^{-p/(7p-6)}).
inline Schedule schedule_for(Algorithm algorithm, std::int64_t n, double p, double scale = 1.0) {
  detail::require(n >= 2, "schedule_for: n must be >= 2");
  detail::require(p > 1.0 && p <= 2.0, "schedule_for: p must lie in (1, 2]");
  detail::require(scale > 0.0 && std::isfinite(scale), "schedule_for: scale must be > 0");
  const double nn = static_cast<double>(n);
  auto pow_n = [&](double e) { return scale * std::pow(nn, e); };
  auto to_count = [](double x) { return std::max<std::int64_t>(1, detail::snapped_ceil(x)); };

  Schedule s;
  if (algorithm == Algorithm::ClippedSGD) {
    const double q = 3.0 * (3.0 * p - 2.0);
    s.T = to_count(pow_n(1.0 / 3.0));
    s.eta = pow_n(-p / q);
    s.gamma = pow_n(1.0 / q);
    return s;
  }
  const double q = 7.0 * p - 6.0;
  if (algorithm == Algorithm::NsgdB) {
    s.T = to_count(pow_n(2.0 * (p - 1.0) / q));
    s.eta = pow_n(-(p - 1.0) / q);
    s.B = to_count(pow_n(p / q));
    return s;
  }
  s.T = to_count(pow_n((3.0 * p - 2.0) / q));
  s.eta = pow_n(-(2.0 * p - 1.0) / q);
  s.beta = std::clamp(1.0 - pow_n(-p / q), 0.0, std::nextafter(1.0, 0.0));
  if (algorithm == Algorithm::NsgdCM) s.gamma = pow_n(1.0 / q);
  return s;
}

/// Exponent of n in the population-gradient rate.
inline double predicted_rate_exponent(Algorithm algorithm, double p) {
  detail::require(p > 1.0 && p <= 2.0, "predicted_rate_exponent: p must lie in (1, 2]");
  if (algorithm == Algorithm::ClippedSGD) return -(p - 1.0) / (3.0 * (3.0 * p - 2.0));
  return -(p - 1.0) / (7.0 * p - 6.0);
}

}  // namespace htstab
