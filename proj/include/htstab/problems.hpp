#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "htstab/dataset.hpp"
#include "htstab/error.hpp"
#include "htstab/linalg.hpp"
#include "htstab/noise.hpp"
#include "htstab/rng.hpp"

namespace htstab {

namespace detail {

inline double logistic(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + e^z) without overflow
inline double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

// rho(r) = r^2 / (1 + r^2); |rho''| <= 2 with the max at r = 0.
inline double robust_rho(double r) { return r * r / (1.0 + r * r); }
inline double robust_rho_prime(double r) {
  const double s = 1.0 + r * r;
  return 2.0 * r / (s * s);
}
inline constexpr double kRobustCurvature = 2.0;

}  // namespace detail

struct QuadPlusSineParams {
  double c = 0.5;     // sine amplitude; L = 1 + |c|
  double mean = 0.0;  // E[xi] per coordinate
};

/// The data law and per-sample loss of a synthetic family, independent of
/// any particular training set. Datasets are drawn from it, neighbors
/// replace rows with fresh draws from it, and population gradients are taken
/// under it.
///
/// Record layouts:
///   logistic_pair      [y]          y in {+1, -1}, f = log(1 + e^{y x})
///   robust_regression  [a_1..a_d, b] f = rho(<a, x> - b)
///   quad_plus_sine     [xi_1..xi_d]  f = 0.5 ||x - xi||^2 + c sum_j sin(x_j)
class ProblemFamily {
 public:
  static std::shared_ptr<const ProblemFamily> logistic_pair() {
    auto f = std::shared_ptr<ProblemFamily>(new ProblemFamily(ProblemKind::LogisticPair, 1));
    return f;
  }

  /// holdout_size fresh samples are drawn once and used for the population
  /// gradient (which has no closed form under heavy-tailed labels).
  static std::shared_ptr<const ProblemFamily> robust_regression(std::int64_t d, std::optional<NoiseSpec> noise, SeededRng& rng,
                                                                std::int64_t holdout_size = 100000) {
    detail::require(d >= 1, "robust_regression: d must be >= 1");
    detail::require(holdout_size >= 0, "robust_regression: holdout size must be >= 0");
    auto f = std::shared_ptr<ProblemFamily>(new ProblemFamily(ProblemKind::RobustRegression, d));
    if (noise) {
      noise->dim = 1;
      validate(*noise);
    }
    f->noise_ = noise;
    f->x_true_.resize(static_cast<std::size_t>(d));
    for (double& v : f->x_true_) v = rng.normal();
    if (holdout_size > 0) {
      SeededRng hold = rng.split(0x401D);
      f->holdout_ = std::make_shared<const Dataset>(f->draw_dataset(holdout_size, hold));
    }
    return f;
  }

  static std::shared_ptr<const ProblemFamily> quad_plus_sine(std::int64_t d, std::optional<NoiseSpec> noise, QuadPlusSineParams params = {}) {
    detail::require(d >= 1, "quad_plus_sine: d must be >= 1");
    detail::require(std::isfinite(params.c) && std::isfinite(params.mean), "quad_plus_sine: parameters must be finite");
    auto f = std::shared_ptr<ProblemFamily>(new ProblemFamily(ProblemKind::QuadPlusSine, d));
    if (noise) {
      noise->dim = d;
      validate(*noise);
    }
    f->noise_ = noise;
    f->c_ = params.c;
    f->mean_ = params.mean;
    return f;
  }

  ProblemKind kind() const noexcept { return kind_; }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(dim_); }
  const std::optional<NoiseSpec>& noise() const noexcept { return noise_; }
  double sine_amplitude() const noexcept { return c_; }
  double mean() const noexcept { return mean_; }
  const Vector& x_true() const noexcept { return x_true_; }
  const Dataset* holdout() const noexcept { return holdout_.get(); }

  std::size_t record_width() const noexcept {
    switch (kind_) {
      case ProblemKind::LogisticPair: return 1;
      case ProblemKind::RobustRegression: return dim() + 1;
      case ProblemKind::QuadPlusSine: return dim();
    }
    return 0;
  }

  Vector draw_sample(SeededRng& rng) const {
    switch (kind_) {
      case ProblemKind::LogisticPair:
        return {rng.rademacher()};
      case ProblemKind::RobustRegression: {
        Vector rec(dim() + 1);
        const double s = 1.0 / std::sqrt(static_cast<double>(dim()));
        for (std::size_t j = 0; j < dim(); ++j) rec[j] = s * rng.normal();
        double b = dot(std::span<const double>(rec).first(dim()), x_true_);
        if (noise_) b += sample(*noise_, rng)[0];
        rec[dim()] = b;
        return rec;
      }
      case ProblemKind::QuadPlusSine: {
        Vector rec(dim(), mean_);
        if (noise_) axpy(1.0, sample(*noise_, rng), rec);
        return rec;
      }
    }
    return {};
  }

  Dataset draw_dataset(std::int64_t n, SeededRng& rng) const {
    detail::require(n >= 1, "draw_dataset: n must be >= 1");
    std::vector<double> values;
    values.reserve(static_cast<std::size_t>(n) * record_width());
    for (std::int64_t i = 0; i < n; ++i) {
      const Vector rec = draw_sample(rng);
      values.insert(values.end(), rec.begin(), rec.end());
    }
    return Dataset(kind_, record_width(), std::move(values));
  }

  double sample_loss(std::span<const double> x, std::span<const double> rec) const {
    check_point(x);
    switch (kind_) {
      case ProblemKind::LogisticPair:
        return detail::softplus(rec[0] * x[0]);
      case ProblemKind::RobustRegression:
        return detail::robust_rho(dot(rec.first(dim()), x) - rec[dim()]);
      case ProblemKind::QuadPlusSine: {
        double s = 0.0;
        for (std::size_t j = 0; j < dim(); ++j) s += 0.5 * (x[j] - rec[j]) * (x[j] - rec[j]) + c_ * std::sin(x[j]);
        return s;
      }
    }
    return 0.0;
  }

  Vector sample_grad(std::span<const double> x, std::span<const double> rec) const {
    check_point(x);
    switch (kind_) {
      case ProblemKind::LogisticPair:
        return {rec[0] * detail::logistic(rec[0] * x[0])};
      case ProblemKind::RobustRegression: {
        const auto a = rec.first(dim());
        const double w = detail::robust_rho_prime(dot(a, x) - rec[dim()]);
        Vector g(a.begin(), a.end());
        scale(w, g);
        return g;
      }
      case ProblemKind::QuadPlusSine: {
        Vector g(dim());
        for (std::size_t j = 0; j < dim(); ++j) g[j] = x[j] - rec[j] + c_ * std::cos(x[j]);
        return g;
      }
    }
    return {};
  }

  bool has_population_grad() const noexcept {
    switch (kind_) {
      case ProblemKind::LogisticPair: return true;
      case ProblemKind::RobustRegression: return holdout_ != nullptr;
      case ProblemKind::QuadPlusSine: return !noise_ || has_finite_mean(*noise_);
    }
    return false;
  }

  /// Gradient of F(x) = E f(x; xi). Exact for logistic_pair and
  /// quad_plus_sine; a holdout average for robust_regression.
  Vector population_grad(std::span<const double> x) const {
    check_point(x);
    if (!has_population_grad()) throw not_available("population gradient not available for this family/noise law");
    switch (kind_) {
      case ProblemKind::LogisticPair:
        return {0.5 * (detail::logistic(x[0]) - detail::logistic(-x[0]))};
      case ProblemKind::QuadPlusSine: {
        Vector g(dim());
        for (std::size_t j = 0; j < dim(); ++j) g[j] = x[j] - mean_ + c_ * std::cos(x[j]);
        return g;
      }
      case ProblemKind::RobustRegression:
        return holdout_mean(x).first;
    }
    return {};
  }

  /// Monte Carlo standard error of population_grad, as the norm of the
  /// per-coordinate standard errors. Zero for the analytic families.
  double population_grad_stderr(std::span<const double> x) const {
    if (kind_ != ProblemKind::RobustRegression) return 0.0;
    if (!has_population_grad()) throw not_available("population gradient not available for this family/noise law");
    return holdout_mean(x).second;
  }

  /// Smoothness constant valid for every record in `ds`.
  double smoothness(const Dataset& ds) const {
    switch (kind_) {
      case ProblemKind::LogisticPair: return 0.25;
      case ProblemKind::QuadPlusSine: return 1.0 + std::abs(c_);
      case ProblemKind::RobustRegression: {
        double max_sq = 0.0;
        for (std::size_t i = 0; i < ds.size(); ++i) {
          const auto a = ds.row(i).first(dim());
          max_sq = std::max(max_sq, dot(a, a));
        }
        return detail::kRobustCurvature * std::max(max_sq, 1e-300);
      }
    }
    return 0.0;
  }

 private:
  ProblemFamily(ProblemKind kind, std::int64_t d) : kind_(kind), dim_(d) {}

  void check_point(std::span<const double> x) const {
    if (x.size() != dim()) throw invalid_argument("point has wrong dimension");
  }

  std::pair<Vector, double> holdout_mean(std::span<const double> x) const {
    const Dataset& h = *holdout_;
    const std::size_t d = dim();
    Vector mean(d, 0.0), sq(d, 0.0);
    for (std::size_t i = 0; i < h.size(); ++i) {
      const Vector g = sample_grad(x, h.row(i));
      for (std::size_t j = 0; j < d; ++j) {
        mean[j] += g[j];
        sq[j] += g[j] * g[j];
      }
    }
    const double m = static_cast<double>(h.size());
    double var_sum = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      mean[j] /= m;
      var_sum += std::max(0.0, sq[j] / m - mean[j] * mean[j]);
    }
    return {mean, std::sqrt(var_sum / m)};
  }

  ProblemKind kind_;
  std::int64_t dim_;
  std::optional<NoiseSpec> noise_;
  double c_ = 0.0;
  double mean_ = 0.0;
  Vector x_true_;
  std::shared_ptr<const Dataset> holdout_;
};

/// A finite-sum objective F_S(x) = (1/n) sum_i f(x; xi_i) over a dataset
/// drawn from a family. Immutable.
class ProblemInstance {
 public:
  ProblemInstance(std::shared_ptr<const ProblemFamily> family, Dataset dataset)
      : family_(std::move(family)), dataset_(std::move(dataset)) {
    detail::require(family_ != nullptr, "problem: family is null");
    detail::require(dataset_.kind() == family_->kind(), "problem: dataset family tag does not match");
    detail::require(dataset_.width() == family_->record_width(), "problem: dataset record width does not match family");
    L_ = family_->smoothness(dataset_);
  }

  ProblemKind kind() const noexcept { return family_->kind(); }
  std::size_t dim() const noexcept { return family_->dim(); }
  std::size_t size() const noexcept { return dataset_.size(); }
  double L() const noexcept { return L_; }
  const Dataset& dataset() const noexcept { return dataset_; }
  const ProblemFamily& family() const noexcept { return *family_; }
  const std::shared_ptr<const ProblemFamily>& family_ptr() const noexcept { return family_; }

  ProblemInstance with_dataset(Dataset ds) const { return ProblemInstance(family_, std::move(ds)); }

  Vector component_grad(std::span<const double> x, std::size_t i) const {
    if (i >= size()) throw invalid_argument("component index out of range");
    return family_->sample_grad(x, dataset_.row(i));
  }

  double component_loss(std::span<const double> x, std::size_t i) const {
    if (i >= size()) throw invalid_argument("component index out of range");
    return family_->sample_loss(x, dataset_.row(i));
  }

  Vector empirical_grad(std::span<const double> x) const {
    Vector g(dim(), 0.0);
    for (std::size_t i = 0; i < size(); ++i) axpy(1.0, component_grad(x, i), g);
    scale(1.0 / static_cast<double>(size()), g);
    return g;
  }

  double empirical_loss(std::span<const double> x) const {
    double s = 0.0;
    for (std::size_t i = 0; i < size(); ++i) s += component_loss(x, i);
    return s / static_cast<double>(size());
  }

  Vector population_grad(std::span<const double> x) const { return family_->population_grad(x); }

  Vector draw_sample(SeededRng& rng) const { return family_->draw_sample(rng); }
  Vector sample_grad(std::span<const double> x, std::span<const double> rec) const { return family_->sample_grad(x, rec); }

 private:
  std::shared_ptr<const ProblemFamily> family_;
  Dataset dataset_;
  double L_ = 1.0;
};

/// Two components f_1 = log(1 + e^x), f_2 = log(1 + e^{-x}); minimizer 0, L = 1/4.
inline ProblemInstance make_logistic_pair() {
  return ProblemInstance(ProblemFamily::logistic_pair(), Dataset(ProblemKind::LogisticPair, 1, {1.0, -1.0}));
}

/// Robust regression with labels b = <a, x_true> + noise. `noise` = nullopt
/// gives noiseless labels.
inline ProblemInstance make_robust_regression(std::int64_t n, std::int64_t d, std::optional<NoiseSpec> noise, SeededRng& rng,
                                              std::int64_t holdout_size = 100000) {
  detail::require(n >= 2, "make_robust_regression: n must be >= 2");
  auto family = ProblemFamily::robust_regression(d, noise, rng, holdout_size);
  SeededRng data_rng = rng.split(0xDA7A);
  return ProblemInstance(family, family->draw_dataset(n, data_rng));
}

inline ProblemInstance make_quad_plus_sine(std::int64_t n, std::int64_t d, std::optional<NoiseSpec> noise, SeededRng& rng,
                                           QuadPlusSineParams params = {}) {
  detail::require(n >= 2, "make_quad_plus_sine: n must be >= 2");
  auto family = ProblemFamily::quad_plus_sine(d, noise, params);
  return ProblemInstance(family, family->draw_dataset(n, rng));
}

inline Vector component_grad(const ProblemInstance& problem, std::span<const double> x, std::size_t i) {
  return problem.component_grad(x, i);
}

inline Vector empirical_grad(const ProblemInstance& problem, std::span<const double> x) { return problem.empirical_grad(x); }

inline Vector population_grad(const ProblemInstance& problem, std::span<const double> x) { return problem.population_grad(x); }

}  // namespace htstab
