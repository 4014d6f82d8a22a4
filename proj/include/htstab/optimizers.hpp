#pragma once

#include <cmath>
#include <concepts>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "htstab/core_math.hpp"
#include "htstab/error.hpp"
#include "htstab/linalg.hpp"
#include "htstab/rng.hpp"

namespace htstab {

/// Minimal finite-sum interface the optimizers need.
template <typename P>
concept GradientOracle = requires(const P& p, std::span<const double> x, std::size_t i) {
  { p.size() } -> std::convertible_to<std::size_t>;
  { p.dim() } -> std::convertible_to<std::size_t>;
  { p.component_grad(x, i) } -> std::convertible_to<Vector>;
};

struct OptimizerConfig {
  Algorithm algorithm = Algorithm::NsgdM;
  Schedule schedule;
  Vector x0;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  std::int64_t record_every = 1;
};

struct Trajectory {
  std::int64_t T = 0;
  std::vector<std::int64_t> recorded_steps;  // t values of `iterates`, increasing
  std::vector<Vector> iterates;
  std::vector<std::uint64_t> index_log;  // all sampled indices, B per step for NSGD-B
  std::vector<double> step_norms;        // ||x_{t+1} - x_t||
  std::vector<double> grad_norms;        // norm of the raw stochastic gradient (batch mean for NSGD-B)
  Vector final_iterate;                  // x_T, not an output candidate
  Vector output;
  std::int64_t output_index = 0;
};

namespace detail {

inline void validate_config(const OptimizerConfig& cfg, Algorithm expected, std::size_t dim) {
  detail::require(cfg.algorithm == expected, "optimizer config names a different algorithm");
  validate_schedule(cfg.algorithm, cfg.schedule);
  detail::require(cfg.record_every >= 1, "record_every must be >= 1");
  detail::require(cfg.x0.size() == dim, "x0 has wrong dimension");
  detail::require(all_finite(cfg.x0), "x0 must be finite");
}

// x -= eta * v / ||v||, or no move when v == 0.
inline void normalized_step(std::span<double> x, double eta, std::span<const double> v) {
  const double nv = norm(v);
  if (nv == 0.0) return;
  for (std::size_t j = 0; j < x.size(); ++j) x[j] -= eta * (v[j] / nv);
}

// Shared driver: `step(x, idx_rng, traj)` applies one update to x in place
// and logs the indices and gradient norm it used.
template <typename StepFn>
Trajectory drive(const OptimizerConfig& cfg, StepFn&& step) {
  const std::int64_t T = cfg.schedule.T;
  const SeededRng base(cfg.seed, cfg.stream);
  SeededRng idx_rng = base.split(0);
  SeededRng out_rng = base.split(1);

  Trajectory traj;
  traj.T = T;
  traj.output_index = static_cast<std::int64_t>(out_rng.uniform_index(static_cast<std::uint64_t>(T)));
  traj.step_norms.reserve(static_cast<std::size_t>(T));
  traj.grad_norms.reserve(static_cast<std::size_t>(T));

  Vector x = cfg.x0;
  Vector prev;
  for (std::int64_t t = 0; t < T; ++t) {
    if (t == traj.output_index) traj.output = x;
    if (t == 0 || t == T - 1 || t % cfg.record_every == 0 || t == traj.output_index) {
      traj.recorded_steps.push_back(t);
      traj.iterates.push_back(x);
    }
    prev = x;
    step(x, idx_rng, traj);
    if (!all_finite(x)) throw numerical_divergence(static_cast<std::size_t>(t), "non-finite iterate");
    traj.step_norms.push_back(distance(x, prev));
  }
  traj.final_iterate = std::move(x);
  return traj;
}

}  // namespace detail

/// x_{t+1} = x_t - eta clip_gamma(grad f(x_t; xi_{i_t}))
template <GradientOracle Problem>
Trajectory run_clipped_sgd(const Problem& problem, const OptimizerConfig& cfg) {
  detail::validate_config(cfg, Algorithm::ClippedSGD, problem.dim());
  const double eta = cfg.schedule.eta;
  const double gamma = *cfg.schedule.gamma;
  const auto n = static_cast<std::uint64_t>(problem.size());
  return detail::drive(cfg, [&](Vector& x, SeededRng& rng, Trajectory& traj) {
    const auto i = rng.uniform_index(n);
    traj.index_log.push_back(i);
    const Vector g = problem.component_grad(x, static_cast<std::size_t>(i));
    if (!all_finite(g)) throw numerical_divergence(traj.step_norms.size(), "non-finite gradient");
    traj.grad_norms.push_back(norm(g));
    axpy(-eta, clip(g, gamma), x);
  });
}

/// g_t = mean of B i.i.d. component gradients; x_{t+1} = x_t - eta g_t / ||g_t||
template <GradientOracle Problem>
Trajectory run_nsgd_b(const Problem& problem, const OptimizerConfig& cfg) {
  detail::validate_config(cfg, Algorithm::NsgdB, problem.dim());
  const double eta = cfg.schedule.eta;
  const std::int64_t B = *cfg.schedule.B;
  const auto n = static_cast<std::uint64_t>(problem.size());
  return detail::drive(cfg, [&](Vector& x, SeededRng& rng, Trajectory& traj) {
    Vector g(x.size(), 0.0);
    for (std::int64_t b = 0; b < B; ++b) {
      const auto i = rng.uniform_index(n);
      traj.index_log.push_back(i);
      axpy(1.0, problem.component_grad(x, static_cast<std::size_t>(i)), g);
    }
    scale(1.0 / static_cast<double>(B), g);
    if (!all_finite(g)) throw numerical_divergence(traj.step_norms.size(), "non-finite gradient");
    traj.grad_norms.push_back(norm(g));
    detail::normalized_step(x, eta, g);
  });
}

namespace detail {

// Shared body of NSGD-M and NSGD-CM; gamma = +inf disables clipping.
template <GradientOracle Problem>
Trajectory run_momentum(const Problem& problem, const OptimizerConfig& cfg, double gamma) {
  const double eta = cfg.schedule.eta;
  const double beta = *cfg.schedule.beta;
  const auto n = static_cast<std::uint64_t>(problem.size());
  Vector m(problem.dim(), 0.0);  // m_{-1} = 0
  return drive(cfg, [&](Vector& x, SeededRng& rng, Trajectory& traj) {
    const auto i = rng.uniform_index(n);
    traj.index_log.push_back(i);
    const Vector g = problem.component_grad(x, static_cast<std::size_t>(i));
    if (!all_finite(g)) throw numerical_divergence(traj.step_norms.size(), "non-finite gradient");
    traj.grad_norms.push_back(norm(g));
    const Vector gc = clip(g, gamma);
    for (std::size_t j = 0; j < m.size(); ++j) m[j] = beta * m[j] + (1.0 - beta) * gc[j];
    normalized_step(x, eta, m);
  });
}

}  // namespace detail

/// m_t = beta m_{t-1} + (1 - beta) grad f(x_t; xi_{i_t}); x_{t+1} = x_t - eta m_t / ||m_t||
template <GradientOracle Problem>
Trajectory run_nsgd_m(const Problem& problem, const OptimizerConfig& cfg) {
  detail::validate_config(cfg, Algorithm::NsgdM, problem.dim());
  return detail::run_momentum(problem, cfg, kInfinity);
}

/// Clip, then momentum, then normalize.
template <GradientOracle Problem>
Trajectory run_nsgd_cm(const Problem& problem, const OptimizerConfig& cfg) {
  detail::validate_config(cfg, Algorithm::NsgdCM, problem.dim());
  return detail::run_momentum(problem, cfg, *cfg.schedule.gamma);
}

template <GradientOracle Problem>
Trajectory run(const Problem& problem, const OptimizerConfig& cfg) {
  switch (cfg.algorithm) {
    case Algorithm::ClippedSGD: return run_clipped_sgd(problem, cfg);
    case Algorithm::NsgdB: return run_nsgd_b(problem, cfg);
    case Algorithm::NsgdM: return run_nsgd_m(problem, cfg);
    case Algorithm::NsgdCM: return run_nsgd_cm(problem, cfg);
  }
  throw invalid_argument("unknown algorithm");
}

/// Uniform draw over the stored iterates. With record_every = 1 this is the
/// uniform output over {x_0, ..., x_{T-1}}.
inline std::pair<std::int64_t, Vector> sample_output(const Trajectory& traj, SeededRng& rng) {
  detail::require(!traj.iterates.empty(), "sample_output: trajectory is empty");
  const auto k = static_cast<std::size_t>(rng.uniform_index(traj.iterates.size()));
  return {traj.recorded_steps[k], traj.iterates[k]};
}

}  // namespace htstab
