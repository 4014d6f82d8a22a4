#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "htstab/optimizers.hpp"
#include "htstab/problems.hpp"

using namespace htstab;

namespace {

// Every component has the same constant gradient.
struct ConstantGrad {
  Vector g;
  std::size_t n = 1;
  std::size_t size() const { return n; }
  std::size_t dim() const { return g.size(); }
  Vector component_grad(std::span<const double>, std::size_t) const { return g; }
};

// Component i has gradient scale_i * (x - anchor) + offset_i; large offsets
// keep norms above any small clip threshold.
struct Linear {
  std::vector<Vector> offsets;
  std::size_t size() const { return offsets.size(); }
  std::size_t dim() const { return offsets.front().size(); }
  Vector component_grad(std::span<const double> x, std::size_t i) const {
    Vector g = offsets.at(i);
    for (std::size_t j = 0; j < g.size(); ++j) g[j] += 0.1 * x[j];
    return g;
  }
};

OptimizerConfig config(Algorithm a, Schedule s, Vector x0, std::uint64_t seed = 1) {
  OptimizerConfig c;
  c.algorithm = a;
  c.schedule = s;
  c.x0 = std::move(x0);
  c.seed = seed;
  c.stream = 0;
  return c;
}

bool same_trajectory(const Trajectory& a, const Trajectory& b) {
  return a.iterates == b.iterates && a.index_log == b.index_log && a.output == b.output && a.final_iterate == b.final_iterate &&
         a.output_index == b.output_index && a.step_norms == b.step_norms;
}

ProblemInstance qps(std::int64_t n, std::uint64_t seed, double c = 0.5) {
  SeededRng rng(seed, 0);
  return make_quad_plus_sine(n, 4, NoiseSpec{NoiseFamily::SymmetricAlphaStable, 1.6, 1.0, 4}, rng, {c, 0.0});
}

}  // namespace

TEST(ClippedSgd, ConstantGradientInsideBall) {
  const ConstantGrad P{{0.3, 0.0}, 3};
  const Schedule s{25, 0.1, 1.0, std::nullopt, std::nullopt};
  const Trajectory t = run_clipped_sgd(P, config(Algorithm::ClippedSGD, s, {1.0, 2.0}));
  EXPECT_NEAR(t.final_iterate[0], 1.0 - 0.3 * 25 * 0.1, 1e-12);
  EXPECT_EQ(t.final_iterate[1], 2.0);
}

TEST(ClippedSgd, LargeGradientsStepExactlyGammaEta) {
  const Linear P{{{50.0, -20.0}, {-40.0, 30.0}, {10.0, 90.0}}};
  const Schedule s{200, 0.05, 0.5, std::nullopt, std::nullopt};
  const Trajectory t = run_clipped_sgd(P, config(Algorithm::ClippedSGD, s, {0.0, 0.0}));
  for (double sn : t.step_norms) EXPECT_NEAR(sn, 0.5 * 0.05, 1e-15);
}

TEST(ClippedSgd, LogisticPairNeverClipsAtGammaOne) {
  const ProblemInstance P = make_logistic_pair();
  const Schedule s{500, 0.3, 1.0, std::nullopt, std::nullopt};
  const Trajectory t = run_clipped_sgd(P, config(Algorithm::ClippedSGD, s, {2.0}));
  for (double g : t.grad_norms) EXPECT_LT(g, 1.0);
  const Trajectory u = run_clipped_sgd(P, config(Algorithm::ClippedSGD, {500, 0.3, kInfinity, std::nullopt, std::nullopt}, {2.0}));
  EXPECT_EQ(t.iterates, u.iterates);
}

TEST(ClippedSgd, MissingGammaRejected) {
  const ProblemInstance P = make_logistic_pair();
  EXPECT_THROW(run_clipped_sgd(P, config(Algorithm::ClippedSGD, {5, 0.1, std::nullopt, std::nullopt, std::nullopt}, {0.0})),
               invalid_argument);
}

TEST(NsgdB, LogisticRandomWalk) {
  const ProblemInstance P = make_logistic_pair();
  const double eta = 0.1;
  const Schedule s{300, eta, std::nullopt, std::nullopt, 1};
  const Trajectory t = run_nsgd_b(P, config(Algorithm::NsgdB, s, {0.0}, 17));
  ASSERT_EQ(t.index_log.size(), 300u);
  double x = 0.0;
  for (std::size_t k = 0; k < t.index_log.size(); ++k) {
    ASSERT_EQ(t.iterates[k][0], x);
    // f'_i has the sign of the record y_i, so the step is -eta * y_i
    x -= eta * P.dataset().row(t.index_log[k])[0];
  }
  EXPECT_EQ(t.final_iterate[0], x);
}

TEST(NsgdB, ZeroGradientMeansNoMove) {
  const ConstantGrad P{{0.0, 0.0, 0.0}, 4};
  const Trajectory t = run_nsgd_b(P, config(Algorithm::NsgdB, {10, 0.5, std::nullopt, std::nullopt, 3}, {1.0, 2.0, 3.0}));
  EXPECT_EQ(t.final_iterate, (Vector{1.0, 2.0, 3.0}));
  for (double sn : t.step_norms) EXPECT_EQ(sn, 0.0);
}

TEST(NsgdB, StepNormIsEta) {
  const ProblemInstance P = qps(64, 2);
  const Trajectory t = run_nsgd_b(P, config(Algorithm::NsgdB, {100, 0.07, std::nullopt, std::nullopt, 4}, Vector(4, 0.0)));
  EXPECT_EQ(t.index_log.size(), 400u);
  for (double sn : t.step_norms) EXPECT_NEAR(sn, 0.07, 4 * 0.07 * 1e-15 + 1e-16);
}

TEST(NsgdM, BetaZeroEqualsNsgdBBatchOne) {
  const ProblemInstance P = qps(50, 3);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Trajectory a = run_nsgd_m(P, config(Algorithm::NsgdM, {60, 0.1, std::nullopt, 0.0, std::nullopt}, Vector(4, 0.5), seed));
    const Trajectory b = run_nsgd_b(P, config(Algorithm::NsgdB, {60, 0.1, std::nullopt, std::nullopt, 1}, Vector(4, 0.5), seed));
    EXPECT_TRUE(same_trajectory(a, b)) << seed;
  }
}

TEST(NsgdM, MomentumGeometricSum) {
  // Constant gradient g: m_t = (1 - beta^{t+1}) g, so every direction is g/|g|
  // and the first step has m_0 = (1 - beta) g.
  const Vector g{3.0, -4.0};
  const ConstantGrad P{g, 2};
  const double beta = 0.9;
  const Trajectory t = run_nsgd_m(P, config(Algorithm::NsgdM, {30, 0.2, std::nullopt, beta, std::nullopt}, {0.0, 0.0}));
  for (std::size_t k = 0; k < t.iterates.size(); ++k) {
    const double s = 0.2 * static_cast<double>(k);
    EXPECT_NEAR(t.iterates[k][0], -s * 0.6, 1e-12);
    EXPECT_NEAR(t.iterates[k][1], s * 0.8, 1e-12);
  }
  // direct check of the recursion
  Vector m{0.0, 0.0};
  for (int k = 0; k < 30; ++k) {
    for (std::size_t j = 0; j < 2; ++j) m[j] = beta * m[j] + (1 - beta) * g[j];
    const double f = 1.0 - std::pow(beta, k + 1);
    EXPECT_NEAR(m[0], f * g[0], 1e-12);
    EXPECT_NEAR(m[1], f * g[1], 1e-12);
  }
}

TEST(NsgdM, StepNormIsEta) {
  const ProblemInstance P = qps(64, 4);
  const Trajectory t = run_nsgd_m(P, config(Algorithm::NsgdM, {200, 0.03, std::nullopt, 0.8, std::nullopt}, Vector(4, 1.0)));
  for (double sn : t.step_norms) EXPECT_NEAR(sn, 0.03, 1e-15);
}

TEST(NsgdCm, InfiniteGammaEqualsNsgdM) {
  const ProblemInstance P = qps(40, 5);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Trajectory a = run_nsgd_cm(P, config(Algorithm::NsgdCM, {50, 0.1, kInfinity, 0.7, std::nullopt}, Vector(4, -1.0), seed));
    const Trajectory b = run_nsgd_m(P, config(Algorithm::NsgdM, {50, 0.1, std::nullopt, 0.7, std::nullopt}, Vector(4, -1.0), seed));
    EXPECT_TRUE(same_trajectory(a, b)) << seed;
  }
}

TEST(NsgdCm, BetaZeroFollowsClippedDirection) {
  const Linear P{{{50.0, -20.0}, {-40.0, 30.0}, {10.0, 90.0}}};
  const double gamma = 0.3;
  const Trajectory t = run_nsgd_cm(P, config(Algorithm::NsgdCM, {40, 0.05, gamma, 0.0, std::nullopt}, {0.0, 0.0}));
  for (std::size_t k = 0; k + 1 < t.iterates.size(); ++k) {
    const Vector g = P.component_grad(t.iterates[k], static_cast<std::size_t>(t.index_log[k]));
    const Vector c = clip(g, gamma);
    for (std::size_t j = 0; j < 2; ++j)
      EXPECT_NEAR(t.iterates[k + 1][j] - t.iterates[k][j], -0.05 * c[j] / norm(c), 1e-14);
  }
}

TEST(NsgdCm, MomentumNormBoundedByGamma) {
  // Replay the recursion on the run's index log and check ||m_t|| <= gamma.
  const ProblemInstance P = qps(30, 6);
  const double gamma = 0.4, beta = 0.6;
  const Trajectory t = run_nsgd_cm(P, config(Algorithm::NsgdCM, {80, 0.05, gamma, beta, std::nullopt}, Vector(4, 2.0)));
  Vector m(4, 0.0);
  for (std::size_t k = 0; k < t.iterates.size(); ++k) {
    const Vector c = clip(P.component_grad(t.iterates[k], static_cast<std::size_t>(t.index_log[k])), gamma);
    for (std::size_t j = 0; j < 4; ++j) m[j] = beta * m[j] + (1 - beta) * c[j];
    EXPECT_LE(norm(m), gamma + 1e-15);
  }
}

TEST(Optimizers, SeedDeterminism) {
  const ProblemInstance P = qps(100, 7);
  for (Algorithm a : {Algorithm::ClippedSGD, Algorithm::NsgdB, Algorithm::NsgdM, Algorithm::NsgdCM}) {
    const Schedule s = schedule_for(a, 100, 1.5);
    const auto c = config(a, s, Vector(4, 0.3), 99);
    EXPECT_TRUE(same_trajectory(run(P, c), run(P, c))) << to_string(a);
  }
}

TEST(Optimizers, StepSizeContract) {
  const ProblemInstance P = qps(100, 8);
  for (Algorithm a : {Algorithm::ClippedSGD, Algorithm::NsgdB, Algorithm::NsgdM, Algorithm::NsgdCM}) {
    const Schedule s = schedule_for(a, 4096, 1.5);
    const Trajectory t = run(P, config(a, s, Vector(4, 0.0), 3));
    ASSERT_EQ(t.step_norms.size(), static_cast<std::size_t>(s.T));
    for (double sn : t.step_norms) {
      if (a == Algorithm::ClippedSGD) EXPECT_LE(sn, *s.gamma * s.eta * (1 + 1e-12));
      else EXPECT_TRUE(sn == 0.0 || std::abs(sn - s.eta) <= 1e-12 * s.eta);
    }
  }
}

TEST(Optimizers, OutputMatchesRecordedIterate) {
  const ProblemInstance P = qps(100, 9);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Trajectory t = run(P, config(Algorithm::NsgdM, {13, 0.1, std::nullopt, 0.5, std::nullopt}, Vector(4, 0.0), seed));
    ASSERT_GE(t.output_index, 0);
    ASSERT_LT(t.output_index, 13);
    EXPECT_EQ(t.output, t.iterates[static_cast<std::size_t>(t.output_index)]);
  }
}

TEST(Optimizers, OutputIndexUnaffectedByRecordingCadence) {
  const ProblemInstance P = qps(100, 10);
  auto c = config(Algorithm::ClippedSGD, {50, 0.1, 1.0, std::nullopt, std::nullopt}, Vector(4, 0.0), 4);
  const Trajectory full = run(P, c);
  c.record_every = 7;
  const Trajectory sparse = run(P, c);
  EXPECT_EQ(full.output, sparse.output);
  EXPECT_EQ(full.final_iterate, sparse.final_iterate);
  EXPECT_LT(sparse.iterates.size(), full.iterates.size());
}

TEST(Optimizers, IndexStreamIndependentOfT) {
  const ProblemInstance P = qps(100, 11);
  const Trajectory a = run(P, config(Algorithm::NsgdM, {20, 0.1, std::nullopt, 0.5, std::nullopt}, Vector(4, 0.0), 5));
  const Trajectory b = run(P, config(Algorithm::NsgdM, {40, 0.1, std::nullopt, 0.5, std::nullopt}, Vector(4, 0.0), 5));
  for (std::size_t k = 0; k < 20; ++k) EXPECT_EQ(a.index_log[k], b.index_log[k]);
}

TEST(Optimizers, DivergenceCarriesStep) {
  struct Blowup {
    std::size_t size() const { return 1; }
    std::size_t dim() const { return 1; }
    Vector component_grad(std::span<const double> x, std::size_t) const { return {x[0] * 1e200}; }
  } P;
  OptimizerConfig c = config(Algorithm::ClippedSGD, {10, 1.0, kInfinity, std::nullopt, std::nullopt}, {1.0});
  try {
    run_clipped_sgd(P, c);
    FAIL() << "expected divergence";
  } catch (const numerical_divergence& e) {
    EXPECT_LE(e.step(), 2u);
  }
}

TEST(Optimizers, MonotoneOptimizationSignal) {
  double first = 0, last = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SeededRng rng(seed, 77);
    const ProblemInstance P = make_quad_plus_sine(512, 4, NoiseSpec{NoiseFamily::Gaussian, 2.0, 1.0, 4}, rng, {0.1, 0.0});
    const Schedule s = schedule_for(Algorithm::NsgdM, 512, 2.0);
    const Trajectory t = run(P, config(Algorithm::NsgdM, s, Vector(4, 3.0), seed));
    const std::size_t T = t.iterates.size(), q = std::max<std::size_t>(1, T / 4);
    for (std::size_t k = 0; k < q; ++k) {
      first += norm(P.empirical_grad(t.iterates[k]));
      last += norm(P.empirical_grad(t.iterates[T - 1 - k]));
    }
  }
  EXPECT_LT(last, first);
}

TEST(SampleOutput, SingleStepReturnsStart) {
  const ProblemInstance P = make_logistic_pair();
  const Trajectory t = run(P, config(Algorithm::NsgdB, {1, 0.1, std::nullopt, std::nullopt, 1}, {0.7}));
  SeededRng rng(1, 0);
  const auto [k, x] = sample_output(t, rng);
  EXPECT_EQ(k, 0);
  EXPECT_EQ(x, Vector{0.7});
  EXPECT_EQ(t.output, Vector{0.7});
}

TEST(SampleOutput, UniformFrequencies) {
  const ProblemInstance P = make_logistic_pair();
  const Trajectory t = run(P, config(Algorithm::NsgdB, {10, 0.1, std::nullopt, std::nullopt, 1}, {0.0}));
  std::vector<int> counts(10, 0);
  const int draws = 100000;
  const SeededRng base(3, 3);
  for (int k = 0; k < draws; ++k) {
    SeededRng r = base.split(static_cast<std::uint64_t>(k));
    const auto [idx, x] = sample_output(t, r);
    EXPECT_EQ(x, t.iterates[static_cast<std::size_t>(idx)]);
    ++counts[static_cast<std::size_t>(idx)];
  }
  const double sd = std::sqrt(draws * 0.1 * 0.9);
  for (int c : counts) EXPECT_NEAR(c, draws * 0.1, 3.0 * sd);
}

TEST(SampleOutput, RunOutputIndexIsUniform) {
  const ProblemInstance P = make_logistic_pair();
  std::vector<int> counts(10, 0);
  const int runs = 20000;
  for (int k = 0; k < runs; ++k) {
    auto c = config(Algorithm::NsgdB, {10, 0.1, std::nullopt, std::nullopt, 1}, {0.0}, 5);
    c.stream = static_cast<std::uint64_t>(k);
    ++counts[static_cast<std::size_t>(run(P, c).output_index)];
  }
  const double sd = std::sqrt(runs * 0.1 * 0.9);
  for (int c : counts) EXPECT_NEAR(c, runs * 0.1, 3.5 * sd);
}
