#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "rankpool/pooling.hpp"
#include "rankpool/synth_oracle.hpp"
#include "test_util.hpp"

using namespace rankpool;
using rankpool::test::gaussian;
using rankpool::test::seq;
using rankpool::test::vec;

namespace {

FrameSequence permuted(const FrameSequence& s, std::mt19937_64& rng) {
  FrameSequence out = s;
  std::shuffle(out.frames.begin(), out.frames.end(), rng);
  return out;
}

FrameSequence reversed(const FrameSequence& s) {
  FrameSequence out = s;
  std::reverse(out.frames.begin(), out.frames.end());
  return out;
}

}  // namespace

TEST(AvgPool, Examples) {
  EXPECT_EQ(avg_pool(seq({{1, 3}, {3, 5}})).values, vec({2, 4}));
  EXPECT_EQ(avg_pool(seq({{7, -2}})).values, vec({7, -2}));
}

TEST(MaxPool, Examples) {
  EXPECT_EQ(max_pool(seq({{1, 3}, {3, -5}})).values, vec({3, 3}));
  EXPECT_EQ(max_pool(seq({{7, -2}})).values, vec({7, -2}));
}

TEST(TemporalPyramid, Examples) {
  EXPECT_EQ(temporal_pyramid(seq({{0}, {2}, {4}, {6}}), PoolBase::Avg).values, vec({3, 1, 5}));
  EXPECT_EQ(temporal_pyramid(seq({{4, 1}}), PoolBase::Avg).values, vec({4, 1, 4, 1, 4, 1}));
  EXPECT_EQ(temporal_pyramid(seq({{4, 1}}), PoolBase::Max).values, vec({4, 1, 4, 1, 4, 1}));
  // Odd J: the first half takes the extra frame.
  EXPECT_EQ(temporal_pyramid(seq({{0}, {3}, {9}}), PoolBase::Max).values, vec({9, 3, 9}));
  const auto s = seq({{0}, {2}, {4}, {6}});
  EXPECT_NE(temporal_pyramid(s, PoolBase::Avg).values, temporal_pyramid(reversed(s), PoolBase::Avg).values);
}

TEST(FlatPools, PermutationInvariant) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    // Integer-valued frames keep the mean exact under any summation order.
    Matrix m = gaussian(rng, 1 + trial % 17, 1 + trial % 5, 8.0).array().round();
    const auto s = FrameSequence::from_matrix(m);
    const auto p = permuted(s, rng);
    EXPECT_EQ(avg_pool(s).values, avg_pool(p).values);
    EXPECT_EQ(max_pool(s).values, max_pool(p).values);
    EXPECT_EQ(temporal_pyramid(s, PoolBase::Avg).values.head(m.cols()),
              temporal_pyramid(p, PoolBase::Avg).values.head(m.cols()));
  }
}

TEST(AvgPool, StationaryPointOfSquaredDistance) {
  std::mt19937_64 rng(6);
  const Matrix m = gaussian(rng, 13, 4);
  const Vector mu = avg_pool(FrameSequence::from_matrix(m)).values;
  // Gradient of sum_t |x_t - mu|^2 / 2 at mu.
  const Vector grad = -(m.rowwise() - mu.transpose()).colwise().sum().transpose();
  EXPECT_LT(grad.norm(), 1e-12);
}

TEST(SvrResidual, ThreeCases) {
  EXPECT_DOUBLE_EQ(svr_residual(0.5, 0.1), 0.4);
  EXPECT_DOUBLE_EQ(svr_residual(-0.5, 0.1), -0.4);
  EXPECT_EQ(svr_residual(0.05, 0.1), 0.0);
  EXPECT_EQ(svr_residual(-0.1, 0.1), 0.0);
}

TEST(RankPool, AllZeroFrames) {
  const auto sol = rank_pool(Matrix::Zero(5, 3));
  EXPECT_EQ(sol.u.values, Vector::Zero(3));
  EXPECT_LE(sol.grad_norm, 1e-8);
}

TEST(RankPool, OneDimensionalMatchesOracle) {
  const Matrix v = rankpool::test::rows({{1}, {2}, {3}});
  SvrConfig cfg;
  const auto sol = rank_pool(v, cfg);
  EXPECT_NEAR(sol.u.values[0], oracle_svr_1d({1, 2, 3}, 1.0, 0.1), 1e-3);
}

TEST(RankPool, NoiselessRampIsOrdered) {
  const Vector a = vec({0.6, 0.0, -0.8});
  Matrix v(20, 3);
  for (int t = 0; t < 20; ++t) v.row(t) = (t + 1.0) * a.transpose();
  SvrConfig cfg;
  cfg.C = 10;
  const auto sol = rank_pool(v, cfg);
  const Vector scores = v * sol.u.values;
  for (int t = 1; t < 20; ++t) EXPECT_GT(scores[t], scores[t - 1]);
}

TEST(RankPool, SingleFrame) {
  const auto sol = rank_pool(seq({{2, 0}}));
  // Minimizer of 1/2 u^2 + 1/2 (|1 - 2u| - 0.1)^2 along the frame.
  const double u0 = oracle_svr_1d({2.0}, 1.0, 0.1);
  EXPECT_NEAR(sol.u.values[0], u0, 1e-3);
  EXPECT_NEAR(sol.u.values[1], 0.0, 1e-12);
}

TEST(RankPool, SolutionDiagnostics) {
  std::mt19937_64 rng(9);
  const Matrix v = gaussian(rng, 15, 4);
  SvrConfig cfg;
  const auto sol = rank_pool(v, cfg);
  EXPECT_LE(sol.grad_norm, cfg.tol);
  ASSERT_EQ(sol.residuals.size(), 15);
  const Vector scores = v * sol.u.values;
  for (int t = 0; t < 15; ++t) {
    const double r = scores[t] - (t + 1.0);
    EXPECT_EQ(sol.active[static_cast<std::size_t>(t)], sol.residuals[t] != 0.0);
    if (std::abs(r) < cfg.epsilon) EXPECT_EQ(sol.residuals[t], 0.0);
    if (sol.active[static_cast<std::size_t>(t)]) EXPECT_EQ(sol.residuals[t] > 0, r > 0);
  }
  EXPECT_DOUBLE_EQ(sol.objective, svr_objective(v, sol.u.values, cfg));
}

TEST(RankPool, ReversalChangesEncoding) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 30; ++trial) {
    const auto s = FrameSequence::from_matrix(gaussian(rng, 2 + trial % 20, 1 + trial % 6));
    const double gap = (rank_pool(s).u.values - rank_pool(reversed(s)).u.values).norm();
    EXPECT_GT(gap, 1e-6);
  }
}

TEST(RankPool, GlobalMinimumOfConvexObjective) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix v = gaussian(rng, 5 + trial, 3);
    SvrConfig cfg;
    const auto sol = rank_pool(v, cfg);
    for (int probe = 0; probe < 20; ++probe) {
      const Vector other = sol.u.values + rankpool::test::gaussian_vec(rng, 3, probe % 2 ? 1.0 : 1e-3);
      EXPECT_LE(sol.objective, svr_objective(v, other, cfg) + 1e-6);
    }
  }
}

TEST(RankPool, AnalyticGradientMatchesFiniteDifference) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix v = gaussian(rng, 12, 3);
    SvrConfig cfg;
    cfg.epsilon = 0.0;
    // Away from the optimum the gradient is large enough for a relative test.
    const Vector u = rank_pool(v, cfg).u.values + rankpool::test::gaussian_vec(rng, 3, 0.5);
    const Vector fd = fd_gradient([&](const Vector& x) { return svr_objective(v, x, cfg); }, u);
    const Vector an = svr_gradient(v, u, cfg);
    EXPECT_LT((an - fd).norm() / an.norm(), 1e-5);
  }
}

TEST(RankPool, ManyFramesFewDimensionsAndTheReverse) {
  std::mt19937_64 rng(13);
  SvrConfig cfg;
  for (auto [j, d] : {std::pair{200, 3}, std::pair{3, 60}}) {
    const Matrix v = gaussian(rng, j, d);
    const auto sol = rank_pool(v, cfg);
    EXPECT_LE(svr_gradient(v, sol.u.values, cfg).norm(), 1e-8);
  }
}

TEST(RankPool, NonConvergenceCarriesBestIterate) {
  std::mt19937_64 rng(14);
  const Matrix v = gaussian(rng, 30, 4);
  SvrConfig cfg;
  cfg.max_iter = 1;
  cfg.tol = 1e-300;
  try {
    rank_pool(v, cfg);
    FAIL() << "expected SolverDidNotConverge";
  } catch (const SolverDidNotConverge& e) {
    EXPECT_EQ(e.best().size(), 4);
    EXPECT_GT(e.grad_norm(), 0.0);
  }
}

TEST(SvrConfig, RejectsInvalidConstants) {
  SvrConfig c;
  c.C = 0;
  EXPECT_THROW(c.validate(), InvalidInput);
  c = {};
  c.epsilon = -1;
  EXPECT_THROW(c.validate(), InvalidInput);
  c = {};
  c.tol = 0;
  EXPECT_THROW(c.validate(), InvalidInput);
}
