#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "rankpool/feature_maps.hpp"
#include "rankpool/pooling.hpp"
#include "rankpool/synth_oracle.hpp"
#include "test_util.hpp"

using namespace rankpool;
using rankpool::test::gaussian_vec;
using rankpool::test::seq;
using rankpool::test::vec;

TEST(Ser, Examples) {
  EXPECT_EQ(ser(vec({4, -9})), vec({2, 0, 0, 3}));
  EXPECT_EQ(ser(Vector::Zero(3)), Vector::Zero(6));
}

TEST(Ser, ReconstructionAndNonnegativity) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const Vector x = gaussian_vec(rng, 1 + trial % 9, 10.0);
    const Vector y = ser(x);
    const Eigen::Index d = x.size();
    ASSERT_EQ(y.size(), 2 * d);
    EXPECT_TRUE((y.array() >= 0.0).all());
    for (Eigen::Index i = 0; i < d; ++i) EXPECT_NEAR(y[i] * y[i] - y[i + d] * y[i + d], x[i], std::nextafter(std::abs(x[i]), INFINITY) - std::abs(x[i]));
  }
}

TEST(Ssr, Examples) {
  EXPECT_EQ(ssr(vec({4})), vec({2}));
  EXPECT_EQ(ssr(vec({-9})), vec({-3}));
  std::mt19937_64 rng(2);
  const Vector x = gaussian_vec(rng, 16, 5.0);
  const Vector twice = ssr(ssr(x));
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double expect = (x[i] < 0 ? -1.0 : 1.0) * std::pow(std::abs(x[i]), 0.25);
    EXPECT_NEAR(twice[i], expect, 1e-14 * (1.0 + std::abs(expect)));
  }
}

TEST(Maps, PositiveHomogeneity) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const Vector x = gaussian_vec(rng, 6);
    const double c = 0.1 + static_cast<double>(trial);
    const double tol = 1e-12 * (1.0 + c);
    EXPECT_LT((ser(c * x) - std::sqrt(c) * ser(x)).cwiseAbs().maxCoeff(), tol);
    EXPECT_LT((ssr(c * x) - std::sqrt(c) * ssr(x)).cwiseAbs().maxCoeff(), tol);
    EXPECT_LT((relu(c * x) - c * relu(x)).cwiseAbs().maxCoeff(), tol);
  }
}

TEST(ApplyMap, Examples) {
  const auto s = seq({{-1, 2}, {3, -4}});
  EXPECT_EQ(apply_map(s, MapKind::Identity).matrix(), s.matrix());
  EXPECT_EQ(apply_map(vec({-1, 2}), MapKind::Relu), vec({0, 2}));
  const auto mapped = apply_map(s, MapKind::Ser);
  EXPECT_EQ(mapped.length(), 2u);
  EXPECT_EQ(mapped.dim(), 4u);
  for (MapKind k : {MapKind::Identity, MapKind::Relu, MapKind::Ssr, MapKind::Ser, MapKind::L2Norm})
    EXPECT_EQ(apply_map(s, k).length(), s.length());
}

TEST(ApplyMap, L2NormZeroFramePassesThrough) {
  EXPECT_EQ(apply_map(Vector::Zero(3), MapKind::L2Norm), Vector::Zero(3));
  EXPECT_NEAR(apply_map(vec({3, 4}), MapKind::L2Norm).norm(), 1.0, 1e-15);
  EXPECT_EQ(apply_map(vec({3, 4}), MapKind::L2Norm), vec({0.6, 0.8}));
}

TEST(MapKindNames, RoundTripAndUnknown) {
  for (MapKind k : {MapKind::Identity, MapKind::Relu, MapKind::Ssr, MapKind::Ser, MapKind::L2Norm})
    EXPECT_EQ(parse_map_kind(to_string(k)), k);
  EXPECT_THROW(parse_map_kind("tanh"), InvalidInput);
}

TEST(MapVjp, MatchesFiniteDifferencesAwayFromKinks) {
  std::mt19937_64 rng(4);
  for (MapKind k : {MapKind::Identity, MapKind::Relu, MapKind::Ssr, MapKind::Ser, MapKind::L2Norm}) {
    for (int trial = 0; trial < 10; ++trial) {
      Vector z = gaussian_vec(rng, 5);
      for (Eigen::Index i = 0; i < z.size(); ++i)
        if (std::abs(z[i]) < 0.1) z[i] = 0.5;
      const Vector g = gaussian_vec(rng, static_cast<Eigen::Index>(map_output_dim(k, 5)));
      const Vector fd = fd_gradient([&](const Vector& x) { return g.dot(apply_map(x, k)); }, z);
      const Vector an = map_vjp(z, g, k);
      EXPECT_LT((an - fd).norm(), 1e-7 * (1.0 + an.norm())) << to_string(k);
    }
  }
}

TEST(MapVjp, ZeroDerivativeAtKinks) {
  const Vector z = vec({0, 0});
  const Vector g = vec({1, 1, 1, 1});
  EXPECT_EQ(map_vjp(z, g.head(2), MapKind::Relu), Vector::Zero(2));
  EXPECT_EQ(map_vjp(z, g.head(2), MapKind::Ssr), Vector::Zero(2));
  EXPECT_EQ(map_vjp(z, g, MapKind::Ser), Vector::Zero(2));
  EXPECT_EQ(map_derivative(z, MapKind::Relu), Vector::Zero(2));
  EXPECT_THROW(map_derivative(z, MapKind::Ser), InvalidInput);
}

TEST(TvmSmooth, Examples) {
  EXPECT_EQ(tvm_smooth(seq({{1}, {3}})).matrix(), rankpool::test::rows({{1}, {2}}));
  const auto c = seq({{2, -1}, {2, -1}, {2, -1}});
  EXPECT_EQ(tvm_smooth(c).matrix(), c.matrix());
  std::mt19937_64 rng(5);
  const auto s = FrameSequence::from_matrix(rankpool::test::gaussian(rng, 9, 3));
  const auto sm = tvm_smooth(s);
  EXPECT_EQ(sm.length(), 9u);
  EXPECT_LT((sm.frames.back() - avg_pool(s).values).norm(), 1e-14);
}
