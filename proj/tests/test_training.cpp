#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "rankpool/synth_oracle.hpp"
#include "rankpool/training.hpp"
#include "test_util.hpp"

using namespace rankpool;
using rankpool::test::gaussian;
using rankpool::test::gaussian_vec;
using rankpool::test::vec;

namespace {

Dataset small_order_classes(std::size_t k, std::size_t n, std::size_t dim, std::uint64_t seed = 0) {
  SynthSpec s;
  s.classes = k;
  s.count = n;
  s.dim = dim;
  s.min_length = s.max_length = 12;
  s.seed = seed;
  return gen_order_classes(s);
}

double max_abs_diff(const Model& a, const Model& b) {
  double d = (a.head.beta - b.head.beta).cwiseAbs().maxCoeff();
  d = std::max(d, (a.head.bias - b.head.bias).cwiseAbs().maxCoeff());
  if (a.W && b.W) d = std::max(d, (*a.W - *b.W).cwiseAbs().maxCoeff());
  return d;
}

}  // namespace

TEST(Softmax, Examples) {
  const Vector p = softmax_prob(Vector::Constant(4, 2.5));
  for (Eigen::Index i = 0; i < 4; ++i) EXPECT_NEAR(p[i], 0.25, 1e-15);
  const Vector q = softmax_prob(vec({1.0, 1.0 + std::log(3.0)}));
  EXPECT_NEAR(q[0], 0.25, 1e-12);
  EXPECT_NEAR(q[1], 0.75, 1e-12);
  const Vector big = softmax_prob(vec({1000.0, 1000.0}));
  EXPECT_NEAR(big[0], 0.5, 1e-15);
}

TEST(Softmax, SumsToOneAndShiftInvariant) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const Vector s = gaussian_vec(rng, 2 + trial % 6, 10.0);
    const Vector p = softmax_prob(s);
    EXPECT_NEAR(p.sum(), 1.0, 1e-12);
    EXPECT_LT((softmax_prob(s.array() + 37.5) - p).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Softmax, LogProbabilityGradient) {
  std::mt19937_64 rng(2);
  const Matrix beta = gaussian(rng, 3, 5);
  const Vector bias = gaussian_vec(rng, 3);
  const Vector u = gaussian_vec(rng, 5);
  const int y = 1;
  const Vector p = softmax_prob(u, beta, bias);
  const Vector an = beta.row(y).transpose() - beta.transpose() * p;
  const Vector fd = fd_gradient([&](const Vector& x) { return std::log(softmax_prob(x, beta, bias)[y]); }, u);
  EXPECT_LT((an - fd).cwiseAbs().maxCoeff(), 1e-6);
  LinearHead head{beta, bias, LossKind::CrossEntropy, false};
  EXPECT_LT((head.loss_grad(u, y).d_u + an).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(LinearHead, LossGradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(3);
  for (LossKind loss : {LossKind::CrossEntropy, LossKind::Hinge}) {
    for (bool normalize : {false, true}) {
      LinearHead head{gaussian(rng, 3, 4), gaussian_vec(rng, 3), loss, normalize};
      const Vector u = gaussian_vec(rng, 4);
      const auto g = head.loss_grad(u, 2);
      const Vector fd = fd_gradient([&](const Vector& x) { return head.loss_value(x, 2); }, u);
      EXPECT_LT((g.d_u - fd).norm(), 1e-6 * (1.0 + fd.norm()));
      EXPECT_NEAR(g.loss, head.loss_value(u, 2), 1e-15);
    }
  }
}

TEST(Argmax, ScaleInvariantAndLowestIndexOnTies) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const Vector s = gaussian_vec(rng, 5);
    EXPECT_EQ(argmax(s), argmax(3.7 * s));
  }
  EXPECT_EQ(argmax(vec({1, 2, 2})), 1);
}

TEST(LrSchedule, Endpoints) {
  SgdConfig c;
  c.epochs = 5;
  EXPECT_DOUBLE_EQ(lr_at(0, c), 1e-3);
  EXPECT_NEAR(lr_at(4, c), 1e-5, 1e-18);
  EXPECT_NEAR(lr_at(2, c), 1e-4, 1e-17);
  c.epochs = 1;
  EXPECT_DOUBLE_EQ(lr_at(0, c), 1e-3);
  const auto e2e = SgdConfig::end_to_end_defaults();
  EXPECT_DOUBLE_EQ(e2e.lr_start, 0.01);
  EXPECT_DOUBLE_EQ(e2e.lr_end, 0.0001);
}

TEST(SgdConfig, Validation) {
  SgdConfig c;
  c.lr_end = 1e-2;
  EXPECT_THROW(c.validate(), InvalidInput);
  c = {};
  c.lr_end = 0;
  EXPECT_THROW(c.validate(), InvalidInput);
  c = {};
  c.momentum = 1.0;
  EXPECT_THROW(c.validate(), InvalidInput);
}

TEST(SgdStep, PlainStep) {
  SgdConfig c;
  c.momentum = 0;
  c.weight_decay = 0;
  Vector p = vec({1, 2}), v = Vector::Zero(2);
  sgd_step(p, vec({0.5, -1}), v, 0.1, c);
  EXPECT_LT((p - vec({0.95, 2.1})).norm(), 1e-15);
}

TEST(SgdStep, MomentumRecurrence) {
  SgdConfig c;
  c.weight_decay = 0;
  const double mu = c.momentum, lr = 0.01;
  const Vector g = vec({1, -2});
  Vector p = Vector::Zero(2), v = Vector::Zero(2);
  sgd_step(p, g, v, lr, c);
  sgd_step(p, g, v, lr, c);
  EXPECT_LT((v + lr * g * (1 + mu)).norm(), 1e-15);
}

TEST(SgdStep, WeightDecayShrinks) {
  SgdConfig c;
  c.momentum = 0;
  c.weight_decay = 0.5;
  Vector p = vec({2, -4}), v = Vector::Zero(2);
  sgd_step(p, Vector::Zero(2), v, 0.1, c);
  EXPECT_LT((p - 0.95 * vec({2, -4})).norm(), 1e-15);
}

TEST(LinearClassifier, SeparableToyReachesFullAccuracy) {
  std::vector<Vector> x;
  std::vector<int> y;
  for (int i = 0; i < 20; ++i) {
    Vector e = Vector::Zero(4);
    e[0] = i % 2 ? 1.0 : -1.0;
    x.push_back(e);
    y.push_back(i % 2);
  }
  SgdConfig c;
  c.lr_start = 0.1;
  c.lr_end = 0.01;
  const Model m = train_linear_classifier(x, y, 2, LossKind::Hinge, c);
  EXPECT_DOUBLE_EQ(m.train_accuracy, 1.0);
}

TEST(LinearClassifier, DuplicatesWithConflictingLabels) {
  const std::vector<Vector> x(10, vec({0.3, -0.2}));
  std::vector<int> y;
  for (int i = 0; i < 10; ++i) y.push_back(i % 2);
  const Model m = train_linear_classifier(x, y, 2, LossKind::CrossEntropy, SgdConfig{});
  EXPECT_LE(m.train_accuracy, 0.5);
}

TEST(LinearClassifier, CrossEntropyDecreasesEarly) {
  std::mt19937_64 rng(5);
  std::vector<Vector> x;
  std::vector<int> y;
  for (int i = 0; i < 60; ++i) {
    const int c = i % 3;
    Vector v = gaussian_vec(rng, 4, 0.3);
    v[c] += 2.0;
    x.push_back(v);
    y.push_back(c);
  }
  SgdConfig cfg;
  cfg.epochs = 5;
  const Model m = train_linear_classifier(x, y, 3, LossKind::CrossEntropy, cfg);
  ASSERT_EQ(m.loss_trace.size(), 6u);
  for (std::size_t e = 1; e < m.loss_trace.size(); ++e) EXPECT_LT(m.loss_trace[e], m.loss_trace[e - 1]);
}

TEST(LinearClassifier, MissingClassAndBadInputs) {
  const std::vector<Vector> x{vec({1}), vec({2})};
  EXPECT_THROW(train_linear_classifier(x, {0, 0}, 2, LossKind::CrossEntropy, {}), DegenerateLabels);
  EXPECT_THROW(train_linear_classifier(x, {0, 1}, 1, LossKind::CrossEntropy, {}), DegenerateLabels);
  EXPECT_THROW(train_linear_classifier(x, {0}, 2, LossKind::CrossEntropy, {}), InvalidInput);
  EXPECT_THROW(train_linear_classifier({vec({1}), vec({1, 2})}, {0, 1}, 2, LossKind::CrossEntropy, {}),
               InvalidInput);
}

TEST(LinearClassifier, Deterministic) {
  std::mt19937_64 rng(6);
  std::vector<Vector> x;
  std::vector<int> y;
  for (int i = 0; i < 30; ++i) {
    x.push_back(gaussian_vec(rng, 3));
    y.push_back(i % 3);
  }
  SgdConfig c;
  c.seed = 42;
  const Model a = train_linear_classifier(x, y, 3, LossKind::Hinge, c);
  const Model b = train_linear_classifier(x, y, 3, LossKind::Hinge, c);
  EXPECT_EQ(a.head.beta, b.head.beta);
  EXPECT_EQ(a.loss_trace, b.loss_trace);
}

TEST(Discriminative, ZeroEpochsIsLinearBaseline) {
  const Dataset d = small_order_classes(3, 15, 3);
  DiscriminativeOptions opt;
  opt.sgd.epochs = 0;
  const Model m = train_discriminative_rp(d, opt);
  ASSERT_TRUE(m.W);
  EXPECT_EQ(*m.W, Matrix::Identity(3, 3));
  std::vector<Vector> enc;
  std::vector<int> y;
  for (const auto& s : d.sequences) {
    enc.push_back(rank_pool(apply_map_rows(s.matrix(), opt.map), opt.svr).u.values);
    y.push_back(*s.label);
  }
  const Model base = train_linear_classifier(enc, y, 3, opt.loss, opt.init_sgd);
  EXPECT_EQ(m.head.beta, base.head.beta);
  for (std::size_t i = 0; i < enc.size(); ++i) EXPECT_EQ(m.head.predict(m.encode(d.sequences[i])), base.head.predict(enc[i]));
}

TEST(Discriminative, TrainingLossDecreases) {
  const Dataset d = small_order_classes(3, 30, 4);
  DiscriminativeOptions opt;
  opt.sgd.epochs = 5;
  const Model m = train_discriminative_rp(d, opt);
  EXPECT_LT(m.loss_trace.back(), m.loss_trace.front());
}

TEST(Discriminative, ModesCoincideInOneDimension) {
  const Dataset d = small_order_classes(2, 10, 1);
  DiscriminativeOptions opt;
  opt.sgd.epochs = 3;
  opt.grad_mode = WGradMode::Full;
  const Model full = train_discriminative_rp(d, opt);
  opt.grad_mode = WGradMode::Diagonal;
  const Model diag = train_discriminative_rp(d, opt);
  EXPECT_LT(max_abs_diff(full, diag), 1e-8);
}

TEST(Discriminative, FrozenWKeepsIdentity) {
  const Dataset d = small_order_classes(3, 12, 3);
  DiscriminativeOptions opt;
  opt.sgd.epochs = 2;
  opt.learn_w = false;
  EXPECT_EQ(*train_discriminative_rp(d, opt).W, Matrix::Identity(3, 3));
}

TEST(EndToEnd, FrozenIdentityReducesToLinearClassifier) {
  const Dataset d = small_order_classes(3, 15, 3);
  EndToEndOptions opt;
  opt.sgd.epochs = 4;
  IdentityUpstream up;
  const Model m = train_end_to_end(d, up, opt);
  std::vector<Vector> enc;
  std::vector<int> y;
  for (const auto& s : d.sequences) {
    enc.push_back(rank_pool(s.matrix(), opt.svr).u.values);
    y.push_back(*s.label);
  }
  const Model base = train_linear_classifier(enc, y, 3, opt.loss, opt.sgd);
  EXPECT_EQ(m.head.beta, base.head.beta);
  EXPECT_EQ(m.head.bias, base.head.bias);
  EXPECT_EQ(m.loss_trace, base.loss_trace);
}

TEST(EndToEnd, AffineUpstreamBeatsFrozenUpstream) {
  const Dataset d = small_order_classes(3, 30, 4);
  EndToEndOptions opt;
  auto learned = AffineUpstream::identity_init(4, MapKind::Relu);
  auto frozen = AffineUpstream::identity_init(4, MapKind::Relu, true);
  const Model a = train_end_to_end(d, learned, opt);
  const Model b = train_end_to_end(d, frozen, opt);
  EXPECT_LT(a.loss_trace.back(), b.loss_trace.back());
  ASSERT_TRUE(a.upstream);
  EXPECT_NE(a.upstream->weight(), Matrix::Identity(4, 4));
}

TEST(AffineUpstream, BackwardMatchesFiniteDifference) {
  std::mt19937_64 rng(7);
  AffineUpstream up(gaussian(rng, 3, 3), gaussian_vec(rng, 3), MapKind::Ssr);
  const Matrix x = gaussian(rng, 5, 3);
  const Matrix g = gaussian(rng, 5, 3);
  const Vector an = up.backward(x, g);
  const Vector fd = fd_gradient(
      [&](const Vector& th) {
        AffineUpstream p = up;
        p.set_parameters(th);
        return (p.forward(x).array() * g.array()).sum();
      },
      up.parameters(), 1e-6);
  EXPECT_LT((an - fd).norm() / an.norm(), 1e-5);
}

TEST(Trainers, TinyLearningRateBarelyMoves) {
  const Dataset d = small_order_classes(3, 12, 3);
  SgdConfig tiny;
  tiny.epochs = 1;
  tiny.lr_start = tiny.lr_end = 1e-12;
  DiscriminativeOptions dopt;
  dopt.sgd = tiny;
  dopt.sgd.epochs = 0;
  const Model start = train_discriminative_rp(d, dopt);
  dopt.sgd.epochs = 1;
  EXPECT_LT(max_abs_diff(train_discriminative_rp(d, dopt), start), 1e-6);

  EndToEndOptions eopt;
  eopt.sgd = tiny;
  auto up = AffineUpstream::identity_init(3, MapKind::Relu);
  const Model m = train_end_to_end(d, up, eopt);
  EXPECT_LT(m.head.beta.cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LT((up.parameters() - AffineUpstream::identity_init(3, MapKind::Relu).parameters()).cwiseAbs().maxCoeff(),
            1e-6);
}

TEST(Trainers, BitReproducible) {
  const Dataset d = small_order_classes(3, 15, 3);
  DiscriminativeOptions opt;
  opt.sgd.epochs = 2;
  opt.sgd.seed = 9;
  const Model a = train_discriminative_rp(d, opt);
  const Model b = train_discriminative_rp(d, opt);
  EXPECT_EQ(*a.W, *b.W);
  EXPECT_EQ(a.head.beta, b.head.beta);
  EXPECT_EQ(a.loss_trace, b.loss_trace);
}

TEST(Model, PrecomputedCannotEncode) {
  Model m;
  EXPECT_THROW(m.encode(rankpool::test::seq({{1, 2}})), InvalidInput);
}
