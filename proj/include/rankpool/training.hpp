#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "rankpool/argmin_grad.hpp"
#include "rankpool/feature_maps.hpp"
#include "rankpool/pooling.hpp"

namespace rankpool {

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

struct SgdConfig {
  std::size_t epochs = 30;
  double lr_start = 1e-3;
  double lr_end = 1e-5;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  std::uint64_t seed = 0;

  /// Learning-rate endpoints used by the end-to-end trainer.
  static SgdConfig end_to_end_defaults() {
    SgdConfig c;
    c.lr_start = 0.01;
    c.lr_end = 0.0001;
    return c;
  }

  void validate() const {
    if (!(lr_end > 0.0) || !(lr_start >= lr_end)) throw InvalidInput("need lr_start >= lr_end > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidInput("momentum must lie in [0, 1)");
    if (!(weight_decay >= 0.0)) throw InvalidInput("weight decay must be non-negative");
  }
};

/// Geometric interpolation from lr_start (first epoch) to lr_end (last).
inline double lr_at(std::size_t epoch, const SgdConfig& cfg) {
  if (cfg.epochs <= 1) return cfg.lr_start;
  const double frac = static_cast<double>(epoch) / static_cast<double>(cfg.epochs - 1);
  return cfg.lr_start * std::pow(cfg.lr_end / cfg.lr_start, frac);
}

/// Classical momentum with L2 weight decay:
///   velocity <- momentum * velocity - lr * (grad + wd * params)
///   params   <- params + velocity
template <class P, class G, class V>
void sgd_step(Eigen::MatrixBase<P>& params, const Eigen::MatrixBase<G>& grad, Eigen::MatrixBase<V>& velocity, double lr,
              const SgdConfig& cfg, bool decay = true) {
  const double wd = decay ? cfg.weight_decay : 0.0;
  velocity = cfg.momentum * velocity - lr * (grad + wd * params);
  params += velocity;
}

// ---------------------------------------------------------------------------
// Classifier head
// ---------------------------------------------------------------------------

enum class LossKind { CrossEntropy, Hinge };

inline std::string_view to_string(LossKind k) noexcept { return k == LossKind::CrossEntropy ? "cross-entropy" : "hinge"; }

inline LossKind parse_loss_kind(std::string_view s) {
  if (s == "cross-entropy" || s == "ce") return LossKind::CrossEntropy;
  if (s == "hinge") return LossKind::Hinge;
  throw InvalidInput("unknown loss '" + std::string(s) + "'");
}

/// Softmax with max-shift.
inline Vector softmax_prob(const Vector& scores) {
  const double m = scores.maxCoeff();
  Vector p = (scores.array() - m).exp().matrix();
  return p / p.sum();
}

inline Vector softmax_prob(const Vector& u, const Matrix& beta, const Vector& bias) {
  return softmax_prob(Vector(beta * u + bias));
}

/// Index of the largest entry; ties go to the lowest index.
inline int argmax(const Vector& s) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < s.size(); ++i)
    if (s[i] > s[best]) best = i;
  return static_cast<int>(best);
}

/// Linear scorer beta * u + bias over K classes, optionally on the
/// L2-normalized encoding.
struct LinearHead {
  Matrix beta;   // K x D
  Vector bias;   // K
  LossKind loss = LossKind::CrossEntropy;
  bool normalize = false;

  static LinearHead zeros(std::size_t k, std::size_t d, LossKind loss, bool normalize = false) {
    return {Matrix::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(d)),
            Vector::Zero(static_cast<Eigen::Index>(k)), loss, normalize};
  }

  std::size_t classes() const noexcept { return static_cast<std::size_t>(beta.rows()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(beta.cols()); }

  Vector features(const Vector& u) const { return normalize ? l2_normalize(u) : u; }
  Vector scores(const Vector& u) const {
    if (u.size() != beta.cols()) throw InvalidInput("encoding dimension does not match classifier");
    return beta * features(u) + bias;
  }
  int predict(const Vector& u) const { return argmax(scores(u)); }

  struct Grad {
    double loss = 0.0;
    Matrix d_beta;
    Vector d_bias;
    Vector d_u;
  };

  double loss_value(const Vector& u, int y) const { return loss_from_scores(scores(u), y, nullptr); }

  Grad loss_grad(const Vector& u, int y) const {
    const Vector x = features(u);
    Vector ds;
    Grad g;
    g.loss = loss_from_scores(beta * x + bias, y, &ds);
    g.d_beta = ds * x.transpose();
    g.d_bias = ds;
    const Vector dx = beta.transpose() * ds;
    g.d_u = normalize ? map_vjp(u, dx, MapKind::L2Norm) : dx;
    return g;
  }

 private:
  double loss_from_scores(const Vector& s, int y, Vector* ds) const {
    if (y < 0 || y >= s.size()) throw InvalidInput("label outside classifier range");
    if (loss == LossKind::CrossEntropy) {
      const double m = s.maxCoeff();
      const double lse = m + std::log((s.array() - m).exp().sum());
      if (ds) {
        *ds = (s.array() - lse).exp().matrix();
        (*ds)[y] -= 1.0;
      }
      return lse - s[y];
    }
    // One-vs-rest squared hinge.
    double total = 0.0;
    if (ds) *ds = Vector::Zero(s.size());
    for (Eigen::Index c = 0; c < s.size(); ++c) {
      const double target = c == y ? 1.0 : -1.0;
      const double margin = 1.0 - target * s[c];
      if (margin > 0.0) {
        total += margin * margin;
        if (ds) (*ds)[c] = -2.0 * target * margin;
      }
    }
    return total;
  }
};

// ---------------------------------------------------------------------------
// Upstream maps for end-to-end training
// ---------------------------------------------------------------------------

/// Differentiable per-frame map in front of the rank-pool layer. backward
/// receives dL/dv_t for every output frame and returns the gradient w.r.t.
/// the flattened parameters.
class UpstreamMap {
 public:
  virtual ~UpstreamMap() = default;
  virtual Matrix forward(const Matrix& x) const = 0;
  virtual Vector backward(const Matrix& x, const Matrix& grad_out) const = 0;
  virtual Vector parameters() const = 0;
  virtual void set_parameters(const Vector& theta) = 0;
  virtual bool trainable() const = 0;
  virtual std::unique_ptr<UpstreamMap> clone() const = 0;
};

/// Passes frames through unchanged; nothing to learn.
class IdentityUpstream final : public UpstreamMap {
 public:
  Matrix forward(const Matrix& x) const override { return x; }
  Vector backward(const Matrix&, const Matrix&) const override { return Vector(); }
  Vector parameters() const override { return Vector(); }
  void set_parameters(const Vector&) override {}
  bool trainable() const override { return false; }
  std::unique_ptr<UpstreamMap> clone() const override { return std::make_unique<IdentityUpstream>(*this); }
};

/// v_t = act(A x_t + b). Parameters are flattened as [A row-major; b].
class AffineUpstream final : public UpstreamMap {
 public:
  AffineUpstream() = default;
  AffineUpstream(Matrix a, Vector b, MapKind activation, bool frozen = false)
      : a_(std::move(a)), b_(std::move(b)), act_(activation), frozen_(frozen) {
    if (b_.size() != a_.rows()) throw InvalidInput("affine upstream bias size mismatch");
  }

  /// A = I, b = 0.
  static AffineUpstream identity_init(std::size_t d, MapKind activation, bool frozen = false) {
    const auto n = static_cast<Eigen::Index>(d);
    return AffineUpstream(Matrix::Identity(n, n), Vector::Zero(n), activation, frozen);
  }

  Matrix forward(const Matrix& x) const override {
    if (x.cols() != a_.cols()) throw InvalidInput("affine upstream input dimension mismatch");
    Matrix z = x * a_.transpose();
    z.rowwise() += b_.transpose();
    return apply_map_rows(z, act_);
  }

  Vector backward(const Matrix& x, const Matrix& grad_out) const override {
    Matrix z = x * a_.transpose();
    z.rowwise() += b_.transpose();
    Matrix da = Matrix::Zero(a_.rows(), a_.cols());
    Vector db = Vector::Zero(b_.size());
    for (Eigen::Index t = 0; t < x.rows(); ++t) {
      const Vector dz = map_vjp(z.row(t).transpose(), grad_out.row(t).transpose(), act_);
      da.noalias() += dz * x.row(t);
      db += dz;
    }
    return flatten(da, db);
  }

  Vector parameters() const override { return flatten(a_, b_); }

  void set_parameters(const Vector& theta) override {
    if (theta.size() != a_.size() + b_.size()) throw InvalidInput("affine upstream parameter size mismatch");
    for (Eigen::Index i = 0; i < a_.rows(); ++i)
      for (Eigen::Index j = 0; j < a_.cols(); ++j) a_(i, j) = theta[i * a_.cols() + j];
    b_ = theta.tail(b_.size());
  }

  bool trainable() const override { return !frozen_; }
  std::unique_ptr<UpstreamMap> clone() const override { return std::make_unique<AffineUpstream>(*this); }

  const Matrix& weight() const noexcept { return a_; }
  const Vector& bias() const noexcept { return b_; }
  MapKind activation() const noexcept { return act_; }
  bool frozen() const noexcept { return frozen_; }

 private:
  static Vector flatten(const Matrix& a, const Vector& b) {
    Vector theta(a.size() + b.size());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      for (Eigen::Index j = 0; j < a.cols(); ++j) theta[i * a.cols() + j] = a(i, j);
    theta.tail(b.size()) = b;
    return theta;
  }

  Matrix a_;
  Vector b_;
  MapKind act_ = MapKind::Identity;
  bool frozen_ = false;
};

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

/// How a model turns a raw sequence into the encoding its head scores.
enum class EncoderKind { Precomputed, Discriminative, EndToEnd };

inline std::string_view to_string(EncoderKind k) noexcept {
  switch (k) {
    case EncoderKind::Precomputed: return "precomputed";
    case EncoderKind::Discriminative: return "discriminative";
    case EncoderKind::EndToEnd: return "end2end";
  }
  return "precomputed";
}

inline EncoderKind parse_encoder_kind(std::string_view s) {
  if (s == "precomputed") return EncoderKind::Precomputed;
  if (s == "discriminative") return EncoderKind::Discriminative;
  if (s == "end2end") return EncoderKind::EndToEnd;
  throw InvalidInput("unknown encoder kind '" + std::string(s) + "'");
}

struct Model {
  LinearHead head;
  std::vector<std::string> class_names;
  EncoderKind encoder = EncoderKind::Precomputed;
  std::optional<Matrix> W;                  // discriminative: v_t = map(W x_t)
  MapKind map = MapKind::Identity;
  SvrConfig svr{};
  std::optional<AffineUpstream> upstream;   // end2end; absent means identity
  std::vector<double> loss_trace;           // [initial, after epoch 1, ...]
  double train_accuracy = 0.0;
  std::map<std::string, std::string> meta;  // configuration echo

  std::size_t classes() const noexcept { return head.classes(); }

  /// Per-frame features fed to the rank pool for a raw J x D sequence.
  Matrix frame_features(const Matrix& x) const {
    switch (encoder) {
      case EncoderKind::Discriminative: return apply_map_rows(x * W.value().transpose(), map);
      case EncoderKind::EndToEnd: return upstream ? upstream->forward(x) : x;
      case EncoderKind::Precomputed: break;
    }
    throw InvalidInput("model scores precomputed encodings; it cannot encode raw sequences");
  }

  Vector encode(const FrameSequence& x) const {
    require_valid(x);
    return rank_pool(frame_features(x.matrix()), svr).u.values;
  }
};

// ---------------------------------------------------------------------------
// Trainers
// ---------------------------------------------------------------------------

namespace detail {

inline void require_all_classes(const std::vector<int>& labels, std::size_t k) {
  if (k < 2) throw DegenerateLabels("need at least 2 classes");
  std::vector<std::size_t> counts(k, 0);
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= k) throw DegenerateLabels("label " + std::to_string(y) + " out of range");
    ++counts[static_cast<std::size_t>(y)];
  }
  for (std::size_t c = 0; c < k; ++c)
    if (counts[c] == 0) throw DegenerateLabels("class " + std::to_string(c) + " has no training examples");
}

/// Fisher-Yates driven directly by the engine output so the visiting order
/// depends only on the seed.
inline void shuffle(std::vector<std::size_t>& idx, std::mt19937_64& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[static_cast<std::size_t>(rng() % i)]);
}

/// Momentum buffers for a LinearHead.
struct HeadVelocity {
  Matrix beta;
  Vector bias;
  explicit HeadVelocity(const LinearHead& h)
      : beta(Matrix::Zero(h.beta.rows(), h.beta.cols())), bias(Vector::Zero(h.bias.size())) {}
};

/// One SGD update of the head on a single example; returns the gradient
/// so callers can continue backpropagation through d_u.
inline LinearHead::Grad head_step(LinearHead& head, HeadVelocity& vel, const Vector& u, int y, double lr,
                                  const SgdConfig& cfg) {
  auto g = head.loss_grad(u, y);
  sgd_step(head.beta, g.d_beta, vel.beta, lr, cfg, true);
  sgd_step(head.bias, g.d_bias, vel.bias, lr, cfg, false);
  return g;
}

inline std::vector<int> labels_of(const Dataset& d) {
  std::vector<int> y;
  y.reserve(d.size());
  for (const auto& s : d.sequences) {
    if (!s.label) throw DegenerateLabels("sequence '" + s.id + "' has no label");
    y.push_back(*s.label);
  }
  return y;
}

inline std::vector<Matrix> matrices_of(const Dataset& d) {
  std::vector<Matrix> xs;
  xs.reserve(d.size());
  std::optional<Eigen::Index> dim;
  for (const auto& s : d.sequences) {
    require_valid(s);
    xs.push_back(s.matrix());
    if (dim && *dim != xs.back().cols()) throw InvalidInput("all sequences must share one frame dimension");
    dim = xs.back().cols();
  }
  return xs;
}

template <class Encode>
std::pair<double, double> mean_loss_and_accuracy(const LinearHead& head, std::size_t n, const std::vector<int>& y,
                                                 Encode&& encode) {
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vector u = encode(i);
    const Vector s = head.scores(u);
    loss += head.loss_value(u, y[i]);
    correct += argmax(s) == y[i];
  }
  return {loss / static_cast<double>(n), static_cast<double>(correct) / static_cast<double>(n)};
}

inline RankPoolSolution solve_for_sample(const Matrix& v, const SvrConfig& svr, const std::string& id) {
  try {
    return rank_pool(v, svr);
  } catch (const SolverDidNotConverge& e) {
    throw e.with_context("sample '" + id + "'");
  }
}

}  // namespace detail

/// Epoch observer: (epoch index starting at 1, mean training loss).
using EpochCallback = std::function<void(std::size_t, double)>;

/// Linear classifier on fixed encodings, trained by single-example SGD.
/// Starts from zero weights; deterministic given cfg.seed.
inline Model train_linear_classifier(const std::vector<Vector>& encodings, const std::vector<int>& labels,
                                     std::size_t num_classes, LossKind loss, const SgdConfig& cfg,
                                     bool normalize = false, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (encodings.size() != labels.size()) throw InvalidInput("encodings and labels differ in length");
  if (encodings.empty()) throw InvalidInput("no training encodings");
  detail::require_all_classes(labels, num_classes);
  const auto d = static_cast<std::size_t>(encodings.front().size());
  for (const auto& u : encodings)
    if (static_cast<std::size_t>(u.size()) != d) throw InvalidInput("encodings have mixed dimensions");

  Model m;
  m.head = LinearHead::zeros(num_classes, d, loss, normalize);
  detail::HeadVelocity vel(m.head);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(encodings.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto enc = [&](std::size_t i) { return encodings[i]; };

  auto [l0, a0] = detail::mean_loss_and_accuracy(m.head, encodings.size(), labels, enc);
  m.loss_trace.push_back(l0);
  m.train_accuracy = a0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at(epoch, cfg);
    detail::shuffle(order, rng);
    for (std::size_t i : order) detail::head_step(m.head, vel, encodings[i], labels[i], lr, cfg);
    auto [l, a] = detail::mean_loss_and_accuracy(m.head, encodings.size(), labels, enc);
    m.loss_trace.push_back(l);
    m.train_accuracy = a;
    if (on_epoch) on_epoch(epoch + 1, l);
  }
  return m;
}

struct DiscriminativeOptions {
  MapKind map = MapKind::Relu;
  WGradMode grad_mode = WGradMode::Full;
  LossKind loss = LossKind::CrossEntropy;
  bool normalize = false;
  SvrConfig svr{};
  SgdConfig sgd{};
  SgdConfig init_sgd{};   // linear classifier pre-training on W = I encodings
  bool learn_w = true;    // false keeps W = I and trains only the head
};

/// Learn W and the classifier jointly through the rank-pool argmin.
/// v_t = map(W x_t), W starts at the identity and the head starts from a
/// linear classifier trained on the W = I encodings.
inline Model train_discriminative_rp(const Dataset& data, const DiscriminativeOptions& opt,
                                     const EpochCallback& on_epoch = {}) {
  opt.sgd.validate();
  opt.svr.validate();
  const auto labels = detail::labels_of(data);
  detail::require_all_classes(labels, data.num_classes());
  const auto xs = detail::matrices_of(data);
  const Eigen::Index d = xs.front().cols();

  Model m;
  m.encoder = EncoderKind::Discriminative;
  m.map = opt.map;
  m.svr = opt.svr;
  m.class_names = data.class_names;
  m.W = Matrix::Identity(d, d);

  std::vector<Vector> init_enc;
  init_enc.reserve(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i)
    init_enc.push_back(detail::solve_for_sample(m.frame_features(xs[i]), opt.svr, data.sequences[i].id).u.values);
  m.head = train_linear_classifier(init_enc, labels, data.num_classes(), opt.loss, opt.init_sgd, opt.normalize).head;

  Matrix& w = *m.W;
  Matrix w_vel = Matrix::Zero(d, d);
  detail::HeadVelocity vel(m.head);
  std::mt19937_64 rng(opt.sgd.seed);
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto enc = [&](std::size_t i) {
    return detail::solve_for_sample(m.frame_features(xs[i]), opt.svr, data.sequences[i].id).u.values;
  };

  auto [l0, a0] = detail::mean_loss_and_accuracy(m.head, xs.size(), labels, enc);
  m.loss_trace.push_back(l0);
  m.train_accuracy = a0;
  for (std::size_t epoch = 0; epoch < opt.sgd.epochs; ++epoch) {
    const double lr = lr_at(epoch, opt.sgd);
    detail::shuffle(order, rng);
    for (std::size_t i : order) {
      const Vector u = enc(i);
      const Matrix gw = opt.learn_w ? grad_wrt_W(xs[i], w, u, m.head.loss_grad(u, labels[i]).d_u, opt.map, opt.svr,
                                                 opt.grad_mode)
                                    : Matrix();
      detail::head_step(m.head, vel, u, labels[i], lr, opt.sgd);
      if (opt.learn_w) sgd_step(w, gw, w_vel, lr, opt.sgd, true);
    }
    auto [l, a] = detail::mean_loss_and_accuracy(m.head, xs.size(), labels, enc);
    m.loss_trace.push_back(l);
    m.train_accuracy = a;
    if (on_epoch) on_epoch(epoch + 1, l);
  }
  return m;
}

struct EndToEndOptions {
  LossKind loss = LossKind::CrossEntropy;
  bool normalize = false;
  FactorMode factor = FactorMode::Auto;   // Diagonal selects the approximate gradient
  SvrConfig svr{};
  SgdConfig sgd = SgdConfig::end_to_end_defaults();
};

/// Train the classifier and the upstream map jointly. Each step rank-pools
/// upstream.forward(X), backpropagates the head gradient through the argmin
/// into per-frame gradients and hands them to upstream.backward. `upstream`
/// holds the learned parameters on return. The head starts at zero.
inline Model train_end_to_end(const Dataset& data, UpstreamMap& upstream, const EndToEndOptions& opt,
                              const EpochCallback& on_epoch = {}) {
  opt.sgd.validate();
  opt.svr.validate();
  const auto labels = detail::labels_of(data);
  detail::require_all_classes(labels, data.num_classes());
  const auto xs = detail::matrices_of(data);

  auto solve = [&](std::size_t i) {
    return detail::solve_for_sample(upstream.forward(xs[i]), opt.svr, data.sequences[i].id);
  };

  Model m;
  m.encoder = EncoderKind::EndToEnd;
  m.svr = opt.svr;
  m.class_names = data.class_names;
  const auto out_dim = static_cast<std::size_t>(solve(0).u.values.size());
  m.head = LinearHead::zeros(data.num_classes(), out_dim, opt.loss, opt.normalize);

  detail::HeadVelocity vel(m.head);
  Vector theta = upstream.parameters();
  Vector theta_vel = Vector::Zero(theta.size());
  std::mt19937_64 rng(opt.sgd.seed);
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto enc = [&](std::size_t i) { return solve(i).u.values; };

  auto [l0, a0] = detail::mean_loss_and_accuracy(m.head, xs.size(), labels, enc);
  m.loss_trace.push_back(l0);
  m.train_accuracy = a0;
  for (std::size_t epoch = 0; epoch < opt.sgd.epochs; ++epoch) {
    const double lr = lr_at(epoch, opt.sgd);
    detail::shuffle(order, rng);
    for (std::size_t i : order) {
      if (!upstream.trainable()) {
        detail::head_step(m.head, vel, enc(i), labels[i], lr, opt.sgd);
        continue;
      }
      const Matrix v = upstream.forward(xs[i]);
      const auto sol = detail::solve_for_sample(v, opt.svr, data.sequences[i].id);
      const auto g = detail::head_step(m.head, vel, sol.u.values, labels[i], lr, opt.sgd);
      const Matrix dv = vjp_inputs(v, sol.u.values, g.d_u, opt.svr, opt.factor);
      const Vector gtheta = upstream.backward(xs[i], dv);
      sgd_step(theta, gtheta, theta_vel, lr, opt.sgd, true);
      upstream.set_parameters(theta);
    }
    auto [l, a] = detail::mean_loss_and_accuracy(m.head, xs.size(), labels, enc);
    m.loss_trace.push_back(l);
    m.train_accuracy = a;
    if (on_epoch) on_epoch(epoch + 1, l);
  }
  if (const auto* affine = dynamic_cast<const AffineUpstream*>(&upstream)) m.upstream = *affine;
  return m;
}

}  // namespace rankpool
