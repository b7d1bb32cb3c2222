#pragma once

// Synthetic datasets and brute-force oracles for tests and acceptance runs.
// The oracles here deliberately avoid the pooling and argmin_grad code paths.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "rankpool/core_types.hpp"

namespace rankpool {

enum class SynthKind { OrderClasses, LatentRamp, Noise };

inline std::string_view to_string(SynthKind k) noexcept {
  switch (k) {
    case SynthKind::OrderClasses: return "order-classes";
    case SynthKind::LatentRamp: return "latent-ramp";
    case SynthKind::Noise: return "noise";
  }
  return "noise";
}

inline SynthKind parse_synth_kind(std::string_view s) {
  if (s == "order-classes") return SynthKind::OrderClasses;
  if (s == "latent-ramp") return SynthKind::LatentRamp;
  if (s == "noise") return SynthKind::Noise;
  throw InvalidInput("unknown synthetic dataset kind '" + std::string(s) + "'");
}

struct SynthSpec {
  SynthKind kind = SynthKind::OrderClasses;
  std::size_t classes = 3;
  std::size_t count = 150;
  std::size_t min_length = 40;
  std::size_t max_length = 40;
  std::size_t dim = 8;
  double noise = 0.1;
  std::uint64_t seed = 0;

  void validate() const {
    if (classes < 2) throw InvalidInput("synthetic datasets need at least 2 classes");
    if (kind == SynthKind::OrderClasses && classes > 3)
      throw InvalidInput("order-classes supports at most 3 classes (forward, reverse, interleave)");
    if (dim < 1) throw InvalidInput("dimension must be at least 1");
    if (min_length < 1 || max_length < min_length) throw InvalidInput("need 1 <= min_length <= max_length");
    if (kind == SynthKind::OrderClasses && min_length < 2) throw InvalidInput("order-classes needs sequences of length >= 2");
    if (!(noise >= 0.0)) throw InvalidInput("noise must be non-negative");
  }
};

/// Temporal arrangement of a frame pool sorted by its latent coordinate.
enum class OrderPattern { Forward = 0, Reverse = 1, Interleave = 2 };

/// Positions of sorted ranks 0..j-1 under a pattern. Interleave walks the
/// even ranks upward and then the odd ranks downward.
inline std::vector<std::size_t> order_indices(std::size_t j, OrderPattern p) {
  std::vector<std::size_t> idx(j);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  switch (p) {
    case OrderPattern::Forward: break;
    case OrderPattern::Reverse: std::reverse(idx.begin(), idx.end()); break;
    case OrderPattern::Interleave: {
      std::vector<std::size_t> out;
      out.reserve(j);
      for (std::size_t r = 0; r < j; r += 2) out.push_back(r);
      for (std::size_t r = (j % 2 == 0 ? j - 1 : j - 2); r < j; r -= 2) {
        out.push_back(r);
        if (r < 2) break;
      }
      idx = std::move(out);
      break;
    }
  }
  return idx;
}

/// Arrange a pool (rows already sorted by latent coordinate) by pattern.
inline Matrix arrange(const Matrix& sorted_pool, OrderPattern p) {
  const auto idx = order_indices(static_cast<std::size_t>(sorted_pool.rows()), p);
  Matrix out(sorted_pool.rows(), sorted_pool.cols());
  for (std::size_t t = 0; t < idx.size(); ++t)
    out.row(static_cast<Eigen::Index>(t)) = sorted_pool.row(static_cast<Eigen::Index>(idx[t]));
  return out;
}

namespace detail {

inline Vector gaussian_vector(std::mt19937_64& rng, Eigen::Index d) {
  std::normal_distribution<double> n01(0.0, 1.0);
  Vector v(d);
  for (Eigen::Index i = 0; i < d; ++i) v[i] = n01(rng);
  return v;
}

inline Vector unit_direction(std::mt19937_64& rng, Eigen::Index d) {
  Vector a = gaussian_vector(rng, d);
  while (a.norm() == 0.0) a = gaussian_vector(rng, d);
  return a.normalized();
}

inline std::size_t draw_length(std::mt19937_64& rng, const SynthSpec& s) {
  if (s.min_length == s.max_length) return s.min_length;
  return s.min_length + static_cast<std::size_t>(rng() % (s.max_length - s.min_length + 1));
}

inline std::vector<std::string> numbered_classes(std::size_t k) {
  std::vector<std::string> names;
  for (std::size_t c = 0; c < k; ++c) names.push_back("class" + std::to_string(c));
  return names;
}

}  // namespace detail

/// Draw a Gaussian frame pool of j frames and sort it by its projection on
/// `direction`.
inline Matrix sorted_pool(std::mt19937_64& rng, std::size_t j, const Vector& direction) {
  Matrix pool(static_cast<Eigen::Index>(j), direction.size());
  for (std::size_t t = 0; t < j; ++t) pool.row(static_cast<Eigen::Index>(t)) = detail::gaussian_vector(rng, direction.size()).transpose();
  std::vector<std::size_t> perm(j);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  const Vector proj = pool * direction;
  std::stable_sort(perm.begin(), perm.end(), [&](std::size_t a, std::size_t b) {
    return proj[static_cast<Eigen::Index>(a)] < proj[static_cast<Eigen::Index>(b)];
  });
  Matrix out(pool.rows(), pool.cols());
  for (std::size_t t = 0; t < j; ++t) out.row(static_cast<Eigen::Index>(t)) = pool.row(static_cast<Eigen::Index>(perm[t]));
  return out;
}

/// Classes differ only in the temporal order of their frames: every video
/// draws a fresh pool, sorts it along a dataset-wide latent direction and
/// arranges it by the pattern of its class (sequence i has label i % K).
/// Noise is added after ordering.
inline Dataset gen_order_classes(const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  const auto d = static_cast<Eigen::Index>(spec.dim);
  const Vector direction = detail::unit_direction(rng, d);
  std::normal_distribution<double> n01(0.0, 1.0);
  Dataset ds;
  const std::vector<std::string> names{"forward", "reverse", "interleave"};
  ds.class_names.assign(names.begin(), names.begin() + static_cast<std::ptrdiff_t>(spec.classes));
  for (std::size_t i = 0; i < spec.count; ++i) {
    const int label = static_cast<int>(i % spec.classes);
    const std::size_t j = detail::draw_length(rng, spec);
    Matrix frames = arrange(sorted_pool(rng, j, direction), static_cast<OrderPattern>(label));
    if (spec.noise > 0.0)
      for (Eigen::Index t = 0; t < frames.rows(); ++t)
        for (Eigen::Index k = 0; k < d; ++k) frames(t, k) += spec.noise * n01(rng);
    ds.sequences.push_back(FrameSequence::from_matrix(frames, "seq" + std::to_string(i), label));
  }
  return ds;
}

/// Each class owns a random unit direction a_k; frames follow the ramp
/// (t / J) a_k plus Gaussian noise.
inline Dataset gen_latent_ramp(const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  const auto d = static_cast<Eigen::Index>(spec.dim);
  std::vector<Vector> dirs;
  for (std::size_t c = 0; c < spec.classes; ++c) dirs.push_back(detail::unit_direction(rng, d));
  std::normal_distribution<double> n01(0.0, 1.0);
  Dataset ds;
  ds.class_names = detail::numbered_classes(spec.classes);
  for (std::size_t i = 0; i < spec.count; ++i) {
    const int label = static_cast<int>(i % spec.classes);
    const std::size_t j = detail::draw_length(rng, spec);
    Matrix frames(static_cast<Eigen::Index>(j), d);
    for (std::size_t t = 0; t < j; ++t) {
      Vector f = (static_cast<double>(t + 1) / static_cast<double>(j)) * dirs[static_cast<std::size_t>(label)];
      for (Eigen::Index k = 0; k < d; ++k) f[k] += spec.noise * n01(rng);
      frames.row(static_cast<Eigen::Index>(t)) = f.transpose();
    }
    ds.sequences.push_back(FrameSequence::from_matrix(frames, "seq" + std::to_string(i), label));
  }
  return ds;
}

/// Pure noise frames with round-robin labels.
inline Dataset gen_noise(const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  const auto d = static_cast<Eigen::Index>(spec.dim);
  Dataset ds;
  ds.class_names = detail::numbered_classes(spec.classes);
  const double scale = spec.noise > 0.0 ? spec.noise : 1.0;
  for (std::size_t i = 0; i < spec.count; ++i) {
    const std::size_t j = detail::draw_length(rng, spec);
    Matrix frames(static_cast<Eigen::Index>(j), d);
    for (std::size_t t = 0; t < j; ++t) frames.row(static_cast<Eigen::Index>(t)) = scale * detail::gaussian_vector(rng, d).transpose();
    ds.sequences.push_back(FrameSequence::from_matrix(frames, "seq" + std::to_string(i), static_cast<int>(i % spec.classes)));
  }
  return ds;
}

inline Dataset generate(const SynthSpec& spec) {
  switch (spec.kind) {
    case SynthKind::OrderClasses: return gen_order_classes(spec);
    case SynthKind::LatentRamp: return gen_latent_ramp(spec);
    case SynthKind::Noise: return gen_noise(spec);
  }
  return gen_noise(spec);
}

// ---------------------------------------------------------------------------
// Oracles
// ---------------------------------------------------------------------------

/// Grid-search minimizer of the 1-D rank-pool objective
///   1/2 u^2 + C/2 sum_t max(0, |t - u v_t| - eps)^2
/// over [lo, hi] at `step`, followed by one finer pass around the best node.
inline double oracle_svr_1d(const std::vector<double>& v, double c, double eps, double lo = -10.0, double hi = 10.0,
                            double step = 1e-4) {
  auto objective = [&](double u) {
    double loss = 0.0;
    for (std::size_t t = 0; t < v.size(); ++t) {
      const double gap = std::abs(static_cast<double>(t + 1) - u * v[t]) - eps;
      if (gap > 0.0) loss += gap * gap;
    }
    return 0.5 * u * u + 0.5 * c * loss;
  };
  auto search = [&](double a, double b, double h) {
    double best_u = a;
    double best_f = objective(a);
    const auto n = static_cast<long>(std::floor((b - a) / h + 0.5));
    for (long i = 1; i <= n; ++i) {
      const double u = a + static_cast<double>(i) * h;
      const double f = objective(u);
      if (f < best_f) {
        best_f = f;
        best_u = u;
      }
    }
    return best_u;
  };
  const double coarse = search(lo, hi, step);
  return search(std::max(lo, coarse - step), std::min(hi, coarse + step), step / 1000.0);
}

/// Central-difference gradient of a scalar function with one Richardson
/// extrapolation step: (4 D(h/2) - D(h)) / 3.
template <class F>
Vector fd_gradient(F&& f, const Vector& x, double h = 1e-5) {
  Vector g(x.size());
  Vector probe = x;
  auto central = [&](Eigen::Index i, double step) {
    probe[i] = x[i] + step;
    const double fp = f(static_cast<const Vector&>(probe));
    probe[i] = x[i] - step;
    const double fm = f(static_cast<const Vector&>(probe));
    probe[i] = x[i];
    return (fp - fm) / (2.0 * step);
  };
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double coarse = central(i, h);
    const double fine = central(i, h / 2.0);
    g[i] = (4.0 * fine - coarse) / 3.0;
  }
  return g;
}

/// Richardson-refined central derivative of a vector-valued function of one
/// scalar.
template <class F>
Vector fd_derivative(F&& f, double x, double h = 1e-5) {
  auto central = [&](double step) { return Vector((f(x + step) - f(x - step)) / (2.0 * step)); };
  const Vector coarse = central(h);
  const Vector fine = central(h / 2.0);
  return (4.0 * fine - coarse) / 3.0;
}

/// Gauss-Jordan inverse with partial pivoting.
inline Matrix direct_inverse(const Matrix& h) {
  if (h.rows() != h.cols()) throw InvalidInput("direct_inverse needs a square matrix");
  const Eigen::Index n = h.rows();
  std::vector<std::vector<double>> a(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(2 * n), 0.0));
  double scale = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      a[i][j] = h(i, j);
      scale = std::max(scale, std::abs(h(i, j)));
    }
    a[i][n + i] = 1.0;
  }
  for (Eigen::Index col = 0; col < n; ++col) {
    Eigen::Index piv = col;
    for (Eigen::Index r = col + 1; r < n; ++r)
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    if (!(std::abs(a[piv][col]) > 1e-14 * std::max(scale, std::numeric_limits<double>::min())))
      throw SingularMatrix("direct_inverse: pivot breakdown in column " + std::to_string(col));
    std::swap(a[col], a[piv]);
    const double p = a[col][col];
    for (auto& x : a[col]) x /= p;
    for (Eigen::Index r = 0; r < n; ++r) {
      if (r == col) continue;
      const double factor = a[r][col];
      if (factor == 0.0) continue;
      for (Eigen::Index j = 0; j < 2 * n; ++j) a[r][j] -= factor * a[col][j];
    }
  }
  Matrix inv(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) inv(i, j) = a[i][n + j];
  return inv;
}

}  // namespace rankpool
