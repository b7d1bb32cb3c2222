#pragma once

#include <cmath>
#include <string>
#include <string_view>

#include "rankpool/core_types.hpp"

namespace rankpool {

/// Point-wise non-linearity applied to each frame before rank pooling.
enum class MapKind { Identity, Relu, Ssr, Ser, L2Norm };

inline std::string_view to_string(MapKind k) noexcept {
  switch (k) {
    case MapKind::Identity: return "identity";
    case MapKind::Relu: return "relu";
    case MapKind::Ssr: return "ssr";
    case MapKind::Ser: return "ser";
    case MapKind::L2Norm: return "l2norm";
  }
  return "identity";
}

inline MapKind parse_map_kind(std::string_view s) {
  if (s == "identity") return MapKind::Identity;
  if (s == "relu") return MapKind::Relu;
  if (s == "ssr") return MapKind::Ssr;
  if (s == "ser") return MapKind::Ser;
  if (s == "l2norm") return MapKind::L2Norm;
  throw InvalidInput("unknown map kind '" + std::string(s) + "'");
}

inline std::size_t map_output_dim(MapKind k, std::size_t d) noexcept { return k == MapKind::Ser ? 2 * d : d; }

/// Sign expansion root. Blocked layout: sqrt of positive parts in [0, D),
/// sqrt of negative parts in [D, 2D).
inline Vector ser(const Vector& x) {
  const Eigen::Index d = x.size();
  Vector y(2 * d);
  for (Eigen::Index i = 0; i < d; ++i) {
    y[i] = std::sqrt(std::max(0.0, x[i]));
    y[d + i] = std::sqrt(std::max(0.0, -x[i]));
  }
  return y;
}

/// Signed square root.
inline Vector ssr(const Vector& x) {
  return x.unaryExpr([](double v) { return v < 0.0 ? -std::sqrt(-v) : std::sqrt(v); });
}

inline Vector relu(const Vector& x) { return x.cwiseMax(0.0); }

/// Divide by the Euclidean norm; the zero vector passes through.
inline Vector l2_normalize(const Vector& x) {
  const double n = x.norm();
  return n > 0.0 ? Vector(x / n) : x;
}

inline Vector apply_map(const Vector& x, MapKind k) {
  switch (k) {
    case MapKind::Identity: return x;
    case MapKind::Relu: return relu(x);
    case MapKind::Ssr: return ssr(x);
    case MapKind::Ser: return ser(x);
    case MapKind::L2Norm: return l2_normalize(x);
  }
  return x;
}

/// Map applied to every row of a J x D matrix.
inline Matrix apply_map_rows(const Matrix& x, MapKind k) {
  if (k == MapKind::Identity) return x;
  Matrix out(x.rows(), static_cast<Eigen::Index>(map_output_dim(k, static_cast<std::size_t>(x.cols()))));
  for (Eigen::Index r = 0; r < x.rows(); ++r) out.row(r) = apply_map(Vector(x.row(r).transpose()), k).transpose();
  return out;
}

inline FrameSequence apply_map(const FrameSequence& x, MapKind k) {
  FrameSequence out = x;
  for (auto& f : out.frames) f = apply_map(f, k);
  return out;
}

/// Pull a gradient w.r.t. psi(z) back to z. The derivative at
/// non-differentiable points (0 for relu, ssr and ser) is taken as 0.
inline Vector map_vjp(const Vector& z, const Vector& grad_out, MapKind k) {
  const Eigen::Index d = z.size();
  Vector g(d);
  switch (k) {
    case MapKind::Identity:
      return grad_out;
    case MapKind::Relu:
      for (Eigen::Index i = 0; i < d; ++i) g[i] = z[i] > 0.0 ? grad_out[i] : 0.0;
      return g;
    case MapKind::Ssr:
      for (Eigen::Index i = 0; i < d; ++i) g[i] = z[i] != 0.0 ? grad_out[i] / (2.0 * std::sqrt(std::abs(z[i]))) : 0.0;
      return g;
    case MapKind::Ser:
      for (Eigen::Index i = 0; i < d; ++i) {
        if (z[i] > 0.0)
          g[i] = grad_out[i] / (2.0 * std::sqrt(z[i]));
        else if (z[i] < 0.0)
          g[i] = -grad_out[d + i] / (2.0 * std::sqrt(-z[i]));
        else
          g[i] = 0.0;
      }
      return g;
    case MapKind::L2Norm: {
      const double n = z.norm();
      if (n == 0.0) return grad_out;
      const Vector y = z / n;
      return (grad_out - y * y.dot(grad_out)) / n;
    }
  }
  return grad_out;
}

/// Element-wise derivative psi'(z) for maps that preserve dimension and act
/// per component.
inline Vector map_derivative(const Vector& z, MapKind k) {
  switch (k) {
    case MapKind::Identity: return Vector::Ones(z.size());
    case MapKind::Relu: return z.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; });
    case MapKind::Ssr:
      return z.unaryExpr([](double v) { return v != 0.0 ? 1.0 / (2.0 * std::sqrt(std::abs(v))) : 0.0; });
    default: throw InvalidInput("map_derivative: map '" + std::string(to_string(k)) + "' is not element-wise");
  }
}

inline bool is_elementwise(MapKind k) noexcept {
  return k == MapKind::Identity || k == MapKind::Relu || k == MapKind::Ssr;
}

/// Replace frame t by the running mean of frames 1..t.
inline FrameSequence tvm_smooth(const FrameSequence& x) {
  require_valid(x);
  FrameSequence out = x;
  Vector acc = Vector::Zero(static_cast<Eigen::Index>(x.dim()));
  for (std::size_t t = 0; t < x.length(); ++t) {
    acc += x.frames[t];
    out.frames[t] = acc / static_cast<double>(t + 1);
  }
  return out;
}

}  // namespace rankpool
