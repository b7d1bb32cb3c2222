#pragma once

// Differentiation through the rank-pool argmin.
//
// At a minimizer u* of f(V, u) = 1/2|u|^2 + C/2 sum_t e_t^2 the gradient
//   f_u = u + C sum_t e_t v_t
// vanishes. Holding the active set fixed, the implicit function theorem gives
//   du*/dtheta = -H^{-1} d(f_u)/dtheta,
//   H          = I + C sum_{e_t != 0} v_t v_t',
//   d(f_u)/dtheta = C sum_{e_t != 0} ( e_t dv_t/dtheta + (u' dv_t/dtheta) v_t ).
// For a scalar loss L(u) with g = dL/du and w = H^{-1} g this yields
//   dL/dv_t = -C ( e_t w + (w' v_t) u )   for active t, 0 otherwise.

#include <string>

#include "rankpool/feature_maps.hpp"
#include "rankpool/pooling.hpp"

namespace rankpool {

/// Epsilon-insensitive residuals and active flags at a solution.
struct ActiveSet {
  Vector residuals;
  std::vector<bool> active;

  std::size_t count() const noexcept {
    std::size_t n = 0;
    for (bool a : active) n += a;
    return n;
  }
  bool operator==(const ActiveSet& o) const { return active == o.active; }
};

inline ActiveSet active_set(const Matrix& v, const Vector& u, const SvrConfig& cfg) {
  ActiveSet s;
  s.residuals = svr_residuals(v, u, cfg.epsilon);
  s.active.resize(static_cast<std::size_t>(s.residuals.size()));
  for (Eigen::Index t = 0; t < s.residuals.size(); ++t) s.active[static_cast<std::size_t>(t)] = s.residuals[t] != 0.0;
  return s;
}

/// Inverse of H = I + sum_m us.col(m) vs.col(m)' by repeated Sherman-Morrison
/// updates, O(n p^2) for n updates in dimension p.
inline Matrix sherman_morrison_inverse(const Matrix& us, const Matrix& vs) {
  if (us.rows() != vs.rows() || us.cols() != vs.cols()) throw InvalidInput("sherman_morrison_inverse: shape mismatch");
  const Eigen::Index p = us.rows();
  Matrix inv = Matrix::Identity(p, p);
  for (Eigen::Index m = 0; m < us.cols(); ++m) {
    const Vector hu = inv * us.col(m);
    const Eigen::RowVectorXd vh = vs.col(m).transpose() * inv;
    const double denom = 1.0 + vs.col(m).dot(hu);
    if (std::abs(denom) < 1e-12)
      throw DegenerateUpdate("Sherman-Morrison denominator vanished at update " + std::to_string(m + 1));
    inv.noalias() -= (hu * vh) / denom;
  }
  return inv;
}

enum class FactorMode { Auto, Dense, ShermanMorrison, Diagonal };

inline std::string_view to_string(FactorMode m) noexcept {
  switch (m) {
    case FactorMode::Auto: return "auto";
    case FactorMode::Dense: return "dense";
    case FactorMode::ShermanMorrison: return "sherman-morrison";
    case FactorMode::Diagonal: return "diagonal";
  }
  return "auto";
}

/// Dimension above which Auto switches from dense Cholesky to the
/// Sherman-Morrison chain.
inline constexpr Eigen::Index kDenseFactorMaxDim = 256;

/// Inverse-application data for the rank-pool Hessian H = I + C sum v v'.
/// Diagonal mode represents diag(H) only and is an approximation.
class HessianFactor {
 public:
  HessianFactor(const Matrix& active_rows, double c, FactorMode mode) {
    const Eigen::Index d = active_rows.cols();
    if (mode == FactorMode::Auto) mode = d <= kDenseFactorMaxDim ? FactorMode::Dense : FactorMode::ShermanMorrison;
    mode_ = mode;
    switch (mode_) {
      case FactorMode::Dense: {
        matrix_ = c * (active_rows.transpose() * active_rows);
        matrix_.diagonal().array() += 1.0;
        llt_.compute(matrix_);
        break;
      }
      case FactorMode::ShermanMorrison: {
        const Matrix vs = active_rows.transpose();
        inverse_ = sherman_morrison_inverse(c * vs, vs);
        matrix_ = c * (vs * active_rows);
        matrix_.diagonal().array() += 1.0;
        break;
      }
      case FactorMode::Diagonal: {
        const Vector diag = (c * active_rows.colwise().squaredNorm().transpose()).array() + 1.0;
        matrix_ = diag.asDiagonal();
        inv_diag_ = diag.cwiseInverse();
        break;
      }
      case FactorMode::Auto: break;
    }
  }

  FactorMode mode() const noexcept { return mode_; }
  Eigen::Index dim() const noexcept { return matrix_.rows(); }

  /// The matrix this factor inverts: H, or diag(H) in diagonal mode.
  const Matrix& matrix() const noexcept { return matrix_; }

  Vector solve(const Vector& b) const {
    switch (mode_) {
      case FactorMode::Dense: return llt_.solve(b);
      case FactorMode::ShermanMorrison: return inverse_ * b;
      case FactorMode::Diagonal: return inv_diag_.cwiseProduct(b);
      case FactorMode::Auto: break;
    }
    return b;
  }

  Matrix inverse() const {
    switch (mode_) {
      case FactorMode::Dense: return llt_.solve(Matrix::Identity(dim(), dim()));
      case FactorMode::ShermanMorrison: return inverse_;
      case FactorMode::Diagonal: return inv_diag_.asDiagonal();
      case FactorMode::Auto: break;
    }
    return Matrix::Identity(dim(), dim());
  }

  /// Diagonal of H^{-1} in diagonal mode, i.e. 1 / (1 + C sum v_k^2).
  const Vector& inverse_diagonal() const noexcept { return inv_diag_; }

 private:
  FactorMode mode_ = FactorMode::Dense;
  Matrix matrix_;
  Eigen::LLT<Matrix> llt_;
  Matrix inverse_;
  Vector inv_diag_;
};

/// Throws NotConverged unless u is stationary for V to within cfg.tol.
inline void require_stationary(const Matrix& v, const Vector& u, const SvrConfig& cfg) {
  if (u.size() != v.cols()) throw InvalidInput("encoding dimension does not match frame dimension");
  const double gn = svr_gradient(v, u, cfg).norm();
  if (!(gn <= cfg.tol))
    throw NotConverged("supplied encoding is not stationary (gradient norm " + std::to_string(gn) + ")");
}

inline HessianFactor hessian(const Matrix& v, const Vector& u, const SvrConfig& cfg, FactorMode mode = FactorMode::Auto) {
  const Vector e = svr_residuals(v, u, cfg.epsilon);
  return HessianFactor(detail::active_rows(v, e), cfg.C, mode);
}

/// du/dtheta for frames v_t(theta), given dv (J x D) holding dv_t/dtheta.
inline Vector grad_wrt_scalar_param(const Matrix& v, const Vector& u, const Matrix& dv, const SvrConfig& cfg,
                                    FactorMode mode = FactorMode::Auto) {
  if (dv.rows() != v.rows() || dv.cols() != v.cols()) throw InvalidInput("dv must have the shape of V");
  require_stationary(v, u, cfg);
  const Vector e = svr_residuals(v, u, cfg.epsilon);
  Vector rhs = Vector::Zero(u.size());
  for (Eigen::Index t = 0; t < v.rows(); ++t) {
    if (e[t] == 0.0) continue;
    rhs += e[t] * dv.row(t).transpose() + dv.row(t).dot(u) * v.row(t).transpose();
  }
  rhs *= cfg.C;
  const HessianFactor h(detail::active_rows(v, e), cfg.C, mode);
  return -h.solve(rhs);
}

namespace detail {

inline Matrix frame_grads(const Matrix& v, const Vector& u, const Vector& e, const Vector& w, double c) {
  Matrix out = Matrix::Zero(v.rows(), v.cols());
  for (Eigen::Index t = 0; t < v.rows(); ++t) {
    if (e[t] == 0.0) continue;
    out.row(t) = -c * (e[t] * w + v.row(t).dot(w) * u).transpose();
  }
  return out;
}

}  // namespace detail

/// Gradient of L w.r.t. every frame v_t, given g = dL/du at the solution.
/// Inactive frames get exactly zero.
inline Matrix vjp_inputs(const Matrix& v, const Vector& u, const Vector& g, const SvrConfig& cfg,
                         FactorMode mode = FactorMode::Auto) {
  if (g.size() != u.size()) throw InvalidInput("upstream gradient dimension mismatch");
  require_stationary(v, u, cfg);
  const Vector e = svr_residuals(v, u, cfg.epsilon);
  const HessianFactor h(detail::active_rows(v, e), cfg.C, mode);
  return detail::frame_grads(v, u, e, h.solve(g), cfg.C);
}

enum class WGradMode { Full, Diagonal };

inline std::string_view to_string(WGradMode m) noexcept { return m == WGradMode::Full ? "full" : "diagonal"; }

inline WGradMode parse_wgrad_mode(std::string_view s) {
  if (s == "full") return WGradMode::Full;
  if (s == "diagonal") return WGradMode::Diagonal;
  throw InvalidInput("unknown gradient mode '" + std::string(s) + "'");
}

/// dL/dW for frames v_t = psi(W x_t) with x the J x D input rows and u the
/// rank pool of the v_t. Full mode uses the exact Hessian inverse. Diagonal
/// mode replaces it by the inverse of its diagonal; for element-wise maps it
/// is evaluated in Hadamard form
///   -C sum_active ( e_t bhat 1' + s_t u 1' ) .* K_t,
///   bhat = g ./ diag(H),  s_t = bhat' v_t,  K_t = psi'(W x_t) x_t'.
inline Matrix grad_wrt_W(const Matrix& x, const Matrix& w, const Vector& u, const Vector& g, MapKind map,
                         const SvrConfig& cfg, WGradMode mode = WGradMode::Full) {
  if (w.rows() != w.cols() || w.cols() != x.cols()) throw InvalidInput("W must be D x D for D-dimensional frames");
  const Matrix z = x * w.transpose();
  const Matrix v = apply_map_rows(z, map);
  if (g.size() != u.size()) throw InvalidInput("upstream gradient dimension mismatch");
  require_stationary(v, u, cfg);
  const Vector e = svr_residuals(v, u, cfg.epsilon);
  const Matrix act = detail::active_rows(v, e);

  Matrix grad = Matrix::Zero(w.rows(), w.cols());
  if (mode == WGradMode::Diagonal && is_elementwise(map)) {
    const HessianFactor h(act, cfg.C, FactorMode::Diagonal);
    const Vector bhat = h.inverse_diagonal().cwiseProduct(g);
    for (Eigen::Index t = 0; t < x.rows(); ++t) {
      if (e[t] == 0.0) continue;
      const double s = bhat.dot(v.row(t));
      const Vector zt = z.row(t).transpose();
      const Matrix k = map_derivative(zt, map) * x.row(t);
      const Matrix coef = (e[t] * bhat + s * u) * Eigen::RowVectorXd::Ones(w.cols());
      grad.noalias() -= cfg.C * coef.cwiseProduct(k);
    }
    return grad;
  }

  const HessianFactor h(act, cfg.C, mode == WGradMode::Full ? FactorMode::Auto : FactorMode::Diagonal);
  const Matrix dv = detail::frame_grads(v, u, e, h.solve(g), cfg.C);
  for (Eigen::Index t = 0; t < x.rows(); ++t) {
    if (e[t] == 0.0) continue;
    const Vector dz = map_vjp(z.row(t).transpose(), dv.row(t).transpose(), map);
    grad.noalias() += dz * x.row(t);
  }
  return grad;
}

}  // namespace rankpool
