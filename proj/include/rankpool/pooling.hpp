#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "rankpool/core_types.hpp"

namespace rankpool {

/// Constants of the squared epsilon-insensitive SVR used by rank pooling.
struct SvrConfig {
  double C = 1.0;
  double epsilon = 0.1;
  double tol = 1e-8;   // on the objective gradient norm
  int max_iter = 200;

  void validate() const {
    if (!(C > 0.0)) throw InvalidInput("SVR constant C must be positive");
    if (!(epsilon >= 0.0)) throw InvalidInput("SVR epsilon must be non-negative");
    if (!(tol > 0.0)) throw InvalidInput("SVR tolerance must be positive");
    if (max_iter < 1) throw InvalidInput("SVR max_iter must be at least 1");
  }
};

// ---------------------------------------------------------------------------
// Closed-form encoders
// ---------------------------------------------------------------------------

inline Encoding avg_pool(const FrameSequence& x) {
  require_valid(x);
  Vector acc = Vector::Zero(static_cast<Eigen::Index>(x.dim()));
  for (const auto& f : x.frames) acc += f;
  acc /= static_cast<double>(x.length());
  return {std::move(acc), "avg"};
}

inline Encoding max_pool(const FrameSequence& x) {
  require_valid(x);
  Vector acc = x.frames.front();
  for (const auto& f : x.frames) acc = acc.cwiseMax(f);
  return {std::move(acc), "max"};
}

enum class PoolBase { Avg, Max };

/// Two-level pyramid: [pool(all); pool(first half); pool(second half)].
/// The first half holds ceil(J/2) frames; with J = 1 both halves are the
/// single frame.
inline Encoding temporal_pyramid(const FrameSequence& x, PoolBase base) {
  require_valid(x);
  const std::size_t j = x.length();
  const std::size_t split = (j + 1) / 2;
  auto slice = [&](std::size_t b, std::size_t e) {
    FrameSequence s;
    s.frames.assign(x.frames.begin() + static_cast<std::ptrdiff_t>(b), x.frames.begin() + static_cast<std::ptrdiff_t>(e));
    return s;
  };
  auto pool = [&](const FrameSequence& s) { return base == PoolBase::Avg ? avg_pool(s).values : max_pool(s).values; };
  const FrameSequence first = slice(0, split);
  const FrameSequence second = split < j ? slice(split, j) : first;
  const auto d = static_cast<Eigen::Index>(x.dim());
  Vector out(3 * d);
  out << pool(x), pool(first), pool(second);
  return {std::move(out), base == PoolBase::Avg ? "pyramid-avg" : "pyramid-max"};
}

// ---------------------------------------------------------------------------
// Rank pooling: squared epsilon-insensitive SVR from frames to time index
//   f(u) = 1/2 |u|^2 + C/2 sum_t [ |t - u'v_t| - eps ]_+^2 ,  t = 1..J
// ---------------------------------------------------------------------------

/// Signed epsilon-insensitive residual of a raw residual r = u'v_t - t.
/// Zero inside the tube; at the tube boundary the one-sided value 0 is used.
inline double svr_residual(double r, double eps) noexcept {
  if (r >= eps) return r - eps;
  if (-r >= eps) return r + eps;
  return 0.0;
}

/// e_t for every row of V (J x D) at u.
inline Vector svr_residuals(const Matrix& v, const Vector& u, double eps) {
  Vector e = v * u;
  for (Eigen::Index t = 0; t < e.size(); ++t) e[t] = svr_residual(e[t] - static_cast<double>(t + 1), eps);
  return e;
}

inline double svr_objective(const Matrix& v, const Vector& u, const SvrConfig& cfg) {
  const Vector e = svr_residuals(v, u, cfg.epsilon);
  return 0.5 * u.squaredNorm() + 0.5 * cfg.C * e.squaredNorm();
}

/// Gradient u + C sum_t e_t v_t.
inline Vector svr_gradient(const Matrix& v, const Vector& u, const SvrConfig& cfg) {
  const Vector e = svr_residuals(v, u, cfg.epsilon);
  return u + cfg.C * (v.transpose() * e);
}

namespace detail {

/// Solve (I + C A'A) x = b where A holds the active rows. Uses the smaller
/// of the primal (D x D) and dual (m x m) systems.
inline Vector solve_regularized_gram(const Matrix& a, double c, const Vector& b) {
  const Eigen::Index d = b.size();
  const Eigen::Index m = a.rows();
  if (m == 0) return b;
  if (m < d) {
    Matrix k = c * (a * a.transpose());
    k.diagonal().array() += 1.0;
    const Vector y = k.llt().solve(a * b);
    return b - c * (a.transpose() * y);
  }
  Matrix h = c * (a.transpose() * a);
  h.diagonal().array() += 1.0;
  return h.llt().solve(b);
}

inline Matrix active_rows(const Matrix& v, const Vector& e) {
  Eigen::Index m = 0;
  for (Eigen::Index t = 0; t < e.size(); ++t) m += e[t] != 0.0;
  Matrix a(m, v.cols());
  for (Eigen::Index t = 0, k = 0; t < e.size(); ++t)
    if (e[t] != 0.0) a.row(k++) = v.row(t);
  return a;
}

}  // namespace detail

/// Rank-pool the rows of V (J x D). Damped Newton with Armijo backtracking
/// on the piecewise quadratic objective, starting from u = 0. Once the
/// gradient norm is below tolerance up to two extra full Newton steps are
/// taken if they reduce it further, so a stable active set yields the exact
/// minimizer of the local quadratic.
inline RankPoolSolution rank_pool(const Matrix& v, const SvrConfig& cfg = {}) {
  cfg.validate();
  if (v.rows() < 1 || v.cols() < 1) throw InvalidInput("rank_pool needs J >= 1 and D >= 1");
  if (!v.allFinite()) throw InvalidInput("rank_pool input contains a non-finite value");

  const Eigen::Index d = v.cols();
  Vector u = Vector::Zero(d);
  Vector e = svr_residuals(v, u, cfg.epsilon);
  double f = 0.5 * u.squaredNorm() + 0.5 * cfg.C * e.squaredNorm();
  Vector g = u + cfg.C * (v.transpose() * e);
  double gn = g.norm();

  auto newton_dir = [&](const Vector& res, const Vector& grad) {
    return Vector(-detail::solve_regularized_gram(detail::active_rows(v, res), cfg.C, grad));
  };

  int iter = 0;
  bool converged = gn <= cfg.tol;
  while (!converged && iter < cfg.max_iter) {
    ++iter;
    const Vector dir = newton_dir(e, g);
    const double slope = g.dot(dir);
    double step = 1.0;
    bool moved = false;
    for (int ls = 0; ls < 60; ++ls) {
      const Vector cand = u + step * dir;
      const Vector ce = svr_residuals(v, cand, cfg.epsilon);
      const double cf = 0.5 * cand.squaredNorm() + 0.5 * cfg.C * ce.squaredNorm();
      if (cf <= f + 1e-4 * step * slope) {
        const Vector cg = cand + cfg.C * (v.transpose() * ce);
        u = cand;
        e = ce;
        f = cf;
        g = cg;
        gn = g.norm();
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved) {
      // Rounding floor: accept a full step if it lowers the gradient norm.
      const Vector cand = u + dir;
      const Vector ce = svr_residuals(v, cand, cfg.epsilon);
      const Vector cg = cand + cfg.C * (v.transpose() * ce);
      if (cg.norm() >= gn) break;
      u = cand;
      e = ce;
      f = 0.5 * u.squaredNorm() + 0.5 * cfg.C * e.squaredNorm();
      g = cg;
      gn = g.norm();
    }
    converged = gn <= cfg.tol;
  }

  if (!converged)
    throw SolverDidNotConverge("rank_pool: gradient norm " + std::to_string(gn) + " above tolerance after " +
                                   std::to_string(iter) + " iterations",
                               u, gn);

  for (int polish = 0; polish < 2 && gn > 0.0; ++polish) {
    const Vector cand = u + newton_dir(e, g);
    const Vector ce = svr_residuals(v, cand, cfg.epsilon);
    const Vector cg = cand + cfg.C * (v.transpose() * ce);
    const double cgn = cg.norm();
    if (!(cgn < gn)) break;
    u = cand;
    e = ce;
    g = cg;
    gn = cgn;
  }
  f = 0.5 * u.squaredNorm() + 0.5 * cfg.C * e.squaredNorm();

  RankPoolSolution sol;
  sol.u = {u, "rank"};
  sol.objective = f;
  sol.grad_norm = gn;
  sol.residuals = e;
  sol.active.resize(static_cast<std::size_t>(e.size()));
  for (Eigen::Index t = 0; t < e.size(); ++t) sol.active[static_cast<std::size_t>(t)] = e[t] != 0.0;
  sol.iterations = iter;
  return sol;
}

inline RankPoolSolution rank_pool(const FrameSequence& x, const SvrConfig& cfg = {}) {
  require_valid(x);
  return rank_pool(x.matrix(), cfg);
}

}  // namespace rankpool
