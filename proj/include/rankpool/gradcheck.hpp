#pragma once

// Randomized finite-difference checks of the argmin gradients.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "rankpool/argmin_grad.hpp"
#include "rankpool/synth_oracle.hpp"
#include "rankpool/training.hpp"

namespace rankpool {

enum class GradSuite { Svr, Theta, Inputs, W, Pipeline };

inline std::string_view to_string(GradSuite s) noexcept {
  switch (s) {
    case GradSuite::Svr: return "svr";
    case GradSuite::Theta: return "theta";
    case GradSuite::Inputs: return "inputs";
    case GradSuite::W: return "W";
    case GradSuite::Pipeline: return "pipeline";
  }
  return "svr";
}

inline GradSuite parse_grad_suite(std::string_view s) {
  if (s == "svr") return GradSuite::Svr;
  if (s == "theta") return GradSuite::Theta;
  if (s == "inputs") return GradSuite::Inputs;
  if (s == "W" || s == "w") return GradSuite::W;
  if (s == "pipeline") return GradSuite::Pipeline;
  throw InvalidInput("unknown gradcheck suite '" + std::string(s) + "'");
}

inline double gradcheck_threshold(GradSuite s) noexcept { return s == GradSuite::Pipeline ? 1e-3 : 1e-4; }

struct SuiteReport {
  GradSuite suite = GradSuite::Svr;
  std::size_t trials = 0;
  std::size_t checked = 0;
  std::size_t skipped = 0;     // active set (or map kink) moved under the probe
  double max_rel_err = 0.0;
  double threshold = 0.0;
  // W suite only: full vs diagonal at D = 1, and the mean cosine between the
  // diagonal and full gradients on the regular trials.
  double d1_mode_gap = 0.0;
  double diag_full_cosine = 0.0;

  bool passed() const noexcept { return max_rel_err < threshold; }
  double skip_fraction() const noexcept {
    return trials ? static_cast<double>(skipped) / static_cast<double>(trials) : 0.0;
  }
};

/// |a - b| / max(|a|, |b|, 1e-8), norm-wise.
inline double relative_error(const Vector& analytic, const Vector& numeric) {
  const double scale = std::max({analytic.norm(), numeric.norm(), 1e-8});
  return (analytic - numeric).norm() / scale;
}

namespace detail {

inline Matrix gaussian_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  std::normal_distribution<double> n01(0.0, 1.0);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = scale * n01(rng);
  return m;
}

/// Rank pool whose active set is compared with a reference; any mismatch
/// raises `moved`.
struct TrackedSolve {
  SvrConfig cfg;
  std::vector<bool> reference;
  bool moved = false;

  Vector operator()(const Matrix& v) {
    auto sol = rank_pool(v, cfg);
    if (sol.active != reference) moved = true;
    return sol.u.values;
  }
};

inline SvrConfig gradcheck_svr(std::mt19937_64& rng) {
  static constexpr double cs[] = {0.1, 1.0, 10.0};
  static constexpr double eps[] = {0.0, 0.1, 0.5};
  SvrConfig cfg;
  cfg.C = cs[rng() % 3];
  cfg.epsilon = eps[rng() % 3];
  return cfg;
}

inline double min_abs(const Matrix& z) { return z.cwiseAbs().minCoeff(); }

}  // namespace detail

/// Run `trials` randomized instances of one suite. Instance t uses seed
/// `seed + t`.
inline SuiteReport run_gradcheck(GradSuite suite, std::size_t trials, std::uint64_t seed) {
  SuiteReport rep;
  rep.suite = suite;
  rep.trials = trials;
  rep.threshold = gradcheck_threshold(suite);
  constexpr double h = 1e-5;
  double cosine_sum = 0.0;
  std::size_t cosine_n = 0;

  for (std::size_t trial = 0; trial < trials; ++trial) {
    std::mt19937_64 rng(seed + trial);
    switch (suite) {
      case GradSuite::Svr: {
        // Objective gradient at a random point against central differences.
        const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng() % 8);
        const Eigen::Index j = 2 + static_cast<Eigen::Index>(rng() % 29);
        const SvrConfig cfg = detail::gradcheck_svr(rng);
        const Matrix v = detail::gaussian_matrix(rng, j, d);
        const Vector u = detail::gaussian_matrix(rng, d, 1, 2.0);
        // Kinks of the objective sit where |u'v_t - t| = eps.
        const Vector r = v * u - Vector::LinSpaced(j, 1.0, static_cast<double>(j));
        const Vector margin = (r.cwiseAbs().array() - cfg.epsilon).abs().matrix();
        const double reach = 2.0 * h * v.rowwise().norm().maxCoeff();
        if (margin.minCoeff() <= reach || (cfg.epsilon == 0.0 && r.cwiseAbs().minCoeff() <= reach)) {
          ++rep.skipped;
          continue;
        }
        const Vector fd = fd_gradient([&](const Vector& x) { return svr_objective(v, x, cfg); }, u, h);
        rep.max_rel_err = std::max(rep.max_rel_err, relative_error(svr_gradient(v, u, cfg), fd));
        ++rep.checked;
        break;
      }
      case GradSuite::Theta: {
        // v_t(theta) = v_t + theta dv_t; every third trial scales frames (dv = v).
        const Eigen::Index d = 4;
        const Eigen::Index j = 10;
        SvrConfig cfg;
        const Matrix v = detail::gaussian_matrix(rng, j, d);
        const Matrix dv = trial % 3 == 2 ? v : detail::gaussian_matrix(rng, j, d);
        const auto base = rank_pool(v, cfg);
        detail::TrackedSolve solve{cfg, base.active};
        const Vector fd = fd_derivative([&](double th) { return solve(v + th * dv); }, 0.0, h);
        if (solve.moved) {
          ++rep.skipped;
          continue;
        }
        const Vector an = grad_wrt_scalar_param(v, base.u.values, dv, cfg);
        rep.max_rel_err = std::max(rep.max_rel_err, relative_error(an, fd));
        ++rep.checked;
        break;
      }
      case GradSuite::Inputs: {
        const Eigen::Index d = 4;
        const Eigen::Index j = 10;
        SvrConfig cfg;
        const Matrix v = detail::gaussian_matrix(rng, j, d);
        const Vector g = detail::gaussian_matrix(rng, d, 1);
        const auto base = rank_pool(v, cfg);
        detail::TrackedSolve solve{cfg, base.active};
        auto loss = [&](const Vector& flat) {
          const Matrix vv = Eigen::Map<const Matrix>(flat.data(), j, d);
          return g.dot(solve(vv));
        };
        const Vector flat = Eigen::Map<const Vector>(v.data(), v.size());
        const Vector fd = fd_gradient(loss, flat, h);
        if (solve.moved) {
          ++rep.skipped;
          continue;
        }
        const Matrix an = vjp_inputs(v, base.u.values, g, cfg);
        rep.max_rel_err = std::max(rep.max_rel_err, relative_error(Eigen::Map<const Vector>(an.data(), an.size()), fd));
        ++rep.checked;
        break;
      }
      case GradSuite::W: {
        SvrConfig cfg;
        {
          // D = 1: the Hessian equals its diagonal.
          const Matrix x1 = detail::gaussian_matrix(rng, 8, 1);
          const Matrix w1 = Matrix::Constant(1, 1, 1.0 + 0.3 * detail::gaussian_matrix(rng, 1, 1)(0, 0));
          const Vector u1 = rank_pool(Matrix(x1 * w1.transpose()), cfg).u.values;
          const Vector g1 = detail::gaussian_matrix(rng, 1, 1);
          const Matrix full = grad_wrt_W(x1, w1, u1, g1, MapKind::Identity, cfg, WGradMode::Full);
          const Matrix diag = grad_wrt_W(x1, w1, u1, g1, MapKind::Identity, cfg, WGradMode::Diagonal);
          rep.d1_mode_gap = std::max(rep.d1_mode_gap, (full - diag).cwiseAbs().maxCoeff());
        }
        const Eigen::Index d = 3 + static_cast<Eigen::Index>(trial % 2);
        const Eigen::Index j = 10;
        const MapKind map = trial % 2 == 0 ? MapKind::Identity : MapKind::Relu;
        const Matrix x = detail::gaussian_matrix(rng, j, d);
        const Matrix w = Matrix::Identity(d, d) + detail::gaussian_matrix(rng, d, d, 0.3);
        const Matrix z = x * w.transpose();
        const Matrix v = apply_map_rows(z, map);
        const auto base = rank_pool(v, cfg);
        const Vector g = detail::gaussian_matrix(rng, base.u.values.size(), 1);
        if (map == MapKind::Relu && detail::min_abs(z) <= 10.0 * h * x.cwiseAbs().maxCoeff()) {
          ++rep.skipped;
          continue;
        }
        detail::TrackedSolve solve{cfg, base.active};
        auto loss = [&](const Vector& flat) {
          const Matrix ww = Eigen::Map<const Matrix>(flat.data(), d, d);
          return g.dot(solve(apply_map_rows(x * ww.transpose(), map)));
        };
        const Vector flat = Eigen::Map<const Vector>(w.data(), w.size());
        const Vector fd = fd_gradient(loss, flat, h);
        if (solve.moved) {
          ++rep.skipped;
          continue;
        }
        const Matrix an = grad_wrt_W(x, w, base.u.values, g, map, cfg, WGradMode::Full);
        const Matrix ad = grad_wrt_W(x, w, base.u.values, g, map, cfg, WGradMode::Diagonal);
        const Vector an_flat = Eigen::Map<const Vector>(an.data(), an.size());
        const Vector ad_flat = Eigen::Map<const Vector>(ad.data(), ad.size());
        rep.max_rel_err = std::max(rep.max_rel_err, relative_error(an_flat, fd));
        if (an_flat.norm() > 0.0 && ad_flat.norm() > 0.0) {
          cosine_sum += an_flat.dot(ad_flat) / (an_flat.norm() * ad_flat.norm());
          ++cosine_n;
        }
        ++rep.checked;
        break;
      }
      case GradSuite::Pipeline: {
        // Affine+relu upstream -> rank pool -> softmax cross-entropy.
        const Eigen::Index d = 3;
        const Eigen::Index j = 6;
        const Eigen::Index k = 3;
        SvrConfig cfg;
        const Matrix x = detail::gaussian_matrix(rng, j, d);
        AffineUpstream up(Matrix::Identity(d, d) + detail::gaussian_matrix(rng, d, d, 0.3),
                          detail::gaussian_matrix(rng, d, 1, 0.3), MapKind::Relu);
        LinearHead head{detail::gaussian_matrix(rng, k, d), detail::gaussian_matrix(rng, k, 1), LossKind::CrossEntropy,
                        false};
        const int label = static_cast<int>(rng() % static_cast<std::uint64_t>(k));
        const Vector theta = up.parameters();
        Matrix z = x * up.weight().transpose();
        z.rowwise() += up.bias().transpose();
        if (detail::min_abs(z) <= 10.0 * h * (1.0 + x.cwiseAbs().maxCoeff())) {
          ++rep.skipped;
          continue;
        }
        const Matrix v = up.forward(x);
        const auto base = rank_pool(v, cfg);
        detail::TrackedSolve solve{cfg, base.active};
        auto loss = [&](const Vector& th) {
          AffineUpstream probe = up;
          probe.set_parameters(th);
          return head.loss_value(solve(probe.forward(x)), label);
        };
        const Vector fd = fd_gradient(loss, theta, h);
        if (solve.moved) {
          ++rep.skipped;
          continue;
        }
        const auto hg = head.loss_grad(base.u.values, label);
        const Vector an = up.backward(x, vjp_inputs(v, base.u.values, hg.d_u, cfg));
        rep.max_rel_err = std::max(rep.max_rel_err, relative_error(an, fd));
        ++rep.checked;
        break;
      }
    }
  }
  if (cosine_n) rep.diag_full_cosine = cosine_sum / static_cast<double>(cosine_n);
  return rep;
}

}  // namespace rankpool
