#pragma once

// Closed-form attacks on conjugate linear-Gaussian models.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "advbayes/attack/feasible_set.hpp"
#include "advbayes/core/conjugate.hpp"
#include "advbayes/core/random.hpp"
#include "advbayes/core/types.hpp"

namespace advbayes {

struct AnalyticPointSolution {
  Vector r_star;
  bool achieved = false;
  /// |mu_n^T (x + r*) - y*|
  double residual = 0.0;
};

namespace detail {

inline double sgn(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace detail

/// Minimum-L2 perturbation moving the predictive mean mu_n^T x towards y*.
inline AnalyticPointSolution analytic_point_l2(const Vector& mu_n, const Vector& x, double y_star, double eps) {
  require_dim(x.size(), mu_n.size(), "analytic_point_l2: x");
  if (!(eps >= 0.0)) throw InvalidArgument("analytic_point_l2: eps must be >= 0");
  const double norm = mu_n.norm();
  if (!(norm > 0.0)) throw UnattackableMean("analytic_point_l2: mu_n = 0, the predictive mean does not depend on x");
  const double alpha = y_star - mu_n.dot(x);
  if (std::abs(alpha) <= eps * norm) {
    AnalyticPointSolution s{(alpha / (norm * norm)) * mu_n, true, 0.0};
    return s;
  }
  AnalyticPointSolution s;
  s.r_star = detail::sgn(alpha) * (eps / norm) * mu_n;
  s.residual = std::abs(alpha) - eps * norm;
  s.achieved = false;
  return s;
}

/// Minimum-Linf perturbation; moves every coordinate with mu_n != 0 by the
/// same amount.
inline AnalyticPointSolution analytic_point_linf(const Vector& mu_n, const Vector& x, double y_star, double eps) {
  require_dim(x.size(), mu_n.size(), "analytic_point_linf: x");
  if (!(eps >= 0.0)) throw InvalidArgument("analytic_point_linf: eps must be >= 0");
  const double norm1 = mu_n.lpNorm<1>();
  if (!(norm1 > 0.0)) throw UnattackableMean("analytic_point_linf: mu_n = 0, the predictive mean does not depend on x");
  const double alpha = y_star - mu_n.dot(x);
  const Vector s = mu_n.unaryExpr([](double v) { return detail::sgn(v); });
  if (std::abs(alpha) <= eps * norm1) {
    return AnalyticPointSolution{(alpha / norm1) * s, true, 0.0};
  }
  return AnalyticPointSolution{eps * detail::sgn(alpha) * s, false, std::abs(alpha) - eps * norm1};
}

/// KL(N(mu_a, var_a) || N(mu_b, var_b)).
inline double kl_normal_normal(double mu_a, double var_a, double mu_b, double var_b) {
  const double d = mu_a - mu_b;
  return 0.5 * std::log(var_b / var_a) + (var_a + d * d) / (2.0 * var_b) - 0.5;
}

/// KL(N(mu_a, var_a) || PPD at x') for the known-variance model.
inline double kl_normal_ppd(double mu_a, double var_a, const GaussianPosterior& post, const Vector& x) {
  if (!(var_a > 0.0)) throw InvalidArgument("kl_normal_ppd: target variance must be > 0");
  const auto ppd = ppd_normal_params(post, x);
  return kl_normal_normal(mu_a, var_a, ppd.mean, ppd.variance);
}

/// Exact x'-gradient of kl_normal_ppd.
inline Vector kl_normal_ppd_grad(double mu_a, double var_a, const GaussianPosterior& post, const Vector& x) {
  if (!(var_a > 0.0)) throw InvalidArgument("kl_normal_ppd_grad: target variance must be > 0");
  require_dim(x.size(), post.mu_n.size(), "kl_normal_ppd_grad: x");
  const Vector sx = post.covariance() * x;
  const double v = x.dot(sx) + post.sigma2;
  const double d = mu_a - x.dot(post.mu_n);
  const Vector dv = 2.0 * sx;
  return dv / (2.0 * v) - (d / v) * post.mu_n - (var_a + d * d) / (2.0 * v * v) * dv;
}

/// KL(N(mu_a, var_a) || t) by quadrature; the t has no closed-form KL.
inline double kl_normal_to_t(double mu_a, double var_a, const TPredictive& t) {
  const double sd = std::sqrt(var_a);
  const auto integrand = [&](double z) {
    return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi) * t.log_pdf(mu_a + sd * z);
  };
  const double inf = std::numeric_limits<double>::infinity();
  const double cross = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(integrand, -inf, inf, 15, 1e-12);
  const double entropy = 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e * var_a);
  return -entropy - cross;
}

/// KL(p || q) between two Student-t distributions by quadrature.
inline double kl_t_t(const TPredictive& p, const TPredictive& q) {
  const double s = std::sqrt(p.scale);
  const auto integrand = [&](double z) {
    const double y = p.loc + s * z;
    const double lp = p.log_pdf(y);
    return std::exp(lp) * s * (lp - q.log_pdf(y));
  };
  const double inf = std::numeric_limits<double>::infinity();
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(integrand, -inf, inf, 15, 1e-12);
}

struct KlMinimum {
  Vector x;
  double kl = 0.0;
  std::size_t iterations = 0;
};

struct PgdSettings {
  std::size_t max_iterations = 5000;
  double tol = 1e-10;
  double initial_step = 1.0;
};

/// Projected gradient descent with backtracking on the closed-form KL from one start.
inline KlMinimum minimize_kl_pgd(double mu_a, double var_a, const GaussianPosterior& post, const FeasibleSet& fs,
                                 const Vector& start, const PgdSettings& settings = {}) {
  Vector x = fs.project(start);
  double f = kl_normal_ppd(mu_a, var_a, post, x);
  double step = settings.initial_step;
  std::size_t it = 0;
  for (; it < settings.max_iterations; ++it) {
    const Vector g = kl_normal_ppd_grad(mu_a, var_a, post, x);
    Vector next;
    double fn = 0.0;
    bool accepted = false;
    for (int k = 0; k < 60; ++k) {
      next = fs.project(x - step * g);
      fn = kl_normal_ppd(mu_a, var_a, post, next);
      const Vector d = next - x;
      if (fn <= f + g.dot(d) + d.squaredNorm() / (2.0 * step)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    const double moved = (next - x).norm();
    x = next;
    f = fn;
    step *= 2.0;
    if (moved < settings.tol) break;
  }
  return {x, f, it};
}

/// Local minima reached from each start, in start order.
inline std::vector<KlMinimum> kl_local_minima(double mu_a, double var_a, const GaussianPosterior& post,
                                              const FeasibleSet& fs, const std::vector<Vector>& starts,
                                              const PgdSettings& settings = {}) {
  std::vector<KlMinimum> out;
  out.reserve(starts.size());
  for (const auto& s : starts) out.push_back(minimize_kl_pgd(mu_a, var_a, post, fs, s, settings));
  return out;
}

/// Multi-start PGD on the closed-form KL: starts at the center, at the ball
/// boundary along each signed coordinate axis, and at `random_starts`
/// uniform-direction boundary points. Returns the best minimum found.
inline KlMinimum analytic_ppd_attack(double mu_a, double var_a, const GaussianPosterior& post, const FeasibleSet& fs,
                                     std::size_t random_starts, Rng& rng, const PgdSettings& settings = {}) {
  const Eigen::Index p = fs.dim();
  std::vector<Vector> starts{fs.center()};
  if (fs.epsilon() > 0.0) {
    for (Eigen::Index j = 0; j < p; ++j) {
      for (double s : {1.0, -1.0}) {
        Vector v = fs.center();
        v[j] += s * fs.epsilon();
        starts.push_back(v);
      }
    }
    for (std::size_t i = 0; i < random_starts; ++i) {
      Vector d = standard_normal_vector(p, rng);
      d *= fs.epsilon() / d.norm();
      starts.push_back(fs.center() + d);
    }
  }
  const auto minima = kl_local_minima(mu_a, var_a, post, fs, starts, settings);
  return *std::min_element(minima.begin(), minima.end(),
                           [](const KlMinimum& a, const KlMinimum& b) { return a.kl < b.kl; });
}

}  // namespace advbayes
