#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <gtest/gtest.h>

#include "advbayes/analytic/analytic.hpp"
#include "test_util.hpp"

using namespace advbayes;
using testutil::vec;

TEST(AnalyticL2, TargetAlreadyMet) {
  const Vector mu = vec({-1.0, 2.0});
  const Vector x = vec({0.5, 0.0});
  const auto s = analytic_point_l2(mu, x, mu.dot(x), 0.3);
  EXPECT_TRUE(s.achieved);
  EXPECT_EQ(s.r_star, Vector(Vector::Zero(2)));
  EXPECT_EQ(s.residual, 0.0);
}

TEST(AnalyticL2, InteriorAndBoundaryExamples) {
  const Vector mu = vec({-1.0, 2.0});
  const Vector x = vec({0.5, 0.0});
  const auto in = analytic_point_l2(mu, x, 3.0, 2.0);
  EXPECT_TRUE(in.achieved);
  EXPECT_LT((in.r_star - vec({-0.7, 1.4})).norm(), 1e-15);
  EXPECT_EQ(in.residual, 0.0);

  const auto out = analytic_point_l2(mu, x, 3.0, 0.5);
  EXPECT_FALSE(out.achieved);
  EXPECT_LT((out.r_star - (0.5 / std::sqrt(5.0)) * mu).norm(), 1e-15);
  EXPECT_NEAR(out.residual, 3.5 - 0.5 * std::sqrt(5.0), 1e-14);
}

TEST(AnalyticLinf, Examples) {
  const Vector mu = vec({-1.0, 2.0});
  const Vector x = Vector::Zero(2);
  for (double eps : {1.0, 2.0}) {
    const auto s = analytic_point_linf(mu, x, 3.0, eps);
    EXPECT_TRUE(s.achieved);
    EXPECT_LT((s.r_star - vec({-1.0, 1.0})).norm(), 1e-15);
    EXPECT_EQ(s.residual, 0.0);
  }
  const auto far = analytic_point_linf(mu, x, 9.0, 0.5);
  EXPECT_FALSE(far.achieved);
  EXPECT_LT((far.r_star - vec({-0.5, 0.5})).norm(), 1e-15);
  EXPECT_NEAR(far.residual, 9.0 - 1.5, 1e-14);
  const auto neg = analytic_point_linf(mu, x, -9.0, 0.5);
  EXPECT_LT((neg.r_star - vec({0.5, -0.5})).norm(), 1e-15);

  const auto zero = analytic_point_linf(vec({0.0, 2.0}), x, 9.0, 0.5);
  EXPECT_EQ(zero.r_star[0], 0.0);
}

TEST(Analytic, ZeroMeanIsUnattackable) {
  EXPECT_THROW(analytic_point_l2(Vector::Zero(2), Vector::Zero(2), 1.0, 1.0), UnattackableMean);
  EXPECT_THROW(analytic_point_linf(Vector::Zero(2), Vector::Zero(2), 1.0, 1.0), UnattackableMean);
}

TEST(Analytic, HolderBoundaryIsExact) {
  Rng rng = make_rng(91);
  for (int i = 0; i < 1000; ++i) {
    const Vector mu = standard_normal_vector(3, rng);
    const Vector x = standard_normal_vector(3, rng);
    const double eps = 0.1 + uniform01(rng);
    const double sign = uniform01(rng) < 0.5 ? -1.0 : 1.0;

    const double y2 = mu.dot(x) + sign * eps * mu.norm();
    const auto s2 = analytic_point_l2(mu, x, y2, eps);
    EXPECT_LE(s2.residual, 1e-9);
    EXPECT_NEAR(s2.r_star.norm(), eps, 1e-12);
    EXPECT_NEAR(mu.dot(x + s2.r_star), y2, 1e-9);

    const double yi = mu.dot(x) + sign * eps * mu.lpNorm<1>();
    const auto si = analytic_point_linf(mu, x, yi, eps);
    EXPECT_LE(si.residual, 1e-9);
    EXPECT_NEAR(si.r_star.lpNorm<Eigen::Infinity>(), eps, 1e-12);
    EXPECT_NEAR(mu.dot(x + si.r_star), yi, 1e-9);
  }
}

TEST(Analytic, SolutionsAreFeasibleAndResidualConsistent) {
  Rng rng = make_rng(92);
  for (int i = 0; i < 1000; ++i) {
    const Vector mu = standard_normal_vector(3, rng);
    const Vector x = standard_normal_vector(3, rng);
    const double eps = 2.0 * uniform01(rng);
    const double y = 5.0 * standard_normal(rng);
    const auto s2 = analytic_point_l2(mu, x, y, eps);
    EXPECT_LE(s2.r_star.norm(), eps + 1e-12);
    EXPECT_NEAR(s2.residual, std::abs(mu.dot(x + s2.r_star) - y), 1e-9);
    EXPECT_EQ(s2.achieved, s2.residual <= 1e-9);
    const auto si = analytic_point_linf(mu, x, y, eps);
    EXPECT_LE(si.r_star.lpNorm<Eigen::Infinity>(), eps + 1e-12);
    EXPECT_NEAR(si.residual, std::abs(mu.dot(x + si.r_star) - y), 1e-9);
    // No point of the box does better.
    for (int k = 0; k < 10; ++k) {
      const Vector r = eps * (2.0 * Vector::NullaryExpr(3, [&] { return uniform01(rng); }).array() - 1.0).matrix();
      EXPECT_GE(std::abs(mu.dot(x + r) - y), si.residual - 1e-9);
    }
  }
}

TEST(Analytic, InteriorL2SolutionHasMinimumNorm) {
  Rng rng = make_rng(93);
  for (int i = 0; i < 1000; ++i) {
    const Vector mu = standard_normal_vector(3, rng);
    const Vector x = standard_normal_vector(3, rng);
    const double alpha = standard_normal(rng);
    const auto s = analytic_point_l2(mu, x, mu.dot(x) + alpha, 100.0);
    ASSERT_TRUE(s.achieved);
    // Random r on the hyperplane mu^T r = alpha.
    Vector r = standard_normal_vector(3, rng);
    r += (alpha - mu.dot(r)) / mu.squaredNorm() * mu;
    ASSERT_NEAR(mu.dot(r), alpha, 1e-9);
    EXPECT_GE(r.norm(), s.r_star.norm() - 1e-12);
  }
}

// ---- Gaussian KL ----

TEST(KlNormal, Examples) {
  EXPECT_NEAR(kl_normal_normal(0.0, 1.0, 0.0, 4.0), 0.5 * std::log(4.0) + 1.0 / 8.0 - 0.5, 1e-15);
  EXPECT_NEAR(kl_normal_normal(0.0, 1.0, 0.0, 4.0), 0.3181, 5e-5);
  const GaussianPosterior post{vec({-1.0, 2.0}), Matrix::Identity(2, 2) * 3.0, 1.0};
  const Vector x = vec({0.5, 0.3});
  const auto ppd = ppd_normal_params(post, x);
  EXPECT_NEAR(kl_normal_ppd(ppd.mean, ppd.variance, post, x), 0.0, 1e-15);
  EXPECT_LT(kl_normal_ppd_grad(ppd.mean, ppd.variance, post, x).norm(), 1e-14);
}

TEST(KlNormal, GradientMatchesFiniteDifferences) {
  Rng rng = make_rng(94);
  for (int i = 0; i < 20; ++i) {
    Matrix a = Matrix::NullaryExpr(3, 3, [&] { return standard_normal(rng); });
    const GaussianPosterior post{standard_normal_vector(3, rng), a * a.transpose() + Matrix::Identity(3, 3), 0.5};
    const Vector x = standard_normal_vector(3, rng);
    const double mu_a = 2.0 * standard_normal(rng);
    const double var_a = 0.5 + uniform01(rng);
    const Vector g = kl_normal_ppd_grad(mu_a, var_a, post, x);
    for (Eigen::Index j = 0; j < 3; ++j) {
      const double h = 1e-6;
      Vector xp = x, xm = x;
      xp[j] += h;
      xm[j] -= h;
      const double fd = (kl_normal_ppd(mu_a, var_a, post, xp) - kl_normal_ppd(mu_a, var_a, post, xm)) / (2.0 * h);
      EXPECT_NEAR(fd, g[j], 1e-6 * std::max(1.0, std::abs(g[j])));
    }
  }
}

TEST(KlNormal, NonConvexWithTwoLocalMinima) {
  // mu_n = (0.5, 0), identity precision, unit noise, target N(0, 4):
  // along the second axis the KL is minimised where the predictive variance
  // x2^2 + 1 reaches 4, i.e. x2 = +-sqrt(3).
  const GaussianPosterior post{vec({0.5, 0.0}), Matrix::Identity(2, 2), 1.0};
  const FeasibleSet fs(Vector::Zero(2), 3.0, Norm::L2);
  const auto minima = kl_local_minima(0.0, 4.0, post, fs, {vec({0.0, 1.0}), vec({0.0, -1.0})});
  ASSERT_EQ(minima.size(), 2u);
  EXPECT_LT((minima[0].x - vec({0.0, std::sqrt(3.0)})).norm(), 1e-5);
  EXPECT_LT((minima[1].x - vec({0.0, -std::sqrt(3.0)})).norm(), 1e-5);
  EXPECT_NEAR(minima[0].kl, 0.0, 1e-10);
  // The midpoint is worse than either minimiser.
  EXPECT_GT(kl_normal_ppd(0.0, 4.0, post, Vector::Zero(2)), minima[0].kl + 0.1);
}

TEST(KlPgd, MultiStartFindsBoundaryOptimumAndStaysFeasible) {
  const GaussianPosterior post{vec({-1.0, 2.0}), Matrix::Identity(2, 2) * 10.0, 1.0};
  const Vector x = vec({0.5, 0.0});
  const FeasibleSet fs(x, 0.5, Norm::L2);
  Rng rng = make_rng(95);
  const auto best = analytic_ppd_attack(3.0, 4.0, post, fs, 8, rng);
  EXPECT_TRUE(fs.contains(best.x));
  EXPECT_LE(best.kl, kl_normal_ppd(3.0, 4.0, post, x));
  // Brute-force scan of the disc as an independent check.
  double scan = std::numeric_limits<double>::infinity();
  for (double r = 0.0; r <= 0.5 + 1e-12; r += 0.005) {
    for (double t = 0.0; t < 2.0 * std::numbers::pi; t += 0.005) {
      scan = std::min(scan, kl_normal_ppd(3.0, 4.0, post, x + r * vec({std::cos(t), std::sin(t)})));
    }
  }
  EXPECT_LE(best.kl, scan + 1e-6);
}

TEST(KlStudentT, NormalToTApproachesGaussianForLargeDf) {
  const TPredictive t{1e7, 1.0, 2.0};
  EXPECT_NEAR(kl_normal_to_t(0.5, 1.5, t), kl_normal_normal(0.5, 1.5, 1.0, 2.0), 1e-5);
}

TEST(KlStudentT, NormalToTMatchesDirectQuadrature) {
  const TPredictive t{3.0, 1.0, 2.0};
  const double mu = 0.2, var = 0.8;
  const auto f = [&](double y) {
    const double lp = -0.5 * std::log(2.0 * std::numbers::pi * var) - 0.5 * (y - mu) * (y - mu) / var;
    return std::exp(lp) * (lp - t.log_pdf(y));
  };
  double direct = 0.0;
  const double h = 1e-4;
  for (double y = mu - 12.0; y <= mu + 12.0; y += h) direct += f(y) * h;
  EXPECT_NEAR(kl_normal_to_t(mu, var, t), direct, 1e-6);
}

TEST(KlStudentT, TToT) {
  const TPredictive p{4.0, 0.0, 1.0};
  EXPECT_NEAR(kl_t_t(p, p), 0.0, 1e-12);
  const TPredictive q{6.0, 0.5, 1.5};
  const double kl = kl_t_t(p, q);
  EXPECT_GT(kl, 0.0);
  Rng rng = make_rng(96);
  // Monte-Carlo oracle: y = loc + sqrt(scale) * z / sqrt(chi2 / df).
  std::chi_squared_distribution<double> chi(p.df);
  std::vector<double> v;
  for (int i = 0; i < 200000; ++i) {
    const double y = p.loc + std::sqrt(p.scale) * standard_normal(rng) / std::sqrt(chi(rng) / p.df);
    v.push_back(p.log_pdf(y) - q.log_pdf(y));
  }
  const auto m = testutil::moments(v);
  EXPECT_LE(std::abs(m.mean[0] - kl), 3.0 * m.se[0]);
}
