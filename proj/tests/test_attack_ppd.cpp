#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <vector>

#include <boost/math/distributions/students_t.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <Eigen/LU>
#include <gtest/gtest.h>

#include "advbayes/analytic/analytic.hpp"
#include "advbayes/attack/appd.hpp"
#include "advbayes/attack/ppd.hpp"
#include "test_util.hpp"

using namespace advbayes;
using testutil::vec;

namespace {

GaussianPosterior wide_posterior() { return GaussianPosterior{vec({-1.0, 2.0}), 4.0 * Matrix::Identity(2, 2), 1.0}; }

BayesianModel wide_model() { return BayesianModel(std::make_shared<GaussianLinear>(2), ExactConjugate(wide_posterior())); }

// -d/dx log N(y; mu^T x, x^T S x + s2)
Vector neg_log_ppd_grad(const GaussianPosterior& post, const Vector& x, double y) {
  const Vector sx = post.covariance() * x;
  const double v = x.dot(sx) + post.sigma2;
  const double r = y - post.mu_n.dot(x);
  const Vector dv = 2.0 * sx;
  return dv / (2.0 * v) - (r / v) * post.mu_n - (r * r) / (2.0 * v * v) * dv;
}

std::vector<ModelDraw> with_model(const Likelihood& m, const std::vector<ParamDraw>& ps) {
  std::vector<ModelDraw> out;
  for (const auto& p : ps) out.push_back(ModelDraw{&m, p});
  return out;
}

}  // namespace

// ---- ratio estimator ----

TEST(RatioGrad, SingleDrawIsNegativeScore) {
  const GaussianLinear m(2);
  Rng rng = make_rng(71);
  for (int i = 0; i < 20; ++i) {
    const Vector x = standard_normal_vector(2, rng);
    const ParamDraw g{standard_normal_vector(2, rng), 0.5};
    const double y = standard_normal(rng);
    EXPECT_EQ(ratio_grad(m, x, y, {g}), Vector(-m.score_x(x, y, g)));
  }
}

TEST(RatioGrad, IdenticalDrawsDoNotDependOnCount) {
  const GaussianLinear m(2);
  const ParamDraw g{vec({0.3, -1.2}), 0.7};
  const Vector x = vec({0.5, 0.25});
  const Vector one = ratio_grad(m, x, 1.3, {g});
  for (std::size_t n : {2u, 7u, 64u}) EXPECT_EQ(ratio_grad(m, x, 1.3, std::vector<ParamDraw>(n, g)), one);
}

TEST(RatioGrad, MatchesLogSumExpOracleDeepInTheTail) {
  // y far outside the predictive: every likelihood underflows exp().
  const GaussianLinear m(2);
  Rng rng = make_rng(72);
  std::vector<ParamDraw> gs;
  for (int i = 0; i < 50; ++i) gs.push_back(ParamDraw{standard_normal_vector(2, rng), 1.0});
  const Vector x = vec({0.5, 0.0});
  const double y = 1e4;
  std::vector<double> ls;
  for (const auto& g : gs) ls.push_back(m.loglik(x, y, g));
  const double top = *std::max_element(ls.begin(), ls.end());
  ASSERT_LT(top, -1000.0);
  Vector num = Vector::Zero(2);
  double den = 0.0;
  for (std::size_t i = 0; i < gs.size(); ++i) {
    const double w = std::exp(ls[i] - top);
    num += w * m.score_x(x, y, gs[i]);
    den += w;
  }
  const Vector expect = -num / den;
  const Vector got = ratio_grad(m, x, y, gs);
  ASSERT_TRUE(got.allFinite());
  EXPECT_LT((got - expect).norm(), 1e-9 * expect.norm());
}

TEST(RatioGrad, DegenerateLikelihoodsAreReported) {
  const GaussianLinear m(1);
  const std::vector<ParamDraw> gs{ParamDraw{vec({1.0}), 1.0}};
  EXPECT_THROW(ratio_grad(m, vec({1.0}), std::numeric_limits<double>::infinity(), gs), DegenerateLikelihood);
  EXPECT_THROW(ratio_grad(m, vec({1.0}), std::nan(""), gs), DegenerateLikelihood);
  EXPECT_THROW(ratio_grad(m, vec({1.0}), 0.0, std::vector<ParamDraw>{}), InvalidArgument);
}

TEST(RatioGrad, ConvergesToExactPredictiveScore) {
  const auto model = wide_model();
  const auto post = wide_posterior();
  const Vector x = vec({0.5, 0.3});
  Rng rng = make_rng(73);
  for (double y : {-2.0, 0.0, 1.5}) {
    const auto draws = model.draw(400000, rng);
    const Vector got = ratio_grad(x, y, draws);
    const Vector exact = neg_log_ppd_grad(post, x, y);
    EXPECT_LT((got - exact).norm(), 0.02 * (1.0 + exact.norm())) << "y " << y;
  }
}

// ---- level differences ----

TEST(DeltaLevel, LevelZeroIsTheRatioEstimate) {
  const auto model = wide_model();
  const MlmcConfig cfg;
  const Vector x = vec({0.5, 0.3});
  Rng a = make_rng(74);
  Rng b = a;
  const Vector delta = delta_level(x, 0.4, 0, cfg, model, a);
  const auto draws = model.draw(cfg.m0, b);
  EXPECT_EQ(delta, ratio_grad(x, 0.4, draws));
}

TEST(DeltaLevel, IdenticalDrawsGiveZeroDifference) {
  const BayesianModel model(std::make_shared<GaussianLinear>(2), SampleBank({ParamDraw{vec({1.0, -0.5}), 0.8}}));
  const MlmcConfig cfg;
  Rng rng = make_rng(75);
  for (int level = 1; level <= 4; ++level) {
    EXPECT_EQ(delta_level(vec({0.5, 0.3}), 0.2, level, cfg, model, rng), Vector(Vector::Zero(2)));
  }
}

TEST(DeltaLevel, MomentsDecayWithLevel) {
  const auto model = wide_model();
  const MlmcConfig cfg;
  const Vector x = vec({0.5, 0.3});
  const double y = 1.0;
  const int reps = 4000;
  double prev_sq = std::numeric_limits<double>::infinity();
  Vector prev_mean;
  Vector prev_se;
  for (int level = 1; level <= 5; ++level) {
    Rng rng = make_rng(76, {static_cast<std::uint64_t>(level)});
    Matrix d(reps, 2);
    double sq = 0.0;
    for (int i = 0; i < reps; ++i) {
      d.row(i) = delta_level(x, y, level, cfg, model, rng).transpose();
      sq += d.row(i).squaredNorm();
    }
    sq /= reps;
    EXPECT_LT(sq, prev_sq) << "level " << level;
    const auto m = testutil::moments(d);
    if (level > 1) {
      for (Eigen::Index j = 0; j < 2; ++j) {
        EXPECT_LE(std::abs(m.mean[j]), std::abs(prev_mean[j]) + 3.0 * std::hypot(m.se[j], prev_se[j]))
            << "level " << level;
      }
    }
    prev_sq = sq;
    prev_mean = m.mean;
    prev_se = m.se;
  }
}

TEST(DeltaLevel, DifferencesTelescope) {
  const auto model = wide_model();
  MlmcConfig cfg;
  const Vector x = vec({0.5, 0.3});
  const double y = 1.0;
  const int reps = 20000;
  const int top = 3;
  Vector sum = Vector::Zero(2);
  Vector var = Vector::Zero(2);
  for (int level = 0; level <= top; ++level) {
    Rng rng = make_rng(77, {static_cast<std::uint64_t>(level)});
    Matrix d(reps, 2);
    for (int i = 0; i < reps; ++i) d.row(i) = delta_level(x, y, level, cfg, model, rng).transpose();
    const auto m = testutil::moments(d);
    sum += m.mean;
    var += m.se.cwiseProduct(m.se);
  }
  Rng rng = make_rng(78);
  Matrix fine(reps, 2);
  for (int i = 0; i < reps; ++i) fine.row(i) = ratio_grad(x, y, model.draw(cfg.m0 << top, rng)).transpose();
  const auto mf = testutil::moments(fine);
  for (Eigen::Index j = 0; j < 2; ++j) {
    EXPECT_LE(std::abs(sum[j] - mf.mean[j]), 3.0 * std::sqrt(var[j] + mf.se[j] * mf.se[j]));
  }
}

// ---- level law and cost ----

TEST(LevelLaw, TruncatedFrequenciesMatchWeights) {
  MlmcConfig cfg;
  cfg.tau = 1.5;
  cfg.l_max = 6;
  const LevelLaw law(cfg);
  double total = 0.0;
  for (int l = 0; l <= 6; ++l) total += std::exp2(-1.5 * l);
  std::vector<double> probs;
  for (int l = 0; l <= 6; ++l) {
    probs.push_back(std::exp2(-1.5 * l) / total);
    EXPECT_NEAR(law.weight(l), probs.back(), 1e-15);
  }
  EXPECT_EQ(law.weight(7), 0.0);
  Rng rng = make_rng(79);
  std::vector<std::size_t> counts(7, 0);
  for (int i = 0; i < 100000; ++i) ++counts[static_cast<std::size_t>(law.sample(rng))];
  EXPECT_TRUE(testutil::chi_square_accepts(counts, probs));
}

TEST(LevelLaw, UntruncatedFrequenciesMatchGeometricLaw) {
  MlmcConfig cfg;
  cfg.tau = 1.5;
  cfg.untruncated = true;
  const LevelLaw law(cfg);
  const double q = std::exp2(-1.5);
  std::vector<double> probs;
  for (int l = 0; l < 6; ++l) probs.push_back((1.0 - q) * std::pow(q, l));
  probs.push_back(std::pow(q, 6));
  Rng rng = make_rng(80);
  std::vector<std::size_t> counts(7, 0);
  for (int i = 0; i < 100000; ++i) ++counts[static_cast<std::size_t>(std::min(law.sample(rng), 6))];
  EXPECT_TRUE(testutil::chi_square_accepts(counts, probs));
}

TEST(MlmcCost, ClosedFormExamples) {
  MlmcConfig cfg;
  cfg.r = 2;
  cfg.m0 = 8;
  cfg.tau = 2.0;
  // 2 * 8 * (3/4) / (1/2)
  EXPECT_DOUBLE_EQ(expected_samples_per_iter(cfg).geometric, 24.0);
  cfg.l_max = 0;
  EXPECT_DOUBLE_EQ(expected_samples_per_iter(cfg).implemented, 16.0);
  cfg.untruncated = true;
  EXPECT_DOUBLE_EQ(expected_samples_per_iter(cfg).implemented, 24.0);
}

TEST(MlmcCost, DivergentTauIsRejected) {
  MlmcConfig cfg;
  cfg.tau = 1.0;
  EXPECT_THROW(expected_samples_per_iter(cfg), DivergentCost);
  EXPECT_THROW(LevelLaw{cfg}, DivergentCost);
  cfg.tau = 0.5;
  EXPECT_THROW(cfg.validate(), DivergentCost);
}

TEST(MlmcCost, SimulatedDrawCountsMatchExpectation) {
  const BayesianModel model(std::make_shared<GaussianLinear>(2), SampleBank({ParamDraw{vec({1.0, -0.5}), 0.8}}));
  const Appd appd = Appd::normal(0.0, 1.0);
  for (bool untruncated : {false, true}) {
    MlmcConfig cfg;
    cfg.r = 2;
    cfg.m0 = 8;
    cfg.tau = 2.0;
    cfg.untruncated = untruncated;
    const LevelLaw law(cfg);
    Rng rng = make_rng(81, {untruncated ? 1u : 0u});
    double total = 0.0;
    const int iters = 50000;
    for (int i = 0; i < iters; ++i) {
      total += static_cast<double>(mlmc_grad(vec({0.5, 0.0}), appd, cfg, model, rng, &law).posterior_draws);
    }
    const double expect = expected_samples_per_iter(cfg).implemented;
    EXPECT_NEAR(total / iters, expect, 0.02 * expect) << (untruncated ? "untruncated" : "truncated");
  }
}

TEST(MlmcCost, LevelDrawGuard) {
  MlmcConfig cfg;
  cfg.max_level_draws = 64;
  EXPECT_EQ(cfg.level_draws(3), 64u);
  EXPECT_THROW(cfg.level_draws(4), InvalidArgument);
}

// ---- multilevel gradient ----

TEST(MlmcGrad, UnbiasedForKnownVarianceKl) {
  const auto model = wide_model();
  const auto post = wide_posterior();
  const Vector x = vec({0.5, 0.3});
  const Appd appd = Appd::normal(2.0, 3.0);
  const Vector exact = kl_normal_ppd_grad(2.0, 3.0, post, x);
  for (bool untruncated : {false, true}) {
    MlmcConfig cfg;
    cfg.untruncated = untruncated;
    cfg.l_max = 8;
    const LevelLaw law(cfg);
    Rng rng = make_rng(82, {untruncated ? 1u : 0u});
    Matrix reps(20000, 2);
    for (int i = 0; i < reps.rows(); ++i) reps.row(i) = mlmc_grad(x, appd, cfg, model, rng, &law).gradient.transpose();
    const auto m = testutil::moments(reps);
    for (Eigen::Index j = 0; j < 2; ++j) {
      EXPECT_LE(std::abs(m.mean[j] - exact[j]), 3.0 * m.se[j]) << (untruncated ? "untruncated" : "truncated");
    }
  }
}

TEST(MlmcGrad, VanishesWhenTargetEqualsPredictive) {
  const auto model = wide_model();
  const auto post = wide_posterior();
  const Vector x = vec({0.5, 0.3});
  const auto ppd = ppd_normal_params(post, x);
  const Appd appd = Appd::normal(ppd.mean, ppd.variance);
  MlmcConfig cfg;
  const LevelLaw law(cfg);
  Rng rng = make_rng(83);
  Matrix reps(20000, 2);
  for (int i = 0; i < reps.rows(); ++i) reps.row(i) = mlmc_grad(x, appd, cfg, model, rng, &law).gradient.transpose();
  const auto m = testutil::moments(reps);
  for (Eigen::Index j = 0; j < 2; ++j) EXPECT_LE(std::abs(m.mean[j]), 3.0 * m.se[j]);
}

TEST(MlmcGrad, SingleLevelReducesToRatioEstimate) {
  const auto model = wide_model();
  MlmcConfig cfg;
  cfg.l_max = 0;
  const Appd appd = Appd::normal(1.0, 2.0);
  const Vector x = vec({0.5, 0.3});
  Rng a = make_rng(84);
  Rng b = a;
  const auto est = mlmc_grad(x, appd, cfg, model, a);
  const double y = appd.sample(b);
  EXPECT_EQ(LevelLaw(cfg).sample(b), 0);
  EXPECT_EQ(est.gradient, ratio_grad(x, y, model.draw(cfg.m0, b)));
  EXPECT_EQ(est.posterior_draws, cfg.m0);
  EXPECT_EQ(est.levels, std::vector<int>{0});
}

// ---- KL estimates and attack ----

TEST(EstimateKl, AgreesWithClosedForm) {
  const auto model = wide_model();
  const auto post = wide_posterior();
  const Vector x = vec({0.5, 0.3});
  const auto ppd = ppd_normal_params(post, x);
  Rng rng = make_rng(85);
  const auto same = estimate_kl(Appd::normal(ppd.mean, ppd.variance), x, model, 2000, 4096, rng);
  EXPECT_GE(same.mean, -3.0 * same.se);
  EXPECT_LE(std::abs(same.mean), 3.0 * same.se + 0.01);
  const auto other = estimate_kl(Appd::normal(2.0, 3.0), x, model, 2000, 4096, rng);
  EXPECT_LE(std::abs(other.mean - kl_normal_ppd(2.0, 3.0, post, x)), 3.0 * other.se + 0.01);
}

TEST(PpdAttack, ZeroRadiusAndFeasibility) {
  const auto model = wide_model();
  const Vector x = vec({0.5, 0.3});
  for (double eps : {0.0, 0.5}) {
    PpdAttackProblem prob{Appd::normal(2.0, 3.0), FeasibleSet(x, eps, Norm::L2)};
    prob.optimizer.iterations = 100;
    Rng rng = make_rng(86);
    const auto trace = run_ppd_attack(prob, model, rng);
    if (eps == 0.0) EXPECT_EQ(trace.final_x, x);
    for (const auto& s : trace.steps) {
      EXPECT_TRUE(prob.feasible.contains(s.x));
      EXPECT_FALSE(s.levels.empty());
    }
  }
}

TEST(PpdAttack, ReducesClosedFormKl) {
  const auto model = wide_model();
  const auto post = wide_posterior();
  const Vector x = vec({0.5, 0.3});
  PpdAttackProblem prob{Appd::normal(3.0, 3.0), FeasibleSet(x, 1.0, Norm::L2)};
  prob.optimizer.eta = 0.05;
  prob.optimizer.iterations = 400;
  prob.optimizer.decay = true;
  Rng rng = make_rng(87);
  const auto trace = run_ppd_attack(prob, model, rng);
  const double before = kl_normal_ppd(3.0, 3.0, post, x);
  const double after = kl_normal_ppd(3.0, 3.0, post, trace.final_x);
  EXPECT_LT(after, before);
  Rng pgd_rng = make_rng(88);
  const double best = analytic_ppd_attack(3.0, 3.0, post, prob.feasible, 8, pgd_rng).kl;
  EXPECT_LT(after - best, 0.05 * (before - best));
}

// ---- adversarial target distributions ----

TEST(Appd, ValidatesParameters) {
  EXPECT_THROW(Appd::normal(0.0, 0.0), InvalidArgument);
  EXPECT_THROW(Appd::categorical(vec({0.5, 0.6})), InvalidArgument);
  EXPECT_THROW(Appd::categorical(vec({1.2, -0.2})), InvalidArgument);
  EXPECT_THROW(Appd::student_t(0.0, 0.0, 1.0), InvalidArgument);
}

TEST(Appd, DensitiesAndEntropies) {
  const Appd n = Appd::normal(1.0, 4.0);
  EXPECT_NEAR(n.log_pdf(1.0), -0.5 * std::log(2.0 * std::numbers::pi * 4.0), 1e-14);
  EXPECT_NEAR(n.entropy(), 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e * 4.0), 1e-14);

  const Appd c = Appd::categorical(vec({0.2, 0.3, 0.5}));
  EXPECT_NEAR(c.log_pdf(1.0), std::log(0.3), 1e-15);
  EXPECT_NEAR(c.entropy(), -(0.2 * std::log(0.2) + 0.3 * std::log(0.3) + 0.5 * std::log(0.5)), 1e-15);

  const Appd t = Appd::student_t(4.0, 1.0, 2.0);
  const boost::math::students_t_distribution<double> ref(4.0);
  const double s = std::sqrt(2.0);
  for (double y : {-3.0, 0.0, 1.0, 5.0}) {
    EXPECT_NEAR(t.log_pdf(y), std::log(boost::math::pdf(ref, (y - 1.0) / s) / s), 1e-12);
  }
  const auto integrand = [&](double y) {
    const double lp = t.log_pdf(y);
    return -std::exp(lp) * lp;
  };
  const double h = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
      integrand, -std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(), 15, 1e-12);
  EXPECT_NEAR(t.entropy(), h, 1e-8);
}

TEST(Appd, SamplingMoments) {
  Rng rng = make_rng(89);
  std::vector<double> ys;
  const Appd n = Appd::normal(1.0, 4.0);
  for (int i = 0; i < 100000; ++i) ys.push_back(n.sample(rng));
  const auto m = testutil::moments(ys);
  EXPECT_LE(std::abs(m.mean[0] - 1.0), 3.0 * m.se[0]);

  const Appd c = Appd::categorical(vec({0.2, 0.3, 0.5}));
  std::vector<std::size_t> counts(3, 0);
  for (int i = 0; i < 100000; ++i) ++counts[static_cast<std::size_t>(c.sample(rng))];
  EXPECT_TRUE(testutil::chi_square_accepts(counts, {0.2, 0.3, 0.5}));
}
