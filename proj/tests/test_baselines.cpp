#include <cmath>
#include <memory>
#include <vector>

#include <gtest/gtest.h>

#include "advbayes/baselines/fgsm.hpp"
#include "advbayes/baselines/graybox.hpp"
#include "advbayes/core/diagnostics.hpp"
#include "advbayes/harness/synthetic.hpp"
#include "test_util.hpp"

using namespace advbayes;
using testutil::vec;

namespace {

std::shared_ptr<const BayesianModel> gaussian_member(const Vector& mu, double prec, double sigma2 = 1.0) {
  return std::make_shared<BayesianModel>(
      std::make_shared<GaussianLinear>(mu.size()),
      ExactConjugate(GaussianPosterior{mu, prec * Matrix::Identity(mu.size(), mu.size()), sigma2}));
}

std::shared_ptr<const BayesianModel> fit_member(const Dataset& d, const Matrix& lambda0) {
  const auto post = gaussian_update(Vector::Zero(d.X.cols()), lambda0, 1.0, d);
  return std::make_shared<BayesianModel>(std::make_shared<GaussianLinear>(d.X.cols()), ExactConjugate(post));
}

}  // namespace

TEST(Fgsm, Examples) {
  const Vector x = Vector::Zero(2);
  const Vector g = vec({1.0, -2.0});
  EXPECT_LT((fgsm_like(x, g, 0.1, Norm::Linf) - vec({-0.1, 0.1})).norm(), 1e-15);
  EXPECT_LT((fgsm_like(x, g, 0.1, Norm::L2) - vec({-0.1, 0.1}) / std::sqrt(2.0)).norm(), 1e-15);
  EXPECT_EQ(fgsm_like(x, g, 0.0, Norm::L2), x);
}

TEST(Fgsm, ZeroGradientWarnsAndReturnsInput) {
  diag::ScopedCapture capture;
  const Vector x = vec({0.3, 0.4});
  EXPECT_EQ(fgsm_like(x, Vector::Zero(2), 0.5, Norm::L2), x);
  ASSERT_EQ(capture.messages().size(), 1u);
}

TEST(Fgsm, AlwaysFeasible) {
  Rng rng = make_rng(101);
  for (Norm n : {Norm::L1, Norm::L2, Norm::Linf}) {
    for (int i = 0; i < 200; ++i) {
      const Vector x = standard_normal_vector(3, rng);
      const double eps = uniform01(rng);
      const Vector out = fgsm_like(x, standard_normal_vector(3, rng), eps, n);
      EXPECT_TRUE(FeasibleSet(x, eps, n).contains(out));
    }
  }
}

TEST(Fgsm, EqualsFirstSignStepOfProjectedSgd) {
  const auto model = gaussian_member(vec({-1.0, 2.0}), 1000.0);
  const Vector x = vec({0.5, 0.0});
  PointAttackProblem prob{functionals::response(), Vector::Constant(1, 3.0), FeasibleSet(x, 0.2, Norm::Linf)};
  prob.optimizer.iterations = 1;
  prob.optimizer.eta = 0.2;
  prob.optimizer.sign_gradient = true;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng a = make_rng(102, {seed});
    Rng b = a;
    EXPECT_EQ(fgsm_point(prob, *model, a), run_point_attack(prob, *model, b).steps.front().x);
  }
}

TEST(Fgsm, PpdVariantIsFeasible) {
  const auto model = gaussian_member(vec({-1.0, 2.0}), 4.0);
  const PpdAttackProblem prob{Appd::normal(3.0, 2.0), FeasibleSet(vec({0.5, 0.0}), 0.4, Norm::L2)};
  Rng rng = make_rng(103);
  EXPECT_TRUE(prob.feasible.contains(fgsm_ppd(prob, *model, rng)));
}

// ---- ensembles ----

TEST(ModelEnsemble, ValidatesWeightsAndMembers) {
  const auto m = gaussian_member(vec({1.0, 0.0}), 2.0);
  EXPECT_THROW(ModelEnsemble({}, Vector(0)), InvalidArgument);
  EXPECT_THROW(ModelEnsemble({m, m}, vec({0.7, 0.7})), InvalidArgument);
  EXPECT_THROW(ModelEnsemble({m, m}, vec({1.5, -0.5})), InvalidArgument);
  EXPECT_THROW(ModelEnsemble({m}, vec({0.5, 0.5})), DimensionMismatch);
  EXPECT_THROW(ModelEnsemble({m, gaussian_member(vec({1.0}), 2.0)}, vec({0.5, 0.5})), DimensionMismatch);
  EXPECT_NO_THROW(ModelEnsemble({m, m}, vec({0.5, 0.5 + 1e-12})));
}

TEST(BmaDraw, SingleMemberMatchesModelPredictive) {
  const auto m = gaussian_member(vec({1.0, -0.5}), 3.0);
  const ModelEnsemble ens({m}, vec({1.0}));
  const Vector x = vec({0.4, 1.0});
  Rng a = make_rng(104);
  Rng b = make_rng(105);
  std::vector<double> mix, direct;
  for (int i = 0; i < 10000; ++i) {
    mix.push_back(bma_ppd_draw(ens, x, a).y);
    const auto d = m->draw(1, b).front();
    direct.push_back(d.model->sample(x, d.params, b));
  }
  EXPECT_TRUE(testutil::ks_same_distribution(mix, direct));
}

TEST(BmaDraw, MixtureOfIdenticalMembers) {
  const auto m = gaussian_member(vec({1.0, -0.5}), 3.0);
  const ModelEnsemble ens({m, m}, vec({0.5, 0.5}));
  const ModelEnsemble single({m}, vec({1.0}));
  const Vector x = vec({0.4, 1.0});
  Rng a = make_rng(106);
  Rng b = make_rng(107);
  std::vector<double> ya, yb;
  for (int i = 0; i < 10000; ++i) {
    ya.push_back(bma_ppd_draw(ens, x, a).y);
    yb.push_back(bma_ppd_draw(single, x, b).y);
  }
  EXPECT_TRUE(testutil::ks_same_distribution(ya, yb));
}

TEST(BmaDraw, MixtureMeanAndMemberFrequencies) {
  const Vector mu1 = vec({1.0, -0.5});
  const Vector mu2 = vec({-2.0, 0.5});
  const ModelEnsemble ens({gaussian_member(mu1, 3.0), gaussian_member(mu2, 5.0)}, vec({0.3, 0.7}));
  const Vector x = vec({0.4, 1.0});
  Rng rng = make_rng(108);
  std::vector<double> ys;
  std::vector<std::size_t> counts(2, 0);
  for (int i = 0; i < 100000; ++i) {
    const auto d = bma_ppd_draw(ens, x, rng);
    ys.push_back(d.y);
    ++counts[d.index];
  }
  const auto m = testutil::moments(ys);
  EXPECT_LE(std::abs(m.mean[0] - (0.3 * mu1.dot(x) + 0.7 * mu2.dot(x))), 3.0 * m.se[0]);
  EXPECT_TRUE(testutil::chi_square_accepts(counts, {0.3, 0.7}));
}

TEST(GrayBox, DegenerateEnsembleMatchesWhiteBox) {
  const Vector mu = vec({-1.0, 2.0});
  const auto defender = gaussian_member(mu, 1000.0);
  const ModelEnsemble ens({defender}, vec({1.0}));
  const Vector x = vec({0.5, 0.0});
  const PointAttackProblem prob{functionals::response(), Vector::Constant(1, 3.0), FeasibleSet(x, 0.3, Norm::L2)};
  std::vector<double> white, gray;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng a = make_rng(109, {seed, 0});
    Rng b = make_rng(109, {seed, 1});
    white.push_back(std::abs(mu.dot(run_point_attack(prob, *defender, a).final_x) - 3.0));
    gray.push_back(std::abs(mu.dot(graybox_attack(prob, ens, b).final_x) - 3.0));
  }
  const auto mw = testutil::moments(white);
  const auto mg = testutil::moments(gray);
  EXPECT_LE(std::abs(mw.mean[0] - mg.mean[0]), 3.0 * std::hypot(mw.se[0], mg.se[0]) + 1e-12);
}

TEST(GrayBox, WrongFeatureSubsetMemberWeakensAttack) {
  Rng data_rng = make_rng(110);
  const Dataset d = gen_synthetic(SyntheticSpec{}, data_rng);
  const auto defender = fit_member(d, Matrix::Identity(2, 2));
  // A near-infinite prior precision on the second coefficient drops that feature.
  Matrix drop = Matrix::Identity(2, 2);
  drop(1, 1) = 1e8;
  const auto wrong = fit_member(d, drop);
  const ModelEnsemble full({defender}, vec({1.0}));
  const ModelEnsemble skewed({wrong, defender}, vec({0.95, 0.05}));
  const Vector mu = std::get<GaussianPosterior>(std::get<ExactConjugate>(defender->backend()).posterior()).mu_n;
  const Vector x = vec({0.5, 0.0});
  const PointAttackProblem prob{functionals::response(), Vector::Constant(1, 3.0), FeasibleSet(x, 0.5, Norm::L2)};
  double diff = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng a = make_rng(111, {seed});
    Rng b = a;
    const double r_full = std::abs(mu.dot(graybox_attack(prob, full, a).final_x) - 3.0);
    const double r_wrong = std::abs(mu.dot(graybox_attack(prob, skewed, b).final_x) - 3.0);
    EXPECT_GT(r_wrong, r_full) << "seed " << seed;
    diff += r_wrong - r_full;
  }
  EXPECT_GT(diff, 0.0);
}

namespace {

std::shared_ptr<const BayesianModel> fit_bnn(const Dataset& d, Eigen::Index hidden, std::uint64_t seed) {
  auto lik = std::make_shared<SmallBnn>(2, hidden, SmallBnn::Head::Regression);
  Rng rng = make_rng(seed);
  McmcSettings s;
  s.burn_in = 6000;
  s.pool_size = 500;
  McmcChain chain(make_log_posterior(lik, d, WeightPrior{2.0, 2.0, 2.0}), Vector::Zero(state_dim_for(*lik)), s, rng,
                  state_map_for(*lik));
  return std::make_shared<BayesianModel>(lik, std::move(chain));
}

double bnn_mean(const BayesianModel& m, const Vector& x) {
  const auto& bnn = static_cast<const SmallBnn&>(m.likelihood());
  const auto& pool = std::get<McmcChain>(m.backend()).pool();
  double s = 0.0;
  for (const auto& g : pool) s += bnn.output(x, g)[0];
  return s / static_cast<double>(pool.size());
}

}  // namespace

TEST(GrayBox, ArchitectureMismatchStillMovesTheDefender) {
  Rng data_rng = make_rng(120);
  SyntheticSpec spec;
  spec.n = 200;
  const Dataset d = gen_synthetic(spec, data_rng);
  const auto defender = fit_bnn(d, 5, 121);
  const ModelEnsemble attacker({fit_bnn(d, 3, 122)}, vec({1.0}));
  const Vector x = vec({0.5, 0.0});
  const double target = 3.0;
  PointAttackProblem prob{functionals::response(), Vector::Constant(1, target), FeasibleSet(x, 1.0, Norm::L2)};
  prob.optimizer.eta = 0.01;
  prob.optimizer.iterations = 300;
  const double clean = std::abs(bnn_mean(*defender, x) - target);
  double white = 0.0, gray = 0.0;
  const int seeds = 5;
  for (int s = 0; s < seeds; ++s) {
    Rng a = make_rng(123, {static_cast<std::uint64_t>(s)});
    Rng b = a;
    white += std::abs(bnn_mean(*defender, run_point_attack(prob, *defender, a).final_x) - target) / seeds;
    gray += std::abs(bnn_mean(*defender, graybox_attack(prob, attacker, b).final_x) - target) / seeds;
  }
  // the transferred attack still helps, but no more than the white-box one
  EXPECT_LT(gray, clean - 0.5);
  EXPECT_LE(white, gray + 0.05) << "white " << white << " gray " << gray << " clean " << clean;
}
