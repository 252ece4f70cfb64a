#pragma once

// White-box vs gray-box point attacks on the synthetic linear testbed. The
// defender is the configured model fit on D; the attacker only sees an
// ensemble fit on its own data. Both attacks share their random stream per
// (seed, epsilon) and are scored with the defender's exact predictive mean.

#include <cmath>
#include <memory>
#include <vector>

#include "advbayes/attack/point.hpp"
#include "advbayes/baselines/graybox.hpp"
#include "advbayes/core/conjugate.hpp"
#include "advbayes/harness/config.hpp"
#include "advbayes/harness/sep.hpp"
#include "advbayes/harness/synthetic.hpp"

namespace advbayes {

inline std::shared_ptr<const BayesianModel> fit_graybox_member(const GrayboxMember& m, double sigma2,
                                                               const Dataset& data) {
  const Eigen::Index p = data.X.cols();
  const Vector mu0 = Vector::Constant(p, m.prior.mu0);
  Matrix lambda0 = m.prior.lambda0 * Matrix::Identity(p, p);
  if (m.lambda0_diag.size() > 0) {
    require_dim(m.lambda0_diag.size(), p, "graybox member lambda0");
    lambda0 = m.lambda0_diag.asDiagonal();
  }
  auto lik = std::make_shared<GaussianLinear>(p);
  if (m.kind == LinearModelKind::KnownVariance) {
    return std::make_shared<BayesianModel>(lik, ExactConjugate(gaussian_update(mu0, lambda0, sigma2, data)));
  }
  return std::make_shared<BayesianModel>(lik, ExactConjugate(nig_update(NigPrior{mu0, lambda0, m.prior.a0, m.prior.b0}, data)));
}

/// Records strategy "whitebox" / "graybox", metric "residual" = |mu_n^T x' - G*|,
/// repetition = seed index.
inline SepResult graybox_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.dataset.from_csv) throw InvalidArgument("graybox experiment: needs the synthetic generator");
  constexpr std::uint64_t kStream = 4;
  const auto& g = cfg.graybox;
  SepResult out;
  for (std::size_t s = 0; s < g.seeds; ++s) {
    Rng rd = make_rng(cfg.seed, {kStream, 0, s});
    const Dataset d = gen_synthetic(cfg.dataset.synthetic, rd);
    Dataset d_attacker = d;
    if (g.fresh_data) {
      Rng ra = make_rng(cfg.seed, {kStream, 1, s});
      d_attacker = gen_synthetic(cfg.dataset.synthetic, ra);
    }
    const FittedLinear defender(cfg.model, cfg.prior, d);
    std::vector<std::shared_ptr<const BayesianModel>> members;
    for (const auto& m : g.members) members.push_back(fit_graybox_member(m, cfg.model.sigma2, d_attacker));
    const ModelEnsemble ensemble(std::move(members), g.weights);
    const double target = cfg.attack.target.value;
    const Vector& x = cfg.attack.instance;

    for (std::size_t e = 0; e < g.eps_grid.size(); ++e) {
      const auto prob = make_point_problem(cfg, x, target, g.eps_grid[e]);
      Rng rw = make_rng(cfg.seed, {kStream, 2, s, e});
      Rng rg = rw;
      const double white = std::abs(defender.predictive_mean(run_point_attack(prob, defender.model(), rw).final_x) - target);
      const double gray = std::abs(defender.predictive_mean(graybox_attack(prob, ensemble, rg).final_x) - target);
      out.records.push_back({"whitebox", "residual", g.eps_grid[e], s, white});
      out.records.push_back({"graybox", "residual", g.eps_grid[e], s, gray});
    }
  }
  return out;
}

}  // namespace advbayes
