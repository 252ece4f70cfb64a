#pragma once

// Uncertainty attacks on a small Bayesian softmax classifier: raise the
// predictive entropy of in-distribution points (target the uniform class
// distribution) and lower it for out-of-distribution points (target the
// modal class), then measure selective-prediction accuracy.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <numeric>
#include <ostream>
#include <vector>

#include "advbayes/attack/point.hpp"
#include "advbayes/core/models.hpp"
#include "advbayes/core/posterior.hpp"
#include "advbayes/harness/config.hpp"
#include "advbayes/harness/sep.hpp"
#include "advbayes/harness/synthetic.hpp"

namespace advbayes {

/// Shannon entropy in nats; zero-probability classes contribute nothing.
inline double entropy(const Vector& probs) {
  double h = 0.0;
  for (Eigen::Index k = 0; k < probs.size(); ++k) {
    if (probs[k] > 0.0) h -= probs[k] * std::log(probs[k]);
  }
  return h;
}

/// Accuracy over the `retention` fraction of points with the lowest
/// entropy (at least one point is retained).
inline double selective_accuracy(const std::vector<double>& entropies, const std::vector<bool>& correct,
                                 double retention) {
  if (entropies.size() != correct.size() || entropies.empty()) {
    throw InvalidArgument("selective_accuracy: need matching, nonempty inputs");
  }
  if (!(retention > 0.0 && retention <= 1.0)) throw InvalidArgument("selective_accuracy: retention in (0, 1]");
  std::vector<std::size_t> order(entropies.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return entropies[a] < entropies[b]; });
  const auto keep = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(retention * static_cast<double>(entropies.size()) - 1e-9)));
  std::size_t hits = 0;
  for (std::size_t i = 0; i < keep; ++i) hits += correct[order[i]] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(keep);
}

struct SelectiveRow {
  double epsilon = 0.0;
  double retention = 0.0;
  double accuracy = 0.0;
};

struct EntropyResult {
  /// strategy "id" or "ood", metric "predictive_entropy", repetition = point index.
  std::vector<SepRecord> records;
  std::vector<SelectiveRow> selective;
  std::size_t classes = 0;
  double mcmc_acceptance = 0.0;

  double mean_entropy(const std::string& group, double eps) const {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& r : records) {
      if (r.strategy == group && r.epsilon == eps) {
        s += r.value;
        ++n;
      }
    }
    return n ? s / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
  }

  double accuracy(double eps, double retention) const {
    for (const auto& r : selective) {
      if (r.epsilon == eps && std::abs(r.retention - retention) < 1e-12) return r.accuracy;
    }
    return std::numeric_limits<double>::quiet_NaN();
  }
};

/// Posterior-averaged class probabilities over a fixed set of draws.
inline Vector predictive_probabilities(const Likelihood& model, const std::vector<ParamDraw>& draws, const Vector& x) {
  Vector p = Vector::Zero(static_cast<Eigen::Index>(*model.num_classes()));
  for (const auto& d : draws) p += model.class_probabilities(x, d);
  return p / static_cast<double>(draws.size());
}

inline EntropyResult entropy_experiment(const ExperimentConfig& cfg) {
  const auto& s = cfg.entropy;
  if (s.blobs.classes < 2) throw InvalidArgument("entropy experiment: need at least 2 classes");
  EntropyResult out;
  out.classes = s.blobs.classes;

  Rng data_rng = make_rng(cfg.seed, {0xE7, 1});
  const Dataset train = gen_blobs(s.blobs, data_rng);
  BlobSpec test_spec = s.blobs;
  test_spec.per_class = s.test_per_class;
  const Dataset id_test = gen_blobs(test_spec, data_rng);
  const Matrix ood = gen_blob_points(Vector::Zero(2), s.ood_sd, s.ood_points, data_rng);

  auto lik = std::make_shared<CategoricalSoftmax>(2, s.blobs.classes, true);
  Rng mcmc_rng = make_rng(cfg.seed, {0xE7, 2});
  McmcChain chain(make_log_posterior(lik, train, WeightPrior{s.prior_sd, 2.0, 2.0}),
                  Vector::Zero(state_dim_for(*lik)), s.mcmc, mcmc_rng, state_map_for(*lik));
  out.mcmc_acceptance = chain.acceptance_rate();
  std::vector<ParamDraw> eval(chain.pool().begin(),
                              chain.pool().begin() + static_cast<std::ptrdiff_t>(std::min(s.eval_draws, chain.pool().size())));
  const BayesianModel model(lik, std::move(chain));

  const Eigen::Index k = static_cast<Eigen::Index>(s.blobs.classes);
  const Vector uniform = Vector::Constant(k, 1.0 / static_cast<double>(k));

  for (std::size_t e = 0; e < s.eps_grid.size(); ++e) {
    const double eps = s.eps_grid[e];
    std::vector<double> ents;
    std::vector<bool> correct;
    auto attack = [&](const Vector& x, const Vector& target, std::size_t stream, std::size_t idx) -> Vector {
      if (eps == 0.0) return x;
      PointAttackProblem prob{functionals::one_hot(s.blobs.classes), target, FeasibleSet(x, eps, Norm::L2), s.optimizer,
                              s.n_mu, s.n_grad, BatchMode::Independent};
      Rng rng = make_rng(cfg.seed, {0xE7, 3, e, stream, idx});
      return run_point_attack(prob, model, rng).final_x;
    };

    for (Eigen::Index i = 0; i < id_test.X.rows(); ++i) {
      const Vector xa = attack(id_test.X.row(i).transpose(), uniform, 0, static_cast<std::size_t>(i));
      const Vector probs = predictive_probabilities(*lik, eval, xa);
      Eigen::Index pred = 0;
      probs.maxCoeff(&pred);
      const double h = entropy(probs);
      out.records.push_back({"id", "predictive_entropy", eps, static_cast<std::size_t>(i), h});
      ents.push_back(h);
      correct.push_back(static_cast<double>(pred) == id_test.y[i]);
    }
    for (Eigen::Index i = 0; i < ood.rows(); ++i) {
      const Vector x = ood.row(i).transpose();
      Eigen::Index modal = 0;
      predictive_probabilities(*lik, eval, x).maxCoeff(&modal);
      const Vector xa = attack(x, Vector::Unit(k, modal), 1, static_cast<std::size_t>(i));
      const double h = entropy(predictive_probabilities(*lik, eval, xa));
      out.records.push_back({"ood", "predictive_entropy", eps, static_cast<std::size_t>(i), h});
      ents.push_back(h);
      // out-of-distribution points have no correct label
      correct.push_back(false);
    }
    for (double f : s.retention) out.selective.push_back({eps, f, selective_accuracy(ents, correct, f)});
  }
  return out;
}

inline void write_selective_csv(std::ostream& os, const std::vector<SelectiveRow>& rows) {
  os << "epsilon,retention,accuracy\n";
  os.precision(17);
  for (const auto& r : rows) os << r.epsilon << ',' << r.retention << ',' << r.accuracy << '\n';
}

}  // namespace advbayes
