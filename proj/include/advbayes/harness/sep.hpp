#pragma once

// Security-evaluation sweeps: attack every (epsilon, repetition) cell with
// each strategy, score the attacked point against the defender's exact
// conjugate predictive, and aggregate to mean +- 2 SE.

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "advbayes/analytic/analytic.hpp"
#include "advbayes/attack/point.hpp"
#include "advbayes/attack/ppd.hpp"
#include "advbayes/baselines/fgsm.hpp"
#include "advbayes/core/conjugate.hpp"
#include "advbayes/core/posterior.hpp"
#include "advbayes/harness/config.hpp"
#include "advbayes/harness/dataset_io.hpp"
#include "advbayes/harness/synthetic.hpp"

namespace advbayes {

/// A conjugate linear-Gaussian posterior with its sampling model.
class FittedLinear {
 public:
  FittedLinear(const ModelSpec& model, const PriorSpec& prior, const Dataset& data) : kind_(model.kind) {
    const Eigen::Index p = data.X.cols();
    const Vector mu0 = Vector::Constant(p, prior.mu0);
    const Matrix lambda0 = prior.lambda0 * Matrix::Identity(p, p);
    auto lik = std::make_shared<GaussianLinear>(p);
    if (kind_ == LinearModelKind::KnownVariance) {
      gaussian_ = gaussian_update(mu0, lambda0, model.sigma2, data);
      mu_n_ = gaussian_->mu_n;
      model_ = std::make_shared<BayesianModel>(lik, ExactConjugate(*gaussian_));
    } else {
      nig_ = nig_update(NigPrior{mu0, lambda0, prior.a0, prior.b0}, data);
      mu_n_ = nig_->mu;
      model_ = std::make_shared<BayesianModel>(lik, ExactConjugate(*nig_));
    }
  }

  LinearModelKind kind() const { return kind_; }
  const Vector& mu_n() const { return mu_n_; }
  const BayesianModel& model() const { return *model_; }
  std::shared_ptr<const BayesianModel> model_ptr() const { return model_; }
  const std::optional<GaussianPosterior>& gaussian() const { return gaussian_; }
  const std::optional<NigPosterior>& nig() const { return nig_; }

  double predictive_mean(const Vector& x) const { return x.dot(mu_n_); }

  double predictive_variance(const Vector& x) const {
    if (gaussian_) return ppd_normal_params(*gaussian_, x).variance;
    return ppd_t_params(*nig_, x).variance();
  }

  /// Normal target with scaled mean and variance of the clean predictive at x.
  Appd::Normal appd_for(const Vector& x, const TargetSpec& t) const {
    return {t.appd_mean_factor * predictive_mean(x), t.appd_variance_factor * predictive_variance(x)};
  }

  /// KL(target || predictive at x).
  double kl_to(const Appd::Normal& a, const Vector& x) const {
    if (gaussian_) return kl_normal_ppd(a.mean, a.variance, *gaussian_, x);
    return kl_normal_to_t(a.mean, a.variance, ppd_t_params(*nig_, x));
  }

  /// KL(predictive at x || predictive at x0).
  double kl_from_clean(const Vector& x0, const Vector& x) const {
    if (gaussian_) {
      const auto a = ppd_normal_params(*gaussian_, x);
      const auto b = ppd_normal_params(*gaussian_, x0);
      return kl_normal_normal(a.mean, a.variance, b.mean, b.variance);
    }
    return kl_t_t(ppd_t_params(*nig_, x), ppd_t_params(*nig_, x0));
  }

 private:
  LinearModelKind kind_;
  std::optional<GaussianPosterior> gaussian_;
  std::optional<NigPosterior> nig_;
  Vector mu_n_;
  std::shared_ptr<const BayesianModel> model_;
};

struct SepRecord {
  std::string strategy;
  std::string metric;
  double epsilon = 0.0;
  std::size_t repetition = 0;
  /// NaN marks a failed run.
  double value = std::numeric_limits<double>::quiet_NaN();
};

struct SepRow {
  std::string strategy;
  std::string metric;
  double epsilon = 0.0;
  std::size_t n = 0;
  double mean = 0.0;
  double se = 0.0;

  double lower() const { return mean - 2.0 * se; }
  double upper() const { return mean + 2.0 * se; }
};

struct SepResult {
  std::vector<SepRecord> records;
  std::vector<std::string> failures;
};

/// Mean and standard error per (strategy, metric, epsilon), skipping
/// missing values. Rows follow the first appearance of each key.
inline std::vector<SepRow> aggregate(const std::vector<SepRecord>& records) {
  std::vector<SepRow> rows;
  std::map<std::tuple<std::string, std::string, double>, std::size_t> index;
  std::vector<std::vector<double>> values;
  for (const auto& r : records) {
    const auto key = std::make_tuple(r.strategy, r.metric, r.epsilon);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, rows.size()).first;
      rows.push_back(SepRow{r.strategy, r.metric, r.epsilon, 0, 0.0, 0.0});
      values.emplace_back();
    }
    if (std::isfinite(r.value)) values[it->second].push_back(r.value);
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& v = values[i];
    rows[i].n = v.size();
    if (v.empty()) {
      rows[i].mean = rows[i].se = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    rows[i].mean = mean;
    rows[i].se = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size())) : 0.0;
  }
  return rows;
}

inline const SepRow* find_row(const std::vector<SepRow>& rows, const std::string& strategy, const std::string& metric,
                              double epsilon) {
  for (const auto& r : rows) {
    if (r.strategy == strategy && r.metric == metric && r.epsilon == epsilon) return &r;
  }
  return nullptr;
}

inline void write_sep_csv(std::ostream& os, const std::vector<SepRow>& rows) {
  os << "strategy,metric,epsilon,n,mean,se,lower,upper\n";
  os.precision(17);
  for (const auto& r : rows) {
    os << r.strategy << ',' << r.metric << ',' << r.epsilon << ',' << r.n << ',' << r.mean << ',' << r.se << ','
       << r.lower() << ',' << r.upper() << '\n';
  }
}

inline void write_sep_raw_csv(std::ostream& os, const std::vector<SepRecord>& records) {
  os << "strategy,metric,epsilon,repetition,value\n";
  os.precision(17);
  for (const auto& r : records) {
    os << r.strategy << ',' << r.metric << ',' << r.epsilon << ',' << r.repetition << ',';
    if (std::isfinite(r.value)) os << r.value;
    os << '\n';
  }
}

/// Training data and attacked instances for one repetition.
struct SepInstanceSet {
  Dataset train;
  std::vector<Vector> instances;
  double point_target = 0.0;
};

namespace detail {

enum SeedStream : std::uint64_t { kDataStream = 1, kAttackStream = 2, kSplitStream = 3 };

inline std::size_t strategy_id(const std::string& s) {
  if (s == "analytic") return 0;
  if (s == "sgd") return 1;
  return 2;
}

}  // namespace detail

inline SepInstanceSet sep_instances(const ExperimentConfig& cfg, std::size_t repetition) {
  SepInstanceSet out;
  if (cfg.dataset.from_csv) {
    const auto loaded =
        load_dataset(cfg.dataset.path, cfg.dataset.response, cfg.dataset.split, cfg.dataset.standardize, cfg.seed);
    out.train = loaded.train;
    const std::size_t k = std::min(cfg.attack.max_instances, loaded.test.rows());
    for (std::size_t i = 0; i < k; ++i) out.instances.push_back(loaded.test.X.row(static_cast<Eigen::Index>(i)).transpose());
    out.point_target = cfg.attack.target.from_train_mean ? cfg.attack.target.train_mean_factor * loaded.train.y.mean()
                                                         : cfg.attack.target.value;
  } else {
    const std::size_t stream = cfg.dataset.regenerate_per_repeat ? repetition : 0;
    Rng rng = make_rng(cfg.seed, {detail::kDataStream, stream});
    out.train = gen_synthetic(cfg.dataset.synthetic, rng);
    out.instances.push_back(cfg.attack.instance);
    out.point_target = cfg.attack.target.from_train_mean
                           ? cfg.attack.target.train_mean_factor * out.train.y.mean()
                           : cfg.attack.target.value;
  }
  return out;
}

inline PointAttackProblem make_point_problem(const ExperimentConfig& cfg, const Vector& x, double target, double eps) {
  return PointAttackProblem{functionals::response(), Vector::Constant(1, target), FeasibleSet(x, eps, cfg.attack.norm),
                            cfg.attack.optimizer, cfg.attack.n_mu, cfg.attack.n_grad, BatchMode::Independent};
}

inline PpdAttackProblem make_ppd_problem(const ExperimentConfig& cfg, const Appd::Normal& appd, const Vector& x,
                                         double eps) {
  return PpdAttackProblem{Appd(appd), FeasibleSet(x, eps, cfg.attack.norm), cfg.attack.optimizer, cfg.attack.mlmc};
}

/// Attacked point for one strategy; nullopt when the strategy does not
/// apply (closed forms exist only for L2/Linf point attacks and for
/// known-variance distribution attacks).
inline std::optional<Vector> attack_instance(const ExperimentConfig& cfg, const FittedLinear& fit, const Vector& x,
                                             double point_target, double eps, const std::string& strategy, Rng& rng) {
  if (cfg.attack.kind == AttackKind::Point) {
    const auto prob = make_point_problem(cfg, x, point_target, eps);
    if (strategy == "analytic") {
      if (cfg.attack.norm == Norm::L2) return x + analytic_point_l2(fit.mu_n(), x, point_target, eps).r_star;
      if (cfg.attack.norm == Norm::Linf) return x + analytic_point_linf(fit.mu_n(), x, point_target, eps).r_star;
      return std::nullopt;
    }
    if (strategy == "sgd") {
      return cfg.attack.reparameterized ? run_point_attack_reparam(prob, fit.model(), rng).final_x
                                        : run_point_attack(prob, fit.model(), rng).final_x;
    }
    return fgsm_point(prob, fit.model(), rng);
  }
  const auto appd = fit.appd_for(x, cfg.attack.target);
  if (strategy == "analytic") {
    if (!fit.gaussian()) return std::nullopt;
    return analytic_ppd_attack(appd.mean, appd.variance, *fit.gaussian(), FeasibleSet(x, eps, cfg.attack.norm), 8, rng).x;
  }
  const auto prob = make_ppd_problem(cfg, appd, x, eps);
  if (strategy == "sgd") return run_ppd_attack(prob, fit.model(), rng).final_x;
  return fgsm_ppd(prob, fit.model(), rng);
}

/// Runs the configured sweep. Failed cells are recorded as missing values.
inline SepResult run_sep(const ExperimentConfig& cfg) {
  cfg.validate();
  SepResult out;
  const bool point = cfg.attack.kind == AttackKind::Point;
  const bool multi = cfg.dataset.from_csv;

  for (std::size_t rep = 0; rep < cfg.attack.repeats; ++rep) {
    const auto inst = sep_instances(cfg, rep);
    const FittedLinear fit(cfg.model, cfg.prior, inst.train);

    for (std::size_t e = 0; e < cfg.attack.eps_grid.size(); ++e) {
      const double eps = cfg.attack.eps_grid[e];
      for (const auto& strategy : cfg.attack.strategies) {
        Rng rng = make_rng(cfg.seed, {detail::kAttackStream, rep, e, detail::strategy_id(strategy)});
        // per-metric accumulators over instances
        double sq = 0.0, kl = 0.0, kl_clean = 0.0, var = 0.0;
        bool skipped = false;
        try {
          for (const auto& x : inst.instances) {
            const auto xa = attack_instance(cfg, fit, x, inst.point_target, eps, strategy, rng);
            if (!xa) {
              skipped = true;
              break;
            }
            if (point) {
              const double d = fit.predictive_mean(*xa) - inst.point_target;
              sq += d * d;
            } else {
              kl += fit.kl_to(fit.appd_for(x, cfg.attack.target), *xa);
              kl_clean += fit.kl_from_clean(x, *xa);
              var += fit.predictive_variance(*xa) / fit.predictive_variance(x);
            }
          }
        } catch (const Error& err) {
          out.failures.push_back(strategy + " eps=" + std::to_string(eps) + " rep=" + std::to_string(rep) + ": " +
                                 err.what());
          sq = kl = kl_clean = var = std::numeric_limits<double>::quiet_NaN();
        }
        if (skipped) continue;
        const double k = static_cast<double>(inst.instances.size());
        if (point) {
          if (multi) {
            out.records.push_back({strategy, "rmse_to_target", eps, rep, std::sqrt(sq / k)});
          } else {
            out.records.push_back({strategy, "residual2", eps, rep, sq});
          }
        } else {
          out.records.push_back({strategy, "kl_to_appd", eps, rep, kl / k});
          out.records.push_back({strategy, "kl_to_clean_ppd", eps, rep, kl_clean / k});
          out.records.push_back({strategy, "variance_ratio", eps, rep, var / k});
        }
      }
    }
  }
  return out;
}

/// One attack at one epsilon on the first repetition's data, for inspection.
struct SingleAttack {
  AttackTrace trace;
  double clean_metric = 0.0;
  double attacked_metric = 0.0;
  std::string metric;
};

inline SingleAttack run_single_attack(const ExperimentConfig& cfg, double eps) {
  cfg.validate();
  const auto inst = sep_instances(cfg, 0);
  const FittedLinear fit(cfg.model, cfg.prior, inst.train);
  const Vector& x = inst.instances.front();
  Rng rng = make_rng(cfg.seed, {detail::kAttackStream, 0, 0, 1});
  SingleAttack out;
  if (cfg.attack.kind == AttackKind::Point) {
    const auto prob = make_point_problem(cfg, x, inst.point_target, eps);
    out.trace = cfg.attack.reparameterized ? run_point_attack_reparam(prob, fit.model(), rng)
                                           : run_point_attack(prob, fit.model(), rng);
    out.metric = "residual2";
    out.clean_metric = std::pow(fit.predictive_mean(x) - inst.point_target, 2);
    out.attacked_metric = std::pow(fit.predictive_mean(out.trace.final_x) - inst.point_target, 2);
  } else {
    const auto appd = fit.appd_for(x, cfg.attack.target);
    out.trace = run_ppd_attack(make_ppd_problem(cfg, appd, x, eps), fit.model(), rng);
    out.metric = "kl_to_appd";
    out.clean_metric = fit.kl_to(appd, x);
    out.attacked_metric = fit.kl_to(appd, out.trace.final_x);
  }
  return out;
}

struct SparsityCount {
  std::uint64_t seed = 0;
  std::size_t l1_zeros = 0;
  std::size_t l2_zeros = 0;
};

/// Runs the configured point attack at `eps` under L1 and L2 balls with
/// the same seed and counts unperturbed coordinates (|delta| < 1e-6).
inline SparsityCount l1_sparsity(const ExperimentConfig& cfg, double eps, std::uint64_t seed) {
  ExperimentConfig c = cfg;
  c.seed = seed;
  const auto inst = sep_instances(c, 0);
  const FittedLinear fit(c.model, c.prior, inst.train);
  const Vector& x = inst.instances.front();
  SparsityCount out{seed, 0, 0};
  for (Norm norm : {Norm::L1, Norm::L2}) {
    c.attack.norm = norm;
    Rng rng = make_rng(seed, {detail::kAttackStream, 0, 0, 1});
    const Vector delta = run_point_attack(make_point_problem(c, x, inst.point_target, eps), fit.model(), rng).final_x - x;
    const auto zeros = static_cast<std::size_t>((delta.array().abs() < 1e-6).count());
    (norm == Norm::L1 ? out.l1_zeros : out.l2_zeros) = zeros;
  }
  return out;
}

}  // namespace advbayes
