#pragma once

// Attacks on the whole posterior predictive distribution. The objective
// KL(pi_A || pi(. | x', D)) equals -E_A[log pi(y | x', D)] up to a constant,
// whose x'-gradient E_A[-grad pi / pi] is a ratio of expectations. The
// ratio estimated from M draws is biased by O(1/M); randomising the number
// of draws over levels M_l = M0 2^l and weighting antithetic level
// differences by the level probabilities removes that bias.

#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "advbayes/attack/appd.hpp"
#include "advbayes/attack/feasible_set.hpp"
#include "advbayes/attack/trace.hpp"
#include "advbayes/core/models.hpp"
#include "advbayes/core/posterior.hpp"
#include "advbayes/core/random.hpp"
#include "advbayes/core/types.hpp"

namespace advbayes {

struct MlmcConfig {
  std::size_t m0 = 8;
  double tau = 1.5;
  std::size_t r = 1;
  int l_max = 6;
  /// y-draws from the target per iteration.
  std::size_t b = 1;
  /// Sample levels from the infinite geometric law instead of truncating.
  bool untruncated = false;
  /// Upper bound on M0 2^l for a single level in untruncated mode.
  std::size_t max_level_draws = std::size_t{1} << 22;

  void validate() const {
    if (!(tau > 1.0)) {
      throw DivergentCost("mlmc: tau must exceed 1 for the expected cost to be finite, got " + std::to_string(tau));
    }
    if (m0 < 1 || r < 1 || b < 1) throw InvalidArgument("mlmc: M0, R and B must be >= 1");
    if (l_max < 0) throw InvalidArgument("mlmc: Lmax must be >= 0");
    if (l_max > 40) throw InvalidArgument("mlmc: Lmax too large");
  }

  std::size_t level_draws(int level) const {
    if (level < 0 || level > 60) throw InvalidArgument("mlmc: level out of range");
    const double n = static_cast<double>(m0) * std::ldexp(1.0, level);
    if (n > static_cast<double>(max_level_draws)) {
      throw InvalidArgument("mlmc: level " + std::to_string(level) + " needs " + std::to_string(n) +
                            " posterior draws, above the configured limit");
    }
    return m0 << level;
  }
};

/// Distribution of the randomised level: w_l proportional to 2^(-tau l),
/// either on 0..Lmax (renormalised) or on all l >= 0.
class LevelLaw {
 public:
  explicit LevelLaw(const MlmcConfig& cfg) : tau_(cfg.tau), untruncated_(cfg.untruncated) {
    cfg.validate();
    if (!untruncated_) {
      weights_.resize(static_cast<std::size_t>(cfg.l_max) + 1);
      double total = 0.0;
      for (std::size_t l = 0; l < weights_.size(); ++l) {
        weights_[l] = std::exp2(-tau_ * static_cast<double>(l));
        total += weights_[l];
      }
      for (auto& w : weights_) w /= total;
      cdf_.resize(weights_.size());
      double c = 0.0;
      for (std::size_t l = 0; l < weights_.size(); ++l) cdf_[l] = (c += weights_[l]);
    }
  }

  double weight(int level) const {
    if (level < 0) return 0.0;
    if (untruncated_) return (1.0 - std::exp2(-tau_)) * std::exp2(-tau_ * level);
    return static_cast<std::size_t>(level) < weights_.size() ? weights_[static_cast<std::size_t>(level)] : 0.0;
  }

  int sample(Rng& rng) const {
    const double u = uniform01(rng);
    if (untruncated_) {
      // P(L >= l) = 2^(-tau l)
      return static_cast<int>(std::floor(std::log(1.0 - u) / (-tau_ * std::numbers::ln2)));
    }
    for (std::size_t l = 0; l < cdf_.size(); ++l) {
      if (u < cdf_[l]) return static_cast<int>(l);
    }
    return static_cast<int>(cdf_.size()) - 1;
  }

  bool untruncated() const { return untruncated_; }
  /// Truncated weights; empty in untruncated mode.
  const std::vector<double>& weights() const { return weights_; }

 private:
  double tau_;
  bool untruncated_;
  std::vector<double> weights_;
  std::vector<double> cdf_;
};

struct RatioEstimate {
  /// -sum grad pi / sum pi
  Vector gradient;
  /// log of (1/M) sum pi(y | x', gamma_m)
  double log_mean_pdf = 0.0;
};

/// Ratio estimator over a set of draws. Each likelihood weight is taken
/// relative to the running maximum log-likelihood, so the numerator is a
/// weighted mean of scores and never divides by an underflowed sum.
inline RatioEstimate ratio_estimate(const Vector& x, double y, std::span<const ModelDraw> draws) {
  if (draws.empty()) throw InvalidArgument("ratio_grad: needs at least one draw");
  double ref = -std::numeric_limits<double>::infinity();
  double total = 0.0;
  Vector mean = Vector::Zero(x.size());
  for (const auto& d : draws) {
    const auto ls = d.model->loglik_and_score(x, y, d.params);
    if (std::isnan(ls.loglik)) throw DegenerateLikelihood("ratio_grad: log-likelihood is NaN");
    if (ls.loglik == -std::numeric_limits<double>::infinity()) continue;
    if (ls.loglik > ref) {
      total *= std::exp(ref - ls.loglik);
      ref = ls.loglik;
    }
    const double w = std::exp(ls.loglik - ref);
    total += w;
    mean += (w / total) * (ls.score - mean);
  }
  if (!(total >= 1e-300) || !std::isfinite(ref)) {
    throw DegenerateLikelihood("ratio_grad: every draw gives zero likelihood to y = " + std::to_string(y));
  }
  return {-mean, ref + std::log(total) - std::log(static_cast<double>(draws.size()))};
}

/// g_{x',M}(y) for draws that may come from different likelihoods.
inline Vector ratio_grad(const Vector& x, double y, std::span<const ModelDraw> draws) {
  return ratio_estimate(x, y, draws).gradient;
}

/// g_{x',M}(y) for parameter draws of a single likelihood.
inline Vector ratio_grad(const Likelihood& model, const Vector& x, double y, const std::vector<ParamDraw>& gammas) {
  std::vector<ModelDraw> draws;
  draws.reserve(gammas.size());
  for (const auto& g : gammas) draws.push_back(ModelDraw{&model, g});
  return ratio_grad(x, y, draws);
}

struct LevelDelta {
  Vector delta;
  /// log mean likelihood over all M_l draws
  double log_mean_pdf = 0.0;
  std::size_t draws = 0;
};

/// Antithetic level difference from M_l fresh posterior draws; the two
/// coarse estimates use the first and second halves of the same draws.
inline LevelDelta delta_level_detail(const Vector& x, double y, int level, const MlmcConfig& cfg,
                                     const PredictiveSource& source, Rng& rng) {
  const std::size_t m = cfg.level_draws(level);
  const auto draws = source.draw(m, rng);
  const std::span<const ModelDraw> all(draws);
  const auto fine = ratio_estimate(x, y, all);
  LevelDelta out{fine.gradient, fine.log_mean_pdf, m};
  if (level > 0) {
    const Vector ga = ratio_grad(x, y, all.first(m / 2));
    const Vector gb = ratio_grad(x, y, all.last(m / 2));
    out.delta = fine.gradient - 0.5 * (ga + gb);
  }
  return out;
}

inline Vector delta_level(const Vector& x, double y, int level, const MlmcConfig& cfg,
                          const PredictiveSource& source, Rng& rng) {
  return delta_level_detail(x, y, level, cfg, source, rng).delta;
}

struct MlmcEstimate {
  Vector gradient;
  std::size_t posterior_draws = 0;
  std::vector<int> levels;
  /// Mean of -log pi_hat(y_b | x', D) over this iteration's target draws.
  double objective = 0.0;
};

/// Randomised multilevel estimate of the gradient of -E_A[log pi(y | x', D)].
inline MlmcEstimate mlmc_grad(const Vector& x, const Appd& appd, const MlmcConfig& cfg, const PredictiveSource& source,
                              Rng& rng, const LevelLaw* law_in = nullptr) {
  require_dim(x.size(), source.input_dim(), "mlmc_grad: x");
  std::optional<LevelLaw> owned;
  if (!law_in) owned.emplace(cfg);
  const LevelLaw& law = law_in ? *law_in : *owned;

  MlmcEstimate out;
  out.gradient = Vector::Zero(x.size());
  out.levels.reserve(cfg.b * cfg.r);
  for (std::size_t b = 0; b < cfg.b; ++b) {
    const double y = appd.sample(rng);
    double lp = 0.0;
    for (std::size_t r = 0; r < cfg.r; ++r) {
      const int level = law.sample(rng);
      const auto d = delta_level_detail(x, y, level, cfg, source, rng);
      out.gradient += d.delta / law.weight(level);
      out.posterior_draws += d.draws;
      out.levels.push_back(level);
      lp += d.log_mean_pdf;
    }
    out.objective -= lp / static_cast<double>(cfg.r);
  }
  out.gradient /= static_cast<double>(cfg.b * cfg.r);
  out.objective /= static_cast<double>(cfg.b);
  return out;
}

struct SampleCost {
  /// R M0 (1 - 2^-tau) / (1 - 2^-(tau-1)): the infinite geometric law.
  double geometric = 0.0;
  /// R sum_l w_l M_l under the configured law (equals `geometric` when untruncated).
  double implemented = 0.0;
};

/// Expected posterior draws per attack iteration, per target draw (B = 1).
inline SampleCost expected_samples_per_iter(const MlmcConfig& cfg) {
  cfg.validate();
  const double r = static_cast<double>(cfg.r);
  const double m0 = static_cast<double>(cfg.m0);
  SampleCost c;
  c.geometric = r * m0 * (1.0 - std::exp2(-cfg.tau)) / (1.0 - std::exp2(-(cfg.tau - 1.0)));
  if (cfg.untruncated) {
    c.implemented = c.geometric;
  } else {
    const LevelLaw law(cfg);
    double s = 0.0;
    for (int l = 0; l <= cfg.l_max; ++l) s += law.weight(l) * m0 * std::ldexp(1.0, l);
    c.implemented = r * s;
  }
  return c;
}

struct PpdAttackProblem {
  Appd appd;
  FeasibleSet feasible;
  OptimizerSettings optimizer{};
  MlmcConfig mlmc{};

  void validate() const {
    optimizer.validate();
    mlmc.validate();
  }
};

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

/// Monte-Carlo estimate of KL(pi_A || pi(. | x', D)) = E_A[log pi_A(y) - log pi(y | x', D)],
/// with each predictive density estimated from `n_draws` posterior draws.
/// The log of a sample mean is biased low, so the estimate is biased high by O(1/n_draws).
inline MeanSe estimate_kl(const Appd& appd, const Vector& x, const PredictiveSource& source, std::size_t n_y,
                          std::size_t n_draws, Rng& rng) {
  if (n_y < 2 || n_draws < 1) throw InvalidArgument("estimate_kl: need n_y >= 2 and n_draws >= 1");
  double sum = 0.0;
  double sum2 = 0.0;
  for (std::size_t i = 0; i < n_y; ++i) {
    const double y = appd.sample(rng);
    const auto draws = source.draw(n_draws, rng);
    const double v = appd.log_pdf(y) - ratio_estimate(x, y, draws).log_mean_pdf;
    sum += v;
    sum2 += v * v;
  }
  const double n = static_cast<double>(n_y);
  const double mean = sum / n;
  const double var = std::max(0.0, (sum2 - n * mean * mean) / (n - 1.0));
  return {mean, std::sqrt(var / n)};
}

/// Projected SGD on -E_A[log pi(y | x', D)] with the multilevel gradient.
inline AttackTrace run_ppd_attack(const PpdAttackProblem& prob, const PredictiveSource& source, Rng& rng) {
  prob.validate();
  require_dim(prob.feasible.dim(), source.input_dim(), "ppd attack: feasible set");
  const auto& opt = prob.optimizer;
  const LevelLaw law(prob.mlmc);

  AttackTrace trace;
  trace.has_levels = true;
  trace.initial = prob.feasible.center();
  Vector x = trace.initial;
  SmoothedObjective smooth(opt.smoothing_window);
  trace.steps.reserve(opt.iterations);

  for (std::size_t t = 1; t <= opt.iterations; ++t) {
    auto est = mlmc_grad(x, prob.appd, prob.mlmc, source, rng, &law);
    detail::check_gradient(est.gradient, t, x);
    const Vector direction = opt.sign_gradient ? detail::sign(est.gradient) : est.gradient;
    x = prob.feasible.project(x - opt.step_size(t) * direction);
    trace.steps.push_back(TraceStep{t, est.objective, x, est.posterior_draws, std::move(est.levels)});

    smooth.push(est.objective);
    if (opt.early_stop_tol > 0.0 && smooth.full() && smooth.mean() < opt.early_stop_tol) {
      trace.early_stopped = true;
      break;
    }
  }
  trace.final_x = x;
  double ce = 0.0;
  constexpr std::size_t kEvalY = 64;
  for (std::size_t i = 0; i < kEvalY; ++i) {
    const double y = prob.appd.sample(rng);
    const auto draws = source.draw(256, rng);
    ce -= ratio_estimate(x, y, draws).log_mean_pdf;
  }
  trace.final_residual = ce / static_cast<double>(kEvalY);
  return trace;
}

}  // namespace advbayes
