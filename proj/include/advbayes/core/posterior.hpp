#pragma once

// Posterior sampling backends and the predictive sources consumed by the
// attacks. A predictive source hands out (likelihood, parameter draw) pairs;
// for a single model these come from one posterior, for an ensemble the
// likelihood varies per draw.

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "advbayes/core/conjugate.hpp"
#include "advbayes/core/diagnostics.hpp"
#include "advbayes/core/models.hpp"
#include "advbayes/core/random.hpp"
#include "advbayes/core/types.hpp"

namespace advbayes {

/// Exact iid sampling from a conjugate posterior.
class ExactConjugate {
 public:
  explicit ExactConjugate(NigPosterior post) : posterior_(std::move(post)) {
    const auto& p = std::get<NigPosterior>(posterior_);
    p.validate();
    factor_ = covariance_factor(p.lambda);
  }

  explicit ExactConjugate(GaussianPosterior post) : posterior_(std::move(post)) {
    const auto& p = std::get<GaussianPosterior>(posterior_);
    p.validate();
    factor_ = covariance_factor(p.lambda_n);
  }

  const std::variant<NigPosterior, GaussianPosterior>& posterior() const { return posterior_; }
  Eigen::Index dim() const { return factor_.rows(); }

  ParamDraw draw(Rng& rng) const {
    const Vector z = standard_normal_vector(dim(), rng);
    if (const auto* nig = std::get_if<NigPosterior>(&posterior_)) {
      const double s2 = inverse_gamma(nig->a, nig->b, rng);
      return ParamDraw{nig->mu + std::sqrt(s2) * (factor_ * z), s2};
    }
    const auto& g = std::get<GaussianPosterior>(posterior_);
    return ParamDraw{g.mu_n + factor_ * z, g.sigma2};
  }

 private:
  // U with U U^T = lambda^-1, i.e. U = L^-T for lambda = L L^T.
  static Matrix covariance_factor(const Matrix& lambda) {
    const auto llt = detail::checked_cholesky(lambda, "exact conjugate: precision");
    const Matrix U = llt.matrixU();
    return U.triangularView<Eigen::Upper>().solve(Matrix::Identity(lambda.rows(), lambda.cols()));
  }

  std::variant<NigPosterior, GaussianPosterior> posterior_;
  Matrix factor_;
};

/// Stored posterior draws, resampled with replacement. When the bank comes
/// from a correlated chain the resampled draws only approximate iid draws.
class SampleBank {
 public:
  explicit SampleBank(std::vector<ParamDraw> draws) : draws_(std::move(draws)) {
    if (draws_.empty()) throw InvalidArgument("sample bank: needs at least one draw");
  }

  const std::vector<ParamDraw>& draws() const { return draws_; }

  const ParamDraw& draw(Rng& rng) const {
    std::uniform_int_distribution<std::size_t> pick(0, draws_.size() - 1);
    return draws_[pick(rng)];
  }

 private:
  std::vector<ParamDraw> draws_;
};

struct McmcSettings {
  std::size_t burn_in = 4000;
  std::size_t thin = 5;
  /// Number of post-burn-in chain states kept.
  std::size_t pool_size = 2000;
  double initial_step = 0.1;
  double target_accept = 0.3;
  /// Switch to an empirical-covariance proposal halfway through burn-in.
  bool adapt_covariance = true;

  void validate() const {
    if (thin < 1) throw InvalidArgument("mcmc: thinning must be >= 1");
    if (pool_size < 1) throw InvalidArgument("mcmc: pool size must be >= 1");
    if (!(initial_step > 0.0)) throw InvalidArgument("mcmc: initial step must be positive");
    if (!(target_accept > 0.0 && target_accept < 1.0)) throw InvalidArgument("mcmc: target acceptance in (0,1)");
  }
};

/// Adaptive random-walk Metropolis chain over a flat parameter vector.
/// The chain runs once at construction; draws are states of the retained,
/// thinned chain picked uniformly at random.
class McmcChain {
 public:
  using LogDensity = std::function<double(const Vector&)>;
  using StateMap = std::function<ParamDraw(const Vector&)>;

  McmcChain(LogDensity log_posterior, Vector initial, McmcSettings settings, Rng& rng,
            StateMap to_draw = identity_map())
      : settings_(settings), to_draw_(std::move(to_draw)) {
    settings_.validate();
    run(log_posterior, std::move(initial), rng);
  }

  static StateMap identity_map() {
    return [](const Vector& s) { return ParamDraw{s, 1.0}; };
  }

  const McmcSettings& settings() const { return settings_; }
  const std::vector<ParamDraw>& pool() const { return pool_; }
  /// Acceptance rate over the post-adaptation sampling phase.
  double acceptance_rate() const { return acceptance_; }
  double step_size() const { return step_; }

  const ParamDraw& draw(Rng& rng) const {
    std::uniform_int_distribution<std::size_t> pick(0, pool_.size() - 1);
    return pool_[pick(rng)];
  }

 private:
  void run(const LogDensity& logp, Vector theta, Rng& rng) {
    const Eigen::Index d = theta.size();
    double lp = logp(theta);
    if (!std::isfinite(lp)) throw InvalidArgument("mcmc: log posterior not finite at initial state");

    Matrix chol = Matrix::Identity(d, d);
    double log_step = std::log(settings_.initial_step);
    std::vector<Vector> history;

    auto step = [&](bool adapt, std::size_t iter) {
      const Vector proposal = theta + std::exp(log_step) * (chol * standard_normal_vector(d, rng));
      const double lq = logp(proposal);
      const bool accept = std::isfinite(lq) && std::log(uniform01(rng)) < lq - lp;
      if (accept) {
        theta = proposal;
        lp = lq;
      }
      if (adapt) {
        const double rate = std::pow(static_cast<double>(iter) + 1.0, -0.6);
        log_step += rate * ((accept ? 1.0 : 0.0) - settings_.target_accept);
      }
      return accept;
    };

    const std::size_t switch_at = settings_.burn_in / 2;
    for (std::size_t i = 0; i < settings_.burn_in; ++i) {
      step(true, i);
      if (settings_.adapt_covariance && d > 1 && i >= settings_.burn_in / 4 && i < switch_at) {
        history.push_back(theta);
      }
      if (settings_.adapt_covariance && d > 1 && i + 1 == switch_at && history.size() > static_cast<std::size_t>(2 * d)) {
        Matrix cov = empirical_covariance(history);
        cov += 1e-8 * (cov.diagonal().mean() + 1e-12) * Matrix::Identity(d, d);
        Eigen::LLT<Matrix> llt(cov);
        if (llt.info() == Eigen::Success) {
          chol = llt.matrixL();
          log_step = std::log(2.38 / std::sqrt(static_cast<double>(d)));
        }
      }
    }

    step_ = std::exp(log_step);
    std::size_t accepted = 0;
    std::size_t total = 0;
    pool_.reserve(settings_.pool_size);
    while (pool_.size() < settings_.pool_size) {
      for (std::size_t t = 0; t < settings_.thin; ++t) {
        accepted += step(false, 0) ? 1 : 0;
        ++total;
      }
      pool_.push_back(to_draw_(theta));
    }
    acceptance_ = static_cast<double>(accepted) / static_cast<double>(total);
    if (acceptance_ < 0.05 || acceptance_ > 0.95) {
      diag::warn("mcmc: acceptance rate " + std::to_string(acceptance_) +
                 " outside [0.05, 0.95] after adaptation");
    }
  }

  static Matrix empirical_covariance(const std::vector<Vector>& xs) {
    const Eigen::Index d = xs.front().size();
    Vector mean = Vector::Zero(d);
    for (const auto& x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    Matrix cov = Matrix::Zero(d, d);
    for (const auto& x : xs) cov += (x - mean) * (x - mean).transpose();
    return cov / static_cast<double>(xs.size() - 1);
  }

  McmcSettings settings_;
  StateMap to_draw_;
  std::vector<ParamDraw> pool_;
  double acceptance_ = 0.0;
  double step_ = 0.0;
};

using PosteriorBackend = std::variant<ExactConjugate, SampleBank, McmcChain>;

inline std::vector<ParamDraw> draw_params(const PosteriorBackend& backend, std::size_t count, Rng& rng) {
  if (count < 1) throw InvalidArgument("draw_params: count must be >= 1");
  std::vector<ParamDraw> out;
  out.reserve(count);
  std::visit([&](const auto& b) {
    for (std::size_t i = 0; i < count; ++i) out.push_back(b.draw(rng));
  }, backend);
  return out;
}

inline Eigen::Index backend_param_dim(const PosteriorBackend& backend) {
  return std::visit([](const auto& b) -> Eigen::Index {
    using T = std::decay_t<decltype(b)>;
    if constexpr (std::is_same_v<T, ExactConjugate>) {
      return b.dim();
    } else if constexpr (std::is_same_v<T, SampleBank>) {
      return b.draws().front().beta.size();
    } else {
      return b.pool().front().beta.size();
    }
  }, backend);
}

/// Gaussian prior on the flattened weights, Gamma(shape, rate) prior on the
/// noise variance when the likelihood has one.
struct WeightPrior {
  double sd = 1.0;
  double phi_shape = 2.0;
  double phi_rate = 2.0;
};

/// Chain state layout for a likelihood: beta followed by log(phi) when the
/// likelihood has a dispersion parameter.
inline McmcChain::StateMap state_map_for(const Likelihood& model) {
  const Eigen::Index k = model.param_dim();
  if (!model.has_dispersion()) return McmcChain::identity_map();
  return [k](const Vector& s) { return ParamDraw{s.head(k), std::exp(s[k])}; };
}

inline Eigen::Index state_dim_for(const Likelihood& model) {
  return model.param_dim() + (model.has_dispersion() ? 1 : 0);
}

/// Unnormalised log posterior over the chain state for iid data.
inline McmcChain::LogDensity make_log_posterior(std::shared_ptr<const Likelihood> model, Dataset data,
                                                WeightPrior prior) {
  require_dim(static_cast<Eigen::Index>(data.cols()), model->input_dim(), "log posterior: covariates");
  auto to_draw = state_map_for(*model);
  return [model = std::move(model), data = std::move(data), prior, to_draw](const Vector& s) {
    const ParamDraw g = to_draw(s);
    double lp = -0.5 * g.beta.squaredNorm() / (prior.sd * prior.sd);
    if (model->has_dispersion()) {
      const double log_phi = s[s.size() - 1];
      // Gamma(shape, rate) density on phi plus the log-Jacobian of phi = exp(log_phi)
      lp += prior.phi_shape * log_phi - prior.phi_rate * g.phi;
    }
    for (Eigen::Index i = 0; i < data.X.rows(); ++i) {
      lp += model->loglik(data.X.row(i).transpose(), data.y[i], g);
    }
    return lp;
  };
}

/// One likelihood together with one parameter draw.
struct ModelDraw {
  const Likelihood* model;
  ParamDraw params;
};

/// Anything that can produce posterior (likelihood, parameter) draws.
class PredictiveSource {
 public:
  virtual ~PredictiveSource() = default;
  virtual Eigen::Index input_dim() const = 0;
  virtual std::vector<ModelDraw> draw(std::size_t count, Rng& rng) const = 0;
};

/// A likelihood paired with a posterior backend.
class BayesianModel final : public PredictiveSource {
 public:
  BayesianModel(std::shared_ptr<const Likelihood> model, PosteriorBackend backend)
      : model_(std::move(model)), backend_(std::move(backend)) {
    if (!model_) throw InvalidArgument("bayesian model: null likelihood");
    require_dim(backend_param_dim(backend_), model_->param_dim(), "bayesian model: posterior dimension");
  }

  const Likelihood& likelihood() const { return *model_; }
  std::shared_ptr<const Likelihood> likelihood_ptr() const { return model_; }
  const PosteriorBackend& backend() const { return backend_; }
  Eigen::Index input_dim() const override { return model_->input_dim(); }

  std::vector<ModelDraw> draw(std::size_t count, Rng& rng) const override {
    auto params = draw_params(backend_, count, rng);
    std::vector<ModelDraw> out;
    out.reserve(count);
    for (auto& p : params) out.push_back(ModelDraw{model_.get(), std::move(p)});
    return out;
  }

 private:
  std::shared_ptr<const Likelihood> model_;
  PosteriorBackend backend_;
};

/// Draws y from the likelihood at x for one parameter draw.
inline double sample_predictive(const Likelihood& model, const Vector& x, const ParamDraw& g, Rng& rng) {
  return model.sample(x, g, rng);
}

}  // namespace advbayes
