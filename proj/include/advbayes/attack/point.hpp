#pragma once

// Attacks on posterior-predictive expectations mu(x') = E[g(x', y) | x', D].
// The objective J(x') = |mu(x') - G*|^2 has gradient 2 (mu - G*)^T grad mu,
// a product of two expectations; estimating each factor from its own
// independent batch gives an unbiased gradient.

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "advbayes/attack/feasible_set.hpp"
#include "advbayes/attack/trace.hpp"
#include "advbayes/core/models.hpp"
#include "advbayes/core/posterior.hpp"
#include "advbayes/core/random.hpp"
#include "advbayes/core/types.hpp"

namespace advbayes {

/// g(x, y) with its derivatives. `jacobian_x` may be empty when g does not
/// depend on x; `derivative_y` is only needed by the reparameterised
/// estimator.
struct Functional {
  Eigen::Index output_dim = 1;
  std::function<Vector(const Vector&, double)> value;
  std::function<Matrix(const Vector&, double)> jacobian_x;
  std::function<Vector(const Vector&, double)> derivative_y;
};

namespace functionals {

/// g(x, y) = y: the predictive mean.
inline Functional response() {
  Functional f;
  f.output_dim = 1;
  f.value = [](const Vector&, double y) { return Vector::Constant(1, y); };
  f.derivative_y = [](const Vector&, double) { return Vector::Ones(1); };
  return f;
}

/// g(x, y) = one-hot(y) over `classes` labels: predictive class probabilities.
inline Functional one_hot(std::size_t classes) {
  Functional f;
  f.output_dim = static_cast<Eigen::Index>(classes);
  f.value = [classes](const Vector&, double y) {
    Vector v = Vector::Zero(static_cast<Eigen::Index>(classes));
    const auto k = static_cast<Eigen::Index>(y);
    if (k < 0 || k >= v.size()) throw InvalidArgument("one_hot: label out of range");
    v[k] = 1.0;
    return v;
  };
  return f;
}

/// g(x, y) = x.
inline Functional covariates(Eigen::Index p) {
  Functional f;
  f.output_dim = p;
  f.value = [](const Vector& x, double) { return x; };
  f.jacobian_x = [p](const Vector&, double) { return Matrix(Matrix::Identity(p, p)); };
  f.derivative_y = [p](const Vector&, double) { return Vector(Vector::Zero(p)); };
  return f;
}

inline Functional constant(Vector c) {
  Functional f;
  f.output_dim = c.size();
  const Eigen::Index d = c.size();
  f.value = [c = std::move(c)](const Vector&, double) { return c; };
  f.derivative_y = [d](const Vector&, double) { return Vector(Vector::Zero(d)); };
  return f;
}

}  // namespace functionals

/// Whether the two gradient factors get their own batches. `Shared` reuses
/// one batch for both and is biased; it exists as a negative control.
enum class BatchMode { Independent, Shared };

struct PointAttackProblem {
  Functional g;
  Vector target;
  FeasibleSet feasible;
  OptimizerSettings optimizer{};
  std::size_t n_mu = 64;
  std::size_t n_grad = 64;
  BatchMode batch_mode = BatchMode::Independent;

  void validate() const {
    if (!g.value) throw InvalidArgument("point attack: functional has no value");
    if (n_mu < 1 || n_grad < 1) throw InvalidArgument("point attack: N and M must be >= 1");
    require_dim(target.size(), g.output_dim, "point attack: target");
    optimizer.validate();
  }
};

/// Draws of (likelihood, gamma) with one response sampled at x for each.
struct PredictiveBatch {
  std::vector<ModelDraw> draws;
  std::vector<double> ys;

  std::size_t size() const { return ys.size(); }
};

inline PredictiveBatch sample_predictive_batch(const PredictiveSource& source, const Vector& x,
                                               std::size_t n, Rng& rng) {
  PredictiveBatch b;
  b.draws = source.draw(n, rng);
  b.ys.reserve(n);
  for (const auto& d : b.draws) b.ys.push_back(d.model->sample(x, d.params, rng));
  return b;
}

namespace detail {

inline Vector mean_functional(const Functional& g, const Vector& x, const PredictiveBatch& b) {
  Vector acc = Vector::Zero(g.output_dim);
  for (double y : b.ys) acc += g.value(x, y);
  return acc / static_cast<double>(b.size());
}

// (1/M) sum [ d g / d x + g(x, y) score_x(y)^T ]
inline Matrix score_gradient(const Functional& g, const Vector& x, const PredictiveBatch& b) {
  Matrix acc = Matrix::Zero(g.output_dim, x.size());
  for (std::size_t i = 0; i < b.size(); ++i) {
    const auto& d = b.draws[i];
    const double y = b.ys[i];
    if (g.jacobian_x) acc += g.jacobian_x(x, y);
    acc += g.value(x, y) * d.model->score_x(x, y, d.params).transpose();
  }
  return acc / static_cast<double>(b.size());
}

// (1/M) sum [ d g / d x + d g / d y * beta^T ] with y = beta^T x + sqrt(phi) z
inline Matrix reparam_gradient(const Functional& g, const Vector& x, const std::vector<ModelDraw>& draws,
                               Rng& rng) {
  if (!g.derivative_y) {
    throw InvalidArgument("reparameterised gradient: functional has no y-derivative");
  }
  Matrix acc = Matrix::Zero(g.output_dim, x.size());
  for (const auto& d : draws) {
    if (d.model->family() != ModelFamily::GaussianLinear) {
      throw UnsupportedModel(std::string("reparameterised gradient requires gaussian_linear, got ") +
                             to_string(d.model->family()));
    }
    const Vector& beta = d.params.beta;
    const double y = beta.dot(x) + std::sqrt(d.params.phi) * standard_normal(rng);
    if (g.jacobian_x) acc += g.jacobian_x(x, y);
    acc += g.derivative_y(x, y) * beta.transpose();
  }
  return acc / static_cast<double>(draws.size());
}

}  // namespace detail

/// Unbiased estimate of mu(x') from N predictive draws.
inline Vector estimate_mu(const PointAttackProblem& prob, const Vector& x, const PredictiveSource& source,
                          Rng& rng) {
  const auto batch = sample_predictive_batch(source, x, prob.n_mu, rng);
  return detail::mean_functional(prob.g, x, batch);
}

/// Score-function estimate of the Jacobian of mu at x' (output_dim x p)
/// from M fresh draws.
inline Matrix estimate_grad_mu(const PointAttackProblem& prob, const Vector& x, const PredictiveSource& source,
                               Rng& rng) {
  const auto batch = sample_predictive_batch(source, x, prob.n_grad, rng);
  return detail::score_gradient(prob.g, x, batch);
}

/// Pathwise estimate of the Jacobian of mu for Gaussian linear likelihoods.
inline Matrix estimate_grad_mu_reparam(const PointAttackProblem& prob, const Vector& x,
                                       const PredictiveSource& source, Rng& rng) {
  const auto draws = source.draw(prob.n_grad, rng);
  return detail::reparam_gradient(prob.g, x, draws, rng);
}

struct PointGradient {
  Vector gradient;
  Vector mu;
  /// |mu_hat - G*|^2
  double objective = 0.0;
  std::size_t posterior_draws = 0;
};

enum class GradientEstimator { ScoreFunction, Reparameterized };

inline PointGradient grad_J(const PointAttackProblem& prob, const Vector& x, const PredictiveSource& source,
                            Rng& rng, GradientEstimator estimator = GradientEstimator::ScoreFunction) {
  PointGradient out;
  const auto mu_batch = sample_predictive_batch(source, x, prob.n_mu, rng);
  out.mu = detail::mean_functional(prob.g, x, mu_batch);
  out.posterior_draws = prob.n_mu;

  Matrix jac;
  if (estimator == GradientEstimator::Reparameterized) {
    jac = estimate_grad_mu_reparam(prob, x, source, rng);
    out.posterior_draws += prob.n_grad;
  } else if (prob.batch_mode == BatchMode::Shared) {
    jac = detail::score_gradient(prob.g, x, mu_batch);
  } else {
    jac = estimate_grad_mu(prob, x, source, rng);
    out.posterior_draws += prob.n_grad;
  }
  const Vector residual = out.mu - prob.target;
  out.objective = residual.squaredNorm();
  out.gradient = 2.0 * jac.transpose() * residual;
  return out;
}

namespace detail {

inline AttackTrace run_point_attack_impl(const PointAttackProblem& prob, const PredictiveSource& source, Rng& rng,
                                         GradientEstimator estimator) {
  prob.validate();
  require_dim(prob.feasible.dim(), source.input_dim(), "point attack: feasible set");
  const auto& opt = prob.optimizer;

  AttackTrace trace;
  trace.initial = prob.feasible.center();
  Vector x = trace.initial;
  SmoothedObjective smooth(opt.smoothing_window);
  trace.steps.reserve(opt.iterations);

  for (std::size_t t = 1; t <= opt.iterations; ++t) {
    const PointGradient pg = grad_J(prob, x, source, rng, estimator);
    check_gradient(pg.gradient, t, x);
    const Vector direction = opt.sign_gradient ? sign(pg.gradient) : pg.gradient;
    x = prob.feasible.project(x - opt.step_size(t) * direction);
    trace.steps.push_back(TraceStep{t, pg.objective, x, pg.posterior_draws, {}});

    smooth.push(pg.objective);
    if (opt.early_stop_tol > 0.0 && smooth.full() && smooth.mean() < opt.early_stop_tol) {
      trace.early_stopped = true;
      break;
    }
  }
  trace.final_x = x;
  trace.final_residual = (estimate_mu(prob, x, source, rng) - prob.target).norm();
  return trace;
}

}  // namespace detail

/// Projected SGD on J with the score-function gradient.
inline AttackTrace run_point_attack(const PointAttackProblem& prob, const PredictiveSource& source, Rng& rng) {
  return detail::run_point_attack_impl(prob, source, rng, GradientEstimator::ScoreFunction);
}

/// Projected SGD on J with the pathwise gradient y = beta^T x' + sqrt(phi) z.
/// Only defined for Gaussian linear likelihoods.
inline AttackTrace run_point_attack_reparam(const PointAttackProblem& prob, const PredictiveSource& source,
                                            Rng& rng) {
  return detail::run_point_attack_impl(prob, source, rng, GradientEstimator::Reparameterized);
}

/// Monte-Carlo estimate of J(x') with `draws` predictive samples.
inline double evaluate_point_objective(const PointAttackProblem& prob, const PredictiveSource& source,
                                       const Vector& x, std::size_t draws, Rng& rng) {
  const auto batch = sample_predictive_batch(source, x, draws, rng);
  return (detail::mean_functional(prob.g, x, batch) - prob.target).squaredNorm();
}

}  // namespace advbayes
