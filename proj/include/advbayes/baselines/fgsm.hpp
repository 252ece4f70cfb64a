#pragma once

// One-shot sign-step baseline: one gradient estimate at the clean point,
// a step of size epsilon along its negative sign, then projection.

#include "advbayes/attack/feasible_set.hpp"
#include "advbayes/attack/point.hpp"
#include "advbayes/attack/ppd.hpp"
#include "advbayes/core/diagnostics.hpp"
#include "advbayes/core/types.hpp"

namespace advbayes {

inline Vector fgsm_like(const Vector& x, const Vector& grad, double eps, Norm norm) {
  require_dim(grad.size(), x.size(), "fgsm_like: gradient");
  const FeasibleSet fs(x, eps, norm);
  if ((grad.array() == 0.0).all()) {
    diag::warn("fgsm_like: zero gradient, returning the clean point");
    return x;
  }
  return fs.project(x - eps * detail::sign(grad));
}

/// Baseline for a point attack, using the budget of one projected-SGD
/// iteration (N + M predictive draws).
inline Vector fgsm_point(const PointAttackProblem& prob, const PredictiveSource& source, Rng& rng) {
  prob.validate();
  const Vector& x = prob.feasible.center();
  const auto g = grad_J(prob, x, source, rng);
  return fgsm_like(x, g.gradient, prob.feasible.epsilon(), prob.feasible.norm());
}

/// Baseline for a distribution attack, using one multilevel gradient.
inline Vector fgsm_ppd(const PpdAttackProblem& prob, const PredictiveSource& source, Rng& rng) {
  prob.validate();
  const Vector& x = prob.feasible.center();
  const auto g = mlmc_grad(x, prob.appd, prob.mlmc, source, rng);
  return fgsm_like(x, g.gradient, prob.feasible.epsilon(), prob.feasible.norm());
}

}  // namespace advbayes
