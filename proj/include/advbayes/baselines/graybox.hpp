#pragma once

// Gray-box attacks: the attacker replaces the defender's posterior
// predictive with a prior-weighted mixture over candidate models.

#include <cmath>
#include <cstddef>
#include <memory>
#include <utility>
#include <vector>

#include "advbayes/attack/point.hpp"
#include "advbayes/attack/ppd.hpp"
#include "advbayes/core/posterior.hpp"
#include "advbayes/core/random.hpp"
#include "advbayes/core/types.hpp"

namespace advbayes {

class ModelEnsemble final : public PredictiveSource {
 public:
  ModelEnsemble(std::vector<std::shared_ptr<const BayesianModel>> members, Vector weights)
      : members_(std::move(members)), weights_(std::move(weights)) {
    if (members_.empty()) throw InvalidArgument("ensemble: needs at least one member");
    require_dim(weights_.size(), static_cast<Eigen::Index>(members_.size()), "ensemble: weights");
    if ((weights_.array() < 0.0).any() || !weights_.allFinite() || std::abs(weights_.sum() - 1.0) > 1e-9) {
      throw InvalidArgument("ensemble: weights must be nonnegative and sum to 1");
    }
    for (const auto& m : members_) {
      if (!m) throw InvalidArgument("ensemble: null member");
      require_dim(m->input_dim(), members_.front()->input_dim(), "ensemble: member input dimension");
    }
  }

  std::size_t size() const { return members_.size(); }
  const BayesianModel& member(std::size_t i) const { return *members_.at(i); }
  const Vector& weights() const { return weights_; }
  Eigen::Index input_dim() const override { return members_.front()->input_dim(); }

  std::size_t pick(Rng& rng) const { return categorical(weights_, rng); }

  std::vector<ModelDraw> draw(std::size_t count, Rng& rng) const override {
    std::vector<ModelDraw> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
      const auto& m = *members_[pick(rng)];
      out.push_back(m.draw(1, rng).front());
    }
    return out;
  }

 private:
  std::vector<std::shared_ptr<const BayesianModel>> members_;
  Vector weights_;
};

struct BmaDraw {
  std::size_t index = 0;
  ParamDraw params;
  double y = 0.0;
};

/// One draw from the model-averaged predictive at x: a member by weight,
/// a parameter from its posterior, then y from its likelihood.
inline BmaDraw bma_ppd_draw(const ModelEnsemble& ensemble, const Vector& x, Rng& rng) {
  BmaDraw out;
  out.index = ensemble.pick(rng);
  const auto& m = ensemble.member(out.index);
  out.params = m.draw(1, rng).front().params;
  out.y = m.likelihood().sample(x, out.params, rng);
  return out;
}

/// Point attack computed against the ensemble; evaluate the returned
/// iterate against the defender separately.
inline AttackTrace graybox_attack(const PointAttackProblem& prob, const ModelEnsemble& ensemble, Rng& rng) {
  return run_point_attack(prob, ensemble, rng);
}

inline AttackTrace graybox_attack(const PpdAttackProblem& prob, const ModelEnsemble& ensemble, Rng& rng) {
  return run_ppd_attack(prob, ensemble, rng);
}

}  // namespace advbayes
