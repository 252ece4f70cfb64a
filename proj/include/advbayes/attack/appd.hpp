#pragma once

#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <variant>

#include <boost/math/special_functions/digamma.hpp>

#include "advbayes/core/conjugate.hpp"
#include "advbayes/core/random.hpp"
#include "advbayes/core/types.hpp"

namespace advbayes {

/// Target distribution for a distribution attack.
class Appd {
 public:
  struct Normal {
    double mean = 0.0;
    double variance = 1.0;
  };
  struct Categorical {
    Vector probs;
  };
  /// `scale` is the squared scale, as in TPredictive.
  struct StudentT {
    double df = 1.0;
    double loc = 0.0;
    double scale = 1.0;
  };

  Appd(Normal n) : params_(n) { validate(); }
  Appd(Categorical c) : params_(std::move(c)) { validate(); }
  Appd(StudentT t) : params_(t) { validate(); }

  static Appd normal(double mean, double variance) { return Appd(Normal{mean, variance}); }
  static Appd categorical(Vector probs) { return Appd(Categorical{std::move(probs)}); }
  static Appd student_t(double df, double loc, double scale) { return Appd(StudentT{df, loc, scale}); }

  const std::variant<Normal, Categorical, StudentT>& params() const { return params_; }
  const char* family() const {
    switch (params_.index()) {
      case 0: return "normal";
      case 1: return "categorical";
      default: return "student_t";
    }
  }

  double sample(Rng& rng) const {
    if (const auto* n = std::get_if<Normal>(&params_)) {
      return n->mean + std::sqrt(n->variance) * standard_normal(rng);
    }
    if (const auto* c = std::get_if<Categorical>(&params_)) {
      return static_cast<double>(advbayes::categorical(c->probs, rng));
    }
    const auto& t = std::get<StudentT>(params_);
    std::student_t_distribution<double> dist(t.df);
    return t.loc + std::sqrt(t.scale) * dist(rng);
  }

  double log_pdf(double y) const {
    if (const auto* n = std::get_if<Normal>(&params_)) {
      const double d = y - n->mean;
      return -0.5 * std::log(2.0 * std::numbers::pi * n->variance) - 0.5 * d * d / n->variance;
    }
    if (const auto* c = std::get_if<Categorical>(&params_)) {
      const auto k = static_cast<Eigen::Index>(y);
      if (y != std::floor(y) || k < 0 || k >= c->probs.size()) return -std::numeric_limits<double>::infinity();
      return std::log(c->probs[k]);
    }
    const auto& t = std::get<StudentT>(params_);
    return TPredictive{t.df, t.loc, t.scale}.log_pdf(y);
  }

  /// Differential (or Shannon) entropy.
  double entropy() const {
    if (const auto* n = std::get_if<Normal>(&params_)) {
      return 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e * n->variance);
    }
    if (const auto* c = std::get_if<Categorical>(&params_)) {
      double h = 0.0;
      for (Eigen::Index k = 0; k < c->probs.size(); ++k) {
        if (c->probs[k] > 0.0) h -= c->probs[k] * std::log(c->probs[k]);
      }
      return h;
    }
    const auto& t = std::get<StudentT>(params_);
    using boost::math::digamma;
    const double v = t.df;
    const double log_beta = std::lgamma(0.5 * v) + std::lgamma(0.5) - std::lgamma(0.5 * (v + 1.0));
    return 0.5 * (v + 1.0) * (digamma(0.5 * (v + 1.0)) - digamma(0.5 * v)) + 0.5 * std::log(v) + log_beta +
           0.5 * std::log(t.scale);
  }

 private:
  void validate() const {
    if (const auto* n = std::get_if<Normal>(&params_)) {
      if (!(n->variance > 0.0) || !std::isfinite(n->mean)) throw InvalidArgument("appd: normal variance must be > 0");
    } else if (const auto* c = std::get_if<Categorical>(&params_)) {
      if (c->probs.size() < 1 || (c->probs.array() < 0.0).any() || std::abs(c->probs.sum() - 1.0) > 1e-9) {
        throw InvalidArgument("appd: categorical probabilities must be nonnegative and sum to 1");
      }
    } else {
      const auto& t = std::get<StudentT>(params_);
      if (!(t.df > 0.0) || !(t.scale > 0.0)) throw InvalidArgument("appd: student-t needs df > 0 and scale > 0");
    }
  }

  std::variant<Normal, Categorical, StudentT> params_;
};

}  // namespace advbayes
