#pragma once

// Likelihoods pi(y | x, gamma) with closed-form gradients in the covariates x.
// Class labels are carried as doubles holding integral values.

#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <string>

#include <Eigen/Core>

#include "advbayes/core/random.hpp"
#include "advbayes/core/types.hpp"

namespace advbayes {

enum class ModelFamily { GaussianLinear, BernoulliLogit, CategoricalSoftmax, SmallBnn };

inline const char* to_string(ModelFamily f) {
  switch (f) {
    case ModelFamily::GaussianLinear: return "gaussian_linear";
    case ModelFamily::BernoulliLogit: return "bernoulli_logit";
    case ModelFamily::CategoricalSoftmax: return "categorical_softmax";
    case ModelFamily::SmallBnn: return "small_bnn";
  }
  return "unknown";
}

struct LogLikScore {
  double loglik;
  Vector score;
};

/// Likelihood of a response given covariates and one parameter draw.
/// Implementations are immutable and safe to share across threads.
class Likelihood {
 public:
  virtual ~Likelihood() = default;

  virtual ModelFamily family() const = 0;
  virtual Eigen::Index input_dim() const = 0;
  /// Length of ParamDraw::beta.
  virtual Eigen::Index param_dim() const = 0;
  /// True when phi is a free parameter (Gaussian noise variance).
  virtual bool has_dispersion() const = 0;
  /// Number of classes for categorical responses, nullopt for regression.
  virtual std::optional<std::size_t> num_classes() const { return std::nullopt; }

  virtual double loglik(const Vector& x, double y, const ParamDraw& g) const = 0;
  /// Gradient of loglik with respect to x.
  virtual Vector score_x(const Vector& x, double y, const ParamDraw& g) const = 0;
  virtual LogLikScore loglik_and_score(const Vector& x, double y, const ParamDraw& g) const {
    return {loglik(x, y, g), score_x(x, y, g)};
  }
  virtual double sample(const Vector& x, const ParamDraw& g, Rng& rng) const = 0;

  /// Class probabilities for categorical models.
  virtual Vector class_probabilities(const Vector& /*x*/, const ParamDraw& /*g*/) const {
    throw UnsupportedModel(std::string("class_probabilities: ") + to_string(family()) +
                           " is not a classifier");
  }

  /// Gradient of the likelihood density, exp(loglik) * score.
  Vector pdf_grad_x(const Vector& x, double y, const ParamDraw& g) const {
    auto ls = loglik_and_score(x, y, g);
    return std::exp(ls.loglik) * ls.score;
  }

 protected:
  void check_x(const Vector& x) const { require_dim(x.size(), input_dim(), "likelihood: x"); }
  void check_params(const ParamDraw& g) const {
    require_dim(g.beta.size(), param_dim(), "likelihood: beta");
  }
  std::size_t label(double y, std::size_t classes) const {
    if (!(y >= 0.0) || y != std::floor(y) || y >= static_cast<double>(classes)) {
      throw InvalidArgument("likelihood: label " + std::to_string(y) + " out of range for " +
                            std::to_string(classes) + " classes");
    }
    return static_cast<std::size_t>(y);
  }
};

namespace detail {

inline double log_sum_exp(const Vector& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

inline Vector softmax(const Vector& logits) {
  Vector p = (logits.array() - logits.maxCoeff()).exp();
  return p / p.sum();
}

inline double log_sigmoid(double t) { return t >= 0.0 ? -std::log1p(std::exp(-t)) : t - std::log1p(std::exp(t)); }

inline double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

}  // namespace detail

/// y | x, gamma ~ Normal(beta^T x, phi).
class GaussianLinear final : public Likelihood {
 public:
  explicit GaussianLinear(Eigen::Index p) : p_(p) {}

  ModelFamily family() const override { return ModelFamily::GaussianLinear; }
  Eigen::Index input_dim() const override { return p_; }
  Eigen::Index param_dim() const override { return p_; }
  bool has_dispersion() const override { return true; }

  double loglik(const Vector& x, double y, const ParamDraw& g) const override {
    check_x(x);
    check_params(g);
    const double r = y - g.beta.dot(x);
    return -0.5 * std::log(2.0 * std::numbers::pi * g.phi) - 0.5 * r * r / g.phi;
  }

  Vector score_x(const Vector& x, double y, const ParamDraw& g) const override {
    check_x(x);
    check_params(g);
    return (y - g.beta.dot(x)) / g.phi * g.beta;
  }

  LogLikScore loglik_and_score(const Vector& x, double y, const ParamDraw& g) const override {
    check_x(x);
    check_params(g);
    const double r = y - g.beta.dot(x);
    return {-0.5 * std::log(2.0 * std::numbers::pi * g.phi) - 0.5 * r * r / g.phi, r / g.phi * g.beta};
  }

  double sample(const Vector& x, const ParamDraw& g, Rng& rng) const override {
    check_x(x);
    check_params(g);
    return g.beta.dot(x) + std::sqrt(g.phi) * standard_normal(rng);
  }

 private:
  Eigen::Index p_;
};

/// Binary logistic regression; beta = (w, [intercept]).
class BernoulliLogit final : public Likelihood {
 public:
  BernoulliLogit(Eigen::Index p, bool intercept) : p_(p), intercept_(intercept) {}

  ModelFamily family() const override { return ModelFamily::BernoulliLogit; }
  Eigen::Index input_dim() const override { return p_; }
  Eigen::Index param_dim() const override { return p_ + (intercept_ ? 1 : 0); }
  bool has_dispersion() const override { return false; }
  std::optional<std::size_t> num_classes() const override { return 2; }

  double loglik(const Vector& x, double y, const ParamDraw& g) const override {
    const double t = linear(x, g);
    return label(y, 2) == 1 ? detail::log_sigmoid(t) : detail::log_sigmoid(-t);
  }

  Vector score_x(const Vector& x, double y, const ParamDraw& g) const override {
    const double t = linear(x, g);
    return (static_cast<double>(label(y, 2)) - detail::sigmoid(t)) * g.beta.head(p_);
  }

  double sample(const Vector& x, const ParamDraw& g, Rng& rng) const override {
    return uniform01(rng) < detail::sigmoid(linear(x, g)) ? 1.0 : 0.0;
  }

  Vector class_probabilities(const Vector& x, const ParamDraw& g) const override {
    const double q = detail::sigmoid(linear(x, g));
    Vector p(2);
    p << 1.0 - q, q;
    return p;
  }

 private:
  double linear(const Vector& x, const ParamDraw& g) const {
    check_x(x);
    check_params(g);
    return g.beta.head(p_).dot(x) + (intercept_ ? g.beta[p_] : 0.0);
  }

  Eigen::Index p_;
  bool intercept_;
};

/// Multinomial logistic regression. beta holds the K x (p [+1]) weight
/// matrix row by row; the optional last column is the per-class intercept.
class CategoricalSoftmax final : public Likelihood {
 public:
  CategoricalSoftmax(Eigen::Index p, std::size_t classes, bool intercept)
      : p_(p), k_(static_cast<Eigen::Index>(classes)), intercept_(intercept) {
    if (classes < 2) throw InvalidArgument("categorical_softmax: need at least 2 classes");
  }

  ModelFamily family() const override { return ModelFamily::CategoricalSoftmax; }
  Eigen::Index input_dim() const override { return p_; }
  Eigen::Index param_dim() const override { return k_ * cols(); }
  bool has_dispersion() const override { return false; }
  std::optional<std::size_t> num_classes() const override { return static_cast<std::size_t>(k_); }

  double loglik(const Vector& x, double y, const ParamDraw& g) const override {
    const Vector z = logits(x, g);
    return z[static_cast<Eigen::Index>(label(y, k_))] - detail::log_sum_exp(z);
  }

  Vector score_x(const Vector& x, double y, const ParamDraw& g) const override {
    return loglik_and_score(x, y, g).score;
  }

  LogLikScore loglik_and_score(const Vector& x, double y, const ParamDraw& g) const override {
    const auto c = static_cast<Eigen::Index>(label(y, k_));
    const Vector z = logits(x, g);
    const Vector p = detail::softmax(z);
    const auto W = weights(g);
    Vector s = W.row(c).head(p_).transpose() - W.leftCols(p_).transpose() * p;
    return {z[c] - detail::log_sum_exp(z), std::move(s)};
  }

  double sample(const Vector& x, const ParamDraw& g, Rng& rng) const override {
    return static_cast<double>(categorical(detail::softmax(logits(x, g)), rng));
  }

  Vector class_probabilities(const Vector& x, const ParamDraw& g) const override {
    return detail::softmax(logits(x, g));
  }

 private:
  Eigen::Index cols() const { return p_ + (intercept_ ? 1 : 0); }

  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> weights(
      const ParamDraw& g) const {
    return {g.beta.data(), k_, cols()};
  }

  Vector logits(const Vector& x, const ParamDraw& g) const {
    check_x(x);
    check_params(g);
    const auto W = weights(g);
    Vector z = W.leftCols(p_) * x;
    if (intercept_) z += W.col(p_);
    return z;
  }

  Eigen::Index p_;
  Eigen::Index k_;
  bool intercept_;
};

/// One-hidden-layer tanh network. Parameter layout inside beta:
/// W1 (H x p, row-major), b1 (H), W2 (K x H, row-major), b2 (K).
/// Regression heads use K = 1 and a Gaussian likelihood with variance phi;
/// classification heads use a softmax over K outputs.
class SmallBnn final : public Likelihood {
 public:
  enum class Head { Regression, Classification };

  SmallBnn(Eigen::Index p, Eigen::Index hidden, Head head, std::size_t classes = 1)
      : p_(p), h_(hidden), head_(head), k_(head == Head::Regression ? 1 : static_cast<Eigen::Index>(classes)) {
    if (hidden < 1) throw InvalidArgument("small_bnn: need at least one hidden unit");
    if (head == Head::Classification && classes < 2) {
      throw InvalidArgument("small_bnn: classification head needs at least 2 classes");
    }
  }

  ModelFamily family() const override { return ModelFamily::SmallBnn; }
  Eigen::Index input_dim() const override { return p_; }
  Eigen::Index param_dim() const override { return h_ * p_ + h_ + k_ * h_ + k_; }
  bool has_dispersion() const override { return head_ == Head::Regression; }
  std::optional<std::size_t> num_classes() const override {
    if (head_ == Head::Regression) return std::nullopt;
    return static_cast<std::size_t>(k_);
  }
  Eigen::Index hidden_units() const { return h_; }
  Head head() const { return head_; }

  double loglik(const Vector& x, double y, const ParamDraw& g) const override {
    return loglik_and_score(x, y, g).loglik;
  }

  Vector score_x(const Vector& x, double y, const ParamDraw& g) const override {
    return loglik_and_score(x, y, g).score;
  }

  LogLikScore loglik_and_score(const Vector& x, double y, const ParamDraw& g) const override {
    const Forward f = forward(x, g);
    // d out_k / d x = W2_k diag(1 - h^2) W1
    const Matrix jac = f.W2 * (1.0 - f.h.array().square()).matrix().asDiagonal() * f.W1;
    if (head_ == Head::Regression) {
      const double r = y - f.out[0];
      return {-0.5 * std::log(2.0 * std::numbers::pi * g.phi) - 0.5 * r * r / g.phi,
              r / g.phi * jac.row(0).transpose()};
    }
    const auto c = static_cast<Eigen::Index>(label(y, static_cast<std::size_t>(k_)));
    const Vector p = detail::softmax(f.out);
    Vector s = jac.row(c).transpose() - jac.transpose() * p;
    return {f.out[c] - detail::log_sum_exp(f.out), std::move(s)};
  }

  double sample(const Vector& x, const ParamDraw& g, Rng& rng) const override {
    const Forward f = forward(x, g);
    if (head_ == Head::Regression) return f.out[0] + std::sqrt(g.phi) * standard_normal(rng);
    return static_cast<double>(categorical(detail::softmax(f.out), rng));
  }

  Vector class_probabilities(const Vector& x, const ParamDraw& g) const override {
    if (head_ == Head::Regression) return Likelihood::class_probabilities(x, g);
    return detail::softmax(forward(x, g).out);
  }

  /// Network output (mean for regression, logits for classification).
  Vector output(const Vector& x, const ParamDraw& g) const { return forward(x, g).out; }

 private:
  using RowMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

  struct Forward {
    RowMap W1;
    RowMap W2;
    Vector h;
    Vector out;
  };

  Forward forward(const Vector& x, const ParamDraw& g) const {
    check_x(x);
    check_params(g);
    const double* d = g.beta.data();
    RowMap W1(d, h_, p_);
    const auto b1 = g.beta.segment(h_ * p_, h_);
    RowMap W2(d + h_ * p_ + h_, k_, h_);
    const auto b2 = g.beta.segment(h_ * p_ + h_ + k_ * h_, k_);
    Vector h = (W1 * x + b1).array().tanh().matrix();
    Vector out = W2 * h + b2;
    return Forward{W1, W2, std::move(h), std::move(out)};
  }

  Eigen::Index p_;
  Eigen::Index h_;
  Head head_;
  Eigen::Index k_;
};

}  // namespace advbayes
