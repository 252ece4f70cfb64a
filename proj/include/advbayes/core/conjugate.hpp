#pragma once

// Conjugate Bayesian linear regression: the normal-inverse-gamma model with
// unknown noise variance, and the Gaussian model with known noise variance.

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "advbayes/core/types.hpp"

namespace advbayes {

namespace detail {

/// Cholesky factor of an SPD matrix; raises SingularMatrix instead of
/// regularising.
inline Eigen::LLT<Matrix> checked_cholesky(const Matrix& m, const char* what) {
  if (m.rows() != m.cols()) throw DimensionMismatch(std::string(what) + ": matrix is not square");
  if (!m.allFinite()) throw SingularMatrix(std::string(what) + ": non-finite entries");
  if (!m.isApprox(m.transpose(), 1e-9)) throw SingularMatrix(std::string(what) + ": matrix is not symmetric");
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) {
    throw SingularMatrix(std::string(what) + ": matrix is not positive definite");
  }
  const Vector d = llt.matrixL().toDenseMatrix().diagonal();
  if (d.size() > 0 && !(d.minCoeff() > 1e-10 * d.maxCoeff())) {
    throw SingularMatrix(std::string(what) + ": matrix is numerically singular");
  }
  return llt;
}

}  // namespace detail

/// Normal-inverse-gamma parameters: beta | s2 ~ N(mu, s2 * lambda^-1),
/// s2 ~ InvGamma(a, b). Used both as prior and as posterior.
struct NigParams {
  Vector mu;
  Matrix lambda;
  double a = 1.0;
  double b = 1.0;

  Eigen::Index dim() const { return mu.size(); }

  void validate() const {
    require_dim(lambda.rows(), mu.size(), "nig: lambda rows");
    require_dim(lambda.cols(), mu.size(), "nig: lambda cols");
    if (!(a > 0.0) || !(b > 0.0)) throw InvalidArgument("nig: a and b must be positive");
    detail::checked_cholesky(lambda, "nig: lambda");
  }
};

using NigPrior = NigParams;
using NigPosterior = NigParams;

/// Student-t posterior predictive. `scale` is the squared scale: the
/// variance is scale * df / (df - 2) for df > 2.
struct TPredictive {
  double df = 1.0;
  double loc = 0.0;
  double scale = 1.0;

  double variance() const {
    return df > 2.0 ? scale * df / (df - 2.0) : std::numeric_limits<double>::infinity();
  }

  double log_pdf(double y) const {
    const double z2 = (y - loc) * (y - loc) / scale;
    return std::lgamma(0.5 * (df + 1.0)) - std::lgamma(0.5 * df) -
           0.5 * std::log(df * std::numbers::pi * scale) - 0.5 * (df + 1.0) * std::log1p(z2 / df);
  }
};

inline NigPosterior nig_update(const NigPrior& prior, const Dataset& data) {
  prior.validate();
  if (data.rows() == 0) return prior;
  require_dim(data.X.cols(), prior.dim(), "nig_update: covariates");

  NigPosterior post;
  post.lambda = prior.lambda + data.X.transpose() * data.X;
  const auto llt = detail::checked_cholesky(post.lambda, "nig_update: posterior precision");
  post.mu = llt.solve(prior.lambda * prior.mu + data.X.transpose() * data.y);
  post.a = prior.a + 0.5 * static_cast<double>(data.rows());
  post.b = prior.b + 0.5 * (data.y.squaredNorm() + prior.mu.dot(prior.lambda * prior.mu) -
                            post.mu.dot(post.lambda * post.mu));
  if (!(post.b > 0.0)) throw SingularMatrix("nig_update: non-positive posterior scale b_n");
  return post;
}

inline TPredictive ppd_t_params(const NigPosterior& post, const Vector& x) {
  require_dim(x.size(), post.dim(), "ppd_t_params: x");
  const auto llt = detail::checked_cholesky(post.lambda, "ppd_t_params: lambda");
  const double quad = x.dot(llt.solve(x));
  return TPredictive{2.0 * post.a, x.dot(post.mu), post.b / post.a * (1.0 + quad)};
}

/// Known-variance Gaussian posterior beta ~ N(mu_n, lambda_n^-1).
struct GaussianPosterior {
  Vector mu_n;
  Matrix lambda_n;
  double sigma2 = 1.0;

  Eigen::Index dim() const { return mu_n.size(); }

  void validate() const {
    require_dim(lambda_n.rows(), mu_n.size(), "gaussian posterior: lambda rows");
    require_dim(lambda_n.cols(), mu_n.size(), "gaussian posterior: lambda cols");
    if (!(sigma2 > 0.0)) throw InvalidArgument("gaussian posterior: sigma2 must be positive");
    detail::checked_cholesky(lambda_n, "gaussian posterior: lambda_n");
  }

  /// Posterior covariance lambda_n^-1.
  Matrix covariance() const {
    const auto llt = detail::checked_cholesky(lambda_n, "gaussian posterior: lambda_n");
    return llt.solve(Matrix::Identity(dim(), dim()));
  }
};

struct NormalPredictive {
  double mean = 0.0;
  double variance = 1.0;
};

inline GaussianPosterior gaussian_update(const Vector& mu0, const Matrix& lambda0, double sigma2,
                                         const Dataset& data) {
  if (!(sigma2 > 0.0)) throw InvalidArgument("gaussian_update: sigma2 must be positive");
  GaussianPosterior prior{mu0, lambda0, sigma2};
  prior.validate();
  if (data.rows() == 0) return prior;
  require_dim(data.X.cols(), mu0.size(), "gaussian_update: covariates");

  GaussianPosterior post;
  post.sigma2 = sigma2;
  post.lambda_n = lambda0 + data.X.transpose() * data.X / sigma2;
  const auto llt = detail::checked_cholesky(post.lambda_n, "gaussian_update: posterior precision");
  post.mu_n = llt.solve(lambda0 * mu0 + data.X.transpose() * data.y / sigma2);
  return post;
}

/// Mean x^T mu_n and variance x^T lambda_n^-1 x + sigma2.
inline NormalPredictive ppd_normal_params(const GaussianPosterior& post, const Vector& x) {
  require_dim(x.size(), post.dim(), "ppd_normal_params: x");
  const auto llt = detail::checked_cholesky(post.lambda_n, "ppd_normal_params: lambda_n");
  return NormalPredictive{x.dot(post.mu_n), x.dot(llt.solve(x)) + post.sigma2};
}

}  // namespace advbayes
