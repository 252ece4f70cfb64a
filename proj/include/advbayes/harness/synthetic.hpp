#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <string_view>

#include "advbayes/core/conjugate.hpp"
#include "advbayes/core/random.hpp"
#include "advbayes/core/types.hpp"

namespace advbayes {

enum class CovariateMode { Independent, Correlated };

inline CovariateMode parse_covariate_mode(std::string_view s) {
  if (s == "independent") return CovariateMode::Independent;
  if (s == "correlated") return CovariateMode::Correlated;
  throw InvalidArgument("unknown covariate mode '" + std::string(s) + "'");
}

inline const char* to_string(CovariateMode m) {
  return m == CovariateMode::Independent ? "independent" : "correlated";
}

/// Linear-Gaussian regression data y = X beta + noise.
struct SyntheticSpec {
  std::size_t n = 1000;
  Vector beta = (Vector(2) << -1.0, 2.0).finished();
  double sigma2 = 1.0;
  CovariateMode mode = CovariateMode::Independent;
  /// Correlated rows are A^T z with z ~ N(0, I), so their covariance is A^T A.
  Matrix mixing = (Matrix(2, 2) << 1.0, 2.0, 3.0, 4.0).finished();

  void validate() const {
    if (beta.size() < 1) throw InvalidArgument("synthetic: beta must be nonempty");
    if (!(sigma2 > 0.0)) throw InvalidArgument("synthetic: sigma2 must be positive");
    if (mode == CovariateMode::Correlated) {
      require_dim(mixing.rows(), beta.size(), "synthetic: mixing matrix rows");
      require_dim(mixing.cols(), beta.size(), "synthetic: mixing matrix cols");
      detail::checked_cholesky(mixing.transpose() * mixing, "synthetic: covariate covariance");
    }
  }
};

inline Dataset gen_synthetic(const SyntheticSpec& spec, Rng& rng) {
  spec.validate();
  const auto n = static_cast<Eigen::Index>(spec.n);
  const Eigen::Index p = spec.beta.size();
  Matrix X(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector z = standard_normal_vector(p, rng);
    if (spec.mode == CovariateMode::Independent) {
      X.row(i) = z.transpose();
    } else {
      X.row(i) = (spec.mixing.transpose() * z).transpose();
    }
  }
  Vector y = X * spec.beta;
  const double sd = std::sqrt(spec.sigma2);
  for (Eigen::Index i = 0; i < n; ++i) y[i] += sd * standard_normal(rng);
  return Dataset(std::move(X), std::move(y));
}

/// Isotropic 2-D Gaussian blobs with centers evenly spaced on a circle;
/// labels are the blob indices.
struct BlobSpec {
  std::size_t classes = 3;
  std::size_t per_class = 60;
  double radius = 3.0;
  double sd = 0.6;
  double angle_offset = std::numbers::pi / 2.0;

  Vector center(std::size_t k) const {
    const double a = angle_offset + 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(classes);
    return (Vector(2) << radius * std::cos(a), radius * std::sin(a)).finished();
  }
};

inline Dataset gen_blobs(const BlobSpec& spec, Rng& rng) {
  if (spec.classes < 2) throw InvalidArgument("blobs: need at least 2 classes");
  if (!(spec.sd > 0.0)) throw InvalidArgument("blobs: sd must be positive");
  const auto n = static_cast<Eigen::Index>(spec.classes * spec.per_class);
  Matrix X(n, 2);
  Vector y(n);
  Eigen::Index i = 0;
  for (std::size_t k = 0; k < spec.classes; ++k) {
    const Vector c = spec.center(k);
    for (std::size_t j = 0; j < spec.per_class; ++j, ++i) {
      X.row(i) = (c + spec.sd * standard_normal_vector(2, rng)).transpose();
      y[i] = static_cast<double>(k);
    }
  }
  return Dataset(std::move(X), std::move(y));
}

/// Points from one isotropic blob, unlabeled.
inline Matrix gen_blob_points(const Vector& center, double sd, std::size_t n, Rng& rng) {
  Matrix X(static_cast<Eigen::Index>(n), center.size());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    X.row(i) = (center + sd * standard_normal_vector(center.size(), rng)).transpose();
  }
  return X;
}

}  // namespace advbayes
