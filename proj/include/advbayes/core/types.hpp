#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Core>

namespace advbayes {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

/// Cholesky factorisation failed: the matrix is not numerically SPD.
class SingularMatrix : public Error {
 public:
  using Error::Error;
};

/// Every likelihood in a ratio estimate underflowed (or was NaN).
class DegenerateLikelihood : public Error {
 public:
  using Error::Error;
};

class UnsupportedModel : public Error {
 public:
  using Error::Error;
};

class NonFiniteGradient : public Error {
 public:
  using Error::Error;
};

/// Expected sampling cost is infinite (level-decay exponent <= 1).
class DivergentCost : public Error {
 public:
  using Error::Error;
};

/// Predictive mean does not depend on the covariates.
class UnattackableMean : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class DatasetError : public Error {
 public:
  using Error::Error;
};

/// One posterior draw: regression coefficients (or flattened network
/// weights) plus a dispersion. For Gaussian likelihoods `phi` is the noise
/// variance; categorical likelihoods keep it at 1.
struct ParamDraw {
  Vector beta;
  double phi = 1.0;
};

/// Design matrix plus responses. Integer class labels are stored as doubles.
struct Dataset {
  Matrix X;
  Vector y;

  Dataset() = default;
  Dataset(Matrix features, Vector response) : X(std::move(features)), y(std::move(response)) {
    validate();
  }

  std::size_t rows() const { return static_cast<std::size_t>(X.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(X.cols()); }

  void validate() const {
    if (X.rows() != y.size()) {
      throw DimensionMismatch("dataset: design matrix has " + std::to_string(X.rows()) +
                              " rows but response has " + std::to_string(y.size()));
    }
    if (!X.allFinite() || !y.allFinite()) throw DatasetError("dataset: non-finite entry");
  }

  /// Rows [begin, begin + count).
  Dataset slice(std::size_t begin, std::size_t count) const {
    const auto b = static_cast<Eigen::Index>(begin);
    const auto c = static_cast<Eigen::Index>(count);
    return Dataset(X.middleRows(b, c), y.segment(b, c));
  }
};

inline Dataset concat(const Dataset& a, const Dataset& b) {
  if (a.rows() > 0 && b.rows() > 0 && a.cols() != b.cols()) {
    throw DimensionMismatch("concat: column counts differ");
  }
  const Eigen::Index cols = a.rows() > 0 ? a.X.cols() : b.X.cols();
  Matrix X(a.X.rows() + b.X.rows(), cols);
  Vector y(a.y.size() + b.y.size());
  if (a.rows() > 0) X.topRows(a.X.rows()) = a.X;
  if (b.rows() > 0) X.bottomRows(b.X.rows()) = b.X;
  y << a.y, b.y;
  return Dataset(std::move(X), std::move(y));
}

inline void require_dim(Eigen::Index got, Eigen::Index want, const char* what) {
  if (got != want) {
    throw DimensionMismatch(std::string(what) + ": expected dimension " + std::to_string(want) +
                            ", got " + std::to_string(got));
  }
}

}  // namespace advbayes
