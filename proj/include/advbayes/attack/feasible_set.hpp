#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "advbayes/core/types.hpp"

namespace advbayes {

enum class Norm { L1, L2, Linf };

inline const char* to_string(Norm n) {
  switch (n) {
    case Norm::L1: return "l1";
    case Norm::L2: return "l2";
    case Norm::Linf: return "linf";
  }
  return "?";
}

inline Norm parse_norm(std::string_view s) {
  if (s == "l1" || s == "L1") return Norm::L1;
  if (s == "l2" || s == "L2") return Norm::L2;
  if (s == "linf" || s == "Linf" || s == "LINF" || s == "inf") return Norm::Linf;
  throw InvalidArgument("unknown norm '" + std::string(s) + "'");
}

inline double norm_of(const Vector& v, Norm n) {
  switch (n) {
    case Norm::L1: return v.lpNorm<1>();
    case Norm::L2: return v.norm();
    case Norm::Linf: return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>();
  }
  return 0.0;
}

namespace detail {

// Euclidean projection of v onto {w : |w|_1 <= radius} by sorting the
// magnitudes and soft-thresholding at the induced level.
inline Vector project_l1_ball(const Vector& v, double radius) {
  if (v.lpNorm<1>() <= radius) return v;
  if (radius <= 0.0) return Vector::Zero(v.size());
  std::vector<double> u(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) u[static_cast<std::size_t>(i)] = std::abs(v[i]);
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumulative = 0.0;
  double theta = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    cumulative += u[j];
    const double t = (cumulative - radius) / static_cast<double>(j + 1);
    if (u[j] - t > 0.0) theta = t;
  }
  Vector w(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double mag = std::max(std::abs(v[i]) - theta, 0.0);
    w[i] = v[i] < 0.0 ? -mag : mag;
  }
  return w;
}

}  // namespace detail

/// Norm ball {x' : |x' - center| <= epsilon}.
class FeasibleSet {
 public:
  FeasibleSet(Vector center, double epsilon, Norm norm)
      : center_(std::move(center)), epsilon_(epsilon), norm_(norm) {
    if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) {
      throw InvalidArgument("feasible set: epsilon must be finite and >= 0");
    }
  }

  const Vector& center() const { return center_; }
  double epsilon() const { return epsilon_; }
  Norm norm() const { return norm_; }
  Eigen::Index dim() const { return center_.size(); }

  /// Euclidean projection onto the ball.
  Vector project(const Vector& x) const {
    require_dim(x.size(), center_.size(), "project: x");
    if (epsilon_ == 0.0) return center_;
    const Vector d = x - center_;
    switch (norm_) {
      case Norm::L2: {
        const double n = d.norm();
        if (n <= epsilon_) return x;
        return center_ + (epsilon_ / n) * d;
      }
      case Norm::Linf:
        return center_ + d.cwiseMax(-epsilon_).cwiseMin(epsilon_);
      case Norm::L1:
        return center_ + detail::project_l1_ball(d, epsilon_);
    }
    return x;
  }

  bool contains(const Vector& x, double tol = 1e-9) const {
    return norm_of(x - center_, norm_) <= epsilon_ + tol;
  }

  FeasibleSet with_epsilon(double eps) const { return FeasibleSet(center_, eps, norm_); }

 private:
  Vector center_;
  double epsilon_;
  Norm norm_;
};

inline Vector project(const FeasibleSet& fs, const Vector& x) { return fs.project(x); }

}  // namespace advbayes
