#pragma once

#include <cmath>
#include <cstddef>
#include <deque>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "advbayes/core/types.hpp"

namespace advbayes {

/// Projected-SGD settings shared by both attack families.
struct OptimizerSettings {
  double eta = 0.01;
  std::size_t iterations = 500;
  /// Use eta / sqrt(t) at iteration t.
  bool decay = false;
  /// Step along sign(gradient) instead of the gradient.
  bool sign_gradient = false;
  /// Stop once the mean objective over the last `smoothing_window`
  /// iterations drops below this value; 0 disables early stopping.
  double early_stop_tol = 0.0;
  std::size_t smoothing_window = 50;

  void validate() const {
    if (!(eta > 0.0)) throw InvalidArgument("optimizer: eta must be positive");
    if (iterations < 1) throw InvalidArgument("optimizer: iterations must be >= 1");
    if (smoothing_window < 1) throw InvalidArgument("optimizer: smoothing window must be >= 1");
  }

  double step_size(std::size_t t) const {
    return decay ? eta / std::sqrt(static_cast<double>(t)) : eta;
  }
};

struct TraceStep {
  std::size_t iteration = 0;
  /// Objective estimate at the iterate the gradient was taken at.
  double objective = 0.0;
  /// Iterate after the projected update.
  Vector x;
  std::size_t posterior_draws = 0;
  /// Randomised levels used (distribution attacks only).
  std::vector<int> levels;
};

struct AttackTrace {
  Vector initial;
  std::vector<TraceStep> steps;
  Vector final_x;
  /// Point attacks: |mu_hat(x_T) - G*|_2 from a fresh batch. Distribution
  /// attacks: Monte-Carlo estimate of -E_A[log pi(y | x_T, D)].
  double final_residual = std::numeric_limits<double>::quiet_NaN();
  bool early_stopped = false;
  bool has_levels = false;

  std::size_t total_posterior_draws() const {
    std::size_t n = 0;
    for (const auto& s : steps) n += s.posterior_draws;
    return n;
  }
};

/// Running mean over a fixed window, for early stopping.
class SmoothedObjective {
 public:
  explicit SmoothedObjective(std::size_t window) : window_(window) {}

  void push(double v) {
    values_.push_back(v);
    sum_ += v;
    if (values_.size() > window_) {
      sum_ -= values_.front();
      values_.pop_front();
    }
  }

  bool full() const { return values_.size() == window_; }
  double mean() const { return values_.empty() ? 0.0 : sum_ / static_cast<double>(values_.size()); }

 private:
  std::size_t window_;
  std::deque<double> values_;
  double sum_ = 0.0;
};

/// CSV columns: iteration,objective,x0..x{p-1}; distribution attacks add
/// levels (';'-separated) and posterior_draws.
inline void write_trace_csv(std::ostream& os, const AttackTrace& trace) {
  const Eigen::Index p = trace.initial.size();
  os << "iteration,objective";
  for (Eigen::Index j = 0; j < p; ++j) os << ",x" << j;
  if (trace.has_levels) os << ",levels,posterior_draws";
  os << '\n';
  os.precision(17);
  for (const auto& s : trace.steps) {
    os << s.iteration << ',' << s.objective;
    for (Eigen::Index j = 0; j < p; ++j) os << ',' << s.x[j];
    if (trace.has_levels) {
      os << ',';
      for (std::size_t i = 0; i < s.levels.size(); ++i) os << (i ? ";" : "") << s.levels[i];
      os << ',' << s.posterior_draws;
    }
    os << '\n';
  }
}

namespace detail {

inline void check_gradient(const Vector& g, std::size_t iteration, const Vector& x) {
  if (!g.allFinite()) {
    std::string where;
    for (Eigen::Index j = 0; j < x.size(); ++j) where += (j ? "," : "") + std::to_string(x[j]);
    throw NonFiniteGradient("non-finite gradient at iteration " + std::to_string(iteration) + ", x' = (" +
                            where + ")");
  }
}

inline Vector sign(const Vector& v) {
  return v.unaryExpr([](double a) { return a > 0.0 ? 1.0 : (a < 0.0 ? -1.0 : 0.0); });
}

}  // namespace detail

}  // namespace advbayes
