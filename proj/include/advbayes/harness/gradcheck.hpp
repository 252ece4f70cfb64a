#pragma once

// Unbiasedness checks for the stochastic gradients on the known-variance
// conjugate testbed, where every target gradient has a closed form.

#include <cmath>
#include <functional>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "advbayes/analytic/analytic.hpp"
#include "advbayes/attack/point.hpp"
#include "advbayes/attack/ppd.hpp"
#include "advbayes/harness/config.hpp"
#include "advbayes/harness/sep.hpp"

namespace advbayes {

struct GradcheckRow {
  std::string estimator;
  Eigen::Index coordinate = 0;
  double mean = 0.0;
  double se = 0.0;
  double analytic = 0.0;
  double z = 0.0;
  /// |z| <= threshold, or |z| > threshold for a negative control.
  bool pass = false;
  bool negative_control = false;
};

struct GradcheckReport {
  std::vector<GradcheckRow> rows;
  /// Per-replicate samples, one matrix per estimator (replicates x p).
  std::vector<std::pair<std::string, Matrix>> samples;
  bool passed = true;
};

/// Mean, standard error and z-score per coordinate of replicated estimates.
inline std::vector<GradcheckRow> z_scores(const std::string& name, const Matrix& samples, const Vector& analytic,
                                          double threshold, bool negative_control = false) {
  const double n = static_cast<double>(samples.rows());
  const Vector mean = samples.colwise().mean().transpose();
  std::vector<GradcheckRow> rows;
  for (Eigen::Index j = 0; j < samples.cols(); ++j) {
    const double var = (samples.col(j).array() - mean[j]).square().sum() / (n - 1.0);
    GradcheckRow r;
    r.estimator = name;
    r.coordinate = j;
    r.mean = mean[j];
    r.se = std::sqrt(var / n);
    r.analytic = analytic[j];
    r.z = r.se > 0.0 ? (r.mean - r.analytic) / r.se : (r.mean == r.analytic ? 0.0 : std::numeric_limits<double>::infinity());
    r.pass = negative_control ? std::abs(r.z) > threshold : std::abs(r.z) <= threshold;
    r.negative_control = negative_control;
    rows.push_back(r);
  }
  return rows;
}

inline Matrix replicate(std::size_t n, Eigen::Index p, const std::function<Vector(Rng&)>& estimator, Rng& rng) {
  Matrix out(static_cast<Eigen::Index>(n), p);
  for (Eigen::Index i = 0; i < out.rows(); ++i) out.row(i) = estimator(rng).transpose();
  return out;
}

/// Runs the score-function, reparameterised and multilevel estimators plus
/// the shared-batch negative control. The report passes when every
/// estimator is within the z threshold on every coordinate and the control
/// exceeds it on at least one.
inline GradcheckReport validate_gradients(const ExperimentConfig& cfg) {
  ExperimentConfig c = cfg;
  c.model.kind = LinearModelKind::KnownVariance;
  c.dataset.from_csv = false;
  const auto inst = sep_instances(c, 0);
  const FittedLinear fit(c.model, c.prior, inst.train);
  const GaussianPosterior& post = *fit.gaussian();
  const Vector& mu_n = fit.mu_n();
  const auto& g = c.gradcheck;
  const Eigen::Index p = mu_n.size();
  require_dim(g.x.size(), p, "gradcheck: x");
  require_dim(g.control_x.size(), p, "gradcheck: control_x");
  const double target = inst.point_target;

  GradcheckReport report;
  auto add = [&](const std::string& name, Matrix samples, const Vector& analytic, bool control) {
    auto rows = z_scores(name, samples, analytic, g.z_threshold, control);
    report.rows.insert(report.rows.end(), rows.begin(), rows.end());
    report.samples.emplace_back(name, std::move(samples));
  };

  const auto prob = make_point_problem(c, g.x, target, 0.0);
  const Vector grad_point = 2.0 * (mu_n.dot(g.x) - target) * mu_n;
  {
    Rng rng = make_rng(c.seed, {0x6c, 1});
    add("grad_J", replicate(g.replicates, p, [&](Rng& r) { return grad_J(prob, g.x, fit.model(), r).gradient; }, rng),
        grad_point, false);
  }
  {
    Rng rng = make_rng(c.seed, {0x6c, 2});
    add("grad_J_reparam",
        replicate(g.replicates, p,
                  [&](Rng& r) { return grad_J(prob, g.x, fit.model(), r, GradientEstimator::Reparameterized).gradient; },
                  rng),
        grad_point, false);
  }
  {
    const auto appd = fit.appd_for(g.x, c.attack.target);
    const Appd target_dist(appd);
    const LevelLaw law(c.attack.mlmc);
    Rng rng = make_rng(c.seed, {0x6c, 3});
    add("mlmc",
        replicate(g.replicates, p,
                  [&](Rng& r) { return mlmc_grad(g.x, target_dist, c.attack.mlmc, fit.model(), r, &law).gradient; }, rng),
        kl_normal_ppd_grad(appd.mean, appd.variance, post, g.x), false);
  }
  {
    auto control = make_point_problem(c, g.control_x, target, 0.0);
    control.n_mu = control.n_grad = g.control_batch;
    control.batch_mode = BatchMode::Shared;
    Rng rng = make_rng(c.seed, {0x6c, 4});
    add("grad_J_shared_batch",
        replicate(g.replicates, p, [&](Rng& r) { return grad_J(control, g.control_x, fit.model(), r).gradient; }, rng),
        2.0 * (mu_n.dot(g.control_x) - target) * mu_n, true);
  }

  bool control_detected = false;
  for (const auto& r : report.rows) {
    if (r.negative_control) {
      control_detected = control_detected || r.pass;
    } else {
      report.passed = report.passed && r.pass;
    }
  }
  report.passed = report.passed && control_detected;
  return report;
}

/// Columns: estimator,coordinate,mean,se,analytic,z,pass,negative_control.
inline void write_gradcheck_csv(std::ostream& os, const GradcheckReport& report) {
  os << "estimator,coordinate,mean,se,analytic,z,pass,negative_control\n";
  os.precision(17);
  for (const auto& r : report.rows) {
    os << r.estimator << ',' << r.coordinate << ',' << r.mean << ',' << r.se << ',' << r.analytic << ',' << r.z << ','
       << (r.pass ? 1 : 0) << ',' << (r.negative_control ? 1 : 0) << '\n';
  }
}

/// Long-format replicate samples for histograms: estimator,replicate,coordinate,value.
inline void write_gradcheck_samples_csv(std::ostream& os, const GradcheckReport& report) {
  os << "estimator,replicate,coordinate,value\n";
  os.precision(17);
  for (const auto& [name, m] : report.samples) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) os << name << ',' << i << ',' << j << ',' << m(i, j) << '\n';
    }
  }
}

}  // namespace advbayes
