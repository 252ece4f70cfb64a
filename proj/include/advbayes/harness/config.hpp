#pragma once

// Experiment configuration read from a single JSON document. Every section
// and key is optional; unknown keys are rejected.

#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "advbayes/attack/feasible_set.hpp"
#include "advbayes/attack/ppd.hpp"
#include "advbayes/attack/trace.hpp"
#include "advbayes/harness/synthetic.hpp"

namespace advbayes {

enum class LinearModelKind { KnownVariance, Nig };
enum class AttackKind { Point, Ppd };

struct ModelSpec {
  LinearModelKind kind = LinearModelKind::KnownVariance;
  /// Noise variance of the known-variance model.
  double sigma2 = 1.0;
};

/// beta ~ N(mu0 1, (lambda0 I)^-1); the NIG model adds sigma2 ~ IG(a0, b0).
struct PriorSpec {
  double mu0 = 0.0;
  double lambda0 = 1.0;
  double a0 = 2.0;
  double b0 = 2.0;
};

struct DatasetSpec {
  bool from_csv = false;
  SyntheticSpec synthetic{};
  /// Draw a fresh synthetic training set for every repetition.
  bool regenerate_per_repeat = true;
  std::string path;
  std::string response;
  double split = 0.7;
  bool standardize = true;
};

struct TargetSpec {
  /// Point attacks: G*.
  double value = 3.0;
  /// Point attacks on CSV data: G* = factor * mean(y_train) instead of `value`.
  bool from_train_mean = false;
  double train_mean_factor = 2.0;
  /// Distribution attacks: Normal target with mean `appd_mean_factor` times
  /// the clean predictive mean and `appd_variance_factor` times its variance.
  double appd_mean_factor = 1.0;
  double appd_variance_factor = 4.0;
};

struct AttackSpec {
  AttackKind kind = AttackKind::Point;
  TargetSpec target{};
  Norm norm = Norm::L2;
  std::vector<double> eps_grid;
  std::size_t repeats = 10;
  OptimizerSettings optimizer{};
  std::size_t n_mu = 64;
  std::size_t n_grad = 64;
  bool reparameterized = false;
  MlmcConfig mlmc{};
  /// Attacked point for synthetic data.
  Vector instance = (Vector(2) << 0.5, 0.0).finished();
  /// Subset of {"analytic", "sgd", "fgsm"}.
  std::vector<std::string> strategies{"analytic", "sgd", "fgsm"};
  /// Test rows attacked per repetition on CSV data.
  std::size_t max_instances = 20;
};

struct GradcheckSpec {
  std::size_t replicates = 10000;
  Vector x = (Vector(2) << 0.5, 0.0).finished();
  /// Negative control: one shared batch of size `control_batch` for both
  /// factors of the point gradient at `control_x`.
  Vector control_x = (Vector(2) << 1.0, 2.0).finished();
  std::size_t control_batch = 16;
  double z_threshold = 4.0;
};

struct EntropySpec {
  BlobSpec blobs{};
  double ood_sd = 0.5;
  std::size_t test_per_class = 10;
  std::size_t ood_points = 30;
  std::vector<double> eps_grid{0.0, 0.5, 1.0, 2.0, 4.0};
  double prior_sd = 2.0;
  McmcSettings mcmc{4000, 5, 1000, 0.1, 0.3, true};
  OptimizerSettings optimizer{0.1, 1000, false, true, 0.0, 50};
  std::size_t n_mu = 64;
  std::size_t n_grad = 64;
  /// Posterior draws used to estimate predictive class probabilities.
  std::size_t eval_draws = 1000;
  std::vector<double> retention{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
};

/// One candidate model in the attacker's ensemble, fit on the attacker's data.
struct GrayboxMember {
  LinearModelKind kind = LinearModelKind::KnownVariance;
  PriorSpec prior{0.0, 2.0, 2.0, 2.0};
  /// Per-coefficient prior precisions; empty means prior.lambda0 on every coefficient.
  Vector lambda0_diag;
};

struct GrayboxSpec {
  std::vector<GrayboxMember> members{{LinearModelKind::KnownVariance, {0.0, 2.0, 2.0, 2.0}, {}},
                                     {LinearModelKind::Nig, {0.0, 2.0, 2.0, 2.0}, {}}};
  Vector weights = (Vector(2) << 0.5, 0.5).finished();
  /// Fit the members on a fresh dataset from the same generator instead of the defender's.
  bool fresh_data = true;
  std::size_t seeds = 20;
  std::vector<double> eps_grid{0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
};

struct ExperimentConfig {
  ModelSpec model{};
  PriorSpec prior{};
  DatasetSpec dataset{};
  AttackSpec attack{};
  GradcheckSpec gradcheck{};
  EntropySpec entropy{};
  GrayboxSpec graybox{};
  std::uint64_t seed = 20240601;
  std::string output_dir = ".";

  void validate() const {
    if (!(model.sigma2 > 0.0)) throw InvalidArgument("config: model.sigma2 must be positive");
    if (!(prior.lambda0 > 0.0) || !(prior.a0 > 0.0) || !(prior.b0 > 0.0)) {
      throw InvalidArgument("config: prior lambda0, a0 and b0 must be positive");
    }
    if (dataset.from_csv) {
      if (dataset.path.empty() || dataset.response.empty()) {
        throw InvalidArgument("config: csv dataset needs path and response");
      }
      if (!(dataset.split > 0.0 && dataset.split < 1.0)) throw InvalidArgument("config: split must lie in (0, 1)");
    } else {
      dataset.synthetic.validate();
      require_dim(attack.instance.size(), dataset.synthetic.beta.size(), "config: attack.instance");
    }
    if (attack.eps_grid.empty()) throw InvalidArgument("config: eps grid is empty");
    for (std::size_t i = 0; i < attack.eps_grid.size(); ++i) {
      if (!(attack.eps_grid[i] >= 0.0)) throw InvalidArgument("config: eps grid must be nonnegative");
      if (i > 0 && !(attack.eps_grid[i] > attack.eps_grid[i - 1])) {
        throw InvalidArgument("config: eps grid must be strictly ascending");
      }
    }
    if (attack.repeats < 1) throw InvalidArgument("config: repeats must be >= 1");
    if (attack.n_mu < 1 || attack.n_grad < 1) throw InvalidArgument("config: n_mu and n_grad must be >= 1");
    attack.optimizer.validate();
    attack.mlmc.validate();
    for (const auto& s : attack.strategies) {
      if (s != "analytic" && s != "sgd" && s != "fgsm") throw InvalidArgument("config: unknown strategy '" + s + "'");
    }
    if (gradcheck.replicates < 2) throw InvalidArgument("config: gradcheck.replicates must be >= 2");
    if (entropy.blobs.classes < 2) throw InvalidArgument("config: entropy experiment needs at least 2 classes");
    if (graybox.members.empty()) throw InvalidArgument("config: graybox needs at least one member");
    require_dim(graybox.weights.size(), static_cast<Eigen::Index>(graybox.members.size()), "config: graybox.weights");
    for (const auto& m : graybox.members) {
      if (!(m.prior.lambda0 > 0.0) || !(m.prior.a0 > 0.0) || !(m.prior.b0 > 0.0)) {
        throw InvalidArgument("config: graybox member prior lambda0, a0 and b0 must be positive");
      }
      if (m.lambda0_diag.size() > 0 && !(m.lambda0_diag.array() > 0.0).all()) {
        throw InvalidArgument("config: graybox member lambda0 entries must be positive");
      }
    }
    if (graybox.seeds < 1) throw InvalidArgument("config: graybox.seeds must be >= 1");
    if (graybox.eps_grid.empty()) throw InvalidArgument("config: graybox eps grid is empty");
  }
};

inline std::vector<double> default_eps_grid(AttackKind kind) {
  if (kind == AttackKind::Point) return {0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
  return {0.0, 0.5, 1.0, 2.0};
}

namespace detail {

using nlohmann::json;

inline void check_keys(const json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
  if (!j.is_object()) throw InvalidArgument("config: '" + where + "' must be an object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || key == a;
    if (!ok) throw InvalidArgument("config: unknown key '" + where + "." + key + "'");
  }
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline void read_vector(const json& j, const char* key, Vector& out) {
  if (!j.contains(key)) return;
  const auto v = j.at(key).get<std::vector<double>>();
  out = Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline void read_optimizer(const json& j, OptimizerSettings& o, const std::string& where) {
  check_keys(j, {"eta", "iterations", "decay", "sign_gradient", "early_stop_tol", "smoothing_window"}, where);
  read(j, "eta", o.eta);
  read(j, "iterations", o.iterations);
  read(j, "decay", o.decay);
  read(j, "sign_gradient", o.sign_gradient);
  read(j, "early_stop_tol", o.early_stop_tol);
  read(j, "smoothing_window", o.smoothing_window);
}

inline void read_mlmc(const json& j, MlmcConfig& m) {
  check_keys(j, {"M0", "tau", "R", "Lmax", "B", "untruncated", "max_level_draws"}, "attack.mlmc");
  read(j, "M0", m.m0);
  read(j, "tau", m.tau);
  read(j, "R", m.r);
  read(j, "Lmax", m.l_max);
  read(j, "B", m.b);
  read(j, "untruncated", m.untruncated);
  read(j, "max_level_draws", m.max_level_draws);
}

inline LinearModelKind parse_model_kind(const std::string& kind) {
  if (kind == "known_variance") return LinearModelKind::KnownVariance;
  if (kind == "nig") return LinearModelKind::Nig;
  throw InvalidArgument("config: model kind must be 'known_variance' or 'nig'");
}

inline void read_graybox(const json& g, GrayboxSpec& s) {
  check_keys(g, {"members", "weights", "fresh_data", "seeds", "eps_grid"}, "graybox");
  if (g.contains("members")) {
    s.members.clear();
    for (const auto& m : g.at("members")) {
      check_keys(m, {"kind", "mu0", "lambda0", "a0", "b0"}, "graybox.members[]");
      GrayboxMember member;
      member.kind = parse_model_kind(m.value("kind", std::string("known_variance")));
      read(m, "mu0", member.prior.mu0);
      read(m, "a0", member.prior.a0);
      read(m, "b0", member.prior.b0);
      if (m.contains("lambda0")) {
        if (m.at("lambda0").is_array()) {
          read_vector(m, "lambda0", member.lambda0_diag);
        } else {
          member.prior.lambda0 = m.at("lambda0").get<double>();
        }
      }
      s.members.push_back(std::move(member));
    }
  }
  if (g.contains("weights")) {
    read_vector(g, "weights", s.weights);
  } else if (g.contains("members")) {
    s.weights = Vector::Constant(static_cast<Eigen::Index>(s.members.size()), 1.0 / static_cast<double>(s.members.size()));
  }
  read(g, "fresh_data", s.fresh_data);
  read(g, "seeds", s.seeds);
  read(g, "eps_grid", s.eps_grid);
}

}  // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json& j) {
  using detail::read;
  ExperimentConfig c;
  detail::check_keys(j, {"seed", "output_dir", "model", "prior", "dataset", "attack", "gradcheck", "entropy", "graybox"},
                     "config");
  read(j, "seed", c.seed);
  read(j, "output_dir", c.output_dir);

  if (j.contains("model")) {
    const auto& m = j.at("model");
    detail::check_keys(m, {"kind", "sigma2"}, "model");
    c.model.kind = detail::parse_model_kind(m.value("kind", std::string("known_variance")));
    read(m, "sigma2", c.model.sigma2);
  }
  if (j.contains("prior")) {
    const auto& p = j.at("prior");
    detail::check_keys(p, {"mu0", "lambda0", "a0", "b0"}, "prior");
    read(p, "mu0", c.prior.mu0);
    read(p, "lambda0", c.prior.lambda0);
    read(p, "a0", c.prior.a0);
    read(p, "b0", c.prior.b0);
  }
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    detail::check_keys(d, {"kind", "n", "beta", "sigma2", "mode", "mixing", "regenerate_per_repeat", "path", "response",
                           "split", "standardize"},
                       "dataset");
    const auto kind = d.value("kind", std::string("synthetic"));
    if (kind != "synthetic" && kind != "csv") throw InvalidArgument("config: dataset.kind must be 'synthetic' or 'csv'");
    c.dataset.from_csv = kind == "csv";
    auto& s = c.dataset.synthetic;
    read(d, "n", s.n);
    detail::read_vector(d, "beta", s.beta);
    read(d, "sigma2", s.sigma2);
    if (d.contains("mode")) s.mode = parse_covariate_mode(d.at("mode").get<std::string>());
    if (d.contains("mixing")) {
      const auto rows = d.at("mixing").get<std::vector<std::vector<double>>>();
      s.mixing.resize(static_cast<Eigen::Index>(rows.size()), rows.empty() ? 0 : static_cast<Eigen::Index>(rows[0].size()));
      for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != static_cast<std::size_t>(s.mixing.cols())) throw InvalidArgument("config: ragged mixing matrix");
        for (std::size_t k = 0; k < rows[r].size(); ++k) s.mixing(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = rows[r][k];
      }
    }
    read(d, "regenerate_per_repeat", c.dataset.regenerate_per_repeat);
    read(d, "path", c.dataset.path);
    read(d, "response", c.dataset.response);
    read(d, "split", c.dataset.split);
    read(d, "standardize", c.dataset.standardize);
  }
  if (j.contains("attack")) {
    const auto& a = j.at("attack");
    detail::check_keys(a, {"type", "target", "norm", "eps_grid", "repeats", "optimizer", "N", "M", "reparameterized",
                           "mlmc", "instance", "strategies", "max_instances"},
                       "attack");
    const auto type = a.value("type", std::string("point"));
    if (type == "point") {
      c.attack.kind = AttackKind::Point;
    } else if (type == "ppd") {
      c.attack.kind = AttackKind::Ppd;
    } else {
      throw InvalidArgument("config: attack.type must be 'point' or 'ppd'");
    }
    if (a.contains("target")) {
      const auto& t = a.at("target");
      detail::check_keys(t, {"value", "from_train_mean", "train_mean_factor", "appd_mean_factor", "appd_variance_factor"},
                         "attack.target");
      read(t, "value", c.attack.target.value);
      read(t, "from_train_mean", c.attack.target.from_train_mean);
      read(t, "train_mean_factor", c.attack.target.train_mean_factor);
      read(t, "appd_mean_factor", c.attack.target.appd_mean_factor);
      read(t, "appd_variance_factor", c.attack.target.appd_variance_factor);
    }
    if (a.contains("norm")) c.attack.norm = parse_norm(a.at("norm").get<std::string>());
    read(a, "eps_grid", c.attack.eps_grid);
    read(a, "repeats", c.attack.repeats);
    if (a.contains("optimizer")) detail::read_optimizer(a.at("optimizer"), c.attack.optimizer, "attack.optimizer");
    read(a, "N", c.attack.n_mu);
    read(a, "M", c.attack.n_grad);
    read(a, "reparameterized", c.attack.reparameterized);
    if (a.contains("mlmc")) detail::read_mlmc(a.at("mlmc"), c.attack.mlmc);
    detail::read_vector(a, "instance", c.attack.instance);
    read(a, "strategies", c.attack.strategies);
    read(a, "max_instances", c.attack.max_instances);
  }
  if (c.attack.eps_grid.empty()) c.attack.eps_grid = default_eps_grid(c.attack.kind);

  if (j.contains("gradcheck")) {
    const auto& g = j.at("gradcheck");
    detail::check_keys(g, {"replicates", "x", "control_x", "control_batch", "z_threshold"}, "gradcheck");
    read(g, "replicates", c.gradcheck.replicates);
    detail::read_vector(g, "x", c.gradcheck.x);
    detail::read_vector(g, "control_x", c.gradcheck.control_x);
    read(g, "control_batch", c.gradcheck.control_batch);
    read(g, "z_threshold", c.gradcheck.z_threshold);
  }
  if (j.contains("entropy")) {
    const auto& e = j.at("entropy");
    detail::check_keys(e, {"classes", "per_class", "radius", "sd", "ood_sd", "test_per_class", "ood_points", "eps_grid",
                           "prior_sd", "burn_in", "thin", "pool_size", "optimizer", "N", "M", "eval_draws", "retention"},
                       "entropy");
    auto& s = c.entropy;
    read(e, "classes", s.blobs.classes);
    read(e, "per_class", s.blobs.per_class);
    read(e, "radius", s.blobs.radius);
    read(e, "sd", s.blobs.sd);
    read(e, "ood_sd", s.ood_sd);
    read(e, "test_per_class", s.test_per_class);
    read(e, "ood_points", s.ood_points);
    read(e, "eps_grid", s.eps_grid);
    read(e, "prior_sd", s.prior_sd);
    read(e, "burn_in", s.mcmc.burn_in);
    read(e, "thin", s.mcmc.thin);
    read(e, "pool_size", s.mcmc.pool_size);
    if (e.contains("optimizer")) detail::read_optimizer(e.at("optimizer"), s.optimizer, "entropy.optimizer");
    read(e, "N", s.n_mu);
    read(e, "M", s.n_grad);
    read(e, "eval_draws", s.eval_draws);
    read(e, "retention", s.retention);
  }
  if (j.contains("graybox")) detail::read_graybox(j.at("graybox"), c.graybox);
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("config: cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument("config: invalid JSON in '" + path + "': " + e.what());
  }
  try {
    return parse_config(j);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("config: ") + e.what());
  }
}

}  // namespace advbayes
