#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "advbayes/advbayes.hpp"

namespace fs = std::filesystem;
using namespace advbayes;

namespace {

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("-c,--config", o.config, "JSON experiment config (defaults apply when omitted)");
  cmd->add_option("-s,--seed", o.seed, "Override the config seed");
  cmd->add_option("-o,--out", o.out, "Output directory (overrides output_dir)");
}

ExperimentConfig resolve(const CommonOptions& o) {
  ExperimentConfig cfg = o.config.empty() ? parse_config(nlohmann::json::object()) : load_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (!o.out.empty()) cfg.output_dir = o.out;
  fs::create_directories(cfg.output_dir);
  return cfg;
}

std::ofstream open_out(const ExperimentConfig& cfg, const std::string& name) {
  const fs::path path = fs::path(cfg.output_dir) / name;
  std::ofstream os(path);
  if (!os) throw Error("cannot write '" + path.string() + "'");
  std::cout << "wrote " << path.string() << '\n';
  return os;
}

int cmd_attack(const CommonOptions& o, std::optional<double> eps) {
  const auto cfg = resolve(o);
  const double e = eps.value_or(cfg.attack.eps_grid.back());
  const auto res = run_single_attack(cfg, e);
  auto os = open_out(cfg, "trace.csv");
  write_trace_csv(os, res.trace);
  std::cout << std::setprecision(6) << "attack=" << (cfg.attack.kind == AttackKind::Point ? "point" : "ppd")
            << " eps=" << e << " norm=" << to_string(cfg.attack.norm) << " iterations=" << res.trace.steps.size()
            << (res.trace.early_stopped ? " (early stop)" : "") << '\n'
            << "x  = " << res.trace.initial.transpose() << "\nx' = " << res.trace.final_x.transpose() << '\n'
            << res.metric << ": clean=" << res.clean_metric << " attacked=" << res.attacked_metric << '\n'
            << "posterior draws used: " << res.trace.total_posterior_draws() << '\n';
  return 0;
}

int cmd_sweep(const CommonOptions& o) {
  const auto cfg = resolve(o);
  const auto res = run_sep(cfg);
  const auto rows = aggregate(res.records);
  {
    auto os = open_out(cfg, "sep.csv");
    write_sep_csv(os, rows);
  }
  {
    auto os = open_out(cfg, "sep_raw.csv");
    write_sep_raw_csv(os, res.records);
  }
  std::cout << std::setprecision(5);
  for (const auto& r : rows) {
    std::cout << std::left << std::setw(9) << r.strategy << std::setw(16) << r.metric << " eps=" << std::setw(5)
              << r.epsilon << " mean=" << std::setw(12) << r.mean << " 2se=" << 2.0 * r.se << '\n';
  }
  for (const auto& f : res.failures) std::cerr << "failed: " << f << '\n';
  return res.failures.empty() ? 0 : 2;
}

int cmd_gradcheck(const CommonOptions& o) {
  const auto cfg = resolve(o);
  const auto rep = validate_gradients(cfg);
  {
    auto os = open_out(cfg, "gradcheck.csv");
    write_gradcheck_csv(os, rep);
  }
  {
    auto os = open_out(cfg, "gradcheck_samples.csv");
    write_gradcheck_samples_csv(os, rep);
  }
  std::cout << std::setprecision(5);
  for (const auto& r : rep.rows) {
    std::cout << std::left << std::setw(20) << r.estimator << " coord=" << r.coordinate << " mean=" << std::setw(12)
              << r.mean << " analytic=" << std::setw(12) << r.analytic << " z=" << std::setw(10) << r.z
              << (r.negative_control ? (r.pass ? " bias detected" : " BIAS NOT DETECTED") : (r.pass ? " ok" : " FAIL"))
              << '\n';
  }
  std::cout << (rep.passed ? "gradient validation passed" : "gradient validation FAILED") << '\n';
  return rep.passed ? 0 : 1;
}

int cmd_entropy(const CommonOptions& o) {
  const auto cfg = resolve(o);
  const auto res = entropy_experiment(cfg);
  {
    auto os = open_out(cfg, "entropy.csv");
    write_sep_raw_csv(os, res.records);
  }
  {
    auto os = open_out(cfg, "selective.csv");
    write_selective_csv(os, res.selective);
  }
  std::cout << std::setprecision(4) << "mcmc acceptance " << res.mcmc_acceptance << ", ln K = "
            << std::log(static_cast<double>(res.classes)) << '\n';
  for (double e : cfg.entropy.eps_grid) {
    std::cout << "eps=" << std::setw(5) << e << " id entropy=" << std::setw(8) << res.mean_entropy("id", e)
              << " ood entropy=" << std::setw(8) << res.mean_entropy("ood", e)
              << " selective acc@50%=" << res.accuracy(e, 0.5) << '\n';
  }
  return 0;
}

int cmd_graybox(const CommonOptions& o) {
  const auto cfg = resolve(o);
  const auto res = graybox_experiment(cfg);
  const auto rows = aggregate(res.records);
  {
    auto os = open_out(cfg, "graybox.csv");
    write_sep_csv(os, rows);
  }
  {
    auto os = open_out(cfg, "graybox_raw.csv");
    write_sep_raw_csv(os, res.records);
  }
  std::cout << std::setprecision(6);
  for (const auto& r : rows) {
    std::cout << std::left << std::setw(9) << r.strategy << " eps=" << std::setw(5) << r.epsilon << " residual="
              << std::setw(12) << r.mean << " 2se=" << 2.0 * r.se << '\n';
  }
  return 0;
}

int cmd_sparsity(const CommonOptions& o, std::size_t seeds, std::optional<double> eps) {
  const auto cfg = resolve(o);
  const double e = eps.value_or(cfg.attack.eps_grid.back());
  std::size_t wins = 0;
  auto os = open_out(cfg, "sparsity.csv");
  os << "seed,l1_zeros,l2_zeros\n";
  for (std::size_t i = 0; i < seeds; ++i) {
    const auto c = l1_sparsity(cfg, e, cfg.seed + i);
    os << c.seed << ',' << c.l1_zeros << ',' << c.l2_zeros << '\n';
    wins += c.l1_zeros > c.l2_zeros ? 1 : 0;
  }
  std::cout << "L1 sparser than L2 on " << wins << "/" << seeds << " seeds\n";
  return wins == seeds ? 0 : 1;
}

int cmd_synth(const CommonOptions& o) {
  const auto cfg = resolve(o);
  if (cfg.dataset.from_csv) throw InvalidArgument("synth: config describes a CSV dataset");
  Rng rng = make_rng(cfg.seed, {1, 0});
  const Dataset d = gen_synthetic(cfg.dataset.synthetic, rng);
  auto os = open_out(cfg, "synthetic.csv");
  write_dataset_csv(os, d);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Evasion attacks on Bayesian predictive models"};
  app.require_subcommand(1);

  CommonOptions attack_o, sweep_o, grad_o, ent_o, gray_o, sparse_o, synth_o;
  std::optional<double> attack_eps, sparse_eps;
  std::size_t sparse_seeds = 10;

  auto* attack = app.add_subcommand("attack", "Run one attack and write trace.csv");
  add_common(attack, attack_o);
  attack->add_option("-e,--eps", attack_eps, "Attack radius (default: largest grid value)");

  auto* sweep = app.add_subcommand("sweep", "Run the epsilon x repetition sweep and write sep.csv");
  add_common(sweep, sweep_o);

  auto* grad = app.add_subcommand("validate-gradients", "Check gradient estimators against closed forms");
  add_common(grad, grad_o);

  auto* ent = app.add_subcommand("entropy", "Entropy attacks on the synthetic blob classifier");
  add_common(ent, ent_o);

  auto* gray = app.add_subcommand("graybox", "White-box vs gray-box point attacks over seeds");
  add_common(gray, gray_o);

  auto* sparse = app.add_subcommand("sparsity", "Compare unperturbed coordinates under L1 and L2 balls");
  add_common(sparse, sparse_o);
  sparse->add_option("-n,--seeds", sparse_seeds, "Number of seeds")->check(CLI::PositiveNumber);
  sparse->add_option("-e,--eps", sparse_eps, "Attack radius (default: largest grid value)");

  auto* synth = app.add_subcommand("synth", "Write the configured synthetic dataset as CSV");
  add_common(synth, synth_o);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*attack) return cmd_attack(attack_o, attack_eps);
    if (*sweep) return cmd_sweep(sweep_o);
    if (*grad) return cmd_gradcheck(grad_o);
    if (*ent) return cmd_entropy(ent_o);
    if (*gray) return cmd_graybox(gray_o);
    if (*sparse) return cmd_sparsity(sparse_o, sparse_seeds, sparse_eps);
    if (*synth) return cmd_synth(synth_o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
