// Command-line harness: classical solvers, BellNet training/evaluation, and
// the depth / filter-order / transfer experiment sweeps, driven by a JSON
// config. Exit codes: 0 success, 2 config error, 3 numeric failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "bellnet/experiments.hpp"
#include "bellnet/serialization.hpp"

namespace fs = std::filesystem;
using namespace bellnet;

namespace {

ExperimentConfig load_config_or_default(const std::string& path) {
  if (path.empty()) return experiment_config_from_json(json::object());
  return load_experiment_config(path);
}

void apply_seed_override(ExperimentConfig& cfg, const std::optional<std::uint64_t>& seed) {
  if (seed.has_value()) cfg.train.seed = *seed;
}

void write_loss_history(const std::vector<double>& history, const fs::path& path) {
  std::ofstream out(path);
  out << "iteration,loss\n";
  for (std::size_t i = 0; i < history.size(); ++i) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", history[i]);
    out << i << "," << buf << "\n";
  }
}

int run_solve(const std::string& mdp_path, const std::string& method, int steps,
              int eval_steps, const std::string& out_dir) {
  TabularMdp mdp = load_mdp(mdp_path);
  SolverReport report = [&] {
    const Vector q0 = Vector::Zero(mdp.num_pairs());
    if (method == "value-iteration") return value_iteration(mdp, steps, q0);
    if (method == "policy-iteration") return policy_iteration(mdp, eval_steps, steps, q0);
    if (method == "exact") return optimal_values(mdp);
    throw config_error("solve: unknown method \"" + method + "\"");
  }();
  std::printf("method=%s iterations=%d residual=%.6e\n", method.c_str(),
              report.iterations_used, report.residual);
  const Matrix q_mat = unvec(report.q, mdp.num_states(), mdp.num_actions());
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::ofstream out(fs::path(out_dir) / "solution.csv");
    out << "state,action,value\n";
    const auto actions = report.policy.actions();
    for (int s = 0; s < mdp.num_states(); ++s) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.17g", q_mat(s, actions[s]));
      out << s << "," << actions[s] << "," << buf << "\n";
    }
    std::printf("wrote %s\n", (fs::path(out_dir) / "solution.csv").c_str());
  } else {
    for (int s = 0; s < mdp.num_states(); ++s) {
      std::printf("state %d: action %d value %.6f\n", s, report.policy.actions()[s],
                  q_mat(s, report.policy.actions()[s]));
    }
  }
  return 0;
}

int run_train(const ExperimentConfig& cfg, const std::string& out_dir) {
  const TabularMdp mdp = build_cliff_mdp(cfg.environment, cfg.gamma);
  std::mt19937_64 init_rng(derive_seed(cfg.train.seed, {0x1B17}));
  BellNetModel model =
      initial_model(cfg.model.depth, cfg.model.filter_order, cfg.model.temperature,
                    cfg.model.weight_shared, mdp.discount(), cfg.train.init, init_rng);
  TrainResult result = train(std::move(model), mdp, cfg.train);
  fs::create_directories(out_dir);
  const fs::path ckpt = fs::path(out_dir) / "model.json";
  save_checkpoint(result.model, ckpt.string());
  write_loss_history(result.loss_history, fs::path(out_dir) / "loss_history.csv");
  std::printf("%s after %zu iterations, final loss %.6e\n",
              result.diverged ? "DIVERGED" : "trained", result.loss_history.size(),
              result.loss_history.empty() ? 0.0 : result.loss_history.back());
  std::printf("wrote %s\n", ckpt.c_str());
  if (result.diverged) return 3;
  return 0;
}

int run_eval(const ExperimentConfig& cfg, const std::string& checkpoint_path,
             std::optional<int> depth_override, const std::string& out_dir) {
  const TabularMdp mdp = build_cliff_mdp(cfg.environment, cfg.gamma);
  BellNetModel model = load_checkpoint(checkpoint_path);
  const SolverReport star = optimal_values(mdp);
  if (!(star.residual < 1e-10)) {
    throw numeric_error("eval: reference values did not converge");
  }
  const QBarSampling sampling =
      cfg.train.q_bar_sampling.value_or(default_q_bar_sampling(mdp));
  std::mt19937_64 rng(derive_seed(cfg.train.seed, {0xE7A1}));
  const Vector q_bar = sample_q_bar(sampling, mdp.num_pairs(), rng);
  ForwardOptions options;
  options.depth = depth_override;
  const ForwardResult fwd = forward(model, mdp, q_bar, options);
  std::printf("nerr=%.10e depth=%d\n", nerr(fwd.q_hat, star.q),
              depth_override.value_or(model.depth()));
  if (!out_dir.empty()) {
    const Policy pi = extract_deterministic_policy(fwd.pi_hat);
    const Matrix q_mat = unvec(fwd.q_hat, mdp.num_states(), mdp.num_actions());
    write_policy_csv(out_dir, "eval", cfg.environment, pi.actions(),
                     q_mat.rowwise().maxCoeff());
    std::printf("wrote %s\n", (fs::path(out_dir) / "policy_eval.csv").c_str());
  }
  return 0;
}

int run_sweep(const ExperimentConfig& cfg_in, const std::string& kind_name,
              const std::string& out_override) {
  ExperimentConfig cfg = cfg_in;
  if (!out_override.empty()) cfg.output_dir = out_override;
  SweepKind kind;
  std::vector<ResultRow> rows;
  if (kind_name == "depth") {
    kind = SweepKind::Depth;
    rows = run_depth_sweep(cfg);
  } else if (kind_name == "order") {
    kind = SweepKind::Order;
    rows = run_order_sweep(cfg);
  } else if (kind_name == "transfer") {
    kind = SweepKind::Transfer;
    rows = run_transfer(cfg);
  } else {
    throw config_error("sweep: unknown kind \"" + kind_name + "\"");
  }
  ExperimentConfig defaults = cfg;
  apply_sweep_defaults(defaults, kind);
  write_sweep_csvs(cfg.output_dir, sweep_prefix(kind), defaults.sweep.values,
                   method_labels(defaults, kind), rows);
  write_policy_outputs(cfg, kind, cfg.output_dir);
  double total_ms = 0.0;
  for (const auto& row : rows) total_ms += row.wall_time_ms;
  std::printf("%zu result rows in %.1f s; outputs in %s/\n", rows.size(), total_ms / 1e3,
              cfg.output_dir.c_str());
  return 0;
}

int run_export(const ExperimentConfig& cfg, bool mirrored, const std::string& out_dir) {
  GridSpec spec = mirrored ? mirror_spec(cfg.environment) : cfg.environment;
  const TabularMdp mdp = build_cliff_mdp(spec, cfg.gamma);
  fs::create_directories(out_dir);
  const fs::path path = fs::path(out_dir) / (mirrored ? "mdp_mirrored.json" : "mdp.json");
  save_mdp(mdp, path.string());
  std::printf("wrote %s (%d states, %d actions)\n", path.c_str(), mdp.num_states(),
              mdp.num_actions());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tabular dynamic programming, graph-filter policy evaluation, and BellNet"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "experiment config JSON");
    cmd->add_option("--seed", seed, "override train.seed");
    cmd->add_option("--out", out_dir, "output directory");
  };

  auto* solve = app.add_subcommand("solve", "run a classical solver on an MDP file");
  std::string mdp_path, method = "exact";
  int steps = 100, eval_steps = 10;
  solve->add_option("mdp", mdp_path, "MDP JSON file")->required();
  solve->add_option("--method", method, "value-iteration|policy-iteration|exact");
  solve->add_option("--steps", steps, "iterations (improvement rounds for policy-iteration)");
  solve->add_option("--eval-steps", eval_steps, "evaluation steps per policy-iteration round");
  std::string solve_out;
  solve->add_option("--out", solve_out, "output directory for solution.csv");

  auto* train_cmd = app.add_subcommand("train", "train BellNet, write a checkpoint");
  add_common(train_cmd);

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on an environment");
  std::string checkpoint_path;
  std::optional<int> depth_override;
  eval_cmd->add_option("checkpoint", checkpoint_path, "model checkpoint JSON")->required();
  add_common(eval_cmd);
  eval_cmd->add_option("--depth", depth_override, "inference depth (weight-shared only)");

  auto* sweep_cmd = app.add_subcommand("sweep", "run an experiment sweep");
  std::string sweep_kind;
  sweep_cmd->add_option("kind", sweep_kind, "depth|order|transfer")->required();
  add_common(sweep_cmd);

  auto* export_cmd = app.add_subcommand("export-mdp", "write the environment as MDP JSON");
  bool mirrored = false;
  add_common(export_cmd);
  export_cmd->add_flag("--mirror", mirrored, "export the mirrored environment");

  CLI11_PARSE(app, argc, argv);

  try {
    if (solve->parsed()) {
      return run_solve(mdp_path, method, steps, eval_steps, solve_out);
    }
    ExperimentConfig cfg = load_config_or_default(config_path);
    apply_seed_override(cfg, seed);
    if (train_cmd->parsed()) return run_train(cfg, out_dir);
    if (eval_cmd->parsed()) return run_eval(cfg, checkpoint_path, depth_override, out_dir);
    if (sweep_cmd->parsed()) return run_sweep(cfg, sweep_kind, out_dir);
    if (export_cmd->parsed()) return run_export(cfg, mirrored, out_dir);
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const numeric_error& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
