#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bellnet/errors.hpp"
#include "bellnet/gridworld.hpp"
#include "bellnet/model.hpp"
#include "bellnet/solvers.hpp"
#include "bellnet/training.hpp"

namespace bellnet {

/// Normalized error between value vectors:
/// || q_hat/||q_hat||_2 - q_star/||q_star||_2 ||_2^2.
/// Invariant to positive rescaling of either argument.
inline double nerr(const Vector& q_hat, const Vector& q_star) {
  if (q_hat.size() != q_star.size()) {
    throw std::invalid_argument("nerr: length mismatch");
  }
  const double a = q_hat.norm();
  const double b = q_star.norm();
  if (a == 0.0 || b == 0.0) {
    throw std::invalid_argument("nerr: zero-norm input");
  }
  return (q_hat / a - q_star / b).squaredNorm();
}

/// Percentile with linear interpolation between closest ranks (the
/// inclusive method): p in [0, 100] over a nonempty sample.
inline double percentile(std::vector<double> values, double p) {
  if (values.empty()) {
    throw std::invalid_argument("percentile: empty sample");
  }
  std::sort(values.begin(), values.end());
  const double rank = (p / 100.0) * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(rank);
  if (lo + 1 >= values.size()) return values.back();
  const double frac = rank - static_cast<double>(lo);
  return values[lo] + frac * (values[lo + 1] - values[lo]);
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Deterministic per-task seed derivation (realization / sweep-point tags).
inline std::uint64_t derive_seed(std::uint64_t base,
                                 std::initializer_list<std::uint64_t> tags) {
  std::uint64_t h = splitmix64(base);
  for (std::uint64_t t : tags) h = splitmix64(h ^ t);
  return h;
}

struct ModelSettings {
  int depth = 4;
  int filter_order = 10;
  double temperature = 0.25;
  bool weight_shared = true;
};

struct SweepSettings {
  std::string variable = "depth";  // "depth" or "filter_order"
  std::vector<int> values;         // x-axis grid
  std::vector<int> filter_orders;  // depth & transfer sweeps: one curve per K
  std::vector<int> depths;         // order sweep: one curve pair per depth
  bool include_unshared = true;    // depth sweep: also train distinct-coefficient models
};

struct BaselineSettings {
  bool val_it = true;
  std::vector<int> pol_it_eval_steps = {10};
};

struct ExperimentConfig {
  GridSpec environment;
  double gamma = 0.99;
  ModelSettings model;
  TrainConfig train;
  SweepSettings sweep;
  BaselineSettings baselines;
  int realizations = 15;
  std::optional<GridSpec> transfer_target;
  std::string output_dir = "out";
};

enum class SweepKind { Depth, Order, Transfer };

inline std::string sweep_prefix(SweepKind kind) {
  switch (kind) {
    case SweepKind::Depth: return "depth";
    case SweepKind::Order: return "order";
    case SweepKind::Transfer: return "transfer";
  }
  return "sweep";
}

/// Fills empty sweep/baseline fields with the grids of the corresponding
/// figure: depth 2..10 with K in {5, 10}; filter order {1, 5, 10, 15} with
/// depths {5, 10, 15}; transfer depths 2..8 with K in {3, 5, 10}.
inline void apply_sweep_defaults(ExperimentConfig& cfg, SweepKind kind) {
  switch (kind) {
    case SweepKind::Depth:
      cfg.sweep.variable = "depth";
      if (cfg.sweep.values.empty()) cfg.sweep.values = {2, 3, 4, 5, 6, 7, 8, 9, 10};
      if (cfg.sweep.filter_orders.empty()) cfg.sweep.filter_orders = {5, 10};
      if (cfg.baselines.pol_it_eval_steps.empty()) cfg.baselines.pol_it_eval_steps = {10};
      break;
    case SweepKind::Order:
      cfg.sweep.variable = "filter_order";
      if (cfg.sweep.values.empty()) cfg.sweep.values = {1, 5, 10, 15};
      if (cfg.sweep.depths.empty()) cfg.sweep.depths = {5, 10, 15};
      break;
    case SweepKind::Transfer:
      cfg.sweep.variable = "depth";
      if (cfg.sweep.values.empty()) cfg.sweep.values = {2, 3, 4, 5, 6, 7, 8};
      if (cfg.sweep.filter_orders.empty()) cfg.sweep.filter_orders = {3, 5, 10};
      if (cfg.baselines.pol_it_eval_steps.empty()) cfg.baselines.pol_it_eval_steps = {5, 10};
      cfg.sweep.include_unshared = false;
      break;
  }
}

/// One evaluated (method, sweep point, realization). nerr is NaN when the
/// training for this point diverged; wall_time_ms is informational and never
/// serialized.
struct ResultRow {
  std::string method;
  int sweep_value = 0;
  std::uint64_t seed = 0;
  double nerr = 0.0;
  double wall_time_ms = 0.0;
};

/// Ordered method labels of a sweep, matching the figure legends.
inline std::vector<std::string> method_labels(const ExperimentConfig& cfg, SweepKind kind) {
  std::vector<std::string> labels;
  if (kind == SweepKind::Order) {
    for (int d : cfg.sweep.depths) labels.push_back("Pol-it-" + std::to_string(d));
    for (int d : cfg.sweep.depths) labels.push_back("BN-WS-" + std::to_string(d));
    return labels;
  }
  if (cfg.baselines.val_it) labels.push_back("Val-it");
  for (int e : cfg.baselines.pol_it_eval_steps) labels.push_back("Pol-it-" + std::to_string(e));
  if (kind == SweepKind::Depth && cfg.sweep.include_unshared) {
    for (int k : cfg.sweep.filter_orders) labels.push_back("BN-" + std::to_string(k));
  }
  for (int k : cfg.sweep.filter_orders) labels.push_back("BN-WS-" + std::to_string(k));
  return labels;
}

namespace detail {

inline double elapsed_ms(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
      .count();
}

constexpr std::uint64_t kRealizationTag = 0xA11CE;
constexpr std::uint64_t kInitTag = 0x1B17;
constexpr std::uint64_t kTrainTag = 0x7EA1;
constexpr std::uint64_t kReferenceTag = 0xF16;

/// Trains one model on train_mdp and scores it on eval_mdp against q_star.
inline ResultRow train_and_eval(const TabularMdp& train_mdp, const TabularMdp& eval_mdp,
                                const ExperimentConfig& cfg, int depth, int filter_order,
                                bool weight_shared, const std::string& label,
                                int sweep_value, std::uint64_t realization_seed,
                                std::uint64_t point_seed, const Vector& q_bar,
                                const Vector& q_star) {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 init_rng(derive_seed(point_seed, {kInitTag}));
  BellNetModel model = initial_model(depth, filter_order, cfg.model.temperature,
                                     weight_shared, train_mdp.discount(), cfg.train.init,
                                     init_rng);
  TrainConfig train_cfg = cfg.train;
  train_cfg.seed = derive_seed(point_seed, {kTrainTag});
  TrainResult result = train(std::move(model), train_mdp, train_cfg);
  double err = std::numeric_limits<double>::quiet_NaN();
  if (!result.diverged) {
    err = nerr(forward(result.model, eval_mdp, q_bar).q_hat, q_star);
  }
  return ResultRow{label, sweep_value, realization_seed, err, elapsed_ms(t0)};
}

inline SolverReport checked_optimal_values(const TabularMdp& mdp) {
  SolverReport star = optimal_values(mdp);
  if (!(star.residual < 1e-10)) {
    throw numeric_error("sweep: optimal values did not converge (residual " +
                        std::to_string(star.residual) + ")");
  }
  return star;
}

}  // namespace detail

/// Test case 1: error versus number of unrolling layers. Per realization and
/// depth d, runs value iteration (d backups), policy iteration (d improvement
/// rounds, configured evaluation steps) and freshly trained BN / BN-WS models
/// of depth d for each configured filter order, all from the realization's
/// random q_bar.
inline std::vector<ResultRow> run_depth_sweep(const ExperimentConfig& config) {
  ExperimentConfig cfg = config;
  apply_sweep_defaults(cfg, SweepKind::Depth);
  const TabularMdp mdp = build_cliff_mdp(cfg.environment, cfg.gamma);
  const SolverReport star = detail::checked_optimal_values(mdp);
  const QBarSampling sampling =
      cfg.train.q_bar_sampling.value_or(default_q_bar_sampling(mdp));

  std::vector<ResultRow> rows;
  for (int i = 0; i < cfg.realizations; ++i) {
    const std::uint64_t rseed =
        derive_seed(cfg.train.seed, {detail::kRealizationTag, static_cast<std::uint64_t>(i)});
    std::mt19937_64 rng(rseed);
    const Vector q_bar = sample_q_bar(sampling, mdp.num_pairs(), rng);
    for (int d : cfg.sweep.values) {
      if (cfg.baselines.val_it) {
        const auto t0 = std::chrono::steady_clock::now();
        const double err = nerr(value_iteration(mdp, d, q_bar).q, star.q);
        rows.push_back({"Val-it", d, rseed, err, detail::elapsed_ms(t0)});
      }
      for (int e : cfg.baselines.pol_it_eval_steps) {
        const auto t0 = std::chrono::steady_clock::now();
        const double err = nerr(policy_iteration(mdp, e, d, q_bar).q, star.q);
        rows.push_back({"Pol-it-" + std::to_string(e), d, rseed, err, detail::elapsed_ms(t0)});
      }
      for (int k : cfg.sweep.filter_orders) {
        const std::uint64_t point = derive_seed(
            rseed, {static_cast<std::uint64_t>(d), static_cast<std::uint64_t>(k)});
        if (cfg.sweep.include_unshared) {
          rows.push_back(detail::train_and_eval(mdp, mdp, cfg, d, k, false,
                                                "BN-" + std::to_string(k), d, rseed,
                                                derive_seed(point, {0}), q_bar, star.q));
        }
        rows.push_back(detail::train_and_eval(mdp, mdp, cfg, d, k, true,
                                              "BN-WS-" + std::to_string(k), d, rseed,
                                              derive_seed(point, {1}), q_bar, star.q));
      }
    }
  }
  return rows;
}

/// Test case 2: error versus filter order K. Policy iteration's evaluation
/// step count tracks K; the number of improvement rounds (and BN-WS layers)
/// comes from sweep.depths.
inline std::vector<ResultRow> run_order_sweep(const ExperimentConfig& config) {
  ExperimentConfig cfg = config;
  apply_sweep_defaults(cfg, SweepKind::Order);
  const TabularMdp mdp = build_cliff_mdp(cfg.environment, cfg.gamma);
  const SolverReport star = detail::checked_optimal_values(mdp);
  const QBarSampling sampling =
      cfg.train.q_bar_sampling.value_or(default_q_bar_sampling(mdp));

  std::vector<ResultRow> rows;
  for (int i = 0; i < cfg.realizations; ++i) {
    const std::uint64_t rseed =
        derive_seed(cfg.train.seed, {detail::kRealizationTag, static_cast<std::uint64_t>(i)});
    std::mt19937_64 rng(rseed);
    const Vector q_bar = sample_q_bar(sampling, mdp.num_pairs(), rng);
    for (int k : cfg.sweep.values) {
      for (int d : cfg.sweep.depths) {
        {
          const auto t0 = std::chrono::steady_clock::now();
          const double err = nerr(policy_iteration(mdp, k, d, q_bar).q, star.q);
          rows.push_back({"Pol-it-" + std::to_string(d), k, rseed, err, detail::elapsed_ms(t0)});
        }
        const std::uint64_t point = derive_seed(
            rseed, {static_cast<std::uint64_t>(d), static_cast<std::uint64_t>(k)});
        rows.push_back(detail::train_and_eval(mdp, mdp, cfg, d, k, true,
                                              "BN-WS-" + std::to_string(d), k, rseed,
                                              derive_seed(point, {1}), q_bar, star.q));
      }
    }
  }
  return rows;
}

/// Test case 3: transferability. BN-WS models are trained on the source
/// environment and scored, without retraining, on the target environment's
/// optimal values; the classical baselines run natively on the target.
inline std::vector<ResultRow> run_transfer(const ExperimentConfig& config) {
  ExperimentConfig cfg = config;
  apply_sweep_defaults(cfg, SweepKind::Transfer);
  if (!cfg.transfer_target.has_value()) {
    throw config_error("run_transfer: config has no transfer target");
  }
  const TabularMdp source = build_cliff_mdp(cfg.environment, cfg.gamma);
  const TabularMdp target = build_cliff_mdp(*cfg.transfer_target, cfg.gamma);
  const SolverReport star = detail::checked_optimal_values(target);
  const QBarSampling sampling =
      cfg.train.q_bar_sampling.value_or(default_q_bar_sampling(target));

  std::vector<ResultRow> rows;
  for (int i = 0; i < cfg.realizations; ++i) {
    const std::uint64_t rseed =
        derive_seed(cfg.train.seed, {detail::kRealizationTag, static_cast<std::uint64_t>(i)});
    std::mt19937_64 rng(rseed);
    const Vector q_bar = sample_q_bar(sampling, target.num_pairs(), rng);
    for (int d : cfg.sweep.values) {
      if (cfg.baselines.val_it) {
        const auto t0 = std::chrono::steady_clock::now();
        const double err = nerr(value_iteration(target, d, q_bar).q, star.q);
        rows.push_back({"Val-it", d, rseed, err, detail::elapsed_ms(t0)});
      }
      for (int e : cfg.baselines.pol_it_eval_steps) {
        const auto t0 = std::chrono::steady_clock::now();
        const double err = nerr(policy_iteration(target, e, d, q_bar).q, star.q);
        rows.push_back({"Pol-it-" + std::to_string(e), d, rseed, err, detail::elapsed_ms(t0)});
      }
      for (int k : cfg.sweep.filter_orders) {
        const std::uint64_t point = derive_seed(
            rseed, {static_cast<std::uint64_t>(d), static_cast<std::uint64_t>(k)});
        rows.push_back(detail::train_and_eval(source, target, cfg, d, k, true,
                                              "BN-WS-" + std::to_string(k), d, rseed,
                                              derive_seed(point, {1}), q_bar, star.q));
      }
    }
  }
  return rows;
}

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

/// Writes the per-sweep CSV family into dir:
///   <prefix>_med_err.csv / _p25.csv / _p75.csv  (xaxis column + one column
///   per method label, mirroring the plotted data layout),
///   <prefix>_stats.csv   (long form: one row per method/value/statistic,
///   with the count of diverged realizations),
///   <prefix>_results.csv (raw rows: method, sweep_value, seed, nerr).
inline void write_sweep_csvs(const std::string& dir, const std::string& prefix,
                             const std::vector<int>& xs,
                             const std::vector<std::string>& methods,
                             const std::vector<ResultRow>& rows) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  auto collect = [&](const std::string& method, int x) {
    std::vector<double> values;
    int failed = 0;
    for (const ResultRow& row : rows) {
      if (row.method != method || row.sweep_value != x) continue;
      if (std::isnan(row.nerr)) {
        ++failed;
      } else {
        values.push_back(row.nerr);
      }
    }
    return std::make_pair(values, failed);
  };

  const double stats_p[] = {50.0, 25.0, 75.0};
  const char* stats_name[] = {"median", "p25", "p75"};
  const char* file_tag[] = {"med_err", "p25", "p75"};

  for (int s = 0; s < 3; ++s) {
    std::ofstream out(fs::path(dir) / (prefix + "_" + file_tag[s] + ".csv"));
    out << "xaxis";
    for (const auto& m : methods) out << "," << m;
    out << "\n";
    for (int x : xs) {
      out << x;
      for (const auto& m : methods) {
        const auto values = collect(m, x).first;
        out << ","
            << (values.empty() ? "nan" : detail::format_double(percentile(values, stats_p[s])));
      }
      out << "\n";
    }
  }

  {
    std::ofstream out(fs::path(dir) / (prefix + "_stats.csv"));
    out << "method,sweep_value,statistic,nerr,failed_realizations\n";
    for (const auto& m : methods) {
      for (int x : xs) {
        const auto [values, failed] = collect(m, x);
        for (int s = 0; s < 3; ++s) {
          out << m << "," << x << "," << stats_name[s] << ","
              << (values.empty() ? "nan" : detail::format_double(percentile(values, stats_p[s])))
              << "," << failed << "\n";
        }
      }
    }
  }

  {
    std::ofstream out(fs::path(dir) / (prefix + "_results.csv"));
    out << "method,sweep_value,seed,nerr\n";
    for (const ResultRow& row : rows) {
      out << row.method << "," << row.sweep_value << "," << row.seed << ","
          << (std::isnan(row.nerr) ? "nan" : detail::format_double(row.nerr)) << "\n";
    }
  }
}

/// policy_<name>.csv: per-state greedy action and state value, enough to
/// redraw the arrow/heatmap picture externally.
inline void write_policy_csv(const std::string& dir, const std::string& name,
                             const GridSpec& spec, const std::vector<int>& actions,
                             const Vector& state_values) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::ofstream out(fs::path(dir) / ("policy_" + name + ".csv"));
  out << "state,row,col,action,value\n";
  for (int row = 0; row < spec.rows; ++row) {
    for (int col = 0; col < spec.cols; ++col) {
      const int s = spec.cell_index(row, col);
      out << s << "," << row << "," << col << "," << actions[static_cast<std::size_t>(s)]
          << "," << detail::format_double(state_values(s)) << "\n";
    }
  }
}

/// Trains the reference model from the config's model section and emits the
/// policy CSVs (source, plus target for transfer sweeps). Returns the trained
/// model for further inspection.
inline BellNetModel write_policy_outputs(const ExperimentConfig& config, SweepKind kind,
                                         const std::string& dir) {
  ExperimentConfig cfg = config;
  apply_sweep_defaults(cfg, kind);
  const TabularMdp source = build_cliff_mdp(cfg.environment, cfg.gamma);
  const QBarSampling sampling =
      cfg.train.q_bar_sampling.value_or(default_q_bar_sampling(source));

  std::mt19937_64 init_rng(derive_seed(cfg.train.seed, {detail::kReferenceTag, 0}));
  BellNetModel model =
      initial_model(cfg.model.depth, cfg.model.filter_order, cfg.model.temperature,
                    cfg.model.weight_shared, source.discount(), cfg.train.init, init_rng);
  TrainConfig train_cfg = cfg.train;
  train_cfg.seed = derive_seed(cfg.train.seed, {detail::kReferenceTag, 1});
  TrainResult trained = train(std::move(model), source, train_cfg);

  std::mt19937_64 eval_rng(derive_seed(cfg.train.seed, {detail::kReferenceTag, 2}));
  auto emit = [&](const TabularMdp& mdp, const GridSpec& spec, const std::string& name) {
    const Vector q_bar = sample_q_bar(sampling, mdp.num_pairs(), eval_rng);
    const ForwardResult fwd = forward(trained.model, mdp, q_bar);
    const Policy pi = extract_deterministic_policy(fwd.pi_hat);
    const Matrix q_mat = unvec(fwd.q_hat, mdp.num_states(), mdp.num_actions());
    const Vector values = q_mat.rowwise().maxCoeff();
    write_policy_csv(dir, name, spec, pi.actions(), values);
  };
  emit(source, cfg.environment, "source");
  if (kind == SweepKind::Transfer && cfg.transfer_target.has_value()) {
    const TabularMdp target = build_cliff_mdp(*cfg.transfer_target, cfg.gamma);
    emit(target, *cfg.transfer_target, "target");
  }
  return trained.model;
}

}  // namespace bellnet
