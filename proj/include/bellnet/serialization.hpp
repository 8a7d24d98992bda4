#pragma once

#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "bellnet/errors.hpp"
#include "bellnet/experiments.hpp"
#include "bellnet/gridworld.hpp"
#include "bellnet/model.hpp"
#include "bellnet/training.hpp"

namespace bellnet {

using json = nlohmann::json;

namespace detail {

inline json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw config_error("cannot open " + path);
  }
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw config_error(path + ": " + e.what());
  }
  return j;
}

inline void save_json_file(const json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw config_error("cannot write " + path);
  }
  out << j.dump(2) << "\n";
}

inline void check_keys(const json& j, const std::vector<std::string>& allowed,
                       const std::string& section) {
  if (!j.is_object()) {
    throw config_error(section + ": expected a JSON object");
  }
  for (const auto& item : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end()) {
      throw config_error(section + ": unknown key \"" + item.key() + "\"");
    }
  }
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback, const std::string& section) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw config_error(section + "." + key + ": " + e.what());
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// MDP file format

/// {num_states, num_actions, discount, transition (|S||A| rows ordered by
/// the flat index), reward (|S| rows x |A| columns)}.
inline json mdp_to_json(const TabularMdp& mdp) {
  json transition = json::array();
  for (Eigen::Index i = 0; i < mdp.transition().rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < mdp.transition().cols(); ++j) {
      row.push_back(mdp.transition()(i, j));
    }
    transition.push_back(std::move(row));
  }
  json reward = json::array();
  for (int s = 0; s < mdp.num_states(); ++s) {
    json row = json::array();
    for (int a = 0; a < mdp.num_actions(); ++a) {
      row.push_back(mdp.reward()(s, a));
    }
    reward.push_back(std::move(row));
  }
  return json{{"num_states", mdp.num_states()},
              {"num_actions", mdp.num_actions()},
              {"discount", mdp.discount()},
              {"transition", std::move(transition)},
              {"reward", std::move(reward)}};
}

inline TabularMdp mdp_from_json(const json& j) {
  detail::check_keys(j, {"num_states", "num_actions", "discount", "transition", "reward"},
                     "mdp");
  for (const char* key : {"num_states", "num_actions", "discount", "transition", "reward"}) {
    if (!j.contains(key)) throw config_error(std::string("mdp: missing key \"") + key + "\"");
  }
  const int num_states = j.at("num_states").get<int>();
  const int num_actions = j.at("num_actions").get<int>();
  const double discount = j.at("discount").get<double>();
  if (num_states <= 0 || num_actions <= 0) {
    throw config_error("mdp: num_states/num_actions must be positive");
  }
  const auto& jt = j.at("transition");
  const auto& jr = j.at("reward");
  if (!jt.is_array() ||
      jt.size() != static_cast<std::size_t>(num_states) * static_cast<std::size_t>(num_actions)) {
    throw config_error("mdp: transition must have |S||A| rows");
  }
  if (!jr.is_array() || jr.size() != static_cast<std::size_t>(num_states)) {
    throw config_error("mdp: reward must have |S| rows");
  }
  Matrix transition(static_cast<Eigen::Index>(num_states) * num_actions, num_states);
  for (std::size_t i = 0; i < jt.size(); ++i) {
    if (!jt[i].is_array() || jt[i].size() != static_cast<std::size_t>(num_states)) {
      throw config_error("mdp: transition row " + std::to_string(i) + " has wrong length");
    }
    for (std::size_t k = 0; k < jt[i].size(); ++k) {
      transition(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
          jt[i][k].get<double>();
    }
  }
  Matrix reward(num_states, num_actions);
  for (std::size_t s = 0; s < jr.size(); ++s) {
    if (!jr[s].is_array() || jr[s].size() != static_cast<std::size_t>(num_actions)) {
      throw config_error("mdp: reward row " + std::to_string(s) + " has wrong length");
    }
    for (std::size_t a = 0; a < jr[s].size(); ++a) {
      reward(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a)) =
          jr[s][a].get<double>();
    }
  }
  try {
    return TabularMdp(std::move(transition), std::move(reward), discount);
  } catch (const std::invalid_argument& e) {
    throw config_error(std::string("mdp: ") + e.what());
  }
}

inline void save_mdp(const TabularMdp& mdp, const std::string& path) {
  detail::save_json_file(mdp_to_json(mdp), path);
}

inline TabularMdp load_mdp(const std::string& path) {
  return mdp_from_json(detail::load_json_file(path));
}

// ---------------------------------------------------------------------------
// Model checkpoints

/// {filter_order, temperature, weight_shared, layers}. Weight-shared models
/// store their shared taps once per layer so the depth round-trips; loading
/// takes layers[0] as the shared vector. Serialized values round-trip
/// bit-exactly (shortest-representation decimal output).
inline json checkpoint_to_json(const BellNetModel& model) {
  json layers = json::array();
  for (int l = 0; l < model.depth(); ++l) {
    const Vector& h = model.layer(l).h;
    json taps = json::array();
    for (Eigen::Index j = 0; j < h.size(); ++j) taps.push_back(h(j));
    layers.push_back(std::move(taps));
  }
  return json{{"filter_order", model.filter_order()},
              {"temperature", model.temperature()},
              {"weight_shared", model.weight_shared()},
              {"layers", std::move(layers)}};
}

inline BellNetModel checkpoint_from_json(const json& j) {
  detail::check_keys(j, {"filter_order", "temperature", "weight_shared", "layers"},
                     "checkpoint");
  for (const char* key : {"filter_order", "temperature", "weight_shared", "layers"}) {
    if (!j.contains(key)) {
      throw config_error(std::string("checkpoint: missing key \"") + key + "\"");
    }
  }
  const int order = j.at("filter_order").get<int>();
  const double temperature = j.at("temperature").get<double>();
  const bool shared = j.at("weight_shared").get<bool>();
  const auto& jl = j.at("layers");
  if (!jl.is_array() || jl.empty()) {
    throw config_error("checkpoint: layers must be a nonempty array");
  }
  std::vector<FilterCoeffs> layers;
  for (std::size_t l = 0; l < jl.size(); ++l) {
    if (!jl[l].is_array() || jl[l].size() != static_cast<std::size_t>(order) + 2) {
      throw config_error("checkpoint: layer " + std::to_string(l) +
                         " must hold filter_order + 2 taps");
    }
    Vector h(static_cast<Eigen::Index>(order) + 2);
    for (std::size_t t = 0; t < jl[l].size(); ++t) {
      h(static_cast<Eigen::Index>(t)) = jl[l][t].get<double>();
    }
    layers.emplace_back(std::move(h));
  }
  try {
    if (shared) {
      return BellNetModel(static_cast<int>(jl.size()), std::move(layers.front()), temperature);
    }
    return BellNetModel(std::move(layers), temperature);
  } catch (const std::invalid_argument& e) {
    throw config_error(std::string("checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const BellNetModel& model, const std::string& path) {
  detail::save_json_file(checkpoint_to_json(model), path);
}

inline BellNetModel load_checkpoint(const std::string& path) {
  return checkpoint_from_json(detail::load_json_file(path));
}

// ---------------------------------------------------------------------------
// Experiment config

inline json grid_spec_to_json(const GridSpec& spec) {
  json cliffs = json::array();
  for (const auto& [row, col] : spec.cliff_cells) cliffs.push_back(json::array({row, col}));
  return json{{"rows", spec.rows},
              {"cols", spec.cols},
              {"cliff_cells", std::move(cliffs)},
              {"start", json::array({spec.start.first, spec.start.second})},
              {"goal", json::array({spec.goal.first, spec.goal.second})},
              {"step_reward", spec.step_reward},
              {"cliff_reward", spec.cliff_reward},
              {"slip_probability", spec.slip_probability}};
}

inline GridSpec grid_spec_from_json(const json& j, const std::string& section) {
  detail::check_keys(j,
                     {"rows", "cols", "cliff_cells", "start", "goal", "step_reward",
                      "cliff_reward", "slip_probability", "gamma"},
                     section);
  GridSpec spec;
  spec.rows = detail::get_or(j, "rows", spec.rows, section);
  spec.cols = detail::get_or(j, "cols", spec.cols, section);
  auto parse_cell = [&](const json& cell, const char* what) {
    if (!cell.is_array() || cell.size() != 2) {
      throw config_error(section + "." + what + ": expected [row, col]");
    }
    return std::make_pair(cell[0].get<int>(), cell[1].get<int>());
  };
  if (j.contains("cliff_cells")) {
    spec.cliff_cells.clear();
    for (const auto& cell : j.at("cliff_cells")) {
      spec.cliff_cells.push_back(parse_cell(cell, "cliff_cells"));
    }
  }
  if (j.contains("start")) spec.start = parse_cell(j.at("start"), "start");
  if (j.contains("goal")) spec.goal = parse_cell(j.at("goal"), "goal");
  spec.step_reward = detail::get_or(j, "step_reward", spec.step_reward, section);
  spec.cliff_reward = detail::get_or(j, "cliff_reward", spec.cliff_reward, section);
  spec.slip_probability =
      detail::get_or(j, "slip_probability", spec.slip_probability, section);
  try {
    validate_spec(spec);
  } catch (const std::invalid_argument& e) {
    throw config_error(section + ": " + e.what());
  }
  return spec;
}

inline QBarSampling q_bar_sampling_from_json(const json& j) {
  detail::check_keys(j, {"kind", "low", "high", "mean", "stddev"}, "train.q_bar_sampling");
  const std::string kind = detail::get_or<std::string>(j, "kind", "uniform", "train.q_bar_sampling");
  if (kind == "zero") return QBarSampling::zero();
  if (kind == "uniform") {
    return QBarSampling::uniform(detail::get_or(j, "low", 0.0, "train.q_bar_sampling"),
                                 detail::get_or(j, "high", 1.0, "train.q_bar_sampling"));
  }
  if (kind == "gaussian") {
    return QBarSampling::gaussian(detail::get_or(j, "mean", 0.0, "train.q_bar_sampling"),
                                  detail::get_or(j, "stddev", 1.0, "train.q_bar_sampling"));
  }
  throw config_error("train.q_bar_sampling.kind: expected zero|uniform|gaussian");
}

inline TrainConfig train_config_from_json(const json& j) {
  detail::check_keys(j,
                     {"iterations", "learning_rate", "optimizer", "q_bar_sampling",
                      "resample_each_step", "seed", "target_gamma", "init"},
                     "train");
  TrainConfig cfg;
  cfg.iterations = detail::get_or(j, "iterations", cfg.iterations, "train");
  cfg.learning_rate = detail::get_or(j, "learning_rate", cfg.learning_rate, "train");
  const std::string optimizer =
      detail::get_or<std::string>(j, "optimizer", "adam", "train");
  if (optimizer == "sgd") {
    cfg.optimizer = OptimizerKind::GradientDescent;
  } else if (optimizer == "momentum") {
    cfg.optimizer = OptimizerKind::Momentum;
  } else if (optimizer == "adam") {
    cfg.optimizer = OptimizerKind::Adam;
  } else {
    throw config_error("train.optimizer: expected sgd|momentum|adam");
  }
  if (j.contains("q_bar_sampling")) {
    cfg.q_bar_sampling = q_bar_sampling_from_json(j.at("q_bar_sampling"));
  }
  cfg.resample_each_step =
      detail::get_or(j, "resample_each_step", cfg.resample_each_step, "train");
  cfg.seed = detail::get_or<std::uint64_t>(j, "seed", cfg.seed, "train");
  if (j.contains("target_gamma")) {
    cfg.target_gamma = j.at("target_gamma").get<double>();
  }
  if (j.contains("init")) {
    const json& ji = j.at("init");
    detail::check_keys(ji, {"kind", "sigma"}, "train.init");
    const std::string kind =
        detail::get_or<std::string>(ji, "kind", "classical_noise", "train.init");
    if (kind == "classical") {
      cfg.init.kind = InitSpec::Kind::Classical;
    } else if (kind == "classical_noise") {
      cfg.init.kind = InitSpec::Kind::ClassicalNoise;
    } else if (kind == "random") {
      cfg.init.kind = InitSpec::Kind::Random;
    } else {
      throw config_error("train.init.kind: expected classical|classical_noise|random");
    }
    cfg.init.sigma = detail::get_or(ji, "sigma", cfg.init.sigma, "train.init");
  }
  if (cfg.iterations < 1) throw config_error("train.iterations: must be >= 1");
  if (!(cfg.learning_rate >= 0.0)) throw config_error("train.learning_rate: must be >= 0");
  return cfg;
}

inline ExperimentConfig experiment_config_from_json(const json& j) {
  detail::check_keys(j,
                     {"environment", "model", "train", "sweep", "baselines", "realizations",
                      "transfer", "output_dir"},
                     "config");
  ExperimentConfig cfg;
  if (j.contains("environment")) {
    cfg.environment = grid_spec_from_json(j.at("environment"), "environment");
    cfg.gamma = detail::get_or(j.at("environment"), "gamma", cfg.gamma, "environment");
  }
  if (!(cfg.gamma >= 0.0 && cfg.gamma < 1.0)) {
    throw config_error("environment.gamma: must lie in [0, 1)");
  }
  if (j.contains("model")) {
    const json& jm = j.at("model");
    detail::check_keys(jm, {"depth", "filter_order", "temperature", "weight_shared"}, "model");
    cfg.model.depth = detail::get_or(jm, "depth", cfg.model.depth, "model");
    cfg.model.filter_order =
        detail::get_or(jm, "filter_order", cfg.model.filter_order, "model");
    cfg.model.temperature =
        detail::get_or(jm, "temperature", cfg.model.temperature, "model");
    cfg.model.weight_shared =
        detail::get_or(jm, "weight_shared", cfg.model.weight_shared, "model");
    if (cfg.model.depth < 1) throw config_error("model.depth: must be >= 1");
    if (cfg.model.filter_order < 0) throw config_error("model.filter_order: must be >= 0");
    if (!(cfg.model.temperature > 0.0)) {
      throw config_error("model.temperature: must be positive");
    }
  }
  if (j.contains("train")) cfg.train = train_config_from_json(j.at("train"));
  if (j.contains("sweep")) {
    const json& js = j.at("sweep");
    detail::check_keys(js, {"variable", "values", "filter_orders", "depths", "include_unshared"},
                       "sweep");
    cfg.sweep.variable = detail::get_or<std::string>(js, "variable", cfg.sweep.variable, "sweep");
    cfg.sweep.values = detail::get_or(js, "values", cfg.sweep.values, "sweep");
    cfg.sweep.filter_orders =
        detail::get_or(js, "filter_orders", cfg.sweep.filter_orders, "sweep");
    cfg.sweep.depths = detail::get_or(js, "depths", cfg.sweep.depths, "sweep");
    cfg.sweep.include_unshared =
        detail::get_or(js, "include_unshared", cfg.sweep.include_unshared, "sweep");
    if (cfg.sweep.variable != "depth" && cfg.sweep.variable != "filter_order") {
      throw config_error("sweep.variable: expected depth|filter_order");
    }
    for (int v : cfg.sweep.values) {
      if (v < 1) throw config_error("sweep.values: entries must be positive");
    }
  }
  if (j.contains("baselines")) {
    const json& jb = j.at("baselines");
    detail::check_keys(jb, {"val_it", "pol_it_eval_steps"}, "baselines");
    cfg.baselines.val_it = detail::get_or(jb, "val_it", cfg.baselines.val_it, "baselines");
    cfg.baselines.pol_it_eval_steps =
        detail::get_or(jb, "pol_it_eval_steps", cfg.baselines.pol_it_eval_steps, "baselines");
  }
  cfg.realizations = detail::get_or(j, "realizations", cfg.realizations, "config");
  if (cfg.realizations < 1) throw config_error("realizations: must be >= 1");
  if (j.contains("transfer")) {
    const json& jt = j.at("transfer");
    detail::check_keys(jt, {"target"}, "transfer");
    if (!jt.contains("target")) throw config_error("transfer: missing target");
    cfg.transfer_target = grid_spec_from_json(jt.at("target"), "transfer.target");
  }
  cfg.output_dir = detail::get_or<std::string>(j, "output_dir", cfg.output_dir, "config");
  return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  return experiment_config_from_json(detail::load_json_file(path));
}

}  // namespace bellnet
