#pragma once

#include <algorithm>
#include <set>
#include <utility>
#include <vector>

#include "bellnet/mdp.hpp"

namespace bellnet {

/// Grid actions, in flat-index order.
enum GridAction : int { kUp = 0, kDown = 1, kLeft = 2, kRight = 3 };
inline constexpr int kNumGridActions = 4;

/// Layout of a cliff-walking grid. Defaults describe the standard 4 x 12
/// board: cliff band along the bottom row between start (3,0) and goal
/// (3,11), -1 per move, -100 for stepping into the cliff, no slip.
struct GridSpec {
  int rows = 4;
  int cols = 12;
  std::vector<std::pair<int, int>> cliff_cells = {
      {3, 1}, {3, 2}, {3, 3}, {3, 4}, {3, 5},
      {3, 6}, {3, 7}, {3, 8}, {3, 9}, {3, 10}};
  std::pair<int, int> start = {3, 0};
  std::pair<int, int> goal = {3, 11};
  double step_reward = -1.0;
  double cliff_reward = -100.0;
  double slip_probability = 0.0;

  int cell_index(int row, int col) const { return row * cols + col; }
  int num_cells() const { return rows * cols; }
  bool is_cliff(int row, int col) const {
    return std::find(cliff_cells.begin(), cliff_cells.end(),
                     std::make_pair(row, col)) != cliff_cells.end();
  }
};

inline void validate_spec(const GridSpec& spec) {
  auto in_bounds = [&](const std::pair<int, int>& cell) {
    return cell.first >= 0 && cell.first < spec.rows && cell.second >= 0 &&
           cell.second < spec.cols;
  };
  if (spec.rows < 1 || spec.cols < 1) {
    throw std::invalid_argument("GridSpec: grid must be nonempty");
  }
  if (!in_bounds(spec.start) || !in_bounds(spec.goal)) {
    throw std::invalid_argument("GridSpec: start/goal out of bounds");
  }
  if (spec.start == spec.goal) {
    throw std::invalid_argument("GridSpec: start must differ from goal");
  }
  if (!(spec.slip_probability >= 0.0 && spec.slip_probability < 1.0)) {
    throw std::invalid_argument("GridSpec: slip probability must lie in [0, 1)");
  }
  std::set<std::pair<int, int>> seen;
  for (const auto& cell : spec.cliff_cells) {
    if (!in_bounds(cell)) {
      throw std::invalid_argument("GridSpec: cliff cell out of bounds");
    }
    if (cell == spec.start || cell == spec.goal) {
      throw std::invalid_argument("GridSpec: start/goal cannot be cliff cells");
    }
    if (!seen.insert(cell).second) {
      throw std::invalid_argument("GridSpec: duplicate cliff cell");
    }
  }
}

/// Builds the tabular MDP of a cliff grid. State id = row * cols + col;
/// actions {up, down, left, right}. Moving off-grid keeps the agent in
/// place; stepping into a cliff cell costs cliff_reward and lands on start;
/// the goal is absorbing with reward 0; every other move costs step_reward.
/// With slip probability p the intended direction happens with probability
/// 1 - p and each perpendicular direction with p / 2 (rewards are the
/// corresponding expectations).
inline TabularMdp build_cliff_mdp(const GridSpec& spec, double gamma) {
  validate_spec(spec);
  const int num_states = spec.num_cells();
  const int num_actions = kNumGridActions;
  const int start_state = spec.cell_index(spec.start.first, spec.start.second);
  const int goal_state = spec.cell_index(spec.goal.first, spec.goal.second);

  constexpr int kRowDelta[] = {-1, 1, 0, 0};
  constexpr int kColDelta[] = {0, 0, -1, 1};
  constexpr int kPerpendicular[][2] = {{kLeft, kRight}, {kLeft, kRight},
                                       {kUp, kDown}, {kUp, kDown}};

  Matrix transition = Matrix::Zero(static_cast<Eigen::Index>(num_states) * num_actions,
                                   num_states);
  Matrix reward = Matrix::Zero(num_states, num_actions);

  for (int row = 0; row < spec.rows; ++row) {
    for (int col = 0; col < spec.cols; ++col) {
      const int state = spec.cell_index(row, col);
      for (int action = 0; action < num_actions; ++action) {
        const int sa = flat_index(state, action, num_states);
        if (state == goal_state) {
          transition(sa, goal_state) = 1.0;
          continue;
        }
        const double p = spec.slip_probability;
        const std::pair<int, double> outcomes[] = {
            {action, 1.0 - p},
            {kPerpendicular[action][0], p / 2.0},
            {kPerpendicular[action][1], p / 2.0}};
        for (const auto& [direction, weight] : outcomes) {
          if (weight == 0.0) continue;
          int next_row = row + kRowDelta[direction];
          int next_col = col + kColDelta[direction];
          if (next_row < 0 || next_row >= spec.rows || next_col < 0 ||
              next_col >= spec.cols) {
            next_row = row;
            next_col = col;
          }
          if (spec.is_cliff(next_row, next_col)) {
            transition(sa, start_state) += weight;
            reward(state, action) += weight * spec.cliff_reward;
          } else {
            transition(sa, spec.cell_index(next_row, next_col)) += weight;
            reward(state, action) += weight * spec.step_reward;
          }
        }
      }
    }
  }
  return TabularMdp(std::move(transition), std::move(reward), gamma);
}

/// Reflects the layout across the grid's vertical center line
/// (col -> cols - 1 - col). Applying it twice restores the input.
inline GridSpec mirror_spec(GridSpec spec) {
  auto mirror = [&](std::pair<int, int> cell) {
    return std::make_pair(cell.first, spec.cols - 1 - cell.second);
  };
  for (auto& cell : spec.cliff_cells) cell = mirror(cell);
  spec.start = mirror(spec.start);
  spec.goal = mirror(spec.goal);
  return spec;
}

/// State relabeling induced by mirror_spec: sigma(s) is the mirrored cell.
inline std::vector<int> mirror_state_permutation(const GridSpec& spec) {
  std::vector<int> sigma(static_cast<std::size_t>(spec.num_cells()));
  for (int row = 0; row < spec.rows; ++row) {
    for (int col = 0; col < spec.cols; ++col) {
      sigma[static_cast<std::size_t>(spec.cell_index(row, col))] =
          spec.cell_index(row, spec.cols - 1 - col);
    }
  }
  return sigma;
}

/// Mirroring swaps the horizontal actions.
inline int mirror_action(int action) {
  if (action == kLeft) return kRight;
  if (action == kRight) return kLeft;
  return action;
}

/// Flat state-action relabeling induced by mirror_spec, suitable for
/// permuting value vectors: out[idx(s, a)] = idx(sigma(s), mirror(a)).
inline std::vector<int> mirror_state_action_permutation(const GridSpec& spec) {
  const auto sigma = mirror_state_permutation(spec);
  const int num_states = spec.num_cells();
  std::vector<int> out(static_cast<std::size_t>(num_states) * kNumGridActions);
  for (int s = 0; s < num_states; ++s) {
    for (int a = 0; a < kNumGridActions; ++a) {
      out[static_cast<std::size_t>(flat_index(s, a, num_states))] =
          flat_index(sigma[static_cast<std::size_t>(s)], mirror_action(a), num_states);
    }
  }
  return out;
}

}  // namespace bellnet
