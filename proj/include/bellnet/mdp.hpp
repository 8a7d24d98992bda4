#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace bellnet {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Tolerance applied when validating that transition/policy rows sum to one.
inline constexpr double kRowSumTolerance = 1e-12;

/// Flat state-action index. The convention is idx(s, a) = a * |S| + s,
/// which matches column-stacking vectorization of |S| x |A| matrices:
/// unvec(q)(s, a) == q(flat_index(s, a, S)).
inline int flat_index(int state, int action, int num_states) {
  if (num_states <= 0) {
    throw std::invalid_argument("flat_index: num_states must be positive");
  }
  if (state < 0 || state >= num_states || action < 0) {
    throw std::invalid_argument("flat_index: index out of range");
  }
  return action * num_states + state;
}

/// Inverse of flat_index: returns (state, action).
inline std::pair<int, int> split_index(int index, int num_states) {
  if (num_states <= 0 || index < 0) {
    throw std::invalid_argument("split_index: index out of range");
  }
  return {index % num_states, index / num_states};
}

/// Reshapes a length-|S||A| vector into the |S| x |A| matrix it stacks.
inline Matrix unvec(const Vector& q, int num_states, int num_actions) {
  if (q.size() != static_cast<Eigen::Index>(num_states) * num_actions) {
    throw std::invalid_argument("unvec: vector length does not match |S||A|");
  }
  return Eigen::Map<const Matrix>(q.data(), num_states, num_actions);
}

/// Column-stacks an |S| x |A| matrix into a length-|S||A| vector.
inline Vector vec(const Matrix& m) {
  return Eigen::Map<const Vector>(m.data(), m.size());
}

/// Finite MDP with a known row-stochastic transition matrix.
///
/// transition has one row per state-action pair (ordered by flat_index) and
/// one column per next state; reward is |S| x |A|. Rows of the transition
/// matrix are validated against kRowSumTolerance and then renormalized, so
/// stored rows sum to one up to roundoff. Instances are immutable.
class TabularMdp {
 public:
  TabularMdp(Matrix transition, Matrix reward, double discount)
      : num_states_(static_cast<int>(reward.rows())),
        num_actions_(static_cast<int>(reward.cols())),
        transition_(std::move(transition)),
        reward_(std::move(reward)),
        discount_(discount) {
    if (num_states_ <= 0 || num_actions_ <= 0) {
      throw std::invalid_argument("TabularMdp: reward matrix must be nonempty");
    }
    if (!reward_.allFinite()) {
      throw std::invalid_argument("TabularMdp: rewards must be finite");
    }
    if (!(discount_ >= 0.0 && discount_ < 1.0)) {
      throw std::invalid_argument("TabularMdp: discount must lie in [0, 1)");
    }
    const Eigen::Index pairs =
        static_cast<Eigen::Index>(num_states_) * num_actions_;
    if (transition_.rows() != pairs || transition_.cols() != num_states_) {
      throw std::invalid_argument("TabularMdp: transition must be |S||A| x |S|");
    }
    for (Eigen::Index i = 0; i < transition_.rows(); ++i) {
      if ((transition_.row(i).array() < 0.0).any()) {
        throw std::invalid_argument("TabularMdp: negative transition probability in row " +
                                    std::to_string(i));
      }
      const double sum = transition_.row(i).sum();
      if (std::abs(sum - 1.0) > kRowSumTolerance) {
        throw std::invalid_argument("TabularMdp: transition row " + std::to_string(i) +
                                    " sums to " + std::to_string(sum));
      }
      transition_.row(i) /= sum;
    }
    reward_vector_ = vec(reward_);
  }

  int num_states() const { return num_states_; }
  int num_actions() const { return num_actions_; }
  int num_pairs() const { return num_states_ * num_actions_; }
  const Matrix& transition() const { return transition_; }
  const Matrix& reward() const { return reward_; }
  /// vec(R): rewards indexed by flat state-action index.
  const Vector& reward_vector() const { return reward_vector_; }
  double discount() const { return discount_; }

 private:
  int num_states_;
  int num_actions_;
  Matrix transition_;
  Matrix reward_;
  Vector reward_vector_;
  double discount_;
};

/// Row-stochastic |S| x |A| action-selection matrix. Immutable.
class Policy {
 public:
  explicit Policy(Matrix probs) : probs_(std::move(probs)) {
    if (probs_.rows() <= 0 || probs_.cols() <= 0) {
      throw std::invalid_argument("Policy: matrix must be nonempty");
    }
    for (Eigen::Index s = 0; s < probs_.rows(); ++s) {
      if ((probs_.row(s).array() < 0.0).any()) {
        throw std::invalid_argument("Policy: negative probability in row " +
                                    std::to_string(s));
      }
      const double sum = probs_.row(s).sum();
      if (std::abs(sum - 1.0) > kRowSumTolerance) {
        throw std::invalid_argument("Policy: row " + std::to_string(s) +
                                    " sums to " + std::to_string(sum));
      }
    }
  }

  static Policy uniform(int num_states, int num_actions) {
    return Policy(Matrix::Constant(num_states, num_actions, 1.0 / num_actions));
  }

  static Policy deterministic(const std::vector<int>& actions, int num_actions) {
    Matrix probs = Matrix::Zero(static_cast<Eigen::Index>(actions.size()), num_actions);
    for (std::size_t s = 0; s < actions.size(); ++s) {
      if (actions[s] < 0 || actions[s] >= num_actions) {
        throw std::invalid_argument("Policy::deterministic: action out of range");
      }
      probs(static_cast<Eigen::Index>(s), actions[s]) = 1.0;
    }
    return Policy(std::move(probs));
  }

  const Matrix& probs() const { return probs_; }
  int num_states() const { return static_cast<int>(probs_.rows()); }
  int num_actions() const { return static_cast<int>(probs_.cols()); }

  bool is_deterministic() const {
    for (Eigen::Index s = 0; s < probs_.rows(); ++s) {
      int ones = 0;
      for (Eigen::Index a = 0; a < probs_.cols(); ++a) {
        if (probs_(s, a) == 1.0) ++ones;
        else if (probs_(s, a) != 0.0) return false;
      }
      if (ones != 1) return false;
    }
    return true;
  }

  /// Argmax action per state (ties to the lowest index).
  std::vector<int> actions() const {
    std::vector<int> out(probs_.rows());
    for (Eigen::Index s = 0; s < probs_.rows(); ++s) {
      int best = 0;
      for (Eigen::Index a = 1; a < probs_.cols(); ++a) {
        if (probs_(s, a) > probs_(s, best)) best = static_cast<int>(a);
      }
      out[s] = best;
    }
    return out;
  }

 private:
  Matrix probs_;
};

/// Policy-conditioned transition matrix over state-action pairs,
/// P_pi = P (I (.) Pi^T)^T with (.) the Khatri-Rao product. Entrywise:
/// out(idx(s,a), idx(s',a')) = P(idx(s,a), s') * Pi(s', a').
/// This is the adjacency matrix of the MDP's weighted digraph under pi.
inline Matrix policy_transition(const TabularMdp& mdp, const Policy& pi) {
  if (pi.num_states() != mdp.num_states() || pi.num_actions() != mdp.num_actions()) {
    throw std::invalid_argument("policy_transition: policy shape mismatch");
  }
  const int num_states = mdp.num_states();
  const int num_actions = mdp.num_actions();
  Matrix out(mdp.num_pairs(), mdp.num_pairs());
  for (int a = 0; a < num_actions; ++a) {
    out.middleCols(static_cast<Eigen::Index>(a) * num_states, num_states).noalias() =
        mdp.transition() * pi.probs().col(a).asDiagonal();
  }
  return out;
}

/// One Bellman backup for a fixed policy: r + gamma * P_pi * q.
inline Vector bellman_backup(const Vector& q, const Matrix& p_pi, const Vector& r,
                             double gamma) {
  if (p_pi.rows() != p_pi.cols() || q.size() != p_pi.cols() || r.size() != p_pi.rows()) {
    throw std::invalid_argument("bellman_backup: dimension mismatch");
  }
  return r + gamma * (p_pi * q);
}

/// Greedy (deterministic) policy: one-hot argmax per row, ties to the
/// lowest action index.
inline Policy greedy_policy(const Matrix& q_values) {
  if (q_values.hasNaN()) {
    throw std::invalid_argument("greedy_policy: NaN in action values");
  }
  Matrix probs = Matrix::Zero(q_values.rows(), q_values.cols());
  for (Eigen::Index s = 0; s < q_values.rows(); ++s) {
    Eigen::Index best = 0;
    for (Eigen::Index a = 1; a < q_values.cols(); ++a) {
      if (q_values(s, a) > q_values(s, best)) best = a;
    }
    probs(s, best) = 1.0;
  }
  return Policy(std::move(probs));
}

/// Row-wise tempered softmax policy, computed with row-max subtraction so
/// that entries of any magnitude stay overflow-safe.
inline Policy softmax_policy(const Matrix& q_values, double tau) {
  if (!(tau > 0.0)) {
    throw std::invalid_argument("softmax_policy: temperature must be positive");
  }
  if (!q_values.allFinite()) {
    throw std::invalid_argument("softmax_policy: action values must be finite");
  }
  Matrix probs(q_values.rows(), q_values.cols());
  for (Eigen::Index s = 0; s < q_values.rows(); ++s) {
    const double row_max = q_values.row(s).maxCoeff();
    probs.row(s) = ((q_values.row(s).array() - row_max) / tau).exp();
    probs.row(s) /= probs.row(s).sum();
  }
  return Policy(std::move(probs));
}

/// One Bellman optimality backup: r + gamma * P * v with v the row-wise
/// max of unvec(q).
inline Vector bellman_optimality_backup(const Vector& q, const TabularMdp& mdp) {
  if (q.size() != mdp.num_pairs()) {
    throw std::invalid_argument("bellman_optimality_backup: dimension mismatch");
  }
  const Vector v = Eigen::Map<const Matrix>(q.data(), mdp.num_states(), mdp.num_actions())
                       .rowwise()
                       .maxCoeff();
  return mdp.reward_vector() + mdp.discount() * (mdp.transition() * v);
}

}  // namespace bellnet
