#pragma once

#include <random>

#include "bellnet/mdp.hpp"

namespace bellnet::testing {

/// Random dense MDP with strictly positive transition probabilities and
/// rewards uniform in [reward_lo, reward_hi].
inline TabularMdp random_mdp(int num_states, int num_actions, double gamma,
                             std::mt19937_64& rng, double reward_lo = 0.0,
                             double reward_hi = 1.0) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Matrix transition(num_states * num_actions, num_states);
  for (Eigen::Index i = 0; i < transition.rows(); ++i) {
    double sum = 0.0;
    for (int s = 0; s < num_states; ++s) {
      transition(i, s) = unit(rng) + 1e-3;
      sum += transition(i, s);
    }
    transition.row(i) /= sum;
  }
  Matrix reward(num_states, num_actions);
  std::uniform_real_distribution<double> rdist(reward_lo, reward_hi);
  for (int s = 0; s < num_states; ++s) {
    for (int a = 0; a < num_actions; ++a) reward(s, a) = rdist(rng);
  }
  return TabularMdp(std::move(transition), std::move(reward), gamma);
}

inline Policy random_policy(int num_states, int num_actions, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Matrix probs(num_states, num_actions);
  for (int s = 0; s < num_states; ++s) {
    double sum = 0.0;
    for (int a = 0; a < num_actions; ++a) {
      probs(s, a) = unit(rng) + 1e-3;
      sum += probs(s, a);
    }
    probs.row(s) /= sum;
  }
  return Policy(std::move(probs));
}

inline Vector random_vector(Eigen::Index n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = dist(rng);
  return v;
}

}  // namespace bellnet::testing
