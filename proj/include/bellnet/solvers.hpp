#pragma once

#include <utility>

#include "bellnet/errors.hpp"
#include "bellnet/mdp.hpp"

namespace bellnet {

/// Outcome of a (possibly truncated) dynamic-programming run.
/// residual is the sup-norm Bellman optimality residual of q.
struct SolverReport {
  Vector q;
  Policy policy;
  double residual = 0.0;
  int iterations_used = 0;
};

/// k applications of the Bellman backup starting from q0, i.e.
/// sum_{j=0}^{k-1} gamma^j P_pi^j r + gamma^k P_pi^k q0. k = 0 returns q0.
inline Vector policy_evaluation_iterative(const Matrix& p_pi, const Vector& r,
                                          double gamma, int steps, Vector q0) {
  if (steps < 0) {
    throw std::invalid_argument("policy_evaluation_iterative: steps must be >= 0");
  }
  for (int i = 0; i < steps; ++i) {
    q0 = bellman_backup(q0, p_pi, r, gamma);
  }
  return q0;
}

/// Exact policy evaluation: solves (I - gamma P_pi) q = r by dense LU with
/// iterative refinement until the Bellman residual is below 1e-10.
inline Vector policy_evaluation_exact(const Matrix& p_pi, const Vector& r,
                                      double gamma) {
  if (p_pi.rows() != p_pi.cols() || r.size() != p_pi.rows()) {
    throw std::invalid_argument("policy_evaluation_exact: dimension mismatch");
  }
  if (!(gamma >= 0.0 && gamma < 1.0)) {
    throw std::invalid_argument("policy_evaluation_exact: gamma must lie in [0, 1)");
  }
  const Eigen::Index n = p_pi.rows();
  const Matrix system = Matrix::Identity(n, n) - gamma * p_pi;
  const Eigen::PartialPivLU<Matrix> lu(system);
  Vector q = lu.solve(r);
  // One refinement pass normally lands far below the contract; the loop
  // guards pathological conditioning.
  double residual = (q - r - gamma * (p_pi * q)).lpNorm<Eigen::Infinity>();
  for (int pass = 0; pass < 3 && residual > 0.5e-10; ++pass) {
    q += lu.solve(r - system * q);
    residual = (q - r - gamma * (p_pi * q)).lpNorm<Eigen::Infinity>();
  }
  if (!(residual < 1e-10)) {
    throw numeric_error("policy_evaluation_exact: residual " + std::to_string(residual) +
                        " exceeds 1e-10 (singular or ill-conditioned system)");
  }
  return q;
}

/// Truncated policy iteration: starting from the greedy policy of q0,
/// improve_steps rounds of [eval_steps Bellman backups, then greedy
/// improvement]. Each evaluation is warm-started from the previous q unless
/// warm_start is false (then it restarts from zero).
inline SolverReport policy_iteration(const TabularMdp& mdp, int eval_steps,
                                     int improve_steps, const Vector& q0,
                                     bool warm_start = true) {
  if (eval_steps < 1 || improve_steps < 1) {
    throw std::invalid_argument("policy_iteration: eval_steps and improve_steps must be >= 1");
  }
  if (q0.size() != mdp.num_pairs()) {
    throw std::invalid_argument("policy_iteration: q0 has wrong length");
  }
  const Vector& r = mdp.reward_vector();
  Policy pi = greedy_policy(unvec(q0, mdp.num_states(), mdp.num_actions()));
  Vector q = q0;
  for (int l = 0; l < improve_steps; ++l) {
    const Matrix p_pi = policy_transition(mdp, pi);
    Vector start = warm_start ? q : Vector::Zero(mdp.num_pairs());
    q = policy_evaluation_iterative(p_pi, r, mdp.discount(), eval_steps, std::move(start));
    pi = greedy_policy(unvec(q, mdp.num_states(), mdp.num_actions()));
  }
  const double residual =
      (q - bellman_optimality_backup(q, mdp)).lpNorm<Eigen::Infinity>();
  return SolverReport{std::move(q), std::move(pi), residual, improve_steps};
}

/// Value iteration: steps applications of the Bellman optimality backup.
inline SolverReport value_iteration(const TabularMdp& mdp, int steps, Vector q0) {
  if (steps < 1) {
    throw std::invalid_argument("value_iteration: steps must be >= 1");
  }
  if (q0.size() != mdp.num_pairs()) {
    throw std::invalid_argument("value_iteration: q0 has wrong length");
  }
  for (int l = 0; l < steps; ++l) {
    q0 = bellman_optimality_backup(q0, mdp);
  }
  Policy pi = greedy_policy(unvec(q0, mdp.num_states(), mdp.num_actions()));
  const double residual =
      (q0 - bellman_optimality_backup(q0, mdp)).lpNorm<Eigen::Infinity>();
  return SolverReport{std::move(q0), std::move(pi), residual, steps};
}

/// Converged optimal values: exact policy iteration until the optimality
/// residual drops below residual_tol (default 1e-10) or max_iterations is hit.
inline SolverReport optimal_values(const TabularMdp& mdp, double residual_tol = 1e-10,
                                   int max_iterations = 10000) {
  const Vector& r = mdp.reward_vector();
  Vector q = Vector::Zero(mdp.num_pairs());
  Policy pi = greedy_policy(unvec(q, mdp.num_states(), mdp.num_actions()));
  double residual = (q - bellman_optimality_backup(q, mdp)).lpNorm<Eigen::Infinity>();
  int iterations = 0;
  while (residual >= residual_tol && iterations < max_iterations) {
    const Matrix p_pi = policy_transition(mdp, pi);
    q = policy_evaluation_exact(p_pi, r, mdp.discount());
    pi = greedy_policy(unvec(q, mdp.num_states(), mdp.num_actions()));
    residual = (q - bellman_optimality_backup(q, mdp)).lpNorm<Eigen::Infinity>();
    ++iterations;
  }
  return SolverReport{std::move(q), std::move(pi), residual, iterations};
}

}  // namespace bellnet
