#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "bellnet/errors.hpp"
#include "bellnet/model.hpp"

namespace bellnet {

enum class OptimizerKind { GradientDescent, Momentum, Adam };

/// Distribution of the random value-function initializations q_bar.
struct QBarSampling {
  enum class Kind { Zero, Uniform, Gaussian };
  Kind kind = Kind::Uniform;
  double low = 0.0;
  double high = 1.0;
  double mean = 0.0;
  double stddev = 1.0;

  static QBarSampling zero() { return {Kind::Zero, 0, 0, 0, 0}; }
  static QBarSampling uniform(double low, double high) {
    return {Kind::Uniform, low, high, 0, 0};
  }
  static QBarSampling gaussian(double mean, double stddev) {
    return {Kind::Gaussian, 0, 0, mean, stddev};
  }
};

/// Default q_bar distribution: uniform over the zero-anchored immediate
/// reward range [min(R, 0), max(R, 0)]. Random initializations at the scale
/// of one-step returns exercise arbitrary starting policies while keeping
/// the inputs comparable to attainable values.
inline QBarSampling default_q_bar_sampling(const TabularMdp& mdp) {
  return QBarSampling::uniform(std::min(mdp.reward().minCoeff(), 0.0),
                               std::max(mdp.reward().maxCoeff(), 0.0));
}

inline Vector sample_q_bar(const QBarSampling& sampling, int size, std::mt19937_64& rng) {
  Vector q(size);
  switch (sampling.kind) {
    case QBarSampling::Kind::Zero:
      q.setZero();
      break;
    case QBarSampling::Kind::Uniform: {
      if (!(sampling.high > sampling.low)) {
        q.setConstant(sampling.low);
        break;
      }
      std::uniform_real_distribution<double> dist(sampling.low, sampling.high);
      for (int i = 0; i < size; ++i) q(i) = dist(rng);
      break;
    }
    case QBarSampling::Kind::Gaussian: {
      std::normal_distribution<double> dist(sampling.mean, sampling.stddev);
      for (int i = 0; i < size; ++i) q(i) = dist(rng);
      break;
    }
  }
  return q;
}

/// Coefficient initialization: classical discount powers, classical plus
/// Gaussian noise, or fully random taps.
struct InitSpec {
  enum class Kind { Classical, ClassicalNoise, Random };
  Kind kind = Kind::ClassicalNoise;
  double sigma = 0.01;
};

struct TrainConfig {
  int iterations = 2000;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::Adam;
  /// Defaults to default_q_bar_sampling(mdp) when unset.
  std::optional<QBarSampling> q_bar_sampling;
  bool resample_each_step = true;
  std::uint64_t seed = 0;
  /// Discount used on the target side of the Bellman error; defaults to the
  /// MDP's own discount when unset.
  std::optional<double> target_gamma;
  InitSpec init;
  double divergence_threshold = 1e12;
};

/// Per-parameter-set loss gradients; gradients.size() equals
/// model.parameter_sets(), so a weight-shared model carries one vector
/// holding the sum of its per-layer gradients.
struct GradientBundle {
  std::vector<Vector> gradients;
  double loss = 0.0;
};

/// Builds a fresh model for training on an MDP with discount gamma.
inline BellNetModel initial_model(int depth, int filter_order, double temperature,
                                  bool weight_shared, double gamma, const InitSpec& init,
                                  std::mt19937_64& rng) {
  const int taps = filter_order + 2;
  auto draw = [&](Vector base) {
    std::normal_distribution<double> noise(0.0, 1.0);
    switch (init.kind) {
      case InitSpec::Kind::Classical:
        break;
      case InitSpec::Kind::ClassicalNoise:
        for (int j = 0; j < taps; ++j) base(j) += init.sigma * noise(rng);
        break;
      case InitSpec::Kind::Random:
        for (int j = 0; j < taps; ++j) base(j) = 0.5 * noise(rng);
        break;
    }
    return FilterCoeffs(std::move(base));
  };
  const Vector classical = FilterCoeffs::classical(gamma, filter_order).h;
  if (weight_shared) {
    return BellNetModel(depth, draw(classical), temperature);
  }
  std::vector<FilterCoeffs> layers;
  layers.reserve(static_cast<std::size_t>(depth));
  for (int l = 0; l < depth; ++l) layers.push_back(draw(classical));
  return BellNetModel(std::move(layers), temperature);
}

/// Target side of the Bellman-error objective: r + gamma P_{pi_n} q_n.
/// The inputs come from a forward pass under the current coefficients and are
/// treated as constants; no gradient flows through this expression.
inline Vector bellman_target(const TabularMdp& mdp, const Vector& q_n, const Policy& pi_n,
                             double gamma) {
  if (q_n.size() != mdp.num_pairs()) {
    throw std::invalid_argument("bellman_target: q has wrong length");
  }
  return mdp.reward_vector() + gamma * (policy_transition(mdp, pi_n) * q_n);
}

namespace detail {

/// Row-wise softmax vector-Jacobian product: given probabilities p (rows of
/// pi) and upstream gradient g_pi, returns dL/dz where p = softmax(z) row by
/// row, using J = diag(p) - p p^T.
inline Matrix softmax_vjp(const Matrix& pi, const Matrix& g_pi) {
  Matrix out(pi.rows(), pi.cols());
  for (Eigen::Index s = 0; s < pi.rows(); ++s) {
    const double dot = pi.row(s).dot(g_pi.row(s));
    out.row(s) = pi.row(s).array() * (g_pi.row(s).array() - dot);
  }
  return out;
}

/// Accumulates the policy gradient induced by a dL/dP_pi outer product
/// g v^T. Since P_pi(sa, s'a') = P(sa, s') Pi(s', a'),
///   dL/dPi(s', a') += (P^T g)(s') * v(idx(s', a')).
inline void add_policy_grad(Matrix& g_pi, const Matrix& p_base, const Vector& g,
                            const Vector& v) {
  const Vector w = p_base.transpose() * g;
  const auto v_mat = Eigen::Map<const Matrix>(v.data(), g_pi.rows(), g_pi.cols());
  g_pi.array() += v_mat.array().colwise() * w.array();
}

struct LayerCache {
  Matrix p_pi;
  std::vector<Vector> reward_powers;  // P_pi^j r, j = 0..K
  std::vector<Vector> bias_powers;    // P_pi^j q_l, j = 0..K+1
  Matrix pi_out;                      // policy emitted by the layer
};

}  // namespace detail

/// Squared-norm Bellman-error loss ||target - Phi(q_bar; H)||_2^2 and its
/// reverse-mode gradient with respect to every filter coefficient. The
/// backward pass chains through the softmax Jacobians (scaled by 1/tau) and
/// the K+1 matrix-vector stages of each layer's filter; the target is a
/// constant. Differentiable mode only (softmax, never hard-max).
inline GradientBundle loss_and_gradient(const BellNetModel& model, const TabularMdp& mdp,
                                        const Vector& q_bar, const Vector& target) {
  const int n = mdp.num_pairs();
  if (q_bar.size() != n || target.size() != n) {
    throw std::invalid_argument("loss_and_gradient: dimension mismatch");
  }
  const int depth = model.depth();
  const int order = model.filter_order();
  const int num_states = mdp.num_states();
  const int num_actions = mdp.num_actions();
  const double tau = model.temperature();
  const Vector& r = mdp.reward_vector();

  // Forward pass, caching everything the backward chains need.
  std::vector<detail::LayerCache> cache(static_cast<std::size_t>(depth));
  Vector q = q_bar;
  Matrix pi = softmax_policy(unvec(q_bar, num_states, num_actions), tau).probs();
  for (int l = 0; l < depth; ++l) {
    detail::LayerCache& c = cache[static_cast<std::size_t>(l)];
    c.p_pi = policy_transition(mdp, Policy(pi));
    c.reward_powers.resize(static_cast<std::size_t>(order) + 1);
    c.reward_powers[0] = r;
    for (int j = 1; j <= order; ++j) {
      c.reward_powers[static_cast<std::size_t>(j)].noalias() =
          c.p_pi * c.reward_powers[static_cast<std::size_t>(j - 1)];
    }
    c.bias_powers.resize(static_cast<std::size_t>(order) + 2);
    c.bias_powers[0] = q;
    for (int j = 1; j <= order + 1; ++j) {
      c.bias_powers[static_cast<std::size_t>(j)].noalias() =
          c.p_pi * c.bias_powers[static_cast<std::size_t>(j - 1)];
    }
    const Vector& h = model.layer(l).h;
    Vector q_next = h(0) * r;
    for (int j = 1; j <= order; ++j) {
      q_next += h(j) * c.reward_powers[static_cast<std::size_t>(j)];
    }
    q_next += h(order + 1) * c.bias_powers[static_cast<std::size_t>(order) + 1];
    if (!q_next.allFinite()) {
      throw numeric_error("loss_and_gradient: overflow in layer " + std::to_string(l));
    }
    c.pi_out = softmax_policy(unvec(q_next, num_states, num_actions), tau).probs();
    q = std::move(q_next);
    pi = c.pi_out;
  }

  GradientBundle bundle;
  bundle.loss = (target - q).squaredNorm();
  if (!std::isfinite(bundle.loss)) {
    throw numeric_error("loss_and_gradient: non-finite loss at the output layer");
  }
  bundle.gradients.assign(static_cast<std::size_t>(model.parameter_sets()),
                          Vector::Zero(order + 2));

  // Reverse pass.
  Vector u = 2.0 * (q - target);                         // dL/dq^(l+1)
  Matrix g_pi = Matrix::Zero(num_states, num_actions);   // dL/dPi^(l+1)
  for (int l = depth - 1; l >= 0; --l) {
    const detail::LayerCache& c = cache[static_cast<std::size_t>(l)];
    const Vector& h = model.layer(l).h;
    // Pi^(l+1) = softmax(q^(l+1) / tau): fold its upstream gradient into u.
    u += vec(detail::softmax_vjp(c.pi_out, g_pi)) / tau;

    Vector& grad = bundle.gradients[model.weight_shared() ? 0 : static_cast<std::size_t>(l)];
    for (int j = 0; j <= order; ++j) {
      grad(j) += u.dot(c.reward_powers[static_cast<std::size_t>(j)]);
    }
    grad(order + 1) += u.dot(c.bias_powers[static_cast<std::size_t>(order) + 1]);

    // Chain dL/dP_pi back to the layer's input policy and input values.
    Matrix g_pi_in = Matrix::Zero(num_states, num_actions);
    Vector g = h(order + 1) * u;
    for (int j = order + 1; j >= 1; --j) {
      detail::add_policy_grad(g_pi_in, mdp.transition(), g,
                              c.bias_powers[static_cast<std::size_t>(j - 1)]);
      g = c.p_pi.transpose() * g;
    }
    Vector g_q = std::move(g);  // dL/dq^(l) through the bias branch
    g = h(order) * u;
    for (int j = order; j >= 1; --j) {
      detail::add_policy_grad(g_pi_in, mdp.transition(), g,
                              c.reward_powers[static_cast<std::size_t>(j - 1)]);
      g = c.p_pi.transpose() * g + h(j - 1) * u;
    }
    u = std::move(g_q);
    g_pi = std::move(g_pi_in);
  }
  // What remains in (u, g_pi) is the gradient w.r.t. q_bar and its softmax
  // policy; both are inputs, not parameters.
  return bundle;
}

/// Central finite differences of the same loss, coefficient by coefficient.
/// Evaluates the loss through the plain forward pass only, so it stays
/// independent of the reverse-mode code it is used to check.
inline std::vector<Vector> finite_difference_gradient(const BellNetModel& model,
                                                      const TabularMdp& mdp,
                                                      const Vector& q_bar,
                                                      const Vector& target,
                                                      double step = 1e-6) {
  auto loss_at = [&](const BellNetModel& m) {
    return (target - forward(m, mdp, q_bar).q_hat).squaredNorm();
  };
  std::vector<Vector> grads;
  for (int i = 0; i < model.parameter_sets(); ++i) {
    const Eigen::Index taps = model.parameter_set(i).h.size();
    Vector g(taps);
    for (Eigen::Index j = 0; j < taps; ++j) {
      BellNetModel plus = model;
      plus.parameter_set(i).h(j) += step;
      BellNetModel minus = model;
      minus.parameter_set(i).h(j) -= step;
      g(j) = (loss_at(plus) - loss_at(minus)) / (2.0 * step);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

struct TrainResult {
  BellNetModel model;
  std::vector<double> loss_history;
  bool diverged = false;
};

/// Bellman-error training (one gradient step per iteration): sample or reuse
/// q_bar, run the net under the current coefficients to form the constant
/// target r + gamma P_{Pi_n} q_n, then descend the gradient of
/// ||target - Phi(q_bar; H)||^2. Aborts (diverged = true) when the loss
/// leaves the finite/threshold range, returning the history up to failure.
inline TrainResult train(BellNetModel model, const TabularMdp& mdp,
                         const TrainConfig& config) {
  if (config.iterations < 1) {
    throw std::invalid_argument("train: iterations must be >= 1");
  }
  if (!(config.learning_rate >= 0.0)) {
    throw std::invalid_argument("train: learning rate must be nonnegative");
  }
  const double gamma = config.target_gamma.value_or(mdp.discount());
  const QBarSampling sampling =
      config.q_bar_sampling.value_or(default_q_bar_sampling(mdp));
  std::mt19937_64 rng(config.seed);
  const int sets = model.parameter_sets();
  const Eigen::Index taps = model.parameter_set(0).h.size();

  std::vector<Vector> m1(static_cast<std::size_t>(sets), Vector::Zero(taps));
  std::vector<Vector> m2(static_cast<std::size_t>(sets), Vector::Zero(taps));
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kAdamEps = 1e-8, kMomentum = 0.9;

  std::vector<double> history;
  history.reserve(static_cast<std::size_t>(config.iterations));
  Vector q_bar;
  for (int it = 0; it < config.iterations; ++it) {
    if (it == 0 || config.resample_each_step) {
      q_bar = sample_q_bar(sampling, mdp.num_pairs(), rng);
    }
    GradientBundle bundle;
    try {
      const ForwardResult current = forward(model, mdp, q_bar);
      if (!current.q_hat.allFinite()) {
        return TrainResult{std::move(model), std::move(history), true};
      }
      const Vector target = bellman_target(mdp, current.q_hat, current.pi_hat, gamma);
      bundle = loss_and_gradient(model, mdp, q_bar, target);
    } catch (const numeric_error&) {
      return TrainResult{std::move(model), std::move(history), true};
    } catch (const std::invalid_argument&) {
      // Value-dependent guards (softmax finiteness) fire on overflow once the
      // dimensions have been proven consistent by a completed iteration.
      if (it == 0) throw;
      return TrainResult{std::move(model), std::move(history), true};
    }
    history.push_back(bundle.loss);
    if (!std::isfinite(bundle.loss) || bundle.loss > config.divergence_threshold) {
      return TrainResult{std::move(model), std::move(history), true};
    }

    for (int i = 0; i < sets; ++i) {
      Vector& h = model.parameter_set(i).h;
      const Vector& g = bundle.gradients[static_cast<std::size_t>(i)];
      switch (config.optimizer) {
        case OptimizerKind::GradientDescent:
          h -= config.learning_rate * g;
          break;
        case OptimizerKind::Momentum: {
          Vector& v = m1[static_cast<std::size_t>(i)];
          v = kMomentum * v + g;
          h -= config.learning_rate * v;
          break;
        }
        case OptimizerKind::Adam: {
          Vector& m = m1[static_cast<std::size_t>(i)];
          Vector& v = m2[static_cast<std::size_t>(i)];
          m = kBeta1 * m + (1.0 - kBeta1) * g;
          v = kBeta2 * v + (1.0 - kBeta2) * g.cwiseProduct(g);
          const double bias1 = 1.0 - std::pow(kBeta1, it + 1);
          const double bias2 = 1.0 - std::pow(kBeta2, it + 1);
          h -= (config.learning_rate * (m / bias1).array() /
                ((v / bias2).array().sqrt() + kAdamEps))
                   .matrix();
          break;
        }
      }
    }
    for (int i = 0; i < sets; ++i) {
      if (!model.parameter_set(i).h.allFinite()) {
        return TrainResult{std::move(model), std::move(history), true};
      }
    }
  }
  return TrainResult{std::move(model), std::move(history), false};
}

}  // namespace bellnet
