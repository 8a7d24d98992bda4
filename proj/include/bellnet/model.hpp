#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "bellnet/graph_filter.hpp"
#include "bellnet/mdp.hpp"

namespace bellnet {

/// Unrolled policy-iteration model: depth layers, each one a biased graph
/// filter on P_{pi^(l)} followed by a row-wise tempered softmax. In
/// weight-shared mode a single coefficient vector backs every layer, so the
/// model can later be run at any inference depth.
class BellNetModel {
 public:
  /// Weight-shared model: one coefficient vector reused by all layers.
  BellNetModel(int depth, FilterCoeffs shared, double temperature)
      : depth_(depth),
        filter_order_(shared.order()),
        temperature_(temperature),
        weight_shared_(true) {
    validate();
    coeffs_.push_back(std::move(shared));
  }

  /// Unshared model: one coefficient vector per layer.
  BellNetModel(std::vector<FilterCoeffs> layers, double temperature)
      : depth_(static_cast<int>(layers.size())),
        filter_order_(layers.empty() ? -1 : layers.front().order()),
        temperature_(temperature),
        weight_shared_(false),
        coeffs_(std::move(layers)) {
    validate();
    for (const FilterCoeffs& c : coeffs_) {
      if (c.order() != filter_order_) {
        throw std::invalid_argument("BellNetModel: layers must share the filter order");
      }
    }
  }

  /// Model whose taps are the discount powers gamma^j (the classical
  /// dynamic-programming coefficients).
  static BellNetModel classical(int depth, int filter_order, double gamma,
                                double temperature, bool weight_shared) {
    if (weight_shared) {
      return BellNetModel(depth, FilterCoeffs::classical(gamma, filter_order), temperature);
    }
    std::vector<FilterCoeffs> layers(
        static_cast<std::size_t>(depth > 0 ? depth : 0),
        FilterCoeffs::classical(gamma, filter_order));
    return BellNetModel(std::move(layers), temperature);
  }

  int depth() const { return depth_; }
  int filter_order() const { return filter_order_; }
  double temperature() const { return temperature_; }
  bool weight_shared() const { return weight_shared_; }

  /// Coefficients used by layer l (the shared vector when weight_shared).
  const FilterCoeffs& layer(int l) const {
    if (l < 0 || l >= depth_) {
      throw std::invalid_argument("BellNetModel::layer: index out of range");
    }
    return weight_shared_ ? coeffs_.front() : coeffs_[static_cast<std::size_t>(l)];
  }

  /// Number of independent coefficient vectors (1 when weight_shared).
  int parameter_sets() const { return static_cast<int>(coeffs_.size()); }
  const FilterCoeffs& parameter_set(int i) const { return coeffs_.at(static_cast<std::size_t>(i)); }
  FilterCoeffs& parameter_set(int i) { return coeffs_.at(static_cast<std::size_t>(i)); }

 private:
  void validate() const {
    if (depth_ < 1) {
      throw std::invalid_argument("BellNetModel: depth must be >= 1");
    }
    if (!(temperature_ > 0.0)) {
      throw std::invalid_argument("BellNetModel: temperature must be positive");
    }
  }

  int depth_;
  int filter_order_;
  double temperature_;
  bool weight_shared_;
  std::vector<FilterCoeffs> coeffs_;
};

/// Per-layer history of a forward pass: q[l] and pi[l] for l = 0..depth,
/// q[0] being the input vector and pi[0] its induced policy.
struct ForwardTrace {
  std::vector<Vector> q;
  std::vector<Policy> pi;
};

struct ForwardOptions {
  /// Replace the softmax with one-hot argmax (inference-time only; used for
  /// the exact policy/value-iteration reductions and policy readout).
  bool hard_max = false;
  /// Run the shared coefficients for a different number of layers than the
  /// model was built with. Only valid for weight-shared models.
  std::optional<int> depth;
};

struct ForwardResult {
  Vector q_hat;
  Policy pi_hat;
  ForwardTrace trace;
};

/// One BellNet layer: builds P_{pi_l}, applies the biased graph filter to
/// (r, q_l), and maps the refreshed values through the policy nonlinearity.
inline std::pair<Vector, Policy> layer_forward(const TabularMdp& mdp,
                                               const FilterCoeffs& coeffs,
                                               const Policy& pi_l, const Vector& q_l,
                                               double tau, bool hard_max = false) {
  if (q_l.size() != mdp.num_pairs()) {
    throw std::invalid_argument("layer_forward: q has wrong length");
  }
  const Matrix p_pi = policy_transition(mdp, pi_l);
  Vector q_next = filtered_evaluation(p_pi, mdp.reward_vector(), q_l, coeffs);
  const Matrix q_mat = unvec(q_next, mdp.num_states(), mdp.num_actions());
  Policy pi_next = hard_max ? greedy_policy(q_mat) : softmax_policy(q_mat, tau);
  return {std::move(q_next), std::move(pi_next)};
}

/// Full forward pass q_bar -> (q_hat, pi_hat). The input policy pi^(0) is
/// derived from q_bar through the same nonlinearity as every layer. Any MDP
/// with |S||A| matching q_bar is accepted, which is what enables transfer:
/// trained coefficients are dimension-free.
inline ForwardResult forward(const BellNetModel& model, const TabularMdp& mdp,
                             const Vector& q_bar, const ForwardOptions& options = {}) {
  if (q_bar.size() != mdp.num_pairs()) {
    throw std::invalid_argument("forward: q_bar has wrong length");
  }
  int depth = model.depth();
  if (options.depth.has_value()) {
    if (!model.weight_shared()) {
      throw std::invalid_argument("forward: depth override requires a weight-shared model");
    }
    if (*options.depth < 1) {
      throw std::invalid_argument("forward: depth override must be >= 1");
    }
    depth = *options.depth;
  }
  const double tau = model.temperature();
  const Matrix q_bar_mat = unvec(q_bar, mdp.num_states(), mdp.num_actions());
  ForwardTrace trace;
  trace.q.reserve(static_cast<std::size_t>(depth) + 1);
  trace.pi.reserve(static_cast<std::size_t>(depth) + 1);
  trace.q.push_back(q_bar);
  trace.pi.push_back(options.hard_max ? greedy_policy(q_bar_mat)
                                      : softmax_policy(q_bar_mat, tau));
  for (int l = 0; l < depth; ++l) {
    const FilterCoeffs& coeffs =
        model.weight_shared() ? model.parameter_set(0) : model.layer(l);
    auto [q_next, pi_next] =
        layer_forward(mdp, coeffs, trace.pi.back(), trace.q.back(), tau, options.hard_max);
    trace.q.push_back(std::move(q_next));
    trace.pi.push_back(std::move(pi_next));
  }
  return ForwardResult{trace.q.back(), trace.pi.back(), std::move(trace)};
}

/// One-hot argmax readout of a (generally soft) policy, ties to the lowest
/// action index.
inline Policy extract_deterministic_policy(const Policy& pi_hat) {
  return greedy_policy(pi_hat.probs());
}

}  // namespace bellnet
