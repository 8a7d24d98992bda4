#pragma once

#include <cmath>
#include <utility>

#include "bellnet/mdp.hpp"

namespace bellnet {

/// Coefficients of a biased graph filter of order K: h(0..K) are the taps on
/// the reward signal and h(K+1) is the bias tap on the initial value vector.
struct FilterCoeffs {
  Vector h;

  explicit FilterCoeffs(Vector coeffs) : h(std::move(coeffs)) {
    if (h.size() < 2) {
      throw std::invalid_argument("FilterCoeffs: need at least two taps");
    }
    if (!h.allFinite()) {
      throw std::invalid_argument("FilterCoeffs: taps must be finite");
    }
  }

  int order() const { return static_cast<int>(h.size()) - 2; }

  /// Discount powers h_j = gamma^j for j = 0..K+1; with these taps a layer
  /// reproduces K+1 steps of classical policy evaluation.
  static FilterCoeffs classical(double gamma, int order) {
    if (order < 0) {
      throw std::invalid_argument("FilterCoeffs::classical: order must be >= 0");
    }
    Vector h(order + 2);
    double p = 1.0;
    for (int j = 0; j < order + 2; ++j) {
      h(j) = p;
      p *= gamma;
    }
    return FilterCoeffs(std::move(h));
  }
};

/// Polynomial graph filter applied to a signal:
/// sum_{j=0}^{m} h(j) A^j x, evaluated by iterated matrix-vector products
/// (powers of A are never formed).
inline Vector apply_filter(const Matrix& a, const Vector& h, const Vector& x) {
  if (a.rows() != a.cols() || x.size() != a.cols()) {
    throw std::invalid_argument("apply_filter: dimension mismatch");
  }
  if (h.size() < 1) {
    throw std::invalid_argument("apply_filter: empty coefficient vector");
  }
  Vector acc = h(0) * x;
  Vector hop = x;
  for (Eigen::Index j = 1; j < h.size(); ++j) {
    hop = a * hop;
    acc += h(j) * hop;
  }
  return acc;
}

/// Biased filtered policy evaluation:
/// sum_{j=0}^{K} h_j P_pi^j r + h_{K+1} P_pi^{K+1} q0.
/// With classical coefficients this equals (K+1)-step iterative evaluation.
inline Vector filtered_evaluation(const Matrix& p_pi, const Vector& r, const Vector& q0,
                                  const FilterCoeffs& coeffs) {
  if (p_pi.rows() != p_pi.cols() || r.size() != p_pi.rows() || q0.size() != p_pi.rows()) {
    throw std::invalid_argument("filtered_evaluation: dimension mismatch");
  }
  const int order = coeffs.order();
  Vector acc = coeffs.h(0) * r;
  Vector hop = r;
  for (int j = 1; j <= order; ++j) {
    hop = p_pi * hop;
    acc += coeffs.h(j) * hop;
  }
  hop = q0;
  for (int j = 0; j <= order; ++j) {
    hop = p_pi * hop;
  }
  acc += coeffs.h(order + 1) * hop;
  return acc;
}

struct FilterFit {
  FilterCoeffs coeffs;
  double residual = 0.0;
};

/// Least-squares fit of an order-K zero-bias filter to a target vector:
/// minimizes || sum_j h_j P_pi^j r - target ||_2 over h using the Krylov
/// matrix [r, P_pi r, ..., P_pi^K r]. Solved with a rank-revealing
/// (column-pivoted) orthogonal decomposition, so nearly collinear Krylov
/// columns yield the minimum-norm solution instead of an error.
inline FilterFit fit_minimal_filter(const Matrix& p_pi, const Vector& r,
                                    const Vector& target_q, int order) {
  if (p_pi.rows() != p_pi.cols() || r.size() != p_pi.rows() ||
      target_q.size() != p_pi.rows()) {
    throw std::invalid_argument("fit_minimal_filter: dimension mismatch");
  }
  if (order < 0) {
    throw std::invalid_argument("fit_minimal_filter: order must be >= 0");
  }
  Matrix krylov(p_pi.rows(), order + 1);
  krylov.col(0) = r;
  for (int j = 1; j <= order; ++j) {
    krylov.col(j).noalias() = p_pi * krylov.col(j - 1);
  }
  const Vector taps = krylov.completeOrthogonalDecomposition().solve(target_q);
  const double residual = (krylov * taps - target_q).norm();
  Vector h(order + 2);
  h.head(order + 1) = taps;
  h(order + 1) = 0.0;
  return FilterFit{FilterCoeffs(std::move(h)), residual};
}

}  // namespace bellnet
