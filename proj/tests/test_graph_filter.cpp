#include "bellnet/graph_filter.hpp"

#include <gtest/gtest.h>

#include <random>

#include "bellnet/solvers.hpp"
#include "test_support.hpp"

using namespace bellnet;
using bellnet::testing::random_mdp;
using bellnet::testing::random_policy;
using bellnet::testing::random_vector;

TEST(ApplyFilter, IdentityTap) {
  std::mt19937_64 rng(1);
  Matrix a = Matrix::Random(4, 4);
  Vector x = random_vector(4, rng);
  Vector h(1);
  h << 1.0;
  EXPECT_EQ(apply_filter(a, h, x), x);
}

TEST(ApplyFilter, OneHopShift) {
  std::mt19937_64 rng(2);
  Matrix a = Matrix::Random(4, 4);
  Vector x = random_vector(4, rng);
  Vector h(2);
  h << 0.0, 1.0;
  EXPECT_LT((apply_filter(a, h, x) - a * x).lpNorm<Eigen::Infinity>(), 1e-14);
}

TEST(ApplyFilter, CoefficientSumOnIdentityGraph) {
  std::mt19937_64 rng(3);
  Matrix a = Matrix::Identity(5, 5);
  Vector x = random_vector(5, rng);
  Vector h(3);
  h << 2.0, 3.0, 4.0;
  EXPECT_LT((apply_filter(a, h, x) - 9.0 * x).lpNorm<Eigen::Infinity>(), 1e-13);
}

TEST(ApplyFilter, LinearInCoefficientsAndSignal) {
  std::mt19937_64 rng(4);
  Matrix a = Matrix::Random(5, 5);
  Vector x = random_vector(5, rng), y = random_vector(5, rng);
  Vector h1 = random_vector(4, rng), h2 = random_vector(4, rng);
  const double alpha = 1.7, beta = -0.4;
  Vector lhs = apply_filter(a, alpha * h1 + beta * h2, x);
  Vector rhs = alpha * apply_filter(a, h1, x) + beta * apply_filter(a, h2, x);
  EXPECT_LT((lhs - rhs).lpNorm<Eigen::Infinity>(), 1e-12);
  lhs = apply_filter(a, h1, alpha * x + beta * y);
  rhs = alpha * apply_filter(a, h1, x) + beta * apply_filter(a, h1, y);
  EXPECT_LT((lhs - rhs).lpNorm<Eigen::Infinity>(), 1e-12);
}

TEST(ApplyFilter, DimensionMismatchThrows) {
  Matrix a = Matrix::Identity(3, 3);
  Vector h(2);
  h << 1.0, 1.0;
  EXPECT_THROW(apply_filter(a, h, Vector::Zero(2)), std::invalid_argument);
}

TEST(FilterCoeffs, ValidatesLengthAndFiniteness) {
  Vector too_short(1);
  too_short << 1.0;
  EXPECT_THROW(FilterCoeffs{too_short}, std::invalid_argument);
  Vector bad(3);
  bad << 1.0, std::numeric_limits<double>::quiet_NaN(), 0.0;
  EXPECT_THROW(FilterCoeffs{bad}, std::invalid_argument);
  EXPECT_EQ(FilterCoeffs::classical(0.9, 4).order(), 4);
}

TEST(FilteredEvaluation, ZerothTapOnlyGivesReward) {
  std::mt19937_64 rng(5);
  TabularMdp mdp = random_mdp(3, 2, 0.9, rng);
  Matrix p_pi = policy_transition(mdp, random_policy(3, 2, rng));
  Vector h = Vector::Zero(5);
  h(0) = 1.0;
  Vector out = filtered_evaluation(p_pi, mdp.reward_vector(), random_vector(6, rng),
                                   FilterCoeffs(h));
  EXPECT_EQ(out, mdp.reward_vector());
}

TEST(FilteredEvaluation, ClassicalOrderZeroIsOneBackup) {
  std::mt19937_64 rng(6);
  TabularMdp mdp = random_mdp(3, 2, 0.9, rng);
  Matrix p_pi = policy_transition(mdp, random_policy(3, 2, rng));
  Vector q0 = random_vector(6, rng);
  Vector filtered = filtered_evaluation(p_pi, mdp.reward_vector(), q0,
                                        FilterCoeffs::classical(0.9, 0));
  Vector backup = bellman_backup(q0, p_pi, mdp.reward_vector(), 0.9);
  EXPECT_LT((filtered - backup).lpNorm<Eigen::Infinity>(), 1e-13);
}

// The classical-coefficient identity: order-K filter == (K+1)-step
// iterative evaluation.
TEST(FilteredEvaluation, ClassicalMatchesIterativeEvaluation) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const double gamma = (trial % 2 == 0) ? 0.5 : 0.9;
    TabularMdp mdp = random_mdp(4, 2, gamma, rng);
    Matrix p_pi = policy_transition(mdp, random_policy(4, 2, rng));
    Vector q0 = random_vector(8, rng);
    for (int order = 0; order <= 20; ++order) {
      Vector filtered = filtered_evaluation(p_pi, mdp.reward_vector(), q0,
                                            FilterCoeffs::classical(gamma, order));
      Vector iterative =
          policy_evaluation_iterative(p_pi, mdp.reward_vector(), gamma, order + 1, q0);
      EXPECT_LT((filtered - iterative).lpNorm<Eigen::Infinity>(), 1e-12);
    }
  }
}

// Same identity through the generic filter op: k backups equal an order
// k-1 filter on r plus the gamma^k P^k q0 bias, computed as separate terms.
TEST(ApplyFilter, ClassicalTapsPlusBiasEqualIterativeEvaluation) {
  std::mt19937_64 rng(12);
  const double gamma = 0.9;
  TabularMdp mdp = random_mdp(4, 2, gamma, rng);
  Matrix p_pi = policy_transition(mdp, random_policy(4, 2, rng));
  Vector q0 = random_vector(8, rng);
  for (int k = 1; k <= 12; ++k) {
    Vector taps(k);
    double scale = 1.0;
    for (int j = 0; j < k; ++j) {
      taps(j) = scale;
      scale *= gamma;
    }
    Vector bias = q0;
    for (int j = 0; j < k; ++j) bias = p_pi * bias;
    Vector via_filter = apply_filter(p_pi, taps, mdp.reward_vector()) + scale * bias;
    Vector iterative =
        policy_evaluation_iterative(p_pi, mdp.reward_vector(), gamma, k, q0);
    EXPECT_LT((via_filter - iterative).lpNorm<Eigen::Infinity>(), 1e-12);
  }
}

TEST(FitMinimalFilter, RewardTargetNeedsOnlyZerothTap) {
  std::mt19937_64 rng(8);
  TabularMdp mdp = random_mdp(3, 2, 0.9, rng);
  Matrix p_pi = policy_transition(mdp, random_policy(3, 2, rng));
  FilterFit fit = fit_minimal_filter(p_pi, mdp.reward_vector(), mdp.reward_vector(), 3);
  EXPECT_LT(fit.residual, 1e-12);
  EXPECT_EQ(fit.coeffs.h(fit.coeffs.order() + 1), 0.0);
}

// Minimal-order representation of the exact values. A diagonalizable P_pi
// of rank |S| admits order |S|; any P_pi admits order |S||A|
// (Cayley-Hamilton). P_pi has rank at most |S|, so its spectrum is |S|
// nonzero eigenvalues plus a zero of multiplicity |S|(|A|-1);
// diagonalizability (with a well-conditioned spectral fit) is certified by
// exactly that kernel count and well-separated nonzero eigenvalues.
TEST(FitMinimalFilter, RecoversExactValuesAtBoundedOrder) {
  std::mt19937_64 rng(9);
  const double gamma = 0.9;
  int diagonalizable_checked = 0;
  for (int trial = 0; trial < 40 && diagonalizable_checked < 10; ++trial) {
    TabularMdp mdp = random_mdp(3, 2, gamma, rng);
    Matrix p_pi = policy_transition(mdp, random_policy(3, 2, rng));
    Vector exact = policy_evaluation_exact(p_pi, mdp.reward_vector(), gamma);

    // order |S||A| always suffices
    FilterFit full = fit_minimal_filter(p_pi, mdp.reward_vector(), exact, 6);
    EXPECT_LT(full.residual, 1e-8);

    Eigen::EigenSolver<Matrix> eigen(p_pi);
    std::vector<std::complex<double>> nonzero;
    int kernel = 0;
    for (int i = 0; i < 6; ++i) {
      const std::complex<double> lambda = eigen.eigenvalues()(i);
      if (std::abs(lambda) <= 1e-6) {
        ++kernel;
      } else if (std::abs(lambda) >= 0.05) {
        nonzero.push_back(lambda);
      }
    }
    bool separated = kernel == 3 && nonzero.size() == 3;
    for (std::size_t i = 0; i < nonzero.size() && separated; ++i) {
      for (std::size_t j = i + 1; j < nonzero.size(); ++j) {
        if (std::abs(nonzero[i] - nonzero[j]) < 0.05) separated = false;
      }
    }
    if (!separated) continue;
    ++diagonalizable_checked;
    FilterFit fit = fit_minimal_filter(p_pi, mdp.reward_vector(), exact, 3);
    EXPECT_LT(fit.residual, 1e-8);
  }
  EXPECT_GE(diagonalizable_checked, 10);
}

TEST(FitMinimalFilter, ResidualNonincreasingInOrder) {
  std::mt19937_64 rng(10);
  TabularMdp mdp = random_mdp(4, 2, 0.9, rng);
  Matrix p_pi = policy_transition(mdp, random_policy(4, 2, rng));
  Vector target = policy_evaluation_exact(p_pi, mdp.reward_vector(), 0.9);
  double prev = std::numeric_limits<double>::infinity();
  for (int order = 0; order <= 8; ++order) {
    FilterFit fit = fit_minimal_filter(p_pi, mdp.reward_vector(), target, order);
    EXPECT_LE(fit.residual, prev + 1e-10);
    prev = fit.residual;
  }
}

// Conjugating P_pi by a permutation and permuting the signals leaves the
// attainable residual unchanged.
TEST(FitMinimalFilter, PermutationEquivariantResidual) {
  std::mt19937_64 rng(11);
  TabularMdp mdp = random_mdp(3, 2, 0.9, rng);
  Matrix p_pi = policy_transition(mdp, random_policy(3, 2, rng));
  Vector target = policy_evaluation_exact(p_pi, mdp.reward_vector(), 0.9);

  std::vector<int> perm{3, 0, 5, 1, 4, 2};
  Matrix pmat = Matrix::Zero(6, 6);
  for (int i = 0; i < 6; ++i) pmat(perm[i], i) = 1.0;
  Matrix p_conj = pmat * p_pi * pmat.transpose();
  Vector r_perm = pmat * mdp.reward_vector();
  Vector t_perm = pmat * target;

  FilterFit base = fit_minimal_filter(p_pi, mdp.reward_vector(), target, 4);
  FilterFit conj = fit_minimal_filter(p_conj, r_perm, t_perm, 4);
  EXPECT_NEAR(base.residual, conj.residual, 1e-10);
}
