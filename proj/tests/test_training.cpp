#include "bellnet/training.hpp"

#include <gtest/gtest.h>

#include <random>

#include "bellnet/solvers.hpp"
#include "test_support.hpp"

using namespace bellnet;
using bellnet::testing::random_mdp;
using bellnet::testing::random_policy;
using bellnet::testing::random_vector;

namespace {

BellNetModel noisy_model(int depth, int order, double gamma, bool shared, double sigma,
                         std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  InitSpec init;
  init.kind = InitSpec::Kind::ClassicalNoise;
  init.sigma = sigma;
  return initial_model(depth, order, 0.25, shared, gamma, init, rng);
}

}  // namespace

TEST(BellmanTarget, DiscountZeroGivesReward) {
  std::mt19937_64 rng(1);
  TabularMdp mdp = random_mdp(3, 2, 0.9, rng);
  Vector target = bellman_target(mdp, random_vector(6, rng), random_policy(3, 2, rng), 0.0);
  EXPECT_EQ(target, mdp.reward_vector());
}

TEST(BellmanTarget, MatchesBellmanBackup) {
  std::mt19937_64 rng(2);
  TabularMdp mdp = random_mdp(4, 2, 0.9, rng);
  Policy pi = random_policy(4, 2, rng);
  Vector q = random_vector(8, rng);
  Vector target = bellman_target(mdp, q, pi, 0.9);
  Vector backup = bellman_backup(q, policy_transition(mdp, pi), mdp.reward_vector(), 0.9);
  EXPECT_EQ(target, backup);
}

// Oracle: converged optimal values are a fixed point of the target map.
TEST(BellmanTarget, OptimalValuesAreFixedPoint) {
  std::mt19937_64 rng(3);
  TabularMdp mdp = random_mdp(4, 3, 0.9, rng);
  SolverReport star = optimal_values(mdp);
  Policy greedy = greedy_policy(unvec(star.q, 4, 3));
  Vector target = bellman_target(mdp, star.q, greedy, mdp.discount());
  EXPECT_LT((target - star.q).lpNorm<Eigen::Infinity>(), 1e-8);
}

// The target map is linear in (r, q): doubling both doubles the output.
TEST(BellmanTarget, ScalesLinearly) {
  std::mt19937_64 rng(4);
  TabularMdp mdp = random_mdp(3, 2, 0.9, rng);
  TabularMdp doubled(mdp.transition(), 2.0 * mdp.reward(), mdp.discount());
  Policy pi = random_policy(3, 2, rng);
  Vector q = random_vector(6, rng);
  Vector base = bellman_target(mdp, q, pi, 0.9);
  Vector scaled = bellman_target(doubled, 2.0 * q, pi, 0.9);
  EXPECT_LT((scaled - 2.0 * base).lpNorm<Eigen::Infinity>(), 1e-12);
}

TEST(LossAndGradient, ZeroModelZeroTarget) {
  std::mt19937_64 rng(5);
  TabularMdp mdp = random_mdp(3, 2, 0.9, rng);
  BellNetModel model(2, FilterCoeffs(Vector::Zero(4)), 0.25);
  GradientBundle bundle =
      loss_and_gradient(model, mdp, random_vector(6, rng), Vector::Zero(6));
  EXPECT_EQ(bundle.loss, 0.0);
  EXPECT_TRUE(bundle.gradients[0].isZero(0.0));
}

TEST(LossAndGradient, ZeroModelLossIsTargetNorm) {
  std::mt19937_64 rng(6);
  TabularMdp mdp = random_mdp(3, 2, 0.9, rng);
  BellNetModel model(2, FilterCoeffs(Vector::Zero(4)), 0.25);
  Vector target = random_vector(6, rng);
  GradientBundle bundle = loss_and_gradient(model, mdp, random_vector(6, rng), target);
  EXPECT_NEAR(bundle.loss, target.squaredNorm(), 1e-12);
}

// Central finite-difference oracle for the full gradient.
TEST(LossAndGradient, MatchesFiniteDifferences) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 6; ++trial) {
    const bool shared = trial % 2 == 0;
    TabularMdp mdp = random_mdp(3, 2, 0.9, rng, -1.0, 1.0);
    BellNetModel model = noisy_model(2, 2, 0.9, shared, 0.05, 100 + trial);
    Vector q_bar = random_vector(6, rng);
    Vector target = random_vector(6, rng);
    GradientBundle bundle = loss_and_gradient(model, mdp, q_bar, target);
    const auto fd = finite_difference_gradient(model, mdp, q_bar, target, 1e-6);
    ASSERT_EQ(fd.size(), bundle.gradients.size());
    for (std::size_t i = 0; i < fd.size(); ++i) {
      for (Eigen::Index j = 0; j < fd[i].size(); ++j) {
        const double a = bundle.gradients[i](j);
        const double f = fd[i](j);
        EXPECT_LT(std::abs(a - f), 1e-5 * std::max({std::abs(a), std::abs(f), 1.0}))
            << "trial " << trial << " set " << i << " tap " << j;
      }
    }
  }
}

// Chain rule for tied parameters: the shared gradient is the sum of the
// per-layer gradients of the untied model evaluated at equal coefficients.
TEST(LossAndGradient, SharedGradientIsSumOfLayerGradients) {
  std::mt19937_64 rng(8);
  TabularMdp mdp = random_mdp(3, 2, 0.9, rng);
  BellNetModel shared = noisy_model(3, 2, 0.9, true, 0.05, 42);
  std::vector<FilterCoeffs> tied(3, shared.parameter_set(0));
  BellNetModel unshared(std::move(tied), shared.temperature());

  Vector q_bar = random_vector(6, rng);
  Vector target = random_vector(6, rng);
  GradientBundle gs = loss_and_gradient(shared, mdp, q_bar, target);
  GradientBundle gu = loss_and_gradient(unshared, mdp, q_bar, target);
  Vector sum = Vector::Zero(4);
  for (const Vector& g : gu.gradients) sum += g;
  EXPECT_LT((gs.gradients[0] - sum).lpNorm<Eigen::Infinity>(), 1e-12);
  EXPECT_NEAR(gs.loss, gu.loss, 1e-12);
}

// The target is a constant input: computing gradients must not touch it.
TEST(LossAndGradient, TargetIsGradientIsolated) {
  std::mt19937_64 rng(9);
  TabularMdp mdp = random_mdp(3, 2, 0.9, rng);
  BellNetModel model = noisy_model(2, 2, 0.9, true, 0.05, 7);
  Vector q_bar = random_vector(6, rng);
  ForwardResult fwd = forward(model, mdp, q_bar);
  Vector target = bellman_target(mdp, fwd.q_hat, fwd.pi_hat, 0.9);
  const Vector target_copy = target;

  BellNetModel perturbed = model;
  perturbed.parameter_set(0).h(1) += 0.1;
  GradientBundle bundle = loss_and_gradient(perturbed, mdp, q_bar, target);
  EXPECT_EQ(target, target_copy);
  const double manual = (target - forward(perturbed, mdp, q_bar).q_hat).squaredNorm();
  EXPECT_NEAR(bundle.loss, manual, 1e-10 * std::max(1.0, manual));
}

TEST(LossAndGradient, OverflowRaisesNumericErrorWithLayer) {
  std::mt19937_64 rng(10);
  TabularMdp mdp = random_mdp(3, 2, 0.9, rng);
  Vector huge(4);
  huge << 1e200, 1e200, 1e200, 1e200;
  BellNetModel model(3, FilterCoeffs(huge), 0.25);
  try {
    loss_and_gradient(model, mdp, random_vector(6, rng), Vector::Zero(6));
    FAIL() << "expected numeric_error";
  } catch (const numeric_error& e) {
    EXPECT_NE(std::string(e.what()).find("layer"), std::string::npos);
  }
}

TEST(Train, ZeroLearningRateKeepsModelAndLoss) {
  std::mt19937_64 rng(11);
  TabularMdp mdp = random_mdp(3, 2, 0.9, rng);
  BellNetModel model = BellNetModel::classical(2, 2, 0.9, 0.25, true);
  const Vector before = model.parameter_set(0).h;
  TrainConfig config;
  config.iterations = 25;
  config.learning_rate = 0.0;
  config.optimizer = OptimizerKind::GradientDescent;
  config.resample_each_step = false;
  config.seed = 5;
  TrainResult result = train(model, mdp, config);
  EXPECT_FALSE(result.diverged);
  EXPECT_EQ(result.model.parameter_set(0).h, before);
  for (double loss : result.loss_history) {
    EXPECT_EQ(loss, result.loss_history.front());
  }
}

TEST(Train, DeterministicGivenSeed) {
  std::mt19937_64 rng(12);
  TabularMdp mdp = random_mdp(3, 2, 0.9, rng);
  TrainConfig config;
  config.iterations = 50;
  config.seed = 17;
  BellNetModel model = noisy_model(2, 2, 0.9, true, 0.01, 3);
  TrainResult a = train(model, mdp, config);
  TrainResult b = train(model, mdp, config);
  ASSERT_EQ(a.loss_history.size(), b.loss_history.size());
  for (std::size_t i = 0; i < a.loss_history.size(); ++i) {
    EXPECT_EQ(a.loss_history[i], b.loss_history[i]);
  }
  EXPECT_EQ(a.model.parameter_set(0).h, b.model.parameter_set(0).h);
}

TEST(Train, DivergenceAbortsWithHistory) {
  std::mt19937_64 rng(13);
  TabularMdp mdp = random_mdp(3, 2, 0.9, rng, 0.0, 10.0);
  BellNetModel model = BellNetModel::classical(3, 3, 0.9, 0.25, true);
  TrainConfig config;
  config.iterations = 500;
  config.learning_rate = 1e6;
  config.optimizer = OptimizerKind::GradientDescent;
  config.seed = 3;
  TrainResult result = train(model, mdp, config);
  EXPECT_TRUE(result.diverged);
  EXPECT_LT(result.loss_history.size(), 500u);
  for (double loss : result.loss_history) {
    EXPECT_TRUE(std::isfinite(loss));
  }
}

TEST(Train, LossDecreasesOnEasyProblem) {
  std::mt19937_64 rng(14);
  TabularMdp mdp = random_mdp(3, 2, 0.9, rng);
  BellNetModel model = noisy_model(2, 2, 0.9, true, 0.01, 9);
  TrainConfig config;
  config.iterations = 400;
  config.learning_rate = 1e-2;
  config.seed = 21;
  TrainResult result = train(model, mdp, config);
  ASSERT_FALSE(result.diverged);
  double head = 0.0, tail = 0.0;
  for (int i = 0; i < 50; ++i) {
    head += result.loss_history[i];
    tail += result.loss_history[result.loss_history.size() - 50 + i];
  }
  EXPECT_LT(tail, head);
}

TEST(Train, OptimizerVariantsRun) {
  std::mt19937_64 rng(15);
  TabularMdp mdp = random_mdp(3, 2, 0.9, rng);
  for (OptimizerKind kind : {OptimizerKind::GradientDescent, OptimizerKind::Momentum,
                             OptimizerKind::Adam}) {
    BellNetModel model = noisy_model(2, 2, 0.9, false, 0.01, 31);
    TrainConfig config;
    config.iterations = 30;
    config.learning_rate = 1e-4;
    config.optimizer = kind;
    config.seed = 2;
    TrainResult result = train(model, mdp, config);
    EXPECT_FALSE(result.diverged);
    EXPECT_EQ(result.loss_history.size(), 30u);
  }
}

TEST(SampleQBar, RespectsDistributionSpec) {
  std::mt19937_64 rng(16);
  Vector zero = sample_q_bar(QBarSampling::zero(), 8, rng);
  EXPECT_TRUE(zero.isZero(0.0));
  Vector uniform = sample_q_bar(QBarSampling::uniform(-2.0, -1.0), 1000, rng);
  EXPECT_GE(uniform.minCoeff(), -2.0);
  EXPECT_LE(uniform.maxCoeff(), -1.0);
  Vector constant = sample_q_bar(QBarSampling::uniform(3.0, 3.0), 4, rng);
  EXPECT_TRUE((constant.array() == 3.0).all());
  Vector gaussian = sample_q_bar(QBarSampling::gaussian(5.0, 0.1), 1000, rng);
  EXPECT_NEAR(gaussian.mean(), 5.0, 0.05);
}

TEST(DefaultQBarSampling, ZeroAnchoredRewardRange) {
  std::mt19937_64 rng(17);
  TabularMdp negative = random_mdp(3, 2, 0.5, rng, -4.0, -1.0);
  QBarSampling sampling = default_q_bar_sampling(negative);
  EXPECT_EQ(sampling.kind, QBarSampling::Kind::Uniform);
  EXPECT_NEAR(sampling.low, negative.reward().minCoeff(), 1e-12);
  EXPECT_EQ(sampling.high, 0.0);
  TabularMdp positive = random_mdp(3, 2, 0.5, rng, 1.0, 2.0);
  sampling = default_q_bar_sampling(positive);
  EXPECT_EQ(sampling.low, 0.0);
  EXPECT_NEAR(sampling.high, positive.reward().maxCoeff(), 1e-12);
}
