#include "oracles.hpp"

#include <gtest/gtest.h>

#include <numbers>

using namespace pushnpg;

namespace {
const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);
}

TEST(Policy, ThetaDimensionAndFlattenOrder) {
  EXPECT_EQ(kThetaDim, 108);
  PolicyParams p;
  p.W(1, 2) = 3.0;
  p.b[4] = 5.0;
  p.log_std[5] = -0.5;
  const ThetaVec th = p.flatten();
  EXPECT_EQ(th[1 * kObsDim + 2], 3.0);
  EXPECT_EQ(th[96 + 4], 5.0);
  EXPECT_EQ(th[102 + 5], -0.5);
  EXPECT_TRUE(PolicyParams::unflatten(th) == p);
}

TEST(Policy, UnflattenClampsLogStd) {
  ThetaVec th = ThetaVec::Zero();
  th[102] = -50.0;
  th[103] = 10.0;
  const auto p = PolicyParams::unflatten(th);
  EXPECT_EQ(p.log_std[0], -20.0);
  EXPECT_EQ(p.log_std[1], 3.0);
}

TEST(LogProb, StandardNormalAtMean) {
  PolicyParams p;
  p.log_std.setZero();
  const ObsVec obs = ObsVec::Zero();
  EXPECT_NEAR(log_prob(obs, Vec6::Zero(), p), -6.0 * kHalfLog2Pi, 1e-12);
  // per-dimension: -0.5 log 2pi = -0.91894 at the mean, -1.41894 one sigma out
  EXPECT_NEAR(-kHalfLog2Pi, -0.91894, 1e-5);
  Vec6 a = Vec6::Zero();
  a[2] = 1.0;
  EXPECT_NEAR(log_prob(obs, a, p) - log_prob(obs, Vec6::Zero(), p), -0.5, 1e-12);
  EXPECT_NEAR(log_prob(obs, a, p) + 5.0 * kHalfLog2Pi, -1.41894, 1e-5);
}

TEST(LogProb, LogStdShift) {
  Rng rng(1);
  auto c = oracle::random_policy_case(rng);
  const Vec6 mu = c.policy.mean_action(c.obs);
  const double base = log_prob(c.obs, mu, c.policy);
  PolicyParams q = c.policy;
  q.log_std.array() += 0.7;
  EXPECT_NEAR(log_prob(c.obs, mu, q) - base, -6.0 * 0.7, 1e-12);
}

TEST(Act, VanishingVarianceGivesMean) {
  Rng rng(2);
  auto c = oracle::random_policy_case(rng);
  c.policy.log_std.setConstant(-20.0);
  const auto s = act(c.obs, c.policy, rng);
  EXPECT_LE((s.action - c.policy.mean_action(c.obs)).cwiseAbs().maxCoeff(), 1e-7);
}

TEST(Act, DeterministicForSeed) {
  Rng r0(3);
  auto c = oracle::random_policy_case(r0);
  Rng a(9), b(9);
  const auto x = act(c.obs, c.policy, a), y = act(c.obs, c.policy, b);
  EXPECT_EQ(x.action, y.action);
  EXPECT_EQ(x.log_prob, y.log_prob);
  EXPECT_EQ(x.log_prob, log_prob(c.obs, x.action, c.policy));
}

TEST(Act, SampleMeanAndStd) {
  Rng rng(4);
  auto c = oracle::random_policy_case(rng);
  const Vec6 mu = c.policy.mean_action(c.obs);
  const Vec6 sigma = c.policy.log_std.array().exp();
  const int n = 100000;
  Vec6 sum = Vec6::Zero(), sq = Vec6::Zero();
  for (int i = 0; i < n; ++i) {
    const Vec6 a = act(c.obs, c.policy, rng).action;
    sum += a;
    sq += (a - mu).cwiseAbs2();
  }
  const Vec6 mean = sum / n;
  for (int i = 0; i < kActionDim; ++i) {
    EXPECT_NEAR(mean[i], mu[i], 3.0 * sigma[i] / std::sqrt(n));
    EXPECT_NEAR(std::sqrt(sq[i] / n), sigma[i], 0.02 * sigma[i]);
  }
}

TEST(GradLogProb, AtMean) {
  Rng rng(5);
  auto c = oracle::random_policy_case(rng);
  const ThetaVec g = grad_log_prob(c.obs, c.policy.mean_action(c.obs), c.policy);
  EXPECT_LE(g.head<102>().cwiseAbs().maxCoeff(), 1e-12);
  for (int i = 0; i < kActionDim; ++i) EXPECT_NEAR(g[102 + i], -1.0, 1e-12);
}

TEST(GradLogProb, MatchesFiniteDifferences) {
  Rng rng(6);
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    const auto c = oracle::random_policy_case(rng);
    const ThetaVec g = grad_log_prob(c.obs, c.action, c.policy);
    worst = std::max(worst, oracle::relative_error(g, oracle::fd_grad_log_prob(c)));
  }
  EXPECT_LE(worst, 1e-5);
}

TEST(GradLogProb, ScoreHasZeroMean) {
  Rng rng(7);
  auto c = oracle::random_policy_case(rng);
  ThetaVec sum = ThetaVec::Zero();
  const int n = 20000;
  for (int i = 0; i < n; ++i) sum += grad_log_prob(c.obs, act(c.obs, c.policy, rng).action, c.policy);
  EXPECT_LE((sum / n).cwiseAbs().maxCoeff(), 0.1);
}

TEST(Whitening, AppliedBeforeGains) {
  PolicyParams p;
  p.whitening.mean.setConstant(1.0);
  p.whitening.std.setConstant(2.0);
  p.W(0, 0) = 1.0;
  ObsVec o = ObsVec::Constant(1.0);
  o[0] = 5.0;
  EXPECT_DOUBLE_EQ(p.mean_action(o)[0], 2.0);
}
