#pragma once

// Score-function gradient, empirical Fisher information and the normalized
// natural-gradient step
//   dtheta = sqrt(delta / (g^T F^-1 g)) F^-1 g,
// which satisfies dtheta^T F dtheta = delta.
//
// The routines are dimension-generic so small toy policies can share them.

#include "pushnpg/common.hpp"
#include "pushnpg/env.hpp"
#include "pushnpg/policy.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <span>
#include <vector>

namespace pushnpg {

inline constexpr double kFisherDamping = 1e-6;
inline constexpr double kDegenerateThreshold = 1e-12;

struct GradientEstimate {
  Eigen::VectorXd g;
  std::int64_t sample_count = 0;
};

struct FisherEstimate {
  Eigen::MatrixXd F;
  std::int64_t sample_count = 0;
};

/// Adds eps * tr(F) / d to the diagonal.
inline void damp(Eigen::MatrixXd& F, double eps = kFisherDamping) {
  const double mean_diag = F.trace() / static_cast<double>(F.rows());
  F.diagonal().array() += eps * mean_diag;
}

/// (1/n) sum s s^T over rows of `scores` (n x d), exactly symmetric, damped.
inline FisherEstimate fisher_from_scores(const Eigen::MatrixXd& scores, double eps = kFisherDamping) {
  if (scores.rows() == 0) throw std::invalid_argument("fisher: no samples");
  const Eigen::Index d = scores.cols();
  Eigen::MatrixXd F = Eigen::MatrixXd::Zero(d, d);
  F.selfadjointView<Eigen::Upper>().rankUpdate(scores.transpose());
  F.triangularView<Eigen::StrictlyLower>() = F.transpose();
  F /= static_cast<double>(scores.rows());
  damp(F, eps);
  return {std::move(F), scores.rows()};
}

/// Stacks grad log pi for every (s, a) pair of the trajectories.
inline Eigen::MatrixXd score_matrix(std::span<const Trajectory> trajs, const PolicyParams& policy) {
  std::size_t n = 0;
  for (const auto& t : trajs) n += t.length();
  Eigen::MatrixXd s(static_cast<Eigen::Index>(n), kThetaDim);
  Eigen::Index row = 0;
  for (const auto& t : trajs)
    for (std::size_t k = 0; k < t.length(); ++k)
      s.row(row++) = grad_log_prob(t.observations[k], t.actions[k], policy).transpose();
  return s;
}

/// g = (1/NT) sum_i sum_t grad log pi(a|s) * A.
inline GradientEstimate policy_gradient(std::span<const Trajectory> trajs,
                                        std::span<const std::vector<double>> advantages,
                                        const PolicyParams& policy) {
  if (trajs.size() != advantages.size()) throw std::invalid_argument("policy_gradient: advantages misaligned");
  GradientEstimate est{Eigen::VectorXd::Zero(kThetaDim), 0};
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    if (advantages[i].size() != trajs[i].length())
      throw std::invalid_argument("policy_gradient: advantages misaligned");
    for (std::size_t k = 0; k < trajs[i].length(); ++k)
      est.g += advantages[i][k] * grad_log_prob(trajs[i].observations[k], trajs[i].actions[k], policy);
    est.sample_count += static_cast<std::int64_t>(trajs[i].length());
  }
  if (est.sample_count == 0) throw std::invalid_argument("policy_gradient: no samples");
  est.g /= static_cast<double>(est.sample_count);
  return est;
}

inline FisherEstimate fisher(std::span<const Trajectory> trajs, const PolicyParams& policy) {
  return fisher_from_scores(score_matrix(trajs, policy));
}

struct NaturalStep {
  Eigen::VectorXd delta_theta;
  double g_norm = 0.0;
  double g_finv_g = 0.0;  // g^T F^-1 g
  double step_norm = 0.0;
};

inline NaturalStep natural_step(const Eigen::VectorXd& g, const Eigen::MatrixXd& F, double delta) {
  if (!(delta > 0.0)) throw std::invalid_argument("natural_step: delta must be > 0");
  if (g.size() != F.rows() || F.rows() != F.cols()) throw std::invalid_argument("natural_step: shape mismatch");
  Eigen::LLT<Eigen::MatrixXd> llt(F);
  if (llt.info() != Eigen::Success) throw DegenerateGradient("natural_step: Fisher matrix not positive definite");
  const Eigen::VectorXd direction = llt.solve(g);
  const double quad = g.dot(direction);
  if (!(quad > kDegenerateThreshold)) throw DegenerateGradient("natural_step: g^T F^-1 g below threshold");
  NaturalStep out;
  out.delta_theta = std::sqrt(delta / quad) * direction;
  out.g_norm = g.norm();
  out.g_finv_g = quad;
  out.step_norm = out.delta_theta.norm();
  return out;
}

inline NaturalStep natural_step(const GradientEstimate& g, const FisherEstimate& F, double delta) {
  return natural_step(g.g, F.F, delta);
}

}  // namespace pushnpg
