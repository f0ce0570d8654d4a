#pragma once

// Affine Gaussian policy with a state-independent diagonal covariance:
//   a ~ N(W * whiten(obs) + b, diag(exp(log_std))^2)
// Flattened parameter order: W row-major, then b, then log_std.

#include "pushnpg/common.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace pushnpg {

inline constexpr double kLogStdMin = -20.0;
inline constexpr double kLogStdMax = 3.0;
inline constexpr const char* kFlattenOrder = "W_row_major,b,log_std";

/// Per-dimension affine observation normalization, frozen after calibration.
struct Whitening {
  ObsVec mean = ObsVec::Zero();
  ObsVec std = ObsVec::Ones();

  ObsVec apply(const ObsVec& obs) const { return (obs - mean).cwiseQuotient(std); }
};

using GainMatrix = Eigen::Matrix<double, kActionDim, kObsDim, Eigen::RowMajor>;

struct PolicyParams {
  GainMatrix W = GainMatrix::Zero();
  Vec6 b = Vec6::Zero();
  Vec6 log_std = Vec6::Constant(-1.0);
  Whitening whitening;

  ThetaVec flatten() const {
    ThetaVec theta;
    theta.head<kActionDim * kObsDim>() = Eigen::Map<const Eigen::Matrix<double, kActionDim * kObsDim, 1>>(W.data());
    theta.segment<kActionDim>(kActionDim * kObsDim) = b;
    theta.tail<kActionDim>() = log_std;
    return theta;
  }

  /// Inverse of flatten; log_std is clamped into [-20, 3].
  static PolicyParams unflatten(const ThetaVec& theta, const Whitening& whitening = {}) {
    PolicyParams p;
    Eigen::Map<Eigen::Matrix<double, kActionDim * kObsDim, 1>>(p.W.data()) = theta.head<kActionDim * kObsDim>();
    p.b = theta.segment<kActionDim>(kActionDim * kObsDim);
    p.log_std = theta.tail<kActionDim>().cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
    p.whitening = whitening;
    return p;
  }

  Vec6 mean_action(const ObsVec& obs) const { return W * whitening.apply(obs) + b; }

  bool operator==(const PolicyParams& o) const {
    return W == o.W && b == o.b && log_std == o.log_std && whitening.mean == o.whitening.mean &&
           whitening.std == o.whitening.std;
  }
};

inline double log_prob(const ObsVec& obs, const Vec6& action, const PolicyParams& policy) {
  const Vec6 z = (action - policy.mean_action(obs)).cwiseQuotient(policy.log_std.array().exp().matrix());
  constexpr double half_log_2pi = 0.91893853320467274178;
  return -0.5 * z.squaredNorm() - policy.log_std.sum() - kActionDim * half_log_2pi;
}

struct ActionSample {
  Vec6 action;
  double log_prob;
};

inline ActionSample act(const ObsVec& obs, const PolicyParams& policy, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec6 eps;
  for (int i = 0; i < kActionDim; ++i) eps[i] = normal(rng);
  const Vec6 action = policy.mean_action(obs) + policy.log_std.array().exp().matrix().cwiseProduct(eps);
  return {action, log_prob(obs, action, policy)};
}

/// Score function d/dtheta log pi(a | obs) in flattening order.
inline ThetaVec grad_log_prob(const ObsVec& obs, const Vec6& action, const PolicyParams& policy) {
  const ObsVec x = policy.whitening.apply(obs);
  const Vec6 inv_std = (-policy.log_std).array().exp().matrix();
  const Vec6 z = (action - (policy.W * x + policy.b)).cwiseProduct(inv_std);
  const Vec6 dmean = z.cwiseProduct(inv_std);
  ThetaVec g;
  Eigen::Map<GainMatrix>(g.data()) = dmean * x.transpose();
  g.segment<kActionDim>(kActionDim * kObsDim) = dmean;
  g.tail<kActionDim>() = z.cwiseAbs2() - Vec6::Ones();
  return g;
}

}  // namespace pushnpg
