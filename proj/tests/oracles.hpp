#pragma once

// Independent reference computations used by unit and acceptance tests.

#include "pushnpg/npg.hpp"
#include "pushnpg/policy.hpp"
#include "pushnpg/value.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

namespace pushnpg::oracle {

struct PolicyCase {
  ObsVec obs;
  Vec6 action;
  PolicyParams policy;
};

inline PolicyCase random_policy_case(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(-1.5, 0.5);
  PolicyCase c;
  ThetaVec th;
  for (int i = 0; i < kThetaDim; ++i) th[i] = 0.3 * n(rng);
  for (int i = 0; i < kActionDim; ++i) th[kThetaDim - kActionDim + i] = u(rng);
  Whitening w;
  for (int i = 0; i < kObsDim; ++i) {
    w.mean[i] = 0.1 * n(rng);
    w.std[i] = std::exp(0.5 * n(rng));
  }
  c.policy = PolicyParams::unflatten(th, w);
  for (int i = 0; i < kObsDim; ++i) c.obs[i] = n(rng);
  const Vec6 mu = c.policy.mean_action(c.obs);
  for (int i = 0; i < kActionDim; ++i) c.action[i] = mu[i] + std::exp(c.policy.log_std[i]) * 1.5 * n(rng);
  return c;
}

/// Central differences of log_prob with respect to the flat parameters.
inline ThetaVec fd_grad_log_prob(const PolicyCase& c, double h = 1e-6) {
  const ThetaVec th = c.policy.flatten();
  ThetaVec g;
  for (int i = 0; i < kThetaDim; ++i) {
    ThetaVec p = th, m = th;
    p[i] += h;
    m[i] -= h;
    g[i] = (log_prob(c.obs, c.action, PolicyParams::unflatten(p, c.policy.whitening)) -
            log_prob(c.obs, c.action, PolicyParams::unflatten(m, c.policy.whitening))) /
           (2.0 * h);
  }
  return g;
}

inline double relative_error(const Eigen::VectorXd& got, const Eigen::VectorXd& ref) {
  return (got - ref).norm() / std::max(ref.norm(), 1e-300);
}

/// A_t = sum_l (gamma lambda)^l delta_{t+l}, summed forward.
inline std::vector<double> gae_explicit(const std::vector<double>& r, const std::vector<double>& v, double gamma,
                                        double lambda) {
  const std::size_t T = r.size();
  std::vector<double> a(T, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    double w = 1.0;
    for (std::size_t l = t; l < T; ++l) {
      a[t] += w * (r[l] + gamma * v[l + 1] - v[l]);
      w *= gamma * lambda;
    }
  }
  return a;
}

/// Random SPD matrix: A A^T / d plus a small ridge, then damped.
inline Eigen::MatrixXd random_fisher(Rng& rng, int d) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd a(d, d + 5);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = n(rng);
  Eigen::MatrixXd F = a * a.transpose() / d;
  F = 0.5 * (F + F.transpose());
  damp(F);
  return F;
}

}  // namespace pushnpg::oracle
