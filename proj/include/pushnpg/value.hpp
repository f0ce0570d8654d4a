#pragma once

// Quadratic value baseline fitted by ridge regression on returns-to-go, and
// generalized advantage estimation.

#include "pushnpg/common.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

namespace pushnpg {

inline constexpr int kFeatureDim = 2 * kObsDim + 5;

using FeatureVec = Eigen::Matrix<double, kFeatureDim, 1>;
using FeatureMat = Eigen::Matrix<double, kFeatureDim, kFeatureDim>;

/// [obs, obs^2, u, u^2, u^3, u^4, 1] with u = t / T.
inline FeatureVec features(const ObsVec& obs, int t, int horizon) {
  const double u = static_cast<double>(t) / horizon;
  FeatureVec f;
  f << obs, obs.cwiseAbs2(), u, u * u, u * u * u, u * u * u * u, 1.0;
  return f;
}

struct NormalEquations {
  FeatureMat xtx = FeatureMat::Zero();
  FeatureVec xty = FeatureVec::Zero();
  std::int64_t count = 0;

  void add(const FeatureVec& x, double y) {
    xtx.selfadjointView<Eigen::Upper>().rankUpdate(x);
    xty += y * x;
    ++count;
  }

  /// Mirrors the accumulated upper triangle into the lower one.
  void symmetrize() { xtx.triangularView<Eigen::StrictlyLower>() = xtx.transpose(); }

  NormalEquations& operator+=(const NormalEquations& o) {
    xtx += o.xtx;
    xty += o.xty;
    count += o.count;
    return *this;
  }
};

struct ValueParams {
  FeatureVec weights = FeatureVec::Zero();
  double ridge = 1.0;

  double operator()(const FeatureVec& f) const { return weights.dot(f); }
};

/// Solves (X^T X + ridge I) w = X^T y. Throws SingularSystem when the
/// regularized system is not numerically positive definite.
inline ValueParams fit(const NormalEquations& neq, double ridge) {
  if (neq.count <= 0) throw std::invalid_argument("fit: no samples");
  FeatureMat a = neq.xtx;
  a.diagonal().array() += ridge;
  Eigen::LDLT<FeatureMat> ldlt(a);
  const auto d = ldlt.vectorD();
  const double scale = std::max(1.0, a.diagonal().cwiseAbs().maxCoeff());
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || d.minCoeff() <= 1e-13 * scale)
    throw SingularSystem("fit: regularized normal equations are singular; increase ridge");
  ValueParams v;
  v.weights = ldlt.solve(neq.xty);
  v.ridge = ridge;
  if (!v.weights.allFinite()) throw SingularSystem("fit: non-finite solution");
  return v;
}

/// Discounted returns-to-go: G_t = r_t + gamma * G_{t+1}, G_T = 0.
inline std::vector<double> returns_to_go(std::span<const double> rewards, double gamma) {
  std::vector<double> g(rewards.size());
  double acc = 0.0;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    acc = rewards[i] + gamma * acc;
    g[i] = acc;
  }
  return g;
}

/// Advantages from rewards r_0..r_{T-1} and values V_0..V_T by the backward
/// recursion A_t = delta_t + gamma * lambda * A_{t+1}. Not standardized.
inline std::vector<double> gae(std::span<const double> rewards, std::span<const double> values, double gamma,
                               double lambda) {
  if (values.size() != rewards.size() + 1) throw std::invalid_argument("gae: need T+1 values");
  std::vector<double> adv(rewards.size());
  double acc = 0.0;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    const double delta = rewards[i] + gamma * values[i + 1] - values[i];
    acc = delta + gamma * lambda * acc;
    adv[i] = acc;
  }
  return adv;
}

/// In-place zero-mean, unit-std standardization over a batch of advantage
/// vectors. A batch of one sample (or zero spread) is only centered.
inline void standardize(std::span<std::vector<double>> batch) {
  double sum = 0.0, n = 0.0;
  for (const auto& a : batch)
    for (double x : a) sum += x, n += 1.0;
  if (n == 0.0) return;
  const double mean = sum / n;
  double ss = 0.0;
  for (const auto& a : batch)
    for (double x : a) ss += (x - mean) * (x - mean);
  const double std = n > 1.0 ? std::sqrt(ss / n) : 0.0;
  const double inv = std > 0.0 ? 1.0 / std : 1.0;
  for (auto& a : batch)
    for (double& x : a) x = (x - mean) * inv;
}

}  // namespace pushnpg
