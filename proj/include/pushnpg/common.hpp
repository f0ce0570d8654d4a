#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace pushnpg {

inline constexpr int kFingers = 3;
inline constexpr int kJoints = 2 * kFingers;
inline constexpr int kActionDim = kJoints;
/// q (6), qdot (6), object position (2), goal position (2).
inline constexpr int kObsDim = 2 * kJoints + 4;
inline constexpr int kThetaDim = kActionDim * kObsDim + 2 * kActionDim;
/// Joint angles followed by object position.
inline constexpr int kConfigDim = kJoints + 2;

using Vec2 = Eigen::Vector2d;
using Vec6 = Eigen::Matrix<double, kJoints, 1>;
using ConfigVec = Eigen::Matrix<double, kConfigDim, 1>;
using ObsVec = Eigen::Matrix<double, kObsDim, 1>;
using ThetaVec = Eigen::Matrix<double, kThetaDim, 1>;
using ThetaMat = Eigen::Matrix<double, kThetaDim, kThetaDim>;

using Rng = std::mt19937_64;

// Errors. Each one names a distinct failure the caller is expected to react to.

struct NonFiniteState : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ResetFailed : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SingularSystem : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DegenerateGradient : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IterationMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ProtocolError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConnectionLost : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct WorkerTimeout : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NonFiniteResidual : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// SplitMix64 finalizer. Used to derive independent stream seeds from
/// (base seed, iteration, trajectory index) tuples.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) {
  return mix_seed(mix_seed(mix_seed(base) ^ a) ^ b);
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.allFinite();
}

}  // namespace pushnpg
