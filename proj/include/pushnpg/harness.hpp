#pragma once

// Spiral-tracking evaluation and policy-weight export.

#include "pushnpg/env.hpp"
#include "pushnpg/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

namespace pushnpg {

inline constexpr double kPathDuration = 4.0;      // s
inline constexpr double kPathSpiralEnd = 2.0;     // s
inline constexpr double kPathRadius = 0.04;       // m
inline constexpr double kPathSpiralTurns = 2.0;
inline constexpr double kPathCirclePeriod = 2.0;  // s

/// Spiral out from the origin to 4 cm in 2 s (two turns), then one full
/// circle at 4 cm over the remaining 2 s. t is clamped to [0, 4].
inline Vec2 goal_path(double t) {
  t = std::clamp(t, 0.0, kPathDuration);
  double r, angle;
  const double spiral_rate = 2.0 * std::numbers::pi * kPathSpiralTurns / kPathSpiralEnd;
  if (t <= kPathSpiralEnd) {
    r = kPathRadius * t / kPathSpiralEnd;
    angle = spiral_rate * t;
  } else {
    r = kPathRadius;
    angle = spiral_rate * kPathSpiralEnd + 2.0 * std::numbers::pi * (t - kPathSpiralEnd) / kPathCirclePeriod;
  }
  return {r * std::cos(angle), r * std::sin(angle)};
}

struct EvalRollout {
  std::vector<Vec2> object;
  std::vector<Vec2> goal;
  std::vector<double> distance;
  bool failed = false;  // simulator blow-up; excluded from the mean
};

struct EvalResult {
  std::vector<EvalRollout> rollouts;
  double mean_distance = 0.0;  // over all steps of all non-failed rollouts
  int failed = 0;

  std::size_t rollout_count() const { return rollouts.size(); }
};

struct EvalOptions {
  bool mean_action = false;
  std::uint64_t seed = 0;
};

inline SimState eval_start_state() {
  SimState s;
  s.q = home_pose();
  return s;
}

inline int eval_steps(const EnvConfig& env) {
  return static_cast<int>(std::lround(kPathDuration / env.control_dt()));
}

/// Each rollout starts with the object at the origin and fingers at home;
/// the goal observation follows goal_path. Distances are recorded after
/// every control step.
inline EvalResult evaluate(const PolicyParams& policy, const ModelParams& eval_model, const EnvConfig& env,
                           int n_rollouts, const EvalOptions& opts = {}) {
  if (n_rollouts < 1) throw std::invalid_argument("evaluate: n_rollouts must be >= 1");
  const int steps = eval_steps(env);
  const double cdt = env.control_dt();
  EvalResult res;
  double sum = 0.0;
  std::size_t count = 0;
  EpisodeOptions ep;
  ep.mean_action = opts.mean_action;
  ep.keep_states = false;
  for (int i = 0; i < n_rollouts; ++i) {
    Rng rng(derive_seed(opts.seed, 0xE7A1ULL, static_cast<std::uint64_t>(i)));
    const Trajectory traj = run_episode(policy, eval_model, env, eval_start_state(),
                                        [cdt](int k) { return goal_path(k * cdt); }, steps, rng, ep);
    EvalRollout r;
    r.failed = traj.terminated_early;
    for (std::size_t k = 1; k < traj.observations.size(); ++k) {
      const ObsVec& o = traj.observations[k];
      r.object.push_back(obs_object(o));
      r.goal.push_back(obs_goal(o));
      r.distance.push_back((obs_object(o) - obs_goal(o)).norm());
    }
    if (r.failed) {
      ++res.failed;
    } else {
      for (double d : r.distance) sum += d;
      count += r.distance.size();
    }
    res.rollouts.push_back(std::move(r));
  }
  res.mean_distance = count > 0 ? sum / static_cast<double>(count) : std::numeric_limits<double>::quiet_NaN();
  return res;
}

/// Per-step time series of every rollout: rollout,step,t,obj_x,obj_y,goal_x,goal_y,distance,failed
inline std::string eval_csv(const EvalResult& res, double control_dt) {
  std::ostringstream out;
  out.precision(17);
  out << "rollout,step,t,obj_x,obj_y,goal_x,goal_y,distance,failed\n";
  for (std::size_t i = 0; i < res.rollouts.size(); ++i) {
    const auto& r = res.rollouts[i];
    for (std::size_t k = 0; k < r.distance.size(); ++k)
      out << i << ',' << k + 1 << ',' << (k + 1) * control_dt << ',' << r.object[k].x() << ',' << r.object[k].y()
          << ',' << r.goal[k].x() << ',' << r.goal[k].y() << ',' << r.distance[k] << ',' << (r.failed ? 1 : 0)
          << '\n';
  }
  return out.str();
}

inline std::vector<std::string> observation_labels() {
  std::vector<std::string> l;
  for (int f = 0; f < kFingers; ++f)
    for (int j = 0; j < 2; ++j) l.push_back("q_f" + std::to_string(f) + "_j" + std::to_string(j));
  for (int f = 0; f < kFingers; ++f)
    for (int j = 0; j < 2; ++j) l.push_back("qd_f" + std::to_string(f) + "_j" + std::to_string(j));
  for (const char* s : {"obj_x", "obj_y", "goal_x", "goal_y"}) l.emplace_back(s);
  return l;
}

/// Gains (on whitened observations), bias and log_std, one row per actuator.
inline std::string dump_policy_weights(const PolicyParams& policy) {
  std::ostringstream out;
  out.precision(17);
  out << "actuator";
  for (const auto& l : observation_labels()) out << ',' << l;
  out << ",bias,log_std\n";
  for (int a = 0; a < kActionDim; ++a) {
    out << "tau_f" << a / 2 << "_j" << a % 2;
    for (int o = 0; o < kObsDim; ++o) out << ',' << policy.W(a, o);
    out << ',' << policy.b[a] << ',' << policy.log_std[a] << '\n';
  }
  return out.str();
}

}  // namespace pushnpg
