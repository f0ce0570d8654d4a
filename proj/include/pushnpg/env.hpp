#pragma once

// Episodic pushing task on top of the simulator: observations, reward,
// initial-state distribution with restarts, rollouts and model ensembles.

#include "pushnpg/common.hpp"
#include "pushnpg/policy.hpp"
#include "pushnpg/sim.hpp"

#include <algorithm>
#include <functional>
#include <numbers>
#include <span>
#include <vector>

namespace pushnpg {

struct RewardWeights {
  double goal = 3.0;
  double tips = 1.0;
  double control = 0.1;
};

struct EnsembleConfig {
  double mass_mean = 0.34;  // kg
  double mass_std = 0.0;    // kg
  double base_pos_std = 0.0;  // m

  static constexpr double kMinMass = 0.05;

  void validate() const {
    if (!(mass_std >= 0) || !(base_pos_std >= 0)) throw std::invalid_argument("EnsembleConfig: stds must be >= 0");
    if (!(mass_mean > 0)) throw std::invalid_argument("EnsembleConfig: mass_mean must be > 0");
  }
};

/// Canonical home pose: each fingertip on its base axis, 5 mm outside contact
/// with the nominal object at the origin.
inline Vec6 home_pose() {
  Vec6 q;
  for (int f = 0; f < kFingers; ++f) {
    q[2 * f] = -std::numbers::pi / 3.0;
    q[2 * f + 1] = 2.0 * std::numbers::pi / 3.0;
  }
  return q;
}

struct EnvConfig {
  int horizon = 500;          // control steps
  int control_substeps = 20;  // physics substeps per control step
  double dt = 0.0005;         // s
  double restart_prob = 0.3;
  /// Restart pools are drawn from consecutive blocks of this many trajectories
  /// of the previous iteration (0: the whole per-worker batch).
  int restart_pool_block = 0;
  double goal_radius = 0.06;  // m
  RewardWeights weights;
  EnsembleConfig ensemble;
  /// Uniform initialization ranges around the home pose (rad).
  double init_proximal_halfwidth = 0.4;
  double init_distal_halfwidth = 0.4;
  int max_reset_tries = 100;

  double control_dt() const { return dt * control_substeps; }
};

inline ObsVec observe(const SimState& s, const Vec2& goal) {
  ObsVec o;
  o << s.q, s.qdot, s.obj_pos, goal;
  return o;
}

inline Vec2 obs_object(const ObsVec& o) { return o.segment<2>(2 * kJoints); }
inline Vec2 obs_goal(const ObsVec& o) { return o.segment<2>(2 * kJoints + 2); }
inline Vec6 obs_joints(const ObsVec& o) { return o.head<kJoints>(); }

/// 1 - 3|O - G| - sum_i |f_i - O| - 0.1 |a|^2 with the default weights.
inline double reward(const ObsVec& obs, const Vec6& action, const ModelParams& params,
                     const RewardWeights& w = {}) {
  const Vec2 obj = obs_object(obs);
  const TipPositions tips = forward_kinematics(obs_joints(obs), params);
  double tip_sum = 0.0;
  for (const auto& tip : tips) tip_sum += (tip - obj).norm();
  return 1.0 - w.goal * (obj - obs_goal(obs)).norm() - w.tips * tip_sum - w.control * action.squaredNorm();
}

struct Trajectory {
  std::vector<ObsVec> observations;  // T + 1
  std::vector<Vec6> actions;         // T
  std::vector<double> rewards;       // T
  std::vector<double> log_probs;     // T
  std::vector<SimState> states;      // T + 1, kept for restarts
  bool terminated_early = false;
  bool restarted = false;

  std::size_t length() const { return actions.size(); }

  double total_reward() const {
    double s = 0.0;
    for (double r : rewards) s += r;
    return s;
  }
};

inline Vec2 sample_goal(Rng& rng, double radius) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double r = radius * std::sqrt(u(rng));
  const double a = 2.0 * std::numbers::pi * u(rng);
  return {r * std::cos(a), r * std::sin(a)};
}

inline bool tips_clear_of_object(const SimState& s, const ModelParams& params) {
  const double reach = params.fingertip_radius + params.object_radius;
  for (const auto& tip : forward_kinematics(s.q, params))
    if ((tip - s.obj_pos).norm() <= reach) return false;
  return true;
}

struct ResetResult {
  SimState state;
  Vec2 goal;
  bool restarted = false;
};

/// Indices of pool trajectories whose return is in the top quartile.
inline std::vector<std::size_t> top_quartile(std::span<const Trajectory> pool) {
  std::vector<double> returns;
  returns.reserve(pool.size());
  for (const auto& t : pool) returns.push_back(t.total_reward());
  std::vector<double> sorted = returns;
  std::sort(sorted.begin(), sorted.end());
  // Nearest-rank 75th percentile.
  const std::size_t rank = (3 * sorted.size() + 3) / 4;
  const double threshold = sorted[std::max<std::size_t>(rank, 1) - 1];
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < pool.size(); ++i)
    if (returns[i] >= threshold && !pool[i].states.empty()) idx.push_back(i);
  return idx;
}

inline ResetResult reset(Rng& rng, std::span<const Trajectory> pool, double restart_prob, const ModelParams& model,
                         const EnvConfig& cfg) {
  if (!(restart_prob >= 0.0 && restart_prob <= 1.0)) throw std::invalid_argument("reset: restart_prob not in [0,1]");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ResetResult out;
  const bool try_restart = u(rng) < restart_prob;
  if (try_restart && !pool.empty()) {
    const auto candidates = top_quartile(pool);
    if (!candidates.empty()) {
      std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
      const Trajectory& src = pool[candidates[pick(rng)]];
      std::uniform_int_distribution<std::size_t> at(0, src.states.size() - 1);
      out.state = src.states[at(rng)];
      out.state.t = 0.0;
      out.restarted = true;
      out.goal = sample_goal(rng, cfg.goal_radius);
      return out;
    }
  }
  const Vec6 home = home_pose();
  for (int attempt = 0; attempt < cfg.max_reset_tries; ++attempt) {
    SimState s;
    for (int f = 0; f < kFingers; ++f) {
      s.q[2 * f] = home[2 * f] + cfg.init_proximal_halfwidth * (2.0 * u(rng) - 1.0);
      s.q[2 * f + 1] = home[2 * f + 1] + cfg.init_distal_halfwidth * (2.0 * u(rng) - 1.0);
    }
    if (tips_clear_of_object(s, model)) {
      out.state = s;
      out.goal = sample_goal(rng, cfg.goal_radius);
      return out;
    }
  }
  throw ResetFailed("reset: no contact-free initial configuration after " + std::to_string(cfg.max_reset_tries) +
                    " tries");
}

inline ModelParams sample_model(const ModelParams& nominal, const EnsembleConfig& cfg, Rng& rng) {
  cfg.validate();
  std::normal_distribution<double> normal(0.0, 1.0);
  ModelParams m = nominal;
  m.object_mass = std::max(EnsembleConfig::kMinMass, cfg.mass_mean + cfg.mass_std * normal(rng));
  for (auto& base : m.base_poses) {
    const double dx = normal(rng), dy = normal(rng);
    base.position += cfg.base_pos_std * Vec2(dx, dy);
  }
  return m;
}

/// Goal as a function of the control step index.
using GoalSchedule = std::function<Vec2(int step)>;

struct EpisodeOptions {
  bool mean_action = false;  // deterministic policy mean instead of sampling
  bool keep_states = true;
};

/// Runs one episode from `start`. Stops early (flagged) if the simulator
/// produces a non-finite state; the offending step is dropped.
inline Trajectory run_episode(const PolicyParams& policy, const ModelParams& model, const EnvConfig& cfg,
                              const SimState& start, const GoalSchedule& goal_at, int steps, Rng& rng,
                              const EpisodeOptions& opts = {}) {
  if (steps < 1) throw std::invalid_argument("rollout: horizon must be >= 1");
  Trajectory traj;
  traj.observations.reserve(steps + 1);
  traj.actions.reserve(steps);
  traj.rewards.reserve(steps);
  traj.log_probs.reserve(steps);
  if (opts.keep_states) traj.states.reserve(steps + 1);

  SimState state = start;
  ObsVec obs = observe(state, goal_at(0));
  traj.observations.push_back(obs);
  if (opts.keep_states) traj.states.push_back(state);
  for (int k = 0; k < steps; ++k) {
    ActionSample sample = act(obs, policy, rng);
    if (opts.mean_action) {
      sample.action = policy.mean_action(obs);
      sample.log_prob = log_prob(obs, sample.action, policy);
    }
    SimState next = state;
    try {
      for (int s = 0; s < cfg.control_substeps; ++s) next = step(next, sample.action, model, cfg.dt);
    } catch (const NonFiniteState&) {
      traj.terminated_early = true;
      break;
    }
    state = next;
    obs = observe(state, goal_at(k + 1));
    traj.actions.push_back(sample.action);
    traj.log_probs.push_back(sample.log_prob);
    traj.rewards.push_back(reward(obs, sample.action, model, cfg.weights));
    traj.observations.push_back(obs);
    if (opts.keep_states) traj.states.push_back(state);
  }
  return traj;
}

/// Training rollout: reset (possibly restarting from `pool`), fixed goal.
inline Trajectory rollout(const PolicyParams& policy, const ModelParams& model, const EnvConfig& cfg, Rng& rng,
                          std::span<const Trajectory> pool = {}) {
  const ResetResult init = reset(rng, pool, cfg.restart_prob, model, cfg);
  const Vec2 goal = init.goal;
  Trajectory traj = run_episode(policy, model, cfg, init.state, [goal](int) { return goal; }, cfg.horizon, rng);
  traj.restarted = init.restarted;
  return traj;
}

}  // namespace pushnpg
