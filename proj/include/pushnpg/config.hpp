#pragma once

// Run configuration: sectioned key-value file. See README for the schema.

#include "pushnpg/env.hpp"
#include "pushnpg/kvfile.hpp"
#include "pushnpg/sim.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace pushnpg {

struct NpgConfig {
  int iterations = 200;  // K
  double delta = 0.05;
  double gamma = 0.995;
  double lambda = 0.97;
  double value_ridge = 1.0;
  double init_log_std = -1.0;
  bool standardize_advantages = true;
  int calibration_rollouts = 20;
  double whitening_min_std = 0.03;
};

struct DistributedConfig {
  std::string listen = "127.0.0.1:5757";
  int workers = 4;
  int rollouts_per_worker = 10;  // N_w
  double round_timeout_s = 120.0;
  double hello_timeout_s = 60.0;
  std::uint64_t base_seed = 1;
  std::vector<std::string> remote;  // non-empty: workers are external processes
};

struct EvalConfig {
  int every = 10;  // iterations between learning-curve eval points (0: never)
  int rollouts = 10;
  bool mean_action = false;
};

struct RunConfig {
  std::string name = "run";
  EnvConfig env;
  ModelParams model;
  NpgConfig npg;
  DistributedConfig dist;
  EvalConfig eval;

  int total_rollouts() const { return dist.workers * dist.rollouts_per_worker; }

  void validate() const {
    auto fail = [](const std::string& m) { throw ConfigError("config: " + m); };
    model.validate();
    env.ensemble.validate();
    if (env.horizon < 1) fail("env.horizon must be >= 1");
    if (env.control_substeps < 1) fail("env.control_substeps must be >= 1");
    if (!(env.dt > 0 && env.dt <= kMaxPhysicsDt)) fail("env.dt must be in (0, 0.002]");
    if (!(env.restart_prob >= 0 && env.restart_prob <= 1)) fail("env.restart_prob must be in [0, 1]");
    if (env.restart_pool_block < 0) fail("env.restart_pool_block must be >= 0");
    if (npg.iterations < 0) fail("npg.iterations must be >= 0");
    if (!(npg.delta > 0)) fail("npg.delta must be > 0");
    if (!(npg.gamma >= 0 && npg.gamma <= 1) || !(npg.lambda >= 0 && npg.lambda <= 1))
      fail("npg.gamma and npg.lambda must be in [0, 1]");
    if (!(npg.value_ridge >= 0)) fail("npg.value_ridge must be >= 0");
    if (dist.workers < 1) fail("distributed.workers must be >= 1");
    if (dist.rollouts_per_worker < 1) fail("distributed.rollouts_per_worker must be >= 1");
    if (env.restart_pool_block > 0 && dist.rollouts_per_worker % env.restart_pool_block != 0)
      fail("env.restart_pool_block must divide distributed.rollouts_per_worker");
    if (eval.rollouts < 1) fail("eval.rollouts must be >= 1");
  }

  /// Canonical text of everything that determines worker-side results.
  std::string canonical_text() const {
    std::string s = to_kv_text(model);
    auto add = [&s](const std::string& k, double v) { s += k + " = " + format_exact(v) + "\n"; };
    add("env.horizon", env.horizon);
    add("env.control_substeps", env.control_substeps);
    add("env.dt", env.dt);
    add("env.restart_prob", env.restart_prob);
    add("env.restart_pool_block", env.restart_pool_block);
    add("env.goal_radius", env.goal_radius);
    add("env.reward_goal", env.weights.goal);
    add("env.reward_tips", env.weights.tips);
    add("env.reward_control", env.weights.control);
    add("env.mass_mean", env.ensemble.mass_mean);
    add("env.mass_std", env.ensemble.mass_std);
    add("env.base_pos_std", env.ensemble.base_pos_std);
    add("env.init_proximal_halfwidth", env.init_proximal_halfwidth);
    add("env.init_distal_halfwidth", env.init_distal_halfwidth);
    add("npg.gamma", npg.gamma);
    add("npg.lambda", npg.lambda);
    add("distributed.rollouts_per_worker", dist.rollouts_per_worker);
    add("distributed.base_seed", static_cast<double>(dist.base_seed));
    return s;
  }

  /// 52-bit FNV-1a of canonical_text(); exactly representable as a double.
  std::uint64_t hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : canonical_text()) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    return h & ((std::uint64_t{1} << 52) - 1);
  }
};

inline const std::vector<std::string>& run_config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k = {
        "run.name",
        "env.horizon", "env.control_substeps", "env.dt", "env.restart_prob", "env.restart_pool_block",
        "env.goal_radius", "env.reward_goal", "env.reward_tips", "env.reward_control", "env.mass_mean",
        "env.mass_std", "env.base_pos_std", "env.init_proximal_halfwidth", "env.init_distal_halfwidth",
        "npg.iterations", "npg.delta", "npg.gamma", "npg.lambda", "npg.value_ridge", "npg.init_log_std",
        "npg.standardize_advantages", "npg.calibration_rollouts", "npg.whitening_min_std",
        "distributed.listen", "distributed.workers", "distributed.rollouts_per_worker", "distributed.iterations",
        "distributed.round_timeout_s", "distributed.hello_timeout_s", "distributed.base_seed", "distributed.remote",
        "eval.every", "eval.rollouts", "eval.mean_action"};
    for (const auto& m : model_param_keys()) k.push_back("model." + m);
    return k;
  }();
  return keys;
}

inline RunConfig parse_run_config(const KvFile& kv) {
  kv.reject_unknown({"", "run", "env", "model", "npg", "distributed", "eval"}, run_config_keys());
  RunConfig c;
  c.name = kv.get_string("run.name", c.name);
  auto& e = c.env;
  e.horizon = static_cast<int>(kv.get_int("env.horizon", e.horizon));
  e.control_substeps = static_cast<int>(kv.get_int("env.control_substeps", e.control_substeps));
  e.dt = kv.get_double("env.dt", e.dt);
  e.restart_prob = kv.get_double("env.restart_prob", e.restart_prob);
  e.restart_pool_block = static_cast<int>(kv.get_int("env.restart_pool_block", e.restart_pool_block));
  e.goal_radius = kv.get_double("env.goal_radius", e.goal_radius);
  e.weights.goal = kv.get_double("env.reward_goal", e.weights.goal);
  e.weights.tips = kv.get_double("env.reward_tips", e.weights.tips);
  e.weights.control = kv.get_double("env.reward_control", e.weights.control);
  e.init_proximal_halfwidth = kv.get_double("env.init_proximal_halfwidth", e.init_proximal_halfwidth);
  e.init_distal_halfwidth = kv.get_double("env.init_distal_halfwidth", e.init_distal_halfwidth);

  c.model = model_params_from_kv(kv, ModelParams{}, "model.");
  e.ensemble.mass_mean = kv.get_double("env.mass_mean", c.model.object_mass);
  e.ensemble.mass_std = kv.get_double("env.mass_std", 0.0);
  e.ensemble.base_pos_std = kv.get_double("env.base_pos_std", 0.0);

  auto& n = c.npg;
  n.iterations = static_cast<int>(kv.get_int("npg.iterations", n.iterations));
  // The distributed section may also carry K.
  n.iterations = static_cast<int>(kv.get_int("distributed.iterations", n.iterations));
  n.delta = kv.get_double("npg.delta", n.delta);
  n.gamma = kv.get_double("npg.gamma", n.gamma);
  n.lambda = kv.get_double("npg.lambda", n.lambda);
  n.value_ridge = kv.get_double("npg.value_ridge", n.value_ridge);
  n.init_log_std = kv.get_double("npg.init_log_std", n.init_log_std);
  n.standardize_advantages = kv.get_bool("npg.standardize_advantages", n.standardize_advantages);
  n.calibration_rollouts = static_cast<int>(kv.get_int("npg.calibration_rollouts", n.calibration_rollouts));
  n.whitening_min_std = kv.get_double("npg.whitening_min_std", n.whitening_min_std);

  auto& d = c.dist;
  d.listen = kv.get_string("distributed.listen", d.listen);
  d.workers = static_cast<int>(kv.get_int("distributed.workers", d.workers));
  d.rollouts_per_worker = static_cast<int>(kv.get_int("distributed.rollouts_per_worker", d.rollouts_per_worker));
  d.round_timeout_s = kv.get_double("distributed.round_timeout_s", d.round_timeout_s);
  d.hello_timeout_s = kv.get_double("distributed.hello_timeout_s", d.hello_timeout_s);
  d.base_seed = static_cast<std::uint64_t>(kv.get_int("distributed.base_seed", static_cast<std::int64_t>(d.base_seed)));
  if (kv.has("distributed.remote")) {
    std::string list = kv.get_string("distributed.remote", "");
    std::size_t pos = 0;
    while (pos < list.size()) {
      auto comma = list.find(',', pos);
      std::string item = list.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
      item.erase(0, item.find_first_not_of(' '));
      item.erase(item.find_last_not_of(' ') + 1);
      if (!item.empty()) d.remote.push_back(item);
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
  }

  c.eval.every = static_cast<int>(kv.get_int("eval.every", c.eval.every));
  c.eval.rollouts = static_cast<int>(kv.get_int("eval.rollouts", c.eval.rollouts));
  c.eval.mean_action = kv.get_bool("eval.mean_action", c.eval.mean_action);

  try {
    c.validate();
  } catch (const std::invalid_argument& ex) {
    throw ConfigError(kv.origin() + ": " + ex.what());
  }
  return c;
}

inline RunConfig load_run_config(const std::string& path) { return parse_run_config(KvFile::load(path)); }

}  // namespace pushnpg
