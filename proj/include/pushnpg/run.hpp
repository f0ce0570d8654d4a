#pragma once

// Train command: coordinator loop plus learning-curve logging, periodic
// evaluation and checkpoints.

#include "pushnpg/checkpoint.hpp"
#include "pushnpg/coordinator.hpp"
#include "pushnpg/harness.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace pushnpg {

struct CurveRow {
  int iteration = 0;
  double mean_return = 0.0;
  double g_norm = 0.0;
  double g_finv_g = 0.0;
  double step_norm = 0.0;
  bool skipped = false;
  std::int64_t terminated = 0;
  std::optional<double> eval_distance;
  double wall_clock_s = 0.0;
};

inline constexpr const char* kCurveHeader =
    "iteration,mean_return,g_norm,g_finv_g,step_norm,skipped,terminated,eval_distance,wall_clock_s";

inline std::string curve_line(const CurveRow& r) {
  std::ostringstream out;
  out.precision(17);
  out << r.iteration << ',' << r.mean_return << ',' << r.g_norm << ',' << r.g_finv_g << ',' << r.step_norm << ','
      << (r.skipped ? 1 : 0) << ',' << r.terminated << ',';
  if (r.eval_distance) out << *r.eval_distance;
  out << ',';
  out.precision(6);
  out << r.wall_clock_s;
  return out.str();
}

struct TrainOptions {
  std::string out_dir;  // empty: nothing written
  bool quiet = true;
  std::ostream* log = nullptr;
};

struct TrainResult {
  TrainerState state;
  std::vector<CurveRow> curve;
  std::uint64_t config_hash = 0;
};

/// Seed of the learning-curve evaluation rollouts.
inline std::uint64_t eval_seed(const RunConfig& cfg) { return derive_seed(cfg.dist.base_seed, 0xE7A1ULL, 0x5EEDULL); }

inline Checkpoint make_checkpoint(const TrainerState& s, std::uint64_t hash) {
  Checkpoint c;
  c.iteration = s.iteration;
  c.policy = s.policy;
  c.value = s.value;
  c.config_hash = hash;
  return c;
}

/// Runs K iterations through `group`. Writes learning_curve.csv,
/// policy_<iter>.json every eval.every iterations and at the end, and
/// weights.csv of the final policy. On abort the last consistent state is
/// checkpointed before the error propagates.
inline TrainResult train(const RunConfig& cfg, WorkerGroup& group, const TrainOptions& opt = {}) {
  namespace fs = std::filesystem;
  TrainResult res;
  res.config_hash = cfg.hash();
  const auto t0 = std::chrono::steady_clock::now();
  const bool write = !opt.out_dir.empty();
  std::ofstream curve;
  if (write) {
    fs::create_directories(opt.out_dir);
    curve.open(fs::path(opt.out_dir) / "learning_curve.csv");
    if (!curve) throw std::runtime_error("cannot write learning_curve.csv in " + opt.out_dir);
    curve << kCurveHeader << '\n';
  }
  auto save = [&](const TrainerState& s) {
    if (write)
      save_checkpoint(make_checkpoint(s, res.config_hash),
                      (fs::path(opt.out_dir) / ("policy_" + std::to_string(s.iteration) + ".json")).string());
  };

  TrainerState init;
  init.policy = initial_policy(cfg);

  CoordinatorHooks hooks;
  hooks.on_iteration = [&](const TrainerState& s, const IterationLog& log, const Aggregate&) {
    CurveRow row;
    row.iteration = log.iteration;
    row.mean_return = log.mean_return;
    row.g_norm = log.g_norm;
    row.g_finv_g = log.g_finv_g;
    row.step_norm = log.step_norm;
    row.skipped = log.skipped;
    row.terminated = log.terminated;
    const bool eval_now = cfg.eval.every > 0 && (log.iteration % cfg.eval.every == 0);
    if (eval_now) {
      EvalOptions eo;
      eo.mean_action = cfg.eval.mean_action;
      eo.seed = eval_seed(cfg);
      row.eval_distance = evaluate(s.policy, cfg.model, cfg.env, cfg.eval.rollouts, eo).mean_distance;
    }
    row.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (write) curve << curve_line(row) << '\n' << std::flush;
    if (opt.log && !opt.quiet) *opt.log << curve_line(row) << std::endl;
    res.curve.push_back(row);
    if (eval_now && log.iteration != cfg.npg.iterations) save(s);
  };
  hooks.on_abort = [&](const TrainerState& s) { save(s); };

  res.state = run_coordinator(cfg, group, std::move(init), hooks);
  save(res.state);
  if (write) {
    std::ofstream w(fs::path(opt.out_dir) / "weights.csv");
    w << dump_policy_weights(res.state.policy);
  }
  return res;
}

}  // namespace pushnpg
