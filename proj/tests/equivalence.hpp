#pragma once

// Partition-invariance check: the same seeded trajectory set split across
// different worker counts must aggregate bit for bit identically.

#include "pushnpg/coordinator.hpp"

#include <string>
#include <vector>

namespace pushnpg::equiv {

struct Trace {
  std::vector<Eigen::VectorXd> g;
  std::vector<Eigen::MatrixXd> F;
  std::vector<FeatureVec> value;
  TrainerState final_state;
};

inline Trace run_group(const RunConfig& cfg, bool parallel) {
  Trace t;
  InProcessGroup group(cfg, parallel);
  CoordinatorHooks hooks;
  hooks.on_iteration = [&t](const TrainerState& s, const IterationLog&, const Aggregate& agg) {
    t.g.push_back(agg.g);
    t.F.push_back(agg.F);
    t.value.push_back(s.value.weights);
  };
  t.final_state = run_coordinator(cfg, group, hooks);
  return t;
}

inline Trace run_serial(const RunConfig& cfg) {
  Trace t;
  SerialTrainer trainer(cfg);
  for (int k = 0; k < cfg.npg.iterations; ++k) {
    trainer.iterate();
    t.g.push_back(trainer.last_aggregate().g);
    t.F.push_back(trainer.last_aggregate().F);
    t.value.push_back(trainer.state().value.weights);
  }
  t.final_state = trainer.state();
  return t;
}

/// Empty string when identical, otherwise the first difference.
inline std::string compare(const Trace& a, const Trace& b) {
  if (a.g.size() != b.g.size()) return "iteration counts differ";
  for (std::size_t k = 0; k < a.g.size(); ++k) {
    const std::string it = " at iteration " + std::to_string(k + 1);
    if (a.g[k] != b.g[k]) return "g differs" + it;
    if (a.F[k] != b.F[k]) return "F differs" + it;
    if (a.value[k] != b.value[k]) return "value weights differ" + it;
  }
  if (!(a.final_state.policy == b.final_state.policy)) return "final policy differs";
  return "";
}

/// Same trajectory set, split as `workers` x `per_worker`.
inline RunConfig split(RunConfig cfg, int workers, int per_worker) {
  cfg.dist.workers = workers;
  cfg.dist.rollouts_per_worker = per_worker;
  return cfg;
}

}  // namespace pushnpg::equiv
