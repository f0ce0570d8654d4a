#pragma once

// Synchronous coordinator loop: broadcast -> collect -> aggregate ->
// natural step -> baseline refit, once per iteration.

#include "pushnpg/protocol.hpp"
#include "pushnpg/training.hpp"

#include <functional>
#include <future>
#include <memory>
#include <vector>

namespace pushnpg {

/// The set of workers the coordinator talks to for one run.
class WorkerGroup {
 public:
  virtual ~WorkerGroup() = default;
  virtual std::size_t size() const = 0;
  /// One report per worker, ordered by worker id.
  virtual std::vector<FisherReport> round(const PolicyBroadcast& msg, double timeout_s) = 0;
  virtual void shutdown(std::uint32_t iteration) = 0;
};

/// Workers living in this process. Every message still goes through
/// encode/decode so the in-process and TCP paths see identical bytes.
class InProcessGroup : public WorkerGroup {
 public:
  InProcessGroup(const RunConfig& cfg, bool parallel = false) : parallel_(parallel) {
    for (int w = 0; w < cfg.dist.workers; ++w)
      workers_.push_back(std::make_unique<Worker>(cfg, static_cast<std::uint32_t>(w), cfg.dist.rollouts_per_worker));
  }

  std::size_t size() const override { return workers_.size(); }

  std::vector<FisherReport> round(const PolicyBroadcast& msg, double /*timeout_s*/) override {
    const Bytes wire_msg = encode(msg);
    auto serve = [&wire_msg](Worker& w) {
      const auto decoded = std::get<PolicyBroadcast>(decode(wire_msg));
      return encode(w.run_round(decoded));
    };
    std::vector<Bytes> replies(workers_.size());
    if (parallel_ && workers_.size() > 1) {
      std::vector<std::future<Bytes>> futures;
      for (auto& w : workers_) futures.push_back(std::async(std::launch::async, serve, std::ref(*w)));
      for (std::size_t i = 0; i < futures.size(); ++i) replies[i] = futures[i].get();
    } else {
      for (std::size_t i = 0; i < workers_.size(); ++i) replies[i] = serve(*workers_[i]);
    }
    std::vector<FisherReport> out;
    for (const auto& r : replies) out.push_back(std::get<FisherReport>(decode(r)));
    return out;
  }

  void shutdown(std::uint32_t) override {}

 private:
  std::vector<std::unique_ptr<Worker>> workers_;
  bool parallel_;
};

struct CoordinatorHooks {
  /// After each completed iteration, with the aggregate it was computed from.
  std::function<void(const TrainerState&, const IterationLog&, const Aggregate&)> on_iteration;
  /// On abort (e.g. WorkerTimeout) with the last consistent state.
  std::function<void(const TrainerState&)> on_abort;
};

/// Runs `cfg.npg.iterations` rounds starting from `state`.
inline TrainerState run_coordinator(const RunConfig& cfg, WorkerGroup& group, TrainerState state,
                                    const CoordinatorHooks& hooks = {}) {
  const std::uint64_t hash = cfg.hash();
  try {
    while (state.iteration < cfg.npg.iterations) {
      const PolicyBroadcast msg = state.broadcast(hash);
      const auto reports = group.round(msg, cfg.dist.round_timeout_s);
      const Aggregate agg = aggregate(reports, cfg.npg.standardize_advantages);
      const IterationLog log = state.apply(agg, cfg.npg);
      if (hooks.on_iteration) hooks.on_iteration(state, log, agg);
    }
  } catch (...) {
    if (hooks.on_abort) hooks.on_abort(state);
    group.shutdown(static_cast<std::uint32_t>(state.iteration));
    throw;
  }
  group.shutdown(static_cast<std::uint32_t>(state.iteration));
  return state;
}

inline TrainerState run_coordinator(const RunConfig& cfg, WorkerGroup& group, const CoordinatorHooks& hooks = {}) {
  TrainerState init;
  init.policy = initial_policy(cfg);
  return run_coordinator(cfg, group, std::move(init), hooks);
}

}  // namespace pushnpg
