#pragma once

// Distributed natural policy gradient: per-worker sufficient statistics,
// exact aggregation, and the coordinator update.
//
// Partition invariance: every trajectory is seeded by its global index, and
// each per-trajectory partial sum is rounded onto a fixed 2^-24 grid before
// it is added to anything. Sums of grid values are exact in double precision
// (while magnitudes stay below 2^28), so the aggregated statistics do not
// depend on how trajectories were split across workers or on reduction
// order.

#include "pushnpg/config.hpp"
#include "pushnpg/env.hpp"
#include "pushnpg/npg.hpp"
#include "pushnpg/policy.hpp"
#include "pushnpg/value.hpp"

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace pushnpg {

inline constexpr double kGridScale = 16777216.0;  // 2^24
inline constexpr double kExactSumLimit = 268435456.0;  // 2^28
inline constexpr int kFisherTriangle = kThetaDim * (kThetaDim + 1) / 2;
inline constexpr int kFeatureTriangle = kFeatureDim * (kFeatureDim + 1) / 2;

inline double to_grid(double x) { return std::nearbyint(x * kGridScale) / kGridScale; }

template <typename Derived>
void to_grid(Eigen::MatrixBase<Derived>& m) {
  m = m.unaryExpr([](double x) { return to_grid(x); });
}

/// Additive sufficient statistics of a batch of trajectories. All members
/// are on the 2^-24 grid.
struct BatchSums {
  std::int64_t sample_count = 0;
  std::int64_t trajectory_count = 0;
  std::int64_t terminated_count = 0;
  double return_sum = 0.0;
  double adv_sum = 0.0;
  double adv_sq_sum = 0.0;
  ThetaVec score_adv_sum = ThetaVec::Zero();  // sum grad log pi * A (raw advantages)
  ThetaVec score_sum = ThetaVec::Zero();      // sum grad log pi
  ThetaMat fisher_sum = ThetaMat::Zero();     // upper triangle of sum grad grad^T
  NormalEquations value_neq;                  // upper triangle of X^T X

  BatchSums& operator+=(const BatchSums& o) {
    sample_count += o.sample_count;
    trajectory_count += o.trajectory_count;
    terminated_count += o.terminated_count;
    return_sum += o.return_sum;
    adv_sum += o.adv_sum;
    adv_sq_sum += o.adv_sq_sum;
    score_adv_sum += o.score_adv_sum;
    score_sum += o.score_sum;
    fisher_sum.triangularView<Eigen::Upper>() += o.fisher_sum;
    value_neq.xtx.triangularView<Eigen::Upper>() += o.value_neq.xtx;
    value_neq.xty += o.value_neq.xty;
    value_neq.count += o.value_neq.count;
    return *this;
  }

  /// Largest magnitude held; beyond 2^28 sums stop being exact.
  double max_magnitude() const {
    double m = std::max({std::abs(return_sum), std::abs(adv_sum), adv_sq_sum,
                         score_adv_sum.cwiseAbs().maxCoeff(), score_sum.cwiseAbs().maxCoeff()});
    m = std::max(m, fisher_sum.triangularView<Eigen::Upper>().toDenseMatrix().cwiseAbs().maxCoeff());
    m = std::max(m, value_neq.xtx.triangularView<Eigen::Upper>().toDenseMatrix().cwiseAbs().maxCoeff());
    return std::max(m, value_neq.xty.cwiseAbs().maxCoeff());
  }
};

/// Values V_0..V_T along a trajectory; the last uses the features of the
/// final observation at its own step index.
inline std::vector<double> trajectory_values(const Trajectory& traj, const PolicyParams& policy,
                                             const ValueParams& value, int horizon) {
  std::vector<double> v(traj.observations.size());
  for (std::size_t t = 0; t < v.size(); ++t)
    v[t] = value(features(policy.whitening.apply(traj.observations[t]), static_cast<int>(t), horizon));
  return v;
}

/// Grid-rounded statistics of one trajectory.
inline BatchSums trajectory_partials(const Trajectory& traj, const PolicyParams& policy, const ValueParams& value,
                                     const RunConfig& cfg) {
  BatchSums s;
  const auto n = static_cast<Eigen::Index>(traj.length());
  s.trajectory_count = 1;
  s.terminated_count = traj.terminated_early ? 1 : 0;
  s.sample_count = n;
  s.return_sum = to_grid(traj.total_reward());
  if (n == 0) return s;

  const auto values = trajectory_values(traj, policy, value, cfg.env.horizon);
  const auto adv = gae(traj.rewards, values, cfg.npg.gamma, cfg.npg.lambda);
  const Eigen::Map<const Eigen::VectorXd> adv_vec(adv.data(), n);

  Eigen::Matrix<double, Eigen::Dynamic, kThetaDim> scores(n, kThetaDim);
  for (Eigen::Index k = 0; k < n; ++k)
    scores.row(k) = grad_log_prob(traj.observations[k], traj.actions[k], policy).transpose();

  s.adv_sum = to_grid(adv_vec.sum());
  s.adv_sq_sum = to_grid(adv_vec.squaredNorm());
  s.score_adv_sum = scores.transpose() * adv_vec;
  s.score_sum = scores.colwise().sum().transpose();
  s.fisher_sum.triangularView<Eigen::Upper>().setZero();
  s.fisher_sum.selfadjointView<Eigen::Upper>().rankUpdate(scores.transpose());
  to_grid(s.score_adv_sum);
  to_grid(s.score_sum);
  to_grid(s.fisher_sum);

  const auto targets = returns_to_go(traj.rewards, cfg.npg.gamma);
  for (Eigen::Index k = 0; k < n; ++k)
    s.value_neq.add(features(policy.whitening.apply(traj.observations[k]), static_cast<int>(k), cfg.env.horizon),
                    targets[k]);
  to_grid(s.value_neq.xtx);
  to_grid(s.value_neq.xty);
  return s;
}

/// Everything the coordinator needs from one iteration's batch.
struct Aggregate {
  Eigen::VectorXd g;       // normalized policy gradient
  Eigen::MatrixXd F;       // undamped empirical Fisher, exactly symmetric
  NormalEquations value_neq;
  double mean_return = 0.0;
  std::int64_t sample_count = 0;
  std::int64_t trajectory_count = 0;
  std::int64_t terminated_count = 0;
};

/// Normalizes summed statistics. With standardization the gradient uses
/// batch-standardized advantages, recovered from the raw sums as
///   sum s (A - mu) / sigma = (sum s A - mu sum s) / sigma.
inline Aggregate finalize(const BatchSums& sums, bool standardize) {
  if (sums.sample_count <= 0) throw std::invalid_argument("aggregate: no samples");
  const double n = static_cast<double>(sums.sample_count);
  Aggregate out;
  if (standardize) {
    const double mean = sums.adv_sum / n;
    const double var = std::max(0.0, sums.adv_sq_sum / n - mean * mean);
    const double sd = var > 0.0 ? std::sqrt(var) : 1.0;
    out.g = (sums.score_adv_sum - mean * sums.score_sum) / (sd * n);
  } else {
    out.g = sums.score_adv_sum / n;
  }
  out.F = sums.fisher_sum / n;
  out.F.triangularView<Eigen::StrictlyLower>() = out.F.transpose();
  out.value_neq = sums.value_neq;
  out.value_neq.symmetrize();
  out.mean_return = sums.trajectory_count > 0 ? sums.return_sum / static_cast<double>(sums.trajectory_count) : 0.0;
  out.sample_count = sums.sample_count;
  out.trajectory_count = sums.trajectory_count;
  out.terminated_count = sums.terminated_count;
  return out;
}

/// Message from a worker for one iteration.
struct FisherReport {
  std::uint32_t iteration = 0;
  std::uint32_t worker_id = 0;
  BatchSums sums;

  double mean_return() const {
    return sums.trajectory_count > 0 ? sums.return_sum / static_cast<double>(sums.trajectory_count) : 0.0;
  }
};

/// Combines reports in worker-id order. Throws IterationMismatch when the
/// reports disagree on the iteration index.
inline Aggregate aggregate(std::span<const FisherReport> reports, bool standardize = true) {
  if (reports.empty()) throw std::invalid_argument("aggregate: no reports");
  std::vector<const FisherReport*> ordered;
  for (const auto& r : reports) {
    if (r.iteration != reports.front().iteration)
      throw IterationMismatch("aggregate: reports from iterations " + std::to_string(reports.front().iteration) +
                              " and " + std::to_string(r.iteration));
    ordered.push_back(&r);
  }
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const FisherReport* a, const FisherReport* b) { return a->worker_id < b->worker_id; });
  BatchSums total;
  for (const auto* r : ordered) total += r->sums;
  return finalize(total, standardize);
}

/// Broadcast from the coordinator at the start of a round.
struct PolicyBroadcast {
  std::uint32_t iteration = 0;
  ThetaVec theta = ThetaVec::Zero();
  Whitening whitening;
  FeatureVec value_weights = FeatureVec::Zero();
  std::uint64_t config_hash = 0;
};

inline std::uint64_t trajectory_seed(std::uint64_t base_seed, std::uint32_t iteration, std::uint64_t global_index) {
  return derive_seed(base_seed, iteration, global_index);
}

/// Pool of previous-iteration trajectories a given local rollout may restart
/// from: its block of `restart_pool_block` consecutive slots, or the whole batch.
inline std::span<const Trajectory> restart_pool(std::span<const Trajectory> previous, int local_index, int block) {
  if (previous.empty()) return {};
  if (block <= 0) return previous;
  const std::size_t begin = static_cast<std::size_t>(local_index / block) * block;
  if (begin >= previous.size()) return {};
  return previous.subspan(begin, std::min<std::size_t>(block, previous.size() - begin));
}

/// One worker's rollout engine. Holds the previous iteration's trajectories
/// for restarts; no state is shared with other workers.
class Worker {
 public:
  Worker(RunConfig cfg, std::uint32_t worker_id, int rollouts)
      : cfg_(std::move(cfg)), worker_id_(worker_id), rollouts_(rollouts) {}

  FisherReport run_round(const PolicyBroadcast& msg) {
    if (msg.config_hash != cfg_.hash())
      throw ProtocolError("worker " + std::to_string(worker_id_) + ": config hash mismatch");
    const PolicyParams policy = PolicyParams::unflatten(msg.theta, msg.whitening);
    ValueParams value;
    value.weights = msg.value_weights;

    std::vector<Trajectory> batch;
    batch.reserve(rollouts_);
    FisherReport report;
    report.iteration = msg.iteration;
    report.worker_id = worker_id_;
    for (int j = 0; j < rollouts_; ++j) {
      const std::uint64_t global = static_cast<std::uint64_t>(worker_id_) * rollouts_ + j;
      Rng rng(trajectory_seed(cfg_.dist.base_seed, msg.iteration, global));
      const ModelParams model = sample_model(cfg_.model, cfg_.env.ensemble, rng);
      batch.push_back(rollout(policy, model, cfg_.env, rng, restart_pool(previous_, j, cfg_.env.restart_pool_block)));
      report.sums += trajectory_partials(batch.back(), policy, value, cfg_);
    }
    previous_ = std::move(batch);
    return report;
  }

  std::uint32_t id() const { return worker_id_; }
  int rollouts() const { return rollouts_; }
  const RunConfig& config() const { return cfg_; }

 private:
  RunConfig cfg_;
  std::uint32_t worker_id_;
  int rollouts_;
  std::vector<Trajectory> previous_;
};

/// Observation whitening from rollouts of the initial (zero-mean) policy.
inline Whitening calibrate_whitening(const RunConfig& cfg) {
  PolicyParams init;
  init.log_std.setConstant(cfg.npg.init_log_std);
  ObsVec sum = ObsVec::Zero(), sq = ObsVec::Zero();
  double n = 0.0;
  for (int j = 0; j < cfg.npg.calibration_rollouts; ++j) {
    Rng rng(derive_seed(cfg.dist.base_seed, 0xCA11B8A7EULL, j));
    const ModelParams model = sample_model(cfg.model, cfg.env.ensemble, rng);
    const Trajectory t = rollout(init, model, cfg.env, rng);
    for (const auto& o : t.observations) {
      sum += o;
      sq += o.cwiseAbs2();
      n += 1.0;
    }
  }
  Whitening w;
  if (n == 0.0) return w;
  w.mean = sum / n;
  const ObsVec var = (sq / n - w.mean.cwiseAbs2()).cwiseMax(0.0);
  w.std = var.cwiseSqrt().cwiseMax(cfg.npg.whitening_min_std);
  return w;
}

inline PolicyParams initial_policy(const RunConfig& cfg) {
  PolicyParams p;
  p.log_std.setConstant(cfg.npg.init_log_std);
  p.whitening = cfg.npg.calibration_rollouts > 0 ? calibrate_whitening(cfg) : Whitening{};
  return p;
}

struct IterationLog {
  int iteration = 0;  // 1-based
  double mean_return = 0.0;
  double g_norm = 0.0;
  double g_finv_g = 0.0;
  double step_norm = 0.0;
  bool skipped = false;  // degenerate gradient, no update
  std::int64_t terminated = 0;
};

/// Coordinator-side state of the optimization.
struct TrainerState {
  PolicyParams policy;
  ValueParams value;
  int iteration = 0;  // completed iterations

  PolicyBroadcast broadcast(std::uint64_t config_hash) const {
    PolicyBroadcast b;
    b.iteration = static_cast<std::uint32_t>(iteration + 1);
    b.theta = policy.flatten();
    b.whitening = policy.whitening;
    b.value_weights = value.weights;
    b.config_hash = config_hash;
    return b;
  }

  /// Natural step, then refit of the baseline on this batch's returns.
  IterationLog apply(const Aggregate& agg, const NpgConfig& npg) {
    IterationLog log;
    log.iteration = iteration + 1;
    log.mean_return = agg.mean_return;
    log.terminated = agg.terminated_count;
    Eigen::MatrixXd F = agg.F;
    damp(F);
    try {
      const NaturalStep st = natural_step(agg.g, F, npg.delta);
      policy = PolicyParams::unflatten(policy.flatten() + st.delta_theta, policy.whitening);
      log.g_norm = st.g_norm;
      log.g_finv_g = st.g_finv_g;
      log.step_norm = st.step_norm;
    } catch (const DegenerateGradient&) {
      log.skipped = true;
      log.g_norm = agg.g.norm();
    }
    value = fit(agg.value_neq, npg.value_ridge);
    ++iteration;
    return log;
  }
};

/// Reference trainer with no workers and no messages: every trajectory of
/// every iteration is simulated in global-index order in one loop.
class SerialTrainer {
 public:
  explicit SerialTrainer(RunConfig cfg) : cfg_(std::move(cfg)) { state_.policy = initial_policy(cfg_); }
  SerialTrainer(RunConfig cfg, PolicyParams init) : cfg_(std::move(cfg)) { state_.policy = std::move(init); }

  IterationLog iterate() {
    const auto iter = static_cast<std::uint32_t>(state_.iteration + 1);
    const int per_worker = cfg_.dist.rollouts_per_worker;
    const int total = cfg_.total_rollouts();
    std::vector<Trajectory> batch;
    batch.reserve(total);
    BatchSums sums;
    for (int j = 0; j < total; ++j) {
      Rng rng(trajectory_seed(cfg_.dist.base_seed, iter, static_cast<std::uint64_t>(j)));
      const ModelParams model = sample_model(cfg_.model, cfg_.env.ensemble, rng);
      // Restart pools never cross worker boundaries.
      const int worker = j / per_worker, local = j % per_worker;
      std::span<const Trajectory> prev_worker;
      if (!previous_.empty()) prev_worker = std::span<const Trajectory>(previous_).subspan(worker * per_worker, per_worker);
      batch.push_back(rollout(state_.policy, model, cfg_.env, rng,
                              restart_pool(prev_worker, local, cfg_.env.restart_pool_block)));
      sums += trajectory_partials(batch.back(), state_.policy, state_.value, cfg_);
    }
    previous_ = std::move(batch);
    last_ = finalize(sums, cfg_.npg.standardize_advantages);
    return state_.apply(last_, cfg_.npg);
  }

  const TrainerState& state() const { return state_; }
  const Aggregate& last_aggregate() const { return last_; }

 private:
  RunConfig cfg_;
  TrainerState state_;
  std::vector<Trajectory> previous_;
  Aggregate last_;
};

}  // namespace pushnpg
