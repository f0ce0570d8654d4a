#pragma once

// Joint state estimation and parameter identification: Levenberg-damped
// Gauss-Newton over (free model parameters P, configuration trajectory Q)
// minimizing weighted inverse-dynamics and sensor residuals.

#include "pushnpg/env.hpp"
#include "pushnpg/kvfile.hpp"
#include "pushnpg/sim.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace pushnpg {

/// Uniformly sampled log: torques[i] is applied from sample i to i+1.
struct RecordedRun {
  double dt = 0.001;
  std::vector<Vec6> torques;
  std::vector<ConfigVec> sensors;

  std::size_t size() const { return sensors.size(); }

  void validate() const {
    if (!(dt > 0)) throw std::invalid_argument("RecordedRun: dt must be > 0");
    if (sensors.size() < 3) throw std::invalid_argument("RecordedRun: need at least 3 samples");
    if (torques.size() != sensors.size()) throw std::invalid_argument("RecordedRun: torque/sensor count mismatch");
  }
};

inline std::string run_csv(const RecordedRun& run) {
  std::ostringstream out;
  out.precision(17);
  out << "t,u0,u1,u2,u3,u4,u5,q0,q1,q2,q3,q4,q5,obj_x,obj_y\n";
  for (std::size_t i = 0; i < run.size(); ++i) {
    out << static_cast<double>(i) * run.dt;
    for (int j = 0; j < kJoints; ++j) out << ',' << run.torques[i][j];
    for (int j = 0; j < kConfigDim; ++j) out << ',' << run.sensors[i][j];
    out << '\n';
  }
  return out.str();
}

inline RecordedRun parse_run_csv(std::istream& in, const std::string& origin = "<run>") {
  RecordedRun run;
  std::string line;
  std::vector<double> times;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == 't' || line[0] == '#') continue;
    std::vector<double> v;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      char* end = nullptr;
      v.push_back(std::strtod(cell.c_str(), &end));
      if (end == cell.c_str()) throw ConfigError(origin + ":" + std::to_string(line_no) + ": bad number '" + cell + "'");
    }
    if (v.size() != 1 + kJoints + kConfigDim)
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected 15 columns, got " + std::to_string(v.size()));
    times.push_back(v[0]);
    Vec6 u;
    ConfigVec s;
    for (int j = 0; j < kJoints; ++j) u[j] = v[1 + j];
    for (int j = 0; j < kConfigDim; ++j) s[j] = v[1 + kJoints + j];
    run.torques.push_back(u);
    run.sensors.push_back(s);
  }
  if (times.size() < 3) throw ConfigError(origin + ": need at least 3 samples");
  run.dt = (times.back() - times.front()) / static_cast<double>(times.size() - 1);
  for (std::size_t i = 1; i < times.size(); ++i)
    if (std::abs(times[i] - times[i - 1] - run.dt) > 1e-6 * run.dt)
      throw ConfigError(origin + ": sampling is not uniform near row " + std::to_string(i + 1));
  run.validate();
  return run;
}

inline RecordedRun load_run_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError(path + ": cannot open");
  return parse_run_csv(f, path);
}

/// Pointer to the named ModelParams field, or nullptr.
inline double* model_field(ModelParams& p, const std::string& name) {
  double* out = nullptr;
  detail::visit_model_fields(p, [&](const std::string& k, double& v) {
    if (k == name) out = &v;
  });
  return out;
}

struct SysIdProblem {
  std::vector<std::string> free_params;
  ModelParams initial;
  std::optional<std::vector<ConfigVec>> initial_states;  // default: the sensor readings
  double w_tau = 1.0e4;  // (0.01 N m)^-2
  double w_s = 1.0e8;    // (1e-4 m or rad)^-2
  bool estimate_states = true;  // false: Q pinned to the sensor readings

  void validate(const RecordedRun& run) const {
    if (free_params.empty()) throw std::invalid_argument("SysIdProblem: at least one free parameter required");
    ModelParams p = initial;
    for (const auto& n : free_params)
      if (!model_field(p, n)) throw std::invalid_argument("SysIdProblem: unknown parameter '" + n + "'");
    if (!(w_tau > 0) || !(w_s > 0)) throw std::invalid_argument("SysIdProblem: weights must be > 0");
    if (initial_states && initial_states->size() != run.size())
      throw std::invalid_argument("SysIdProblem: initial state count does not match the run");
    run.validate();
  }
};

inline constexpr int kResidualBlock = kConfigDim + kConfigDim;  // 8 generalized forces + 8 sensor channels

inline std::size_t residual_size(const RecordedRun& run) { return (run.size() - 2) * kResidualBlock; }

/// Residual block of interior sample i (1 <= i <= n-2).
inline Eigen::Matrix<double, kResidualBlock, 1> residual_block(const ModelParams& p, const ConfigVec& prev,
                                                               const ConfigVec& cur, const ConfigVec& next,
                                                               const Vec6& u, const ConfigVec& s, double dt,
                                                               double sqrt_wt, double sqrt_ws) {
  const auto id = inverse_dynamics(prev, cur, next, p, dt);
  Eigen::Matrix<double, kResidualBlock, 1> r;
  r.head<kJoints>() = sqrt_wt * (id.forces.head<kJoints>() - u);
  r.segment<2>(kJoints) = sqrt_wt * id.forces.tail<2>();  // the object is unactuated
  r.tail<kConfigDim>() = sqrt_ws * (id.sensors - s);
  return r;
}

/// Stacked [sqrt(w_tau)(tau_hat_i - u_i); sqrt(w_s)(s_hat_i - s_i)] over interior samples.
inline Eigen::VectorXd residuals(const ModelParams& p, const std::vector<ConfigVec>& q, const RecordedRun& run,
                                 double w_tau = 1.0, double w_s = 1.0) {
  if (q.size() != run.size()) throw std::invalid_argument("residuals: state count does not match the run");
  const double swt = std::sqrt(w_tau), sws = std::sqrt(w_s);
  Eigen::VectorXd r(residual_size(run));
  for (std::size_t i = 1; i + 1 < run.size(); ++i)
    r.segment<kResidualBlock>((i - 1) * kResidualBlock) =
        residual_block(p, q[i - 1], q[i], q[i + 1], run.torques[i], run.sensors[i], run.dt, swt, sws);
  return r;
}

struct SysIdResult {
  ModelParams params;
  std::vector<ConfigVec> states;
  std::vector<std::string> free_params;
  std::vector<double> initial_values;
  std::vector<double> values;
  std::vector<bool> identifiable;
  std::vector<double> column_norms;  // of the parameter Jacobian columns at the start
  std::vector<double> confidence;    // sqrt(sigma^2 / diag(J^T J)) at the solution; NaN if frozen
  std::vector<double> cost_trace;    // accepted costs, starting with the initial cost
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  std::string stop_reason;
};

struct GaussNewtonOptions {
  int max_iterations = 200;
  double rel_cost_tol = 1e-10;
  double step_tol = 1e-10;
  double initial_damping = 1e-3;
  double max_damping = 1e16;
  double fd_rel_step = 1e-6;
  double fd_abs_step = 1e-8;
  double identifiability_tol = 1e-12;  // column norm relative to the largest Jacobian column
};

namespace detail {

inline double fd_step(double x, const GaussNewtonOptions& o) { return std::max(o.fd_rel_step * std::abs(x), o.fd_abs_step); }

class SysIdEvaluator {
 public:
  SysIdEvaluator(const SysIdProblem& prob, const RecordedRun& run)
      : prob_(prob), run_(run), swt_(std::sqrt(prob.w_tau)), sws_(std::sqrt(prob.w_s)) {}

  Eigen::VectorXd residual(const ModelParams& p, const std::vector<ConfigVec>& q) const {
    return residuals(p, q, run_, prob_.w_tau, prob_.w_s);
  }

  Eigen::Matrix<double, kResidualBlock, 1> block(const ModelParams& p, const std::vector<ConfigVec>& q,
                                                 std::size_t i) const {
    return residual_block(p, q[i - 1], q[i], q[i + 1], run_.torques[i], run_.sensors[i], run_.dt, swt_, sws_);
  }

  /// Central-difference Jacobian. Parameter columns are dense; the column for
  /// state entry (k, c) touches only the blocks of samples k-1, k, k+1.
  Eigen::SparseMatrix<double> jacobian(const ModelParams& p, const std::vector<ConfigVec>& q,
                                       const std::vector<std::string>& names, const std::vector<int>& active,
                                       const GaussNewtonOptions& o) const {
    const std::size_t n = run_.size();
    const Eigen::Index rows = static_cast<Eigen::Index>(residual_size(run_));
    const Eigen::Index np = static_cast<Eigen::Index>(active.size());
    const Eigen::Index cols = np + (prob_.estimate_states ? static_cast<Eigen::Index>(kConfigDim * n) : 0);
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(np * rows) + (prob_.estimate_states ? n * kConfigDim * 24 : 0));

    for (Eigen::Index a = 0; a < np; ++a) {
      ModelParams pp = p;
      ModelParams pm = p;
      const auto& name = names[static_cast<std::size_t>(active[static_cast<std::size_t>(a)])];
      const double x = *model_field(pp, name);
      const double h = fd_step(x, o);
      *model_field(pp, name) = x + h;
      *model_field(pm, name) = x - h;
      const Eigen::VectorXd d = (residual(pp, q) - residual(pm, q)) / (2.0 * h);
      for (Eigen::Index r = 0; r < rows; ++r)
        if (d[r] != 0.0) trip.emplace_back(r, a, d[r]);
    }

    if (prob_.estimate_states) {
      std::vector<ConfigVec> qq = q;
      for (std::size_t k = 0; k < n; ++k) {
        for (int c = 0; c < kConfigDim; ++c) {
          const double x = q[k][c];
          const double h = fd_step(x, o);
          const Eigen::Index col = np + static_cast<Eigen::Index>(k * kConfigDim + static_cast<std::size_t>(c));
          const std::size_t lo = k > 1 ? k - 1 : 1;
          const std::size_t hi = std::min(k + 1, n - 2);
          for (std::size_t i = lo; i <= hi; ++i) {
            qq[k][c] = x + h;
            const auto bp = block(p, qq, i);
            qq[k][c] = x - h;
            const auto bm = block(p, qq, i);
            qq[k][c] = x;
            const auto d = ((bp - bm) / (2.0 * h)).eval();
            for (int r = 0; r < kResidualBlock; ++r)
              if (d[r] != 0.0)
                trip.emplace_back(static_cast<Eigen::Index>((i - 1) * kResidualBlock) + r, col, d[r]);
          }
        }
      }
    }
    Eigen::SparseMatrix<double> J(rows, cols);
    J.setFromTriplets(trip.begin(), trip.end());
    return J;
  }

 private:
  const SysIdProblem& prob_;
  const RecordedRun& run_;
  double swt_, sws_;
};

}  // namespace detail

/// Levenberg-damped Gauss-Newton on the joint (P, Q) vector. Parameters whose
/// Jacobian column vanishes at the start (e.g. contact terms on a run without
/// contact) are flagged non-identifiable and held at their initial values.
inline SysIdResult gauss_newton(const SysIdProblem& prob, const RecordedRun& run, const GaussNewtonOptions& o = {}) {
  prob.validate(run);
  const std::size_t n = run.size();
  const auto& names = prob.free_params;
  auto field = [&names](ModelParams& p, std::size_t i) -> double& { return *model_field(p, names[i]); };

  SysIdResult res;
  res.free_params = prob.free_params;
  res.params = prob.initial;
  res.states = prob.initial_states ? *prob.initial_states : run.sensors;
  for (std::size_t i = 0; i < names.size(); ++i) res.initial_values.push_back(field(res.params, i));

  detail::SysIdEvaluator ev(prob, run);
  Eigen::VectorXd r = ev.residual(res.params, res.states);
  if (!r.allFinite()) throw NonFiniteResidual("sysid: non-finite residual at the initial point");
  double cost = r.squaredNorm();
  res.initial_cost = cost;
  res.cost_trace.push_back(cost);

  // Identifiability check on the full parameter set.
  std::vector<int> all(names.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  {
    const Eigen::SparseMatrix<double> J0 = ev.jacobian(res.params, res.states, names, all, o);
    double max_norm = 0.0;
    std::vector<double> norms;
    for (Eigen::Index c = 0; c < J0.cols(); ++c) {
      const double cn = J0.col(c).norm();
      if (c < static_cast<Eigen::Index>(all.size())) norms.push_back(cn);
      max_norm = std::max(max_norm, cn);
    }
    res.column_norms = norms;
    for (double cn : norms) res.identifiable.push_back(cn > o.identifiability_tol * max_norm && cn > 0.0);
  }
  std::vector<int> active;
  for (std::size_t i = 0; i < all.size(); ++i)
    if (res.identifiable[i]) active.push_back(static_cast<int>(i));

  const Eigen::Index np = static_cast<Eigen::Index>(active.size());
  const Eigen::Index dim = np + (prob.estimate_states ? static_cast<Eigen::Index>(kConfigDim * n) : 0);
  auto apply = [&](const ModelParams& p, const std::vector<ConfigVec>& q, const Eigen::VectorXd& dx, ModelParams& p_out,
                   std::vector<ConfigVec>& q_out) {
    p_out = p;
    q_out = q;
    for (Eigen::Index a = 0; a < np; ++a) field(p_out, static_cast<std::size_t>(active[static_cast<std::size_t>(a)])) += dx[a];
    if (prob.estimate_states)
      for (std::size_t k = 0; k < n; ++k)
        for (int c = 0; c < kConfigDim; ++c) q_out[k][c] += dx[np + static_cast<Eigen::Index>(k * kConfigDim) + c];
  };
  auto state_norm = [&](const ModelParams& p, const std::vector<ConfigVec>& q) {
    double s = 0.0;
    ModelParams pc = p;
    for (int a : active) s += field(pc, static_cast<std::size_t>(a)) * field(pc, static_cast<std::size_t>(a));
    if (prob.estimate_states)
      for (const auto& v : q) s += v.squaredNorm();
    return std::sqrt(s);
  };

  if (dim == 0) {
    res.stop_reason = "no identifiable parameters";
  } else {
    double lambda = o.initial_damping;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver;
    for (int it = 1; it <= o.max_iterations && res.stop_reason.empty(); ++it) {
      res.iterations = it;
      const Eigen::SparseMatrix<double> J = ev.jacobian(res.params, res.states, names, active, o);
      const Eigen::SparseMatrix<double> JtJ = (J.transpose() * J).pruned();
      const Eigen::VectorXd g = J.transpose() * r;
      Eigen::VectorXd diag = JtJ.diagonal();
      for (Eigen::Index i = 0; i < diag.size(); ++i) diag[i] = std::max(diag[i], 1e-12);
      bool accepted = false;
      while (!accepted) {
        Eigen::SparseMatrix<double> D(dim, dim);
        std::vector<Eigen::Triplet<double>> dt;
        for (Eigen::Index i = 0; i < dim; ++i) dt.emplace_back(i, i, lambda * diag[i]);
        D.setFromTriplets(dt.begin(), dt.end());
        const Eigen::SparseMatrix<double> A = JtJ + D;
        solver.compute(A);
        if (solver.info() != Eigen::Success) {
          lambda *= 10.0;  // singular: fall back to heavier damping
          if (lambda > o.max_damping) {
            res.stop_reason = "damping limit reached (singular system)";
            break;
          }
          continue;
        }
        const Eigen::VectorXd dx = -solver.solve(g);
        ModelParams p_new;
        std::vector<ConfigVec> q_new;
        apply(res.params, res.states, dx, p_new, q_new);
        const Eigen::VectorXd r_new = ev.residual(p_new, q_new);
        const double cost_new = r_new.allFinite() ? r_new.squaredNorm() : std::numeric_limits<double>::infinity();
        if (cost_new <= cost) {
          accepted = true;
          const double rel = cost > 0.0 ? (cost - cost_new) / cost : 0.0;
          const double step = dx.norm();
          const double scale = state_norm(res.params, res.states);
          res.params = p_new;
          res.states = std::move(q_new);
          r = r_new;
          cost = cost_new;
          res.cost_trace.push_back(cost);
          lambda = std::max(lambda / 3.0, 1e-12);
          if (step < o.step_tol * (1.0 + scale))
            res.stop_reason = "step norm below tolerance";
          else if (rel < o.rel_cost_tol)
            res.stop_reason = "relative cost decrease below tolerance";
        } else {
          lambda *= 10.0;
          if (lambda > o.max_damping) {
            res.stop_reason = "damping limit reached (no descent)";
            break;
          }
        }
      }
    }
    if (res.stop_reason.empty()) res.stop_reason = "iteration limit";
  }

  res.final_cost = cost;
  if (!r.allFinite()) throw NonFiniteResidual("sysid: non-finite residual at the solution");
  for (std::size_t i = 0; i < names.size(); ++i) res.values.push_back(field(res.params, i));

  // Confidence proxy per parameter from the diagonal of J^T J at the solution.
  res.confidence.assign(names.size(), std::numeric_limits<double>::quiet_NaN());
  if (np > 0) {
    const Eigen::SparseMatrix<double> J = ev.jacobian(res.params, res.states, names, active, o);
    const double dof = std::max<double>(1.0, static_cast<double>(J.rows() - J.cols()));
    const double sigma2 = cost / dof;
    for (Eigen::Index a = 0; a < np; ++a) {
      const double d = J.col(a).squaredNorm();
      if (d > 0) res.confidence[static_cast<std::size_t>(active[static_cast<std::size_t>(a)])] = std::sqrt(sigma2 / d);
    }
  }
  return res;
}

inline std::string fit_report(const SysIdResult& r) {
  std::ostringstream out;
  out.precision(10);
  out << "sysid fit report\n";
  out << "iterations: " << r.iterations << "\n";
  out << "stop: " << r.stop_reason << "\n";
  out << "initial cost: " << r.initial_cost << "\n";
  out << "final cost: " << r.final_cost << "\n\n";
  out << "parameter, initial, fitted, confidence, column_norm, identifiable\n";
  for (std::size_t i = 0; i < r.free_params.size(); ++i)
    out << r.free_params[i] << ", " << r.initial_values[i] << ", " << r.values[i] << ", " << r.confidence[i] << ", "
        << r.column_norms[i] << ", " << (r.identifiable[i] ? "yes" : "NO (held fixed)") << "\n";
  out << "\ncost trace (accepted steps)\n";
  for (std::size_t i = 0; i < r.cost_trace.size(); ++i) out << i << ", " << r.cost_trace[i] << "\n";
  return out.str();
}

// Hardware proxy: the simulator with hidden parameters stands in for the rig.

using TorqueProgram = std::function<Vec6(double t, const SimState&)>;

/// A closed-loop pushing program: the fingers track tip targets squeezed
/// toward the object and swept around a small circle, so contacts make,
/// slide and break.
inline TorqueProgram pushing_program(const ModelParams& nominal, double sweep_radius = 0.02, double period = 1.0) {
  return [nominal, sweep_radius, period](double t, const SimState& s) {
    const auto tips = forward_kinematics(s.q, nominal);
    const double a = 2.0 * std::numbers::pi * t / period;
    const Vec2 centre(sweep_radius * std::sin(a), sweep_radius * (1.0 - std::cos(a)));
    Vec6 tau = Vec6::Zero();
    for (int f = 0; f < kFingers; ++f) {
      const Vec2 dir = (s.obj_pos - nominal.base_poses[f].position).normalized();
      const double squeeze = 0.003 * (1.0 + std::sin(3.0 * a + f));
      const Vec2 target = centre - dir * (nominal.object_radius + nominal.fingertip_radius - squeeze);
      const Eigen::Matrix2d J = finger_jacobian(s.q, nominal, f);
      const Vec2 tip_vel = J * s.qdot.segment<2>(2 * f);
      const Vec2 force = 60.0 * (target - tips[f]) - 2.0 * tip_vel;
      tau.segment<2>(2 * f) = J.transpose() * force;
    }
    return tau;
  };
}

/// Fingers at home, object at rest at the origin.
inline SimState proxy_start_state() {
  SimState s;
  s.q = home_pose();
  return s;
}

/// Simulates `duration` seconds with `hidden` parameters at step `dt`,
/// logging every step; sensor readings get N(0, noise_std^2) noise.
inline RecordedRun generate_run(const ModelParams& hidden, const TorqueProgram& program, double duration, double dt,
                                double noise_std, std::uint64_t seed, const SimState& start) {
  RecordedRun run;
  run.dt = dt;
  const auto n = static_cast<std::size_t>(std::lround(duration / dt)) + 1;
  Rng rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  SimState s = start;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec6 u = program(static_cast<double>(i) * dt, s);
    ConfigVec meas = sensor_model(s.configuration());
    if (noise_std > 0)
      for (int c = 0; c < kConfigDim; ++c) meas[c] += noise_std * noise(rng);
    run.sensors.push_back(meas);
    run.torques.push_back(u);
    s = step(s, u, hidden, dt);
  }
  return run;
}

// sysid job file:
//   [sysid]  free = name, name, ...   w_tau   w_s   estimate_states   max_iterations
//            run = path to a recorded CSV (relative to the job file); when
//            absent a hardware-proxy run is synthesized from [proxy]
//   [model]  initial guess P0 (ModelParams keys)
//   [proxy]  duration   dt   noise_std   seed   plus hidden ModelParams keys

struct ProxySpec {
  ModelParams hidden;
  double duration = 2.0;
  double dt = 0.001;
  double noise_std = 0.0;
  std::uint64_t seed = 7;
};

struct SysIdJob {
  SysIdProblem problem;
  GaussNewtonOptions options;
  std::string run_path;  // empty: use proxy
  ProxySpec proxy;
};

inline SysIdJob parse_sysid_job(const KvFile& kv, const std::string& base_dir = "") {
  std::vector<std::string> known = {"sysid.free", "sysid.w_tau", "sysid.w_s", "sysid.estimate_states",
                                    "sysid.max_iterations", "sysid.run", "proxy.duration", "proxy.dt",
                                    "proxy.noise_std", "proxy.seed"};
  for (const auto& k : model_param_keys()) {
    known.push_back("model." + k);
    known.push_back("proxy." + k);
  }
  kv.reject_unknown({"", "sysid", "model", "proxy"}, known);
  SysIdJob job;
  auto& p = job.problem;
  std::stringstream list(kv.require_string("sysid.free"));
  std::string item;
  while (std::getline(list, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) p.free_params.push_back(item);
  }
  ModelParams probe;
  for (const auto& n : p.free_params)
    if (!model_field(probe, n))
      throw ConfigError(kv.origin() + ":" + std::to_string(kv.line_of("sysid.free")) + ": unknown parameter '" + n + "'");
  p.w_tau = kv.get_double("sysid.w_tau", p.w_tau);
  p.w_s = kv.get_double("sysid.w_s", p.w_s);
  p.estimate_states = kv.get_bool("sysid.estimate_states", p.estimate_states);
  job.options.max_iterations = static_cast<int>(kv.get_int("sysid.max_iterations", job.options.max_iterations));
  try {
    p.initial = model_params_from_kv(kv, ModelParams{}, "model.");
    job.proxy.hidden = model_params_from_kv(kv, ModelParams{}, "proxy.");
  } catch (const std::invalid_argument& e) {
    throw ConfigError(kv.origin() + ": " + e.what());
  }
  if (kv.has("sysid.run")) {
    std::filesystem::path rp = kv.get_string("sysid.run", "");
    if (rp.is_relative() && !base_dir.empty()) rp = std::filesystem::path(base_dir) / rp;
    job.run_path = rp.string();
  }
  job.proxy.duration = kv.get_double("proxy.duration", job.proxy.duration);
  job.proxy.dt = kv.get_double("proxy.dt", job.proxy.dt);
  job.proxy.noise_std = kv.get_double("proxy.noise_std", job.proxy.noise_std);
  job.proxy.seed = static_cast<std::uint64_t>(kv.get_int("proxy.seed", static_cast<std::int64_t>(job.proxy.seed)));
  if (!(job.proxy.dt > 0 && job.proxy.dt <= kMaxPhysicsDt)) throw ConfigError(kv.origin() + ": proxy.dt must be in (0, 0.002]");
  if (!(job.proxy.duration >= 2 * job.proxy.dt)) throw ConfigError(kv.origin() + ": proxy.duration too short");
  if (!(p.w_tau > 0 && p.w_s > 0)) throw ConfigError(kv.origin() + ": sysid weights must be > 0");
  return job;
}

/// The proxy run described by a job (the fitting model is the nominal one).
inline RecordedRun proxy_run(const ProxySpec& spec, const ModelParams& nominal) {
  return generate_run(spec.hidden, pushing_program(nominal), spec.duration, spec.dt, spec.noise_std, spec.seed,
                      proxy_start_state());
}

}  // namespace pushnpg
