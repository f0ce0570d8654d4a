#pragma once

// Planar simulator: three torque-controlled two-link fingers pushing a disk
// on a table. Penalty contacts at the fingertips, smoothed Coulomb plus
// viscous ground friction on the disk, semi-implicit Euler integration.
//
// Fidelity limits: joint inertia is lumped and diagonal (no Coriolis or
// inertial coupling between the two links of a finger), links do not
// collide with anything, only fingertips touch the object.

#include "pushnpg/common.hpp"
#include "pushnpg/kvfile.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

namespace pushnpg {

struct BasePose {
  Vec2 position = Vec2::Zero();
  double orientation = 0.0;  // rad, direction of the arm at q = (0, 0)
};

/// Nominal bases sit on a 0.2 m circle at 0, 120 and 240 degrees, each
/// oriented toward the origin.
inline std::array<BasePose, kFingers> default_base_poses() {
  std::array<BasePose, kFingers> poses;
  for (int i = 0; i < kFingers; ++i) {
    double phi = 2.0 * std::numbers::pi * i / kFingers;
    poses[i].position = 0.2 * Vec2(std::cos(phi), std::sin(phi));
    poses[i].orientation = phi + std::numbers::pi;
  }
  return poses;
}

struct ModelParams {
  double object_mass = 0.34;            // kg
  double object_radius = 0.055;         // m
  double ground_coulomb_decel = 0.5;    // m/s^2
  double ground_viscous = 1.0;          // 1/s
  double ground_smoothing_vel = 1e-3;   // m/s, tanh width of the Coulomb zero crossing
  double contact_stiffness = 2000.0;    // N/m
  double contact_damping = 20.0;        // N s/m
  double contact_friction_mu = 0.8;
  double contact_tangent_viscosity = 20.0;  // N s/m, regularizes stick below the cone
  std::array<BasePose, kFingers> base_poses = default_base_poses();
  std::array<std::array<double, 2>, kFingers> link_lengths = {{{0.13, 0.13}, {0.13, 0.13}, {0.13, 0.13}}};
  std::array<double, 2> link_masses = {0.1, 0.1};  // kg, proximal and distal, shared by all fingers
  double joint_damping = 0.5;                      // N m s/rad
  double fingertip_radius = 0.01;                  // m
  /// Joint travel (rad), proximal and distal, shared by all fingers. Beyond
  /// a limit a one-sided spring-damper pushes the joint back.
  std::array<double, 2> joint_lower = {-1.95, 1.2};
  std::array<double, 2> joint_upper = {-0.15, 3.0};
  double joint_limit_stiffness = 50.0;  // N m/rad
  double joint_limit_damping = 1.0;     // N m s/rad

  /// Throws std::invalid_argument naming the first violated constraint.
  void validate() const {
    auto fail = [](const std::string& what) { throw std::invalid_argument("ModelParams: " + what); };
    if (!(object_mass > 0)) fail("object_mass must be > 0");
    if (!(object_radius > 0)) fail("object_radius must be > 0");
    if (!(contact_stiffness > 0)) fail("contact_stiffness must be > 0");
    if (!(contact_friction_mu >= 0)) fail("contact_friction_mu must be >= 0");
    if (!(contact_damping >= 0)) fail("contact_damping must be >= 0");
    if (!(contact_tangent_viscosity >= 0)) fail("contact_tangent_viscosity must be >= 0");
    if (!(ground_coulomb_decel >= 0) || !(ground_viscous >= 0)) fail("ground friction must be >= 0");
    if (!(ground_smoothing_vel > 0)) fail("ground_smoothing_vel must be > 0");
    if (!(joint_damping >= 0)) fail("joint_damping must be >= 0");
    if (!(fingertip_radius >= 0)) fail("fingertip_radius must be >= 0");
    for (int j = 0; j < 2; ++j)
      if (!(joint_lower[j] < joint_upper[j])) fail("joint_lower must be < joint_upper");
    if (!(joint_limit_stiffness >= 0) || !(joint_limit_damping >= 0)) fail("joint limit gains must be >= 0");
    for (double m : link_masses)
      if (!(m > 0)) fail("link_masses must be > 0");
    for (const auto& f : link_lengths)
      for (double l : f)
        if (!(l > 0)) fail("link_lengths must be > 0");
    for (int i = 0; i < kFingers; ++i)
      for (int j = i + 1; j < kFingers; ++j)
        if (base_poses[i].position == base_poses[j].position) fail("base_poses must be distinct");
  }

  /// Lumped per-joint inertia about each joint axis, links as uniform rods.
  Vec6 joint_inertia() const {
    Vec6 inertia;
    const double m1 = link_masses[0], m2 = link_masses[1];
    for (int f = 0; f < kFingers; ++f) {
      const double l1 = link_lengths[f][0], l2 = link_lengths[f][1];
      inertia[2 * f] = m1 * l1 * l1 / 3.0 + m2 * (l1 * l1 + l2 * l2 / 3.0);
      inertia[2 * f + 1] = m2 * l2 * l2 / 3.0;
    }
    return inertia;
  }
};

struct SimState {
  Vec6 q = Vec6::Zero();
  Vec6 qdot = Vec6::Zero();
  Vec2 obj_pos = Vec2::Zero();
  Vec2 obj_vel = Vec2::Zero();
  double t = 0.0;

  bool finite() const {
    return q.allFinite() && qdot.allFinite() && obj_pos.allFinite() && obj_vel.allFinite() && std::isfinite(t);
  }

  ConfigVec configuration() const {
    ConfigVec c;
    c << q, obj_pos;
    return c;
  }
};

struct ContactForce {
  int finger = 0;
  Vec2 point = Vec2::Zero();
  Vec2 normal = Vec2::UnitX();  // from object center toward the fingertip
  double normal_force = 0.0;    // >= 0, pushes the tip along +normal
  double tangent_force = 0.0;   // along the tangent (-normal.y, normal.x), acting on the tip
  double penetration = 0.0;
};

using TipPositions = std::array<Vec2, kFingers>;

/// Fingertip centers. Joint angles are counterclockwise; q = (0, 0) extends
/// the finger straight along the base orientation.
inline TipPositions forward_kinematics(const Vec6& q, const ModelParams& params) {
  TipPositions tips;
  for (int f = 0; f < kFingers; ++f) {
    const auto& base = params.base_poses[f];
    const double a1 = base.orientation + q[2 * f];
    const double a12 = a1 + q[2 * f + 1];
    const double l1 = params.link_lengths[f][0], l2 = params.link_lengths[f][1];
    tips[f] = base.position + Vec2(l1 * std::cos(a1) + l2 * std::cos(a12), l1 * std::sin(a1) + l2 * std::sin(a12));
  }
  return tips;
}

/// 2x2 Jacobian of fingertip f with respect to its two joints.
inline Eigen::Matrix2d finger_jacobian(const Vec6& q, const ModelParams& params, int f) {
  const double a1 = params.base_poses[f].orientation + q[2 * f];
  const double a12 = a1 + q[2 * f + 1];
  const double l1 = params.link_lengths[f][0], l2 = params.link_lengths[f][1];
  Eigen::Matrix2d j;
  j << -l1 * std::sin(a1) - l2 * std::sin(a12), -l2 * std::sin(a12),
        l1 * std::cos(a1) + l2 * std::cos(a12),  l2 * std::cos(a12);
  return j;
}

namespace detail {

// Contact law for one tip; returns false when separated.
inline bool tip_contact(int finger, const Vec2& tip, const Vec2& tip_vel, const Vec2& obj_pos, const Vec2& obj_vel,
                        const ModelParams& params, ContactForce& out) {
  const Vec2 d = tip - obj_pos;
  const double dist = d.norm();
  const double pen = params.fingertip_radius + params.object_radius - dist;
  if (!(pen > 0.0)) return false;
  const Vec2 n = dist > 1e-12 ? Vec2(d / dist) : Vec2(Vec2::UnitX());
  const Vec2 t(-n.y(), n.x());
  const Vec2 v_rel = tip_vel - obj_vel;
  const double vn = v_rel.dot(n);
  const double vt = v_rel.dot(t);
  double fn = params.contact_stiffness * pen + params.contact_damping * std::max(0.0, -vn);
  fn = std::max(0.0, fn);
  const double cap = params.contact_friction_mu * fn;
  const double visc = params.contact_tangent_viscosity * std::abs(vt);
  const double ft = vt > 0 ? -std::min(cap, visc) : (vt < 0 ? std::min(cap, visc) : 0.0);
  out.finger = finger;
  out.point = obj_pos + n * params.object_radius;
  out.normal = n;
  out.normal_force = fn;
  out.tangent_force = ft;
  out.penetration = pen;
  return true;
}

struct Loads {
  Vec6 joint_torque = Vec6::Zero();   // J^T applied contact forces on the tips
  Vec2 object_force = Vec2::Zero();   // sum of contact reactions on the object
};

inline Loads contact_loads(const Vec6& q, const Vec6& qdot, const Vec2& obj_pos, const Vec2& obj_vel,
                           const ModelParams& params, std::vector<ContactForce>* record = nullptr) {
  Loads loads;
  const TipPositions tips = forward_kinematics(q, params);
  for (int f = 0; f < kFingers; ++f) {
    // Cheap rejection before the Jacobian.
    const double reach = params.fingertip_radius + params.object_radius;
    if ((tips[f] - obj_pos).squaredNorm() >= reach * reach) continue;
    const Eigen::Matrix2d jac = finger_jacobian(q, params, f);
    const Vec2 tip_vel = jac * qdot.segment<2>(2 * f);
    ContactForce c;
    if (!tip_contact(f, tips[f], tip_vel, obj_pos, obj_vel, params, c)) continue;
    const Vec2 t(-c.normal.y(), c.normal.x());
    const Vec2 on_tip = c.normal_force * c.normal + c.tangent_force * t;
    loads.joint_torque.segment<2>(2 * f) += jac.transpose() * on_tip;
    loads.object_force -= on_tip;
    if (record) record->push_back(c);
  }
  return loads;
}

/// Restoring torque of the joint-limit springs; zero inside the range.
inline Vec6 joint_limit_torque(const Vec6& q, const Vec6& qdot, const ModelParams& params) {
  Vec6 tau = Vec6::Zero();
  for (int i = 0; i < kJoints; ++i) {
    const int j = i % 2;
    const double below = params.joint_lower[j] - q[i];
    const double above = q[i] - params.joint_upper[j];
    if (below > 0.0)
      tau[i] = params.joint_limit_stiffness * below - params.joint_limit_damping * std::min(0.0, qdot[i]);
    else if (above > 0.0)
      tau[i] = -params.joint_limit_stiffness * above - params.joint_limit_damping * std::max(0.0, qdot[i]);
  }
  return tau;
}

/// Ground friction deceleration (as an acceleration, m/s^2) opposing velocity.
inline Vec2 ground_decel(const Vec2& v, const ModelParams& params) {
  const double speed = v.norm();
  Vec2 a = params.ground_viscous * v;
  if (speed > 0.0) a += params.ground_coulomb_decel * std::tanh(speed / params.ground_smoothing_vel) * (v / speed);
  return a;
}

}  // namespace detail

inline std::vector<ContactForce> contact_forces(const SimState& state, const ModelParams& params) {
  std::vector<ContactForce> out;
  detail::contact_loads(state.q, state.qdot, state.obj_pos, state.obj_vel, params, &out);
  return out;
}

inline constexpr double kMaxPhysicsDt = 0.002;

/// One semi-implicit Euler substep. Throws NonFiniteState on blow-up.
inline SimState step(const SimState& state, const Vec6& torques, const ModelParams& params, double dt) {
  if (!(dt > 0.0 && dt <= kMaxPhysicsDt)) throw std::invalid_argument("step: dt must be in (0, 0.002]");
  const auto loads = detail::contact_loads(state.q, state.qdot, state.obj_pos, state.obj_vel, params);
  const Vec6 inertia = params.joint_inertia();
  const Vec6 limits = detail::joint_limit_torque(state.q, state.qdot, params);
  const Vec6 qdd = (torques - params.joint_damping * state.qdot + loads.joint_torque + limits).cwiseQuotient(inertia);
  const Vec2 obj_acc = loads.object_force / params.object_mass - detail::ground_decel(state.obj_vel, params);

  SimState next;
  next.qdot = state.qdot + dt * qdd;
  next.obj_vel = state.obj_vel + dt * obj_acc;
  next.q = state.q + dt * next.qdot;
  next.obj_pos = state.obj_pos + dt * next.obj_vel;
  next.t = state.t + dt;
  if (!next.finite()) throw NonFiniteState("step: non-finite state at t=" + std::to_string(next.t));
  return next;
}

/// Generalized forces reconstructed from three configurations: six joint
/// torques, then the two object force components. The object is unactuated,
/// so its entries should vanish on consistent data.
using GenForce = Eigen::Matrix<double, kConfigDim, 1>;

struct InverseDynamicsResult {
  GenForce forces = GenForce::Zero();
  ConfigVec sensors = ConfigVec::Zero();
};

/// Sensor model: joint encoders and object position, read directly.
inline ConfigVec sensor_model(const ConfigVec& config) { return config; }

/// Inverts `step`: velocities are backward differences (the semi-implicit
/// Euler velocity after the previous step), accelerations the second
/// difference, and contact/ground loads are evaluated at (q_cur, v_cur)
/// exactly as `step` evaluates them.
inline InverseDynamicsResult inverse_dynamics(const ConfigVec& prev, const ConfigVec& cur, const ConfigVec& next,
                                              const ModelParams& params, double dt) {
  const ConfigVec vel = (cur - prev) / dt;
  const ConfigVec acc = (next - 2.0 * cur + prev) / (dt * dt);
  const Vec6 q = cur.head<kJoints>();
  const Vec6 qdot = vel.head<kJoints>();
  const Vec2 obj_pos = cur.tail<2>();
  const Vec2 obj_vel = vel.tail<2>();
  const auto loads = detail::contact_loads(q, qdot, obj_pos, obj_vel, params);

  InverseDynamicsResult out;
  out.forces.head<kJoints>() =
      params.joint_inertia().cwiseProduct(acc.head<kJoints>()) + params.joint_damping * qdot - loads.joint_torque -
      detail::joint_limit_torque(q, qdot, params);
  out.forces.tail<2>() =
      params.object_mass * (acc.tail<2>() + detail::ground_decel(obj_vel, params)) - loads.object_force;
  out.sensors = sensor_model(cur);
  return out;
}

// ModelParams key-value file. Keys (SI units):
//   object_mass object_radius ground_coulomb_decel ground_viscous
//   ground_smoothing_vel contact_stiffness contact_damping contact_friction_mu
//   contact_tangent_viscosity joint_damping fingertip_radius
//   link_mass_proximal link_mass_distal
//   joint_lower_proximal joint_upper_proximal joint_lower_distal
//   joint_upper_distal joint_limit_stiffness joint_limit_damping
//   base<i>_x base<i>_y base<i>_theta            (i = 0, 1, 2)
//   finger<i>_link1_length finger<i>_link2_length (i = 0, 1, 2)

namespace detail {

template <typename Visit>
void visit_model_fields(ModelParams& p, Visit&& visit) {
  visit("object_mass", p.object_mass);
  visit("object_radius", p.object_radius);
  visit("ground_coulomb_decel", p.ground_coulomb_decel);
  visit("ground_viscous", p.ground_viscous);
  visit("ground_smoothing_vel", p.ground_smoothing_vel);
  visit("contact_stiffness", p.contact_stiffness);
  visit("contact_damping", p.contact_damping);
  visit("contact_friction_mu", p.contact_friction_mu);
  visit("contact_tangent_viscosity", p.contact_tangent_viscosity);
  visit("joint_damping", p.joint_damping);
  visit("fingertip_radius", p.fingertip_radius);
  visit("link_mass_proximal", p.link_masses[0]);
  visit("link_mass_distal", p.link_masses[1]);
  visit("joint_lower_proximal", p.joint_lower[0]);
  visit("joint_upper_proximal", p.joint_upper[0]);
  visit("joint_lower_distal", p.joint_lower[1]);
  visit("joint_upper_distal", p.joint_upper[1]);
  visit("joint_limit_stiffness", p.joint_limit_stiffness);
  visit("joint_limit_damping", p.joint_limit_damping);
  for (int i = 0; i < kFingers; ++i) {
    const std::string b = "base" + std::to_string(i);
    visit(b + "_x", p.base_poses[i].position.x());
    visit(b + "_y", p.base_poses[i].position.y());
    visit(b + "_theta", p.base_poses[i].orientation);
  }
  for (int i = 0; i < kFingers; ++i) {
    const std::string f = "finger" + std::to_string(i);
    visit(f + "_link1_length", p.link_lengths[i][0]);
    visit(f + "_link2_length", p.link_lengths[i][1]);
  }
}

}  // namespace detail

inline std::vector<std::string> model_param_keys() {
  std::vector<std::string> keys;
  ModelParams p;
  detail::visit_model_fields(p, [&](const std::string& k, double&) { keys.push_back(k); });
  return keys;
}

inline std::string to_kv_text(const ModelParams& params) {
  std::string out;
  ModelParams p = params;
  detail::visit_model_fields(p, [&](const std::string& k, double& v) { out += k + " = " + format_exact(v) + "\n"; });
  return out;
}

/// Keys absent from the file keep the values of `base`. Keys may live under
/// `prefix` (e.g. "model." for a `[model]` section of a run config).
inline ModelParams model_params_from_kv(const KvFile& kv, const ModelParams& base = {}, const std::string& prefix = "") {
  ModelParams p = base;
  detail::visit_model_fields(p, [&](const std::string& k, double& v) { v = kv.get_double(prefix + k, v); });
  p.validate();
  return p;
}

inline ModelParams load_model_params(const std::string& path) {
  auto kv = KvFile::load(path);
  auto keys = model_param_keys();
  kv.reject_unknown({""}, keys);
  return model_params_from_kv(kv);
}

}  // namespace pushnpg
