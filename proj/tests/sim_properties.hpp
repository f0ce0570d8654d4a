#pragma once

// Randomized simulator property suites, shared by the unit tests and the
// acceptance binary.

#include "pushnpg/env.hpp"
#include "pushnpg/sim.hpp"

#include <algorithm>
#include <random>
#include <sstream>
#include <string>

namespace pushnpg::props {

struct Outcome {
  int trials = 0;
  int failures = 0;
  double worst = 0.0;  // suite-specific worst observed quantity
  std::string first_failure;
  bool ok() const { return failures == 0; }
};

struct Scenario {
  ModelParams params;
  SimState start;
  std::vector<Vec6> torques;  // one per control step
  double squeeze = 0.0;       // N, feedback force pushing each tip at the object
  int substeps = 20;
  double dt = 0.0005;
};

// Fingers scattered around home (contact-free), object near the origin,
// torques |u| <= 1. squeeze_max > 0 adds tip-toward-object feedback so
// contacts are sustained.
inline Scenario random_scenario(Rng& rng, int control_steps, double squeeze_max = 8.0) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Scenario s;
  s.params.object_mass = 0.2 + 0.3 * (u(rng) + 1.0);
  s.params.contact_friction_mu = 0.3 + 0.5 * (u(rng) + 1.0);
  const Vec6 home = home_pose();
  do {  // start contact-free
    for (int i = 0; i < kJoints; ++i) {
      s.start.q[i] = home[i] + 0.3 * u(rng);
      s.start.qdot[i] = 0.5 * u(rng);
    }
    s.start.obj_pos = Vec2(0.01 * u(rng), 0.01 * u(rng));
  } while (!tips_clear_of_object(s.start, s.params));
  s.start.obj_vel = Vec2(0.05 * u(rng), 0.05 * u(rng));
  s.squeeze = 0.5 * squeeze_max * (u(rng) + 1.0);
  const double amp = squeeze_max > 0.0 ? 0.5 : 1.0;
  for (int k = 0; k < control_steps; ++k) {
    Vec6 tau;
    for (int i = 0; i < kJoints; ++i) tau[i] = amp * u(rng);
    s.torques.push_back(tau);
  }
  return s;
}

// Random torque plus the squeeze feedback, saturated at 1 N m.
inline Vec6 control(const Scenario& sc, const Vec6& random, const SimState& s) {
  Vec6 tau = random;
  const auto tips = forward_kinematics(s.q, sc.params);
  for (int f = 0; f < kFingers; ++f) {
    const Vec2 d = s.obj_pos - tips[f];
    if (d.norm() > 1e-9)
      tau.segment<2>(2 * f) += finger_jacobian(s.q, sc.params, f).transpose() * (sc.squeeze * d.normalized());
  }
  return tau.cwiseMax(-1.0).cwiseMin(1.0);
}

template <typename Visit>
void simulate(const Scenario& sc, Visit&& visit) {
  SimState s = sc.start;
  for (const auto& random : sc.torques) {
    const Vec6 tau = control(sc, random, s);
    for (int j = 0; j < sc.substeps; ++j) {
      const SimState next = step(s, tau, sc.params, sc.dt);
      visit(s, tau, next);
      s = next;
    }
  }
}

inline void fail(Outcome& o, int trial, const std::string& what) {
  if (o.failures++ == 0) o.first_failure = "trial " + std::to_string(trial) + ": " + what;
}

inline Outcome friction_cone(std::uint64_t seed, int trials, int control_steps) {
  Outcome o;
  int contacts = 0;
  for (int i = 0; i < trials; ++i, ++o.trials) {
    Rng rng(derive_seed(seed, 1, i));
    const Scenario sc = random_scenario(rng, control_steps);
    bool bad = false;
    simulate(sc, [&](const SimState& s, const Vec6&, const SimState&) {
      for (const auto& c : contact_forces(s, sc.params)) {
        ++contacts;
        const double excess = std::abs(c.tangent_force) - sc.params.contact_friction_mu * c.normal_force;
        o.worst = std::max(o.worst, excess);
        if (c.normal_force < 0.0 || excess > 1e-9 || std::abs(c.normal.norm() - 1.0) > 1e-12) bad = true;
      }
    });
    if (bad) fail(o, i, "cone violated");
  }
  if (contacts == 0) fail(o, -1, "no contacts were exercised");
  return o;
}

inline Outcome penetration_bound(std::uint64_t seed, int trials, int control_steps, double bound = 0.005,
                                 double squeeze_max = 0.0) {
  Outcome o;
  int touched = 0;
  for (int i = 0; i < trials; ++i, ++o.trials) {
    Rng rng(derive_seed(seed, 2, i));
    const Scenario sc = random_scenario(rng, control_steps, squeeze_max);
    double worst = 0.0;
    simulate(sc, [&](const SimState& s, const Vec6&, const SimState&) {
      for (const auto& c : contact_forces(s, sc.params)) worst = std::max(worst, c.penetration);
    });
    o.worst = std::max(o.worst, worst);
    if (worst > 0.0) ++touched;
    if (worst > bound) fail(o, i, "penetration " + std::to_string(worst));
  }
  if (touched == 0) fail(o, -1, "no contacts were exercised");
  return o;
}

// Zero torques, object away from the fingers: object kinetic energy never
// increases.
inline Outcome passivity(std::uint64_t seed, int trials, int control_steps) {
  Outcome o;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < trials; ++i, ++o.trials) {
    Rng rng(derive_seed(seed, 3, i));
    Scenario sc = random_scenario(rng, control_steps);
    for (auto& t : sc.torques) t.setZero();
    sc.squeeze = 0.0;
    sc.start.qdot.setZero();
    sc.start.q = home_pose();
    sc.start.obj_pos = Vec2(0.6 + 0.1 * u(rng), 0.1 * u(rng));
    sc.start.obj_vel = Vec2(0.5 * u(rng), 0.5 * u(rng));
    sc.params.ground_coulomb_decel = 0.5 * (u(rng) + 1.0);
    sc.params.ground_viscous = 0.5 * (u(rng) + 1.0);
    bool bad = false;
    simulate(sc, [&](const SimState& s, const Vec6&, const SimState& next) {
      if (!contact_forces(s, sc.params).empty()) bad = true;
      const double e0 = s.obj_vel.squaredNorm(), e1 = next.obj_vel.squaredNorm();
      o.worst = std::max(o.worst, e1 - e0);
      if (e1 > e0) bad = true;
    });
    if (bad) fail(o, i, "kinetic energy increased or contact occurred");
  }
  return o;
}

inline bool bitwise_equal(const SimState& a, const SimState& b) {
  return a.q == b.q && a.qdot == b.qdot && a.obj_pos == b.obj_pos && a.obj_vel == b.obj_vel && a.t == b.t;
}

inline Outcome determinism(std::uint64_t seed, int trials, int control_steps) {
  Outcome o;
  for (int i = 0; i < trials; ++i, ++o.trials) {
    Rng rng(derive_seed(seed, 4, i));
    const Scenario sc = random_scenario(rng, control_steps);
    std::vector<SimState> a, b;
    simulate(sc, [&](const SimState&, const Vec6&, const SimState& n) { a.push_back(n); });
    simulate(sc, [&](const SimState&, const Vec6&, const SimState& n) { b.push_back(n); });
    bool same = a.size() == b.size();
    for (std::size_t k = 0; same && k < a.size(); ++k) same = bitwise_equal(a[k], b[k]);
    if (!same) fail(o, i, "repeat differs");
  }
  return o;
}

// Shifting every base and the object by v shifts the object trajectory by v
// and leaves the joint trajectory unchanged (up to rounding).
inline Outcome translation_equivariance(std::uint64_t seed, int trials, int control_steps, double tol = 1e-9) {
  Outcome o;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < trials; ++i, ++o.trials) {
    Rng rng(derive_seed(seed, 5, i));
    const Scenario sc = random_scenario(rng, control_steps);
    const Vec2 v(0.5 * u(rng), 0.5 * u(rng));
    Scenario moved = sc;
    for (auto& b : moved.params.base_poses) b.position += v;
    moved.start.obj_pos += v;
    std::vector<SimState> a, b;
    simulate(sc, [&](const SimState&, const Vec6&, const SimState& n) { a.push_back(n); });
    simulate(moved, [&](const SimState&, const Vec6&, const SimState& n) { b.push_back(n); });
    double worst = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
      worst = std::max(worst, (a[k].q - b[k].q).cwiseAbs().maxCoeff());
      worst = std::max(worst, (a[k].obj_pos + v - b[k].obj_pos).cwiseAbs().maxCoeff());
      worst = std::max(worst, (a[k].obj_vel - b[k].obj_vel).cwiseAbs().maxCoeff());
    }
    o.worst = std::max(o.worst, worst);
    if (worst > tol) fail(o, i, "deviation " + std::to_string(worst));
  }
  return o;
}

inline std::string describe(const Outcome& o) {
  std::ostringstream s;
  s << o.trials << " trials, " << o.failures << " failures, worst " << o.worst;
  if (!o.ok()) s << " (" << o.first_failure << ")";
  return s.str();
}

}  // namespace pushnpg::props
