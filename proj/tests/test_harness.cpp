#include "pushnpg/run.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace pushnpg;
namespace fs = std::filesystem;

namespace {

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

// Everything but the trailing wall-clock column.
std::string strip_wall_clock(const std::string& csv) {
  std::string out;
  for (const auto& l : lines_of(csv)) out += l.substr(0, l.rfind(',')) + "\n";
  return out;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("pushnpg_test_" + name);
  fs::remove_all(p);
  return p;
}

RunConfig tiny_cfg() {
  RunConfig c;
  c.env.horizon = 15;
  c.npg.iterations = 2;
  c.npg.calibration_rollouts = 2;
  c.dist.workers = 1;
  c.dist.rollouts_per_worker = 2;
  c.eval.every = 1;
  c.eval.rollouts = 1;
  return c;
}

}  // namespace

TEST(GoalPath, Examples) {
  EXPECT_EQ(goal_path(0.0), Vec2::Zero());
  EXPECT_NEAR(goal_path(2.0).norm(), 0.04, 1e-15);
  EXPECT_NEAR((goal_path(4.0) - goal_path(2.0)).norm(), 0.0, 1e-15);
  EXPECT_NEAR(goal_path(3.0).norm(), 0.04, 1e-15);
  EXPECT_NEAR(goal_path(1.0).norm(), 0.02, 1e-15);
}

TEST(GoalPath, ContinuousAndBounded) {
  double worst_jump = 0.0;
  Vec2 prev = goal_path(0.0);
  for (int i = 1; i <= 40000; ++i) {
    const Vec2 g = goal_path(i * 1e-4);
    EXPECT_LE(g.norm(), 0.04 + 1e-15);
    worst_jump = std::max(worst_jump, (g - prev).norm());
    prev = g;
  }
  // max speed is about 2 pi * 2 turns/2 s * 0.04 m = 0.25 m/s
  EXPECT_LT(worst_jump, 0.3 * 1e-4);
}

TEST(Evaluate, ZeroTorquePolicyLeavesObjectAtOrigin) {
  PolicyParams zero;
  EnvConfig env;
  EvalOptions eo;
  eo.mean_action = true;
  const auto res = evaluate(zero, ModelParams{}, env, 2, eo);
  ASSERT_EQ(res.rollout_count(), 2u);
  const int steps = eval_steps(env);
  EXPECT_EQ(steps, 400);
  double expect = 0.0;
  for (int k = 1; k <= steps; ++k) expect += goal_path(k * env.control_dt()).norm();
  expect /= steps;
  EXPECT_NEAR(res.mean_distance, expect, 1e-12);
  EXPECT_NEAR(res.mean_distance, 0.03, 2e-4);  // continuous path average
  for (const auto& o : res.rollouts[0].object) EXPECT_EQ(o, Vec2::Zero());
}

TEST(Evaluate, DeterministicForSeed) {
  PolicyParams p;
  p.log_std.setConstant(-1.0);
  EnvConfig env;
  EvalOptions eo;
  eo.seed = 5;
  const auto a = evaluate(p, ModelParams{}, env, 3, eo), b = evaluate(p, ModelParams{}, env, 3, eo);
  EXPECT_EQ(a.mean_distance, b.mean_distance);
  EXPECT_EQ(eval_csv(a, env.control_dt()), eval_csv(b, env.control_dt()));
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : a.rollouts)
    for (double d : r.distance) sum += d, ++n;
  EXPECT_NEAR(a.mean_distance, sum / n, 1e-15);
  eo.seed = 6;
  EXPECT_NE(evaluate(p, ModelParams{}, env, 3, eo).mean_distance, a.mean_distance);
  EXPECT_THROW(evaluate(p, ModelParams{}, env, 0, eo), std::invalid_argument);
}

TEST(Evaluate, CsvShape) {
  PolicyParams p;
  EnvConfig env;
  const auto res = evaluate(p, ModelParams{}, env, 2);
  const auto l = lines_of(eval_csv(res, env.control_dt()));
  EXPECT_EQ(l.front(), "rollout,step,t,obj_x,obj_y,goal_x,goal_y,distance,failed");
  EXPECT_EQ(l.size(), 1u + 2u * 400u);
}

TEST(Weights, ZeroPolicyShape) {
  PolicyParams zero;
  zero.log_std.setZero();
  const auto l = lines_of(dump_policy_weights(zero));
  ASSERT_EQ(l.size(), 7u);
  for (std::size_t r = 0; r < l.size(); ++r) {
    std::vector<std::string> cells;
    std::stringstream s(l[r]);
    for (std::string c; std::getline(s, c, ',');) cells.push_back(c);
    ASSERT_EQ(cells.size(), 1u + 16u + 2u) << l[r];  // label, 16 gains, bias, log_std
    if (r > 0)
      for (std::size_t c = 1; c < cells.size(); ++c) EXPECT_EQ(std::stod(cells[c]), 0.0);
  }
}

TEST(Weights, CheckpointRoundTripGivesIdenticalCsv) {
  Rng rng(1);
  std::normal_distribution<double> n(0, 1);
  ThetaVec th;
  for (auto& x : th) x = n(rng);
  Checkpoint c;
  c.policy = PolicyParams::unflatten(th);
  const auto path = scratch("weights.json");
  save_checkpoint(c, path.string());
  EXPECT_EQ(dump_policy_weights(load_checkpoint(path.string()).policy), dump_policy_weights(c.policy));
  fs::remove(path);
}

TEST(Train, ZeroIterationsEmitsInitialCheckpoint) {
  RunConfig cfg = tiny_cfg();
  cfg.npg.iterations = 0;
  const auto dir = scratch("k0");
  InProcessGroup g(cfg);
  TrainOptions opt;
  opt.out_dir = dir.string();
  const auto res = train(cfg, g, opt);
  ASSERT_TRUE(fs::exists(dir / "policy_0.json"));
  EXPECT_TRUE(load_checkpoint((dir / "policy_0.json").string()).policy == initial_policy(cfg));
  EXPECT_EQ(lines_of(slurp(dir / "learning_curve.csv")).size(), 1u);
  EXPECT_TRUE(res.curve.empty());
  fs::remove_all(dir);
}

TEST(Train, WritesArtifactsAndIsReproducible) {
  const RunConfig cfg = tiny_cfg();
  std::string curves[2], policies[2], weights[2];
  for (int rep = 0; rep < 2; ++rep) {
    const auto dir = scratch("rep" + std::to_string(rep));
    InProcessGroup g(cfg);
    TrainOptions opt;
    opt.out_dir = dir.string();
    const auto res = train(cfg, g, opt);
    EXPECT_EQ(res.state.iteration, 2);
    const auto curve = slurp(dir / "learning_curve.csv");
    const auto l = lines_of(curve);
    ASSERT_EQ(l.size(), 3u);
    EXPECT_EQ(l[0], kCurveHeader);
    EXPECT_TRUE(fs::exists(dir / "policy_1.json"));
    EXPECT_TRUE(fs::exists(dir / "policy_2.json"));
    EXPECT_TRUE(fs::exists(dir / "weights.csv"));
    ASSERT_TRUE(res.curve[1].eval_distance.has_value());
    curves[rep] = strip_wall_clock(curve);
    policies[rep] = slurp(dir / "policy_2.json");
    weights[rep] = slurp(dir / "weights.csv");
    fs::remove_all(dir);
  }
  EXPECT_EQ(curves[0], curves[1]);
  EXPECT_EQ(policies[0], policies[1]);
  EXPECT_EQ(weights[0], weights[1]);
}
