#include "pushnpg/checkpoint.hpp"
#include "pushnpg/config.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <set>

using namespace pushnpg;

TEST(Seeds, DeriveIsDeterministicAndSpreads) {
  EXPECT_EQ(derive_seed(1, 2, 3), derive_seed(1, 2, 3));
  std::set<std::uint64_t> seen;
  for (std::uint64_t it = 0; it < 20; ++it)
    for (std::uint64_t j = 0; j < 50; ++j) seen.insert(derive_seed(1, it, j));
  EXPECT_EQ(seen.size(), 1000u);
  EXPECT_NE(derive_seed(1, 2, 3), derive_seed(1, 3, 2));
  EXPECT_NE(derive_seed(1, 2, 3), derive_seed(2, 2, 3));
}

TEST(KvFile, SectionsCommentsAndTypes) {
  const auto kv = KvFile::parse("top = 1\n[env]\nhorizon = 7  # comment\n\n[npg]\ndelta=0.25\nflag = true\n");
  EXPECT_TRUE(kv.has("top"));
  EXPECT_EQ(kv.get_int("env.horizon", 0), 7);
  EXPECT_DOUBLE_EQ(kv.get_double("npg.delta", 0), 0.25);
  EXPECT_TRUE(kv.get_bool("npg.flag", false));
  EXPECT_EQ(kv.get_int("missing", 42), 42);
  EXPECT_THROW(kv.require_string("missing"), ConfigError);
}

TEST(KvFile, BadNumberReportsLine) {
  const auto kv = KvFile::parse("[env]\nhorizon = abc\n", "x.cfg");
  try {
    kv.get_int("env.horizon", 0);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("x.cfg:2"), std::string::npos) << e.what();
  }
}

TEST(KvFile, FormatExactRoundTrips) {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, -2.5e17, 0.34}) EXPECT_EQ(std::stod(format_exact(v)), v);
}

TEST(ModelParams, KvRoundTrip) {
  ModelParams p;
  p.object_mass = 0.4123;
  p.base_poses[1].position.x() = -0.123;
  p.contact_friction_mu = 0.61;
  const ModelParams q = model_params_from_kv(KvFile::parse(to_kv_text(p)));
  EXPECT_EQ(to_kv_text(q), to_kv_text(p));
  EXPECT_EQ(q.object_mass, p.object_mass);
}

TEST(ModelParams, ValidateRejects) {
  ModelParams p;
  p.object_mass = 0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p = {};
  p.base_poses[2] = p.base_poses[0];
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p = {};
  p.contact_friction_mu = -0.1;
  EXPECT_THROW(p.validate(), std::invalid_argument);
}

TEST(RunConfig, ParsesAllSections) {
  const auto cfg = parse_run_config(KvFile::parse(
      "[run]\nname = x\n[env]\nhorizon = 50\nmass_mean = 0.4\nmass_std = 0.03\n[npg]\niterations = 3\n"
      "[distributed]\nworkers = 2\nrollouts_per_worker = 5\nbase_seed = 9\n[eval]\nevery = 0\n"
      "[model]\ncontact_friction_mu = 0.7\n"));
  EXPECT_EQ(cfg.name, "x");
  EXPECT_EQ(cfg.env.horizon, 50);
  EXPECT_DOUBLE_EQ(cfg.env.ensemble.mass_std, 0.03);
  EXPECT_EQ(cfg.npg.iterations, 3);
  EXPECT_EQ(cfg.total_rollouts(), 10);
  EXPECT_EQ(cfg.dist.base_seed, 9u);
  EXPECT_DOUBLE_EQ(cfg.model.contact_friction_mu, 0.7);
}

TEST(RunConfig, UnknownKeyAndBadValueRejected) {
  EXPECT_THROW(parse_run_config(KvFile::parse("[env]\nhorizn = 5\n")), ConfigError);
  EXPECT_THROW(parse_run_config(KvFile::parse("[bogus]\nx = 5\n")), ConfigError);
  EXPECT_THROW(parse_run_config(KvFile::parse("[env]\nrestart_prob = 1.5\n")), ConfigError);
  EXPECT_THROW(parse_run_config(KvFile::parse("[distributed]\nworkers = 0\n")), ConfigError);
}

TEST(RunConfig, HashCoversWorkerSideFieldsOnly) {
  RunConfig a;
  const auto h = a.hash();
  EXPECT_LT(h, std::uint64_t{1} << 52);
  RunConfig b = a;
  b.eval.rollouts = 99;
  b.npg.delta = 0.3;  // coordinator-only
  EXPECT_EQ(b.hash(), h);
  RunConfig c = a;
  c.model.object_mass = 0.4;
  EXPECT_NE(c.hash(), h);
  RunConfig d = a;
  d.dist.base_seed = 2;
  EXPECT_NE(d.hash(), h);
  RunConfig e = a;
  e.env.ensemble.mass_mean = 0.4;
  EXPECT_NE(e.hash(), h);
}

TEST(Checkpoint, RoundTripIsExact) {
  Checkpoint c;
  c.iteration = 17;
  c.config_hash = 123456789;
  Rng rng(3);
  std::normal_distribution<double> n(0, 1);
  ThetaVec th;
  for (auto& x : th) x = n(rng);
  c.policy = PolicyParams::unflatten(th);
  for (auto& x : c.policy.whitening.mean) x = n(rng);
  for (auto& x : c.value.weights) x = n(rng);
  const auto path = (std::filesystem::temp_directory_path() / "pushnpg_ck_test.json").string();
  save_checkpoint(c, path);
  const Checkpoint d = load_checkpoint(path);
  std::remove(path.c_str());
  EXPECT_EQ(d.iteration, 17);
  EXPECT_EQ(d.config_hash, c.config_hash);
  EXPECT_TRUE(d.policy == c.policy);
  EXPECT_EQ(d.value.weights, c.value.weights);
  EXPECT_EQ(checkpoint_text(d), checkpoint_text(c));
}
