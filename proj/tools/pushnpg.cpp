// pushnpg: train / eval / sysid / worker / coordinator / inspect

#include "pushnpg/checkpoint.hpp"
#include "pushnpg/config.hpp"
#include "pushnpg/harness.hpp"
#include "pushnpg/net.hpp"
#include "pushnpg/run.hpp"
#include "pushnpg/sysid.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace pushnpg;

namespace {

struct CommonArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::optional<int> workers;
  std::vector<std::string> remote;
};

RunConfig load_config(const CommonArgs& a) {
  RunConfig cfg = load_run_config(a.config);
  if (a.seed) cfg.dist.base_seed = *a.seed;
  if (a.workers) cfg.dist.workers = *a.workers;
  if (!a.remote.empty()) cfg.dist.remote = a.remote;
  cfg.validate();
  return cfg;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream f(p);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << text;
}

void print_summary(const TrainResult& r, const fs::path& out) {
  const auto& last = r.curve.empty() ? CurveRow{} : r.curve.back();
  std::cout << "iterations: " << r.state.iteration << "\n"
            << "final mean return: " << last.mean_return << "\n"
            << "config hash: " << r.config_hash << "\n"
            << "outputs: " << out.string() << "\n";
}

int cmd_train(const CommonArgs& a, bool parallel, bool force_tcp) {
  const RunConfig cfg = load_config(a);
  TrainOptions opt;
  opt.out_dir = a.out;
  opt.quiet = false;
  opt.log = &std::cerr;
  if (force_tcp || !cfg.dist.remote.empty()) {
    if (cfg.dist.remote.size() > 1) throw std::invalid_argument("coordinator listens on one endpoint; got several --remote");
    const Endpoint listen = parse_endpoint(cfg.dist.remote.empty() ? cfg.dist.listen : cfg.dist.remote.front());
    TcpWorkerGroup group(cfg, listen, &std::cerr);
    std::cerr << "coordinator listening on " << listen.host << ":" << group.port() << " for " << cfg.dist.workers
              << " worker(s), config hash " << cfg.hash() << std::endl;
    group.wait_for_workers();
    print_summary(train(cfg, group, opt), a.out);
  } else {
    InProcessGroup group(cfg, parallel);
    print_summary(train(cfg, group, opt), a.out);
  }
  return 0;
}

int cmd_worker(const CommonArgs& a, std::uint32_t id) {
  const RunConfig cfg = load_config(a);
  std::vector<Endpoint> eps;
  for (const auto& r : a.remote) eps.push_back(parse_endpoint(r));
  if (eps.empty()) eps.push_back(parse_endpoint(cfg.dist.listen));
  if (id >= static_cast<std::uint32_t>(cfg.dist.workers))
    throw std::invalid_argument("--id must be < distributed.workers (" + std::to_string(cfg.dist.workers) + ")");
  return run_tcp_worker(cfg, eps, id);
}

int cmd_eval(const CommonArgs& a, const std::string& policy_path, std::string name, std::optional<int> rollouts,
             bool mean_action) {
  const RunConfig cfg = load_config(a);
  const Checkpoint ck = load_checkpoint(policy_path);
  if (name.empty()) name = fs::path(policy_path).stem().string();
  EvalOptions eo;
  eo.mean_action = mean_action || cfg.eval.mean_action;
  eo.seed = a.seed ? *a.seed : eval_seed(cfg);
  const int n = rollouts ? *rollouts : cfg.eval.rollouts;
  const EvalResult res = evaluate(ck.policy, cfg.model, cfg.env, n, eo);
  fs::create_directories(a.out);
  const fs::path out = fs::path(a.out) / ("eval_" + name + ".csv");
  write_file(out, eval_csv(res, cfg.env.control_dt()));
  std::cout << "policy: " << policy_path << " (iteration " << ck.iteration << ")\n"
            << "eval model object_mass: " << cfg.model.object_mass << "\n"
            << "rollouts: " << n << " (failed " << res.failed << ")\n"
            << "mean distance: " << res.mean_distance << " m\n"
            << "written: " << out.string() << "\n";
  return 0;
}

int cmd_sysid(const CommonArgs& a) {
  const KvFile kv = KvFile::load(a.config);
  SysIdJob job = parse_sysid_job(kv, fs::path(a.config).parent_path().string());
  if (a.seed) job.proxy.seed = *a.seed;
  fs::create_directories(a.out);
  RecordedRun run;
  if (job.run_path.empty()) {
    run = proxy_run(job.proxy, job.problem.initial);
    write_file(fs::path(a.out) / "run.csv", run_csv(run));
    std::cerr << "synthesized hardware-proxy run: " << run.size() << " samples" << std::endl;
  } else {
    run = load_run_csv(job.run_path);
  }
  const SysIdResult res = gauss_newton(job.problem, run, job.options);
  write_file(fs::path(a.out) / "fit_report.txt", fit_report(res));
  write_file(fs::path(a.out) / "fitted_model.cfg", to_kv_text(res.params));
  for (std::size_t i = 0; i < res.free_params.size(); ++i)
    std::cout << res.free_params[i] << ": " << res.initial_values[i] << " -> " << res.values[i]
              << (res.identifiable[i] ? "" : "  (not identifiable, held fixed)") << "\n";
  std::cout << "cost " << res.initial_cost << " -> " << res.final_cost << " in " << res.iterations
            << " iterations (" << res.stop_reason << ")\n";
  return 0;
}

int cmd_inspect(const CommonArgs& a, const std::string& policy_path) {
  if (policy_path.empty() && a.config.empty()) throw std::invalid_argument("inspect needs --policy or --config");
  if (!a.config.empty()) {
    const RunConfig cfg = load_config(a);
    std::cout << "# canonical worker-side config, hash " << cfg.hash() << "\n" << cfg.canonical_text();
  }
  if (!policy_path.empty()) {
    const Checkpoint ck = load_checkpoint(policy_path);
    const std::string csv = dump_policy_weights(ck.policy);
    fs::create_directories(a.out);
    write_file(fs::path(a.out) / "weights.csv", csv);
    std::cout << "policy: " << policy_path << "\niteration: " << ck.iteration << "\nconfig hash: " << ck.config_hash
              << "\nlog_std: " << ck.policy.log_std.transpose() << "\n|W|_F: " << ck.policy.W.norm()
              << "\nwritten: " << (fs::path(a.out) / "weights.csv").string() << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed natural policy gradient for planar three-finger pushing"};
  app.require_subcommand(1);

  CommonArgs args;
  auto add_common = [&args](CLI::App* sc, bool need_config) {
    auto* c = sc->add_option("--config", args.config, "configuration file");
    if (need_config) c->required()->check(CLI::ExistingFile);
    sc->add_option("--seed", args.seed, "base seed override");
    sc->add_option("--out", args.out, "output directory")->capture_default_str();
    sc->add_option("--workers", args.workers, "worker count override")->check(CLI::PositiveNumber);
    sc->add_option("--remote", args.remote, "HOST:PORT endpoint(s)");
  };

  bool parallel = false;
  auto* train_cmd = app.add_subcommand("train", "train a policy (in-process workers unless --remote is given)");
  add_common(train_cmd, true);
  train_cmd->add_flag("--parallel", parallel, "run in-process workers on threads");

  auto* coord_cmd = app.add_subcommand("coordinator", "train with TCP workers (listens on --remote or distributed.listen)");
  add_common(coord_cmd, true);

  std::uint32_t worker_id = 0;
  auto* worker_cmd = app.add_subcommand("worker", "serve rollouts to a coordinator at --remote");
  add_common(worker_cmd, true);
  worker_cmd->add_option("--id", worker_id, "worker id in [0, distributed.workers)")->required();

  std::string policy_path, eval_name;
  std::optional<int> eval_rollouts;
  bool mean_action = false;
  auto* eval_cmd = app.add_subcommand("eval", "spiral-tracking evaluation of a checkpoint");
  add_common(eval_cmd, true);
  eval_cmd->add_option("--policy", policy_path, "policy checkpoint (JSON)")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--name", eval_name, "output name (default: checkpoint stem)");
  eval_cmd->add_option("--rollouts", eval_rollouts, "number of rollouts")->check(CLI::PositiveNumber);
  eval_cmd->add_flag("--mean-action", mean_action, "evaluate the mean action instead of sampling");

  auto* sysid_cmd = app.add_subcommand("sysid", "joint state estimation and parameter identification");
  add_common(sysid_cmd, true);

  auto* inspect_cmd = app.add_subcommand("inspect", "dump policy weights / show the canonical config");
  add_common(inspect_cmd, false);
  inspect_cmd->add_option("--policy", policy_path, "policy checkpoint (JSON)")->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) return cmd_train(args, parallel, false);
    if (*coord_cmd) return cmd_train(args, false, true);
    if (*worker_cmd) return cmd_worker(args, worker_id);
    if (*eval_cmd) return cmd_eval(args, policy_path, eval_name, eval_rollouts, mean_action);
    if (*sysid_cmd) return cmd_sysid(args);
    if (*inspect_cmd) return cmd_inspect(args, policy_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 1;
}
