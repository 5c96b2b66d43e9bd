// hitl: command-line entry points for planning, collection, learning and
// fleet simulation.

#include <chrono>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "hitl/constraints.hpp"
#include "hitl/dataset.hpp"
#include "hitl/fleet.hpp"
#include "hitl/gate.hpp"
#include "hitl/imitate.hpp"
#include "hitl/planner.hpp"
#include "hitl/task.hpp"

#ifdef HITL_WITH_SERVICE
#include <csignal>
#include <thread>

#include "hitl/service.hpp"
#endif

using namespace hitl;
using nlohmann::json;

namespace {

Task load_task(const std::string& name) { return Task::load(resolve_task_path(name)); }

/// Constraints from a file, or learned from `bootstrap` full-teleoperation demos.
learn::ConstraintRegistry constraints_for(const Task& task, const std::string& path, int bootstrap) {
  if (!path.empty()) {
    auto reg = learn::ConstraintRegistry::load(path);
    if (reg.task != task.name) {
      throw std::runtime_error("constraints are for task '" + reg.task + "', not '" + task.name + "'");
    }
    return reg;
  }
  std::vector<Episode> demos;
  for (int i = 0; i < bootstrap; ++i) demos.push_back(gate::bootstrap_demo(task, 1000 + static_cast<std::uint64_t>(i)));
  std::vector<std::string> missing;
  auto reg = learn::learn_all(task, demos, task.delta, &missing);
  for (const auto& m : missing) std::cerr << "warning: no constraint data for " << m << "\n";
  return reg;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

json stats_json(const fleet::FleetStats& s) {
  json j;
  j["n_robot"] = s.n_robot;
  j["window_minutes"] = s.window;
  j["demos"] = s.demos;
  j["failures"] = s.failures;
  j["handoffs"] = s.handoffs;
  j["throughput"] = s.throughput;
  j["utilization"] = s.utilization;
  j["mean_queue"] = s.mean_queue;
  json share = json::object();
  for (const auto& [mode, v] : s.mode_share) share[std::string(fleet::to_string(mode))] = v;
  j["mode_share"] = share;
  j["reasons"] = s.reasons;
  json events = json::array();
  for (const auto& e : s.events) {
    json ev{{"time", e.time}, {"session", e.session}, {"kind", std::string(fleet::to_string(e.kind))}};
    if (e.kind == fleet::FleetEvent::Kind::Finish) {
      ev["success"] = e.success;
      ev["reason"] = e.reason;
    }
    events.push_back(std::move(ev));
  }
  j["events"] = std::move(events);
  return j;
}

void print_fleet(const fleet::FleetStats& s) {
  std::cout << std::fixed << std::setprecision(3) << "n_robot      " << s.n_robot << "\n"
            << "window       " << s.window << " min\n"
            << "demos        " << s.demos << " (" << s.failures << " failed)\n"
            << "throughput   " << s.throughput << " demos/min\n"
            << "utilization  " << s.utilization << "\n"
            << "mean queue   " << s.mean_queue << "\n";
  for (const auto& [mode, v] : s.mode_share) std::cout << "share " << std::setw(8) << fleet::to_string(mode) << " " << v << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Human-in-the-loop task and motion planning on a 2D desk"};
  app.set_config("--config", "", "TOML-style file of option overrides");
  app.require_subcommand(1);

  // plan
  struct {
    std::string task, constraints, out;
    std::uint64_t seed = 0;
    int bootstrap = 3;
  } plan_args;
  auto* plan_cmd = app.add_subcommand("plan", "Plan once from a sampled initial state");
  plan_cmd->add_option("--task", plan_args.task, "Task name or .tamp path")->required();
  plan_cmd->add_option("--seed", plan_args.seed, "World and planner seed");
  plan_cmd->add_option("--constraints", plan_args.constraints, "Learned .constraints file");
  plan_cmd->add_option("--bootstrap", plan_args.bootstrap, "Demos to learn from when no constraints file is given");
  plan_cmd->add_option("--out", plan_args.out, "Output file (default stdout)");

  // collect
  struct {
    std::string task, op = "oracle", policy, constraints, out;
    int episodes = 10, bootstrap = 3, level = 0;
    double noise = 0.0;
    std::uint64_t seed = 0;
    bool full_teleop = false;
    unsigned short port = 8765;
  } collect_args;
  auto* collect_cmd = app.add_subcommand("collect", "Collect gated episodes");
  collect_cmd->add_option("--task", collect_args.task)->required();
  collect_cmd->add_option("--operator", collect_args.op)->check(CLI::IsMember({"oracle", "policy", "human"}));
  collect_cmd->add_option("--policy", collect_args.policy, "policy.bin for --operator policy");
  collect_cmd->add_option("--episodes", collect_args.episodes)->check(CLI::PositiveNumber);
  collect_cmd->add_option("--noise", collect_args.noise, "Oracle command noise fraction");
  collect_cmd->add_option("--pose-noise", collect_args.level, "Perception noise level 0, 1 or 2")->check(CLI::Range(0, 2));
  collect_cmd->add_option("--seed", collect_args.seed);
  collect_cmd->add_option("--constraints", collect_args.constraints);
  collect_cmd->add_option("--bootstrap", collect_args.bootstrap);
  collect_cmd->add_flag("--full-teleop", collect_args.full_teleop, "Oracle performs every step (bootstrap demos)");
  collect_cmd->add_option("--port", collect_args.port, "Listen port for --operator human");
  collect_cmd->add_option("--out", collect_args.out)->required();

  // learn-constraints
  struct {
    std::string task, demos, out;
    double delta = -1.0;
  } learn_args;
  auto* learn_cmd = app.add_subcommand("learn-constraints", "Learn PreAttach and AttachGrasp sets");
  learn_cmd->add_option("--task", learn_args.task)->required();
  learn_cmd->add_option("--demos", learn_args.demos)->required();
  learn_cmd->add_option("--delta", learn_args.delta, "Separation threshold (default from the task)");
  learn_cmd->add_option("--out", learn_args.out)->required();

  // train
  struct {
    std::string demos, kind = "knn", out, task;
    int k = 5;
    double ridge = 1e-3;
  } train_args;
  auto* train_cmd = app.add_subcommand("train", "Train a policy on human-labelled steps");
  train_cmd->add_option("--demos", train_args.demos)->required();
  train_cmd->add_option("--kind", train_args.kind)->check(CLI::IsMember({"knn", "linear"}));
  train_cmd->add_option("--k", train_args.k)->check(CLI::PositiveNumber);
  train_cmd->add_option("--ridge", train_args.ridge);
  train_cmd->add_option("--task", train_args.task, "Task (default from the demos)");
  train_cmd->add_option("--out", train_args.out)->required();

  // eval
  struct {
    std::string policy, task, constraints;
    int n = 50, seeds = 3, bootstrap = 3;
  } eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Gated evaluation of a trained policy");
  eval_cmd->add_option("--policy", eval_args.policy)->required();
  eval_cmd->add_option("--task", eval_args.task, "Task (default from the policy)");
  eval_cmd->add_option("--n", eval_args.n, "Rollouts per seed")->check(CLI::PositiveNumber);
  eval_cmd->add_option("--seeds", eval_args.seeds)->check(CLI::PositiveNumber);
  eval_cmd->add_option("--constraints", eval_args.constraints);
  eval_cmd->add_option("--bootstrap", eval_args.bootstrap);

  // fleet-sim
  struct {
    bool abstract = false, fixed = false;
    double rh = 2.0, rt = 1.0, x = 100.0, cycle = 10.0, minutes = 60.0, warmup = 5.0, budget = 600.0;
    int n = 3, bootstrap = 3;
    std::string dist = "constant", task, op = "oracle", policy, constraints, stats;
    std::uint64_t seed = 0;
  } fleet_args;
  auto* fleet_cmd = app.add_subcommand("fleet-sim", "Simulate a fleet served by one operator");
  fleet_cmd->add_flag("--abstract", fleet_args.abstract, "Discrete-event model only");
  fleet_cmd->add_option("--rh", fleet_args.rh, "Operator demos per minute");
  fleet_cmd->add_option("--rt", fleet_args.rt, "TAMP demos per minute per robot");
  fleet_cmd->add_option("--x", fleet_args.x, "Operator duty percent")->check(CLI::Range(0.0, 100.0));
  fleet_cmd->add_option("--cycle", fleet_args.cycle, "Duty cycle minutes");
  fleet_cmd->add_option("--n", fleet_args.n)->check(CLI::PositiveNumber);
  fleet_cmd->add_option("--dist", fleet_args.dist)->check(CLI::IsMember({"constant", "exponential"}));
  fleet_cmd->add_option("--minutes", fleet_args.minutes);
  fleet_cmd->add_option("--warmup", fleet_args.warmup);
  fleet_cmd->add_option("--seed", fleet_args.seed);
  fleet_cmd->add_option("--task", fleet_args.task);
  fleet_cmd->add_option("--operator", fleet_args.op)->check(CLI::IsMember({"oracle", "policy"}));
  fleet_cmd->add_option("--policy", fleet_args.policy);
  fleet_cmd->add_option("--constraints", fleet_args.constraints);
  fleet_cmd->add_option("--bootstrap", fleet_args.bootstrap);
  fleet_cmd->add_flag("--fixed", fleet_args.fixed, "Charge fixed phase durations instead of ticks");
  fleet_cmd->add_option("--budget", fleet_args.budget, "Wall-clock seconds for full mode");
  fleet_cmd->add_option("--stats", fleet_args.stats, "Write statistics JSON");

  // stats
  struct {
    std::string demos;
  } stats_args;
  auto* stats_cmd = app.add_subcommand("stats", "Per-task dataset statistics");
  stats_cmd->add_option("demos", stats_args.demos)->required();

  // serve
  struct {
    std::string task, constraints, address = "127.0.0.1", out;
    unsigned short port = 8765;
    int n = 1, episodes = 0, bootstrap = 3;
    double pace = 1.0;
    std::uint64_t seed = 0;
  } serve_args;
  auto* serve_cmd = app.add_subcommand("serve", "Run the WebSocket teleoperation service");
  serve_cmd->add_option("--task", serve_args.task)->required();
  serve_cmd->add_option("--n", serve_args.n)->check(CLI::PositiveNumber);
  serve_cmd->add_option("--address", serve_args.address);
  serve_cmd->add_option("--port", serve_args.port);
  serve_cmd->add_option("--pace", serve_args.pace, "Real-time factor for TAMP ticks; 0 runs unpaced");
  serve_cmd->add_option("--episodes", serve_args.episodes, "Stop after this many episodes");
  serve_cmd->add_option("--seed", serve_args.seed);
  serve_cmd->add_option("--constraints", serve_args.constraints);
  serve_cmd->add_option("--bootstrap", serve_args.bootstrap);
  serve_cmd->add_option("--out", serve_args.out, "Save finished episodes");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*plan_cmd) {
      const Task task = load_task(plan_args.task);
      const auto reg = constraints_for(task, plan_args.constraints, plan_args.bootstrap);
      plan::PlanOptions opt;
      opt.seed = plan_args.seed;
      const auto t0 = std::chrono::steady_clock::now();
      const auto bound = plan::plan(task, task.sample_world(plan_args.seed), reg, opt);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      write_text(plan_args.out, bound.describe(task.name));
      std::cerr << bound.steps.size() << " steps in " << secs << " s\n";
      return 0;
    }

    if (*collect_cmd) {
      const Task task = load_task(collect_args.task);
      std::vector<Episode> episodes;
      if (collect_args.full_teleop) {
        for (int i = 0; i < collect_args.episodes; ++i) {
          episodes.push_back(gate::bootstrap_demo(task, collect_args.seed + static_cast<std::uint64_t>(i),
                                                  collect_args.noise));
        }
      } else {
        const auto reg = constraints_for(task, collect_args.constraints, collect_args.bootstrap);
        gate::GateOptions g;
        g.perception = world::NoiseModel::level(collect_args.level);
        if (collect_args.op == "human") {
#ifdef HITL_WITH_SERVICE
          hub::ServiceOptions so;
          so.port = collect_args.port;
          so.max_episodes = collect_args.episodes;
          so.seed = collect_args.seed;
          so.gate = g;
          hub::Service service(task, reg, so);
          service.start();
          std::cerr << "waiting for an operator on ws://127.0.0.1:" << service.port() << "\n";
          service.wait();
          service.stop();
          episodes = service.episodes();
#else
          throw std::runtime_error("built without the teleoperation service");
#endif
        } else {
          std::optional<imitate::Policy> policy;
          if (collect_args.op == "policy") {
            if (collect_args.policy.empty()) throw std::runtime_error("--operator policy needs --policy");
            policy = imitate::Policy::load(collect_args.policy);
          }
          for (int i = 0; i < collect_args.episodes; ++i) {
            const std::uint64_t seed = collect_args.seed + static_cast<std::uint64_t>(i);
            gate::ScriptedOracle oracle(task, collect_args.noise, seed);
            std::optional<imitate::PolicyOperator> pop;
            if (policy) pop.emplace(*policy);
            gate::Operator& op = pop ? static_cast<gate::Operator&>(*pop) : oracle;
            g.seed = seed;
            episodes.push_back(gate::run_gated(task, task.sample_world(seed), op, reg, g).episode);
          }
        }
      }
      data::save(collect_args.out, episodes);
      int ok = 0;
      for (const auto& ep : episodes) ok += ep.outcome.success ? 1 : 0;
      std::cout << ok << "/" << episodes.size() << " successful episodes written to " << collect_args.out << "\n";
      return 0;
    }

    if (*learn_cmd) {
      const Task task = load_task(learn_args.task);
      const auto demos = data::load(learn_args.demos);
      const double delta = learn_args.delta >= 0.0 ? learn_args.delta : task.delta;
      std::vector<std::string> missing;
      const auto reg = learn::learn_all(task, demos, delta, &missing);
      reg.save(learn_args.out);
      for (const auto& s : reg.preattach) std::cout << "preattach " << s.child << " " << s.parent << " " << s.poses.size() << "\n";
      for (const auto& s : reg.grasps) std::cout << "grasp " << s.object << " " << s.grasps.size() << "\n";
      for (const auto& m : missing) std::cout << "missing " << m << "\n";
      return 0;
    }

    if (*train_cmd) {
      const auto demos = data::load(train_args.demos);
      if (demos.empty()) throw std::runtime_error("no episodes in " + train_args.demos);
      const Task task = load_task(train_args.task.empty() ? demos.front().task : train_args.task);
      imitate::TrainOptions opt;
      opt.kind = imitate::parse_policy_kind(train_args.kind);
      opt.k = train_args.k;
      opt.ridge = train_args.ridge;
      const auto policy = imitate::train(task, demos, opt);
      policy.save(train_args.out);
      std::cout << "trained " << train_args.kind << " on " << policy.training_pairs() << " pairs, bc loss "
                << imitate::bc_loss(policy, demos) << "\n";
      return 0;
    }

    if (*eval_cmd) {
      const auto policy = imitate::Policy::load(eval_args.policy);
      const Task task = load_task(eval_args.task.empty() ? policy.task : eval_args.task);
      const auto reg = constraints_for(task, eval_args.constraints, eval_args.bootstrap);
      imitate::EvalOptions opt;
      opt.rollouts = eval_args.n;
      opt.seeds.clear();
      for (int s = 0; s < eval_args.seeds; ++s) opt.seeds.push_back(static_cast<std::uint64_t>(s));
      const auto r = imitate::evaluate_gated(policy, task, reg, opt);
      std::cout << std::fixed << std::setprecision(3);
      for (const auto& s : r.per_seed) {
        std::cout << "seed " << s.seed << " filtered " << s.filtered() << " raw " << s.raw() << " (" << s.attempts
                  << " attempts)\n";
      }
      std::cout << "filtered SR " << r.filtered_sr << "\nraw SR " << r.raw_sr << "\nTAMP SR " << r.tamp_sr << "\n";
      for (const auto& [reason, n] : r.reasons) std::cout << "  " << reason << " " << n << "\n";
      return 0;
    }

    if (*fleet_cmd) {
      fleet::FleetConfig cfg;
      cfg.n_robot = fleet_args.n;
      cfg.rate_h = fleet_args.rh;
      cfg.rate_t = fleet_args.rt;
      cfg.duty = fleet_args.x;
      cfg.cycle = fleet_args.cycle;
      cfg.warmup = fleet_args.warmup;
      cfg.distribution = fleet::parse_distribution(fleet_args.dist);
      cfg.validate();
      fleet::FleetStats stats;
      if (fleet_args.abstract) {
        stats = fleet::simulate_events(cfg, fleet_args.minutes, fleet_args.seed);
        std::cout << "min fleet    " << fleet::min_fleet(cfg.rate_h, cfg.rate_t, cfg.duty) << "\n";
      } else {
        if (fleet_args.task.empty()) throw std::runtime_error("full mode needs --task (or pass --abstract)");
        const Task task = load_task(fleet_args.task);
        const auto reg = constraints_for(task, fleet_args.constraints, fleet_args.bootstrap);
        fleet::RunOptions ro;
        ro.horizon = fleet_args.minutes;
        ro.wall_budget = fleet_args.budget;
        ro.seed = fleet_args.seed;
        ro.fixed_durations = fleet_args.fixed;
        gate::ScriptedOracle oracle(task, 0.0, fleet_args.seed);
        std::optional<imitate::Policy> policy;
        std::optional<imitate::PolicyOperator> pop;
        if (fleet_args.op == "policy") {
          if (fleet_args.policy.empty()) throw std::runtime_error("--operator policy needs --policy");
          policy = imitate::Policy::load(fleet_args.policy);
          pop.emplace(*policy);
        }
        gate::Operator& op = pop ? static_cast<gate::Operator&>(*pop) : oracle;
        stats = fleet::run_fleet(cfg, task, op, reg, ro);
      }
      print_fleet(stats);
      if (!fleet_args.stats.empty()) write_text(fleet_args.stats, stats_json(stats).dump(2) + "\n");
      return 0;
    }

    if (*stats_cmd) {
      const auto demos = data::load(stats_args.demos);
      std::cout << std::fixed << std::setprecision(2);
      for (const auto& [name, st] : data::stats(demos)) {
        std::cout << name << "\n  episodes         " << st.episodes << " (" << st.successes << " successful)\n"
                  << "  human segment    " << st.mean_human_segment << " steps\n"
                  << "  trajectory       " << st.mean_trajectory << " steps\n"
                  << "  handoffs/episode " << st.mean_handoffs << " (" << st.handoffs << " total)\n";
      }
      return 0;
    }

    if (*serve_cmd) {
#ifdef HITL_WITH_SERVICE
      const Task task = load_task(serve_args.task);
      const auto reg = constraints_for(task, serve_args.constraints, serve_args.bootstrap);
      hub::ServiceOptions so;
      so.address = serve_args.address;
      so.port = serve_args.port;
      so.n_robot = serve_args.n;
      so.pace = serve_args.pace;
      so.max_episodes = serve_args.episodes;
      so.seed = serve_args.seed;
      static hub::Service* running = nullptr;
      hub::Service service(task, reg, so);
      service.start();
      running = &service;
      std::signal(SIGINT, [](int) {
        // stop() joins threads; a detached helper keeps the handler short.
        std::thread([] { running->stop(); }).detach();
      });
      std::cerr << "serving " << task.name << " on ws://" << so.address << ":" << service.port() << "\n";
      service.wait();
      service.stop();
      if (!serve_args.out.empty()) data::save(serve_args.out, service.episodes());
      std::cout << service.episodes().size() << " episodes finished\n";
      return 0;
#else
      throw std::runtime_error("built without the teleoperation service");
#endif
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
