#include <benchmark/benchmark.h>

#include <numbers>
#include <random>

#include "hitl/fleet.hpp"
#include "hitl/gate.hpp"
#include "hitl/imitate.hpp"
#include "hitl/motion.hpp"
#include "hitl/planner.hpp"
#include "test_support.hpp"

using namespace hitl;

namespace {

std::vector<world::JointVector> random_configs(std::size_t n) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-std::numbers::pi, std::numbers::pi);
  std::vector<world::JointVector> out(n);
  for (auto& q : out) q = {u(rng), u(rng), u(rng)};
  return out;
}

void BM_ForwardKinematics(benchmark::State& state) {
  const world::ArmModel arm;
  const auto qs = random_configs(256);
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(world::forward_kinematics(arm, qs[i++ % qs.size()]));
}
BENCHMARK(BM_ForwardKinematics);

void BM_Jacobian(benchmark::State& state) {
  const world::ArmModel arm;
  const auto qs = random_configs(256);
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(world::jacobian(arm, qs[i++ % qs.size()]));
}
BENCHMARK(BM_Jacobian);

void BM_SolveKin(benchmark::State& state) {
  const world::Scene scene;
  const auto qs = random_configs(64);
  std::uint64_t i = 0;
  for (auto _ : state) {
    const auto target = world::forward_kinematics(scene.arm, qs[i % qs.size()]);
    try {
      benchmark::DoNotOptimize(plan::solve_kin(scene, world::Pose2::identity(), target, i));
    } catch (const plan::PlanningError&) {
    }
    ++i;
  }
}
BENCHMARK(BM_SolveKin);

void BM_PlanToolHang(benchmark::State& state) {
  const Task& task = test::shipped("tool-hang-2d");
  const auto& reg = test::bootstrapped("tool-hang-2d");
  std::uint64_t seed = 0;
  for (auto _ : state) {
    plan::PlanOptions opt;
    opt.seed = seed;
    benchmark::DoNotOptimize(plan::plan(task, task.sample_world(seed++ % 20), reg, opt));
  }
}
BENCHMARK(BM_PlanToolHang)->Unit(benchmark::kMillisecond);

void BM_GatedOracleEpisode(benchmark::State& state) {
  const Task& task = test::shipped("tool-hang-2d");
  const auto& reg = test::bootstrapped("tool-hang-2d");
  std::uint64_t seed = 0;
  for (auto _ : state) {
    gate::ScriptedOracle oracle(task, 0.2, seed);
    gate::GateOptions opt;
    opt.seed = seed;
    benchmark::DoNotOptimize(gate::run_gated(task, task.sample_world(seed++ % 20), oracle, reg, opt));
  }
}
BENCHMARK(BM_GatedOracleEpisode)->Unit(benchmark::kMillisecond);

void BM_SimulateEvents(benchmark::State& state) {
  fleet::FleetConfig c;
  c.n_robot = static_cast<int>(state.range(0));
  c.distribution = fleet::Distribution::Exponential;
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(fleet::simulate_events(c, 60.0, seed++));
}
BENCHMARK(BM_SimulateEvents)->Arg(1)->Arg(3)->Arg(6)->Unit(benchmark::kMicrosecond);

void BM_KnnPredict(benchmark::State& state) {
  const Task& task = test::shipped("tool-hang-2d");
  const auto& reg = test::bootstrapped("tool-hang-2d");
  std::vector<Episode> data;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    gate::ScriptedOracle oracle(task, 0.2, seed);
    gate::GateOptions opt;
    opt.seed = seed;
    data.push_back(gate::run_gated(task, task.sample_world(seed), oracle, reg, opt).episode);
  }
  const auto policy = imitate::train(task, data);
  std::vector<Observation> obs;
  for (const auto& ep : data) {
    for (const auto& s : ep.steps) obs.push_back(s.obs);
  }
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(policy.act(obs[i++ % obs.size()]));
  state.counters["pairs"] = static_cast<double>(policy.training_pairs());
}
BENCHMARK(BM_KnnPredict)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
