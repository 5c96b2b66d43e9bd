#include <cmath>
#include <numbers>

#include "doctest.h"
#include "hitl/gate.hpp"
#include "hitl/planner.hpp"
#include "test_support.hpp"

using namespace hitl;
using namespace hitl::gate;
using world::Pose2;

namespace {

const lang::GroundAction& frame_attach(const Task& task) {
  static const auto bp = plan::plan(task, task.sample_world(0), test::bootstrapped("tool-hang-2d"));
  return bp.steps.at(3);
}

// Replays a fixed command list, standing still once it runs out.
class Replay : public Operator {
 public:
  explicit Replay(std::vector<world::Command> commands) : commands_(std::move(commands)) {}
  world::Command act(const Observation& obs, const Prompt&) override {
    if (next_ < commands_.size()) return commands_[next_++];
    return {0.0, 0.0, 0.0, obs.gripper_closed};
  }

 private:
  std::vector<world::Command> commands_;
  std::size_t next_ = 0;
};

// Arm pose whose gripper points along +y (frame held at grasp (0, 0, -pi/2) is level).
constexpr world::JointVector kLevel{1.0, 0.3, std::numbers::pi / 2 - 1.3};

Observation holding_frame(const Task& task, const Pose2& stand) {
  Observation obs;
  obs.config = kLevel;
  obs.gripper_closed = true;
  obs.held = "frame";
  obs.objects["frame"] = world::forward_kinematics(task.scene->arm, kLevel) * Pose2{0.0, 0.0, -std::numbers::pi / 2};
  obs.objects["stand"] = stand;
  obs.objects["tool"] = {1.3, 0.4, 0.0};
  return obs;
}

}  // namespace

TEST_CASE("run_gated: a goal state at start needs no commands") {
  const Task& task = test::shipped("tool-hang-2d");
  auto w = task.sample_world(0);
  for (const auto& target : task.goal_attachments()) {
    w.poses[target.child] = w.poses.at(target.parent) * target.relative;
    w.attachments.push_back({target.child, target.parent, target.relative});
  }
  NoOpOperator noop;
  const auto run = run_gated(task, w, noop, test::bootstrapped("tool-hang-2d"));
  CHECK(run.episode.outcome.success);
  CHECK(run.episode.outcome.reason == OutcomeReason::GoalReached);
  CHECK(run.episode.outcome.handoff_count == 0);
  CHECK(run.episode.steps.empty());
  CHECK(run.plans.empty());
}

TEST_CASE("run_gated: a no-op operator times out on the first handoff") {
  const Task& task = test::shipped("tool-hang-2d");
  NoOpOperator noop;
  GateOptions opt;
  opt.seed = 2;
  const auto run = run_gated(task, task.sample_world(2), noop, test::bootstrapped("tool-hang-2d"), opt);
  CHECK_FALSE(run.episode.outcome.success);
  CHECK(run.episode.outcome.reason == OutcomeReason::OperatorTimeout);
  CHECK(run.episode.outcome.handoff_count == 1);
  std::size_t human = 0;
  for (const auto& s : run.episode.steps) human += s.label == Controller::Human ? 1 : 0;
  CHECK(human == static_cast<std::size_t>(opt.segment_cap));
}

TEST_CASE("run_gated: the scripted oracle solves tool-hang on 20 seeds with two handoffs each") {
  const Task& task = test::shipped("tool-hang-2d");
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    ScriptedOracle oracle(task, 0.0, seed);
    GateOptions opt;
    opt.seed = seed;
    const auto run = run_gated(task, task.sample_world(seed), oracle, test::bootstrapped("tool-hang-2d"), opt);
    CHECK(run.episode.outcome.success);
    CHECK(run.episode.outcome.handoff_count == 2);
  }
}

TEST_CASE("gate trace invariants over oracle episodes") {
  for (const auto& name : test::shipped_names()) {
    const Task& task = test::shipped(name);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      ScriptedOracle oracle(task, 0.2, seed);
      GateOptions opt;
      opt.seed = seed;
      const auto run = run_gated(task, task.sample_world(seed), oracle, test::bootstrapped(name), opt);
      const auto& ep = run.episode;
      CHECK((!ep.outcome.success || ep.outcome.reason == OutcomeReason::GoalReached));

      // Human segments match Handoff/Return pairs, and every TAMP step that
      // follows a human segment comes after a fresh Plan event.
      std::vector<std::size_t> handoffs, returns, plans;
      for (const auto& e : run.trace) {
        if (e.kind == TraceEvent::Kind::Handoff) handoffs.push_back(e.step);
        if (e.kind == TraceEvent::Kind::Return) returns.push_back(e.step);
        if (e.kind == TraceEvent::Kind::Plan) plans.push_back(e.step);
      }
      std::size_t k = 0;
      for (const auto& seg : ep.segments()) {
        if (seg.label != Controller::Human) continue;
        REQUIRE(k < handoffs.size());
        CHECK(handoffs[k] == seg.begin);
        CHECK(returns[k] == seg.end);
        if (seg.end < ep.steps.size()) {
          CHECK(std::find(plans.begin(), plans.end(), seg.end) != plans.end());
        }
        ++k;
      }
      CHECK(k == handoffs.size());
      CHECK(static_cast<int>(k) == ep.outcome.handoff_count);
    }
  }
}

TEST_CASE("replaying recorded human commands reproduces the gated episode") {
  const Task& task = test::shipped("stack-three-2d");
  const auto& reg = test::bootstrapped("stack-three-2d");
  ScriptedOracle oracle(task, 0.2, 8);
  GateOptions opt;
  opt.seed = 8;
  const auto original = run_gated(task, task.sample_world(8), oracle, reg, opt);
  REQUIRE(original.episode.outcome.success);
  std::vector<world::Command> human;
  for (const auto& s : original.episode.steps) {
    if (s.label == Controller::Human) human.push_back(s.action);
  }
  Replay replay(human);
  const auto again = run_gated(task, task.sample_world(8), replay, reg, opt);
  CHECK(again.episode == original.episode);
  REQUIRE(again.trace.size() == original.trace.size());
  for (std::size_t i = 0; i < again.trace.size(); ++i) {
    CHECK(again.trace[i].kind == original.trace[i].kind);
    CHECK(again.trace[i].step == original.trace[i].step);
    CHECK(again.trace[i].detail == original.trace[i].detail);
  }
}

TEST_CASE("monitor_effects examples") {
  const Task& task = test::shipped("tool-hang-2d");
  const auto& action = frame_attach(task);
  const auto* target = task.scene->attach_target("frame", "stand");
  auto w = task.sample_world(0);
  const Pose2 goal = w.poses.at("stand") * target->relative;

  SUBCASE("snapped and released") {
    w.poses["frame"] = goal;
    w.config.gripper_open = true;
    CHECK(monitor_effects(w, action));
  }
  SUBCASE("at the pose but still held") {
    w.poses.erase("frame");
    w.held = world::HeldObject{"frame", world::forward_kinematics(task.scene->arm, w.config.joints).inverse() * goal};
    w.config.gripper_open = false;
    REQUIRE(world::pose_error(w.object_pose("frame"), goal).position < 1e-9);
    CHECK_FALSE(monitor_effects(w, action));
  }
  SUBCASE("misaligned beyond tolerance") {
    w.poses["frame"] = goal * Pose2{2.0 * target->position_tolerance, 0.0, 0.0};
    CHECK_FALSE(monitor_effects(w, action));
    w.poses["frame"] = goal * Pose2{0.0, 0.0, 2.0 * target->angle_tolerance};
    CHECK_FALSE(monitor_effects(w, action));
  }
}

TEST_CASE("scripted oracle examples") {
  const Task& task = test::shipped("tool-hang-2d");
  ScriptedOracle oracle(task);
  const Prompt prompt{0, "attach", "frame", "stand", 3};
  const auto& limits = task.scene->limits;

  SUBCASE("at the attach pose while holding: open the gripper") {
    auto obs = holding_frame(task, {});
    obs.objects["stand"] = obs.objects["frame"] * task.scene->attach_target("frame", "stand")->relative.inverse();
    const auto cmd = oracle.act(obs, prompt);
    CHECK_FALSE(cmd.grip);
    CHECK(cmd.dx == 0.0);
    CHECK(cmd.dy == 0.0);
  }
  SUBCASE("one unit away: saturated step toward the target") {
    auto obs = holding_frame(task, {});
    const Pose2 goal = obs.objects["frame"] * Pose2{1.0, 0.0, 0.0};
    REQUIRE(std::abs(goal.theta) < 1e-12);
    obs.objects["stand"] = goal * task.scene->attach_target("frame", "stand")->relative.inverse();
    const auto cmd = oracle.act(obs, prompt);
    CHECK(cmd.grip);
    CHECK(cmd.dx == doctest::Approx(limits.max_step));
    CHECK(std::abs(cmd.dy) < 1e-9);
    CHECK(std::abs(cmd.dtheta) < 1e-9);
  }
  SUBCASE("track clamps per axis") {
    const auto cmd = track({0, 0, 0}, {1.0, -1.0, 3.0}, limits, false);
    CHECK(cmd.dx == doctest::Approx(limits.max_step));
    CHECK(cmd.dy == doctest::Approx(-limits.max_step));
    CHECK(cmd.dtheta == doctest::Approx(limits.max_rot));
  }
}

TEST_CASE("the oracle with 20% command noise satisfies the effects in at least 95% of 50 episodes") {
  const Task& task = test::shipped("tool-hang-2d");
  int ok = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    ScriptedOracle oracle(task, 0.2, seed);
    GateOptions opt;
    opt.seed = seed;
    const auto run = run_gated(task, task.sample_world(seed), oracle, test::bootstrapped("tool-hang-2d"), opt);
    ok += run.episode.outcome.reason != OutcomeReason::OperatorTimeout ? 1 : 0;
  }
  CHECK(ok >= 48);
}

TEST_CASE("clamp_command respects the per-tick bounds") {
  world::Limits limits;
  const auto c = clamp_command({1.0, -1.0, -5.0, true}, limits);
  CHECK(c == world::Command{limits.max_step, -limits.max_step, -limits.max_rot, true});
}
