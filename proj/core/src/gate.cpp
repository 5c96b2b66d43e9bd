#include "hitl/gate.hpp"

#include <algorithm>
#include <numbers>
#include <sstream>

namespace hitl::gate {

using world::Command;
using world::Pose2;
using world::WorldState;

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr Pose2 kDefaultGrasp{0.0, 0.0, -std::numbers::pi / 2};

Pose2 grasp_for(const std::vector<std::pair<std::string, Pose2>>& grasps, const std::string& object) {
  for (const auto& [o, g] : grasps) {
    if (o == object) return g;
  }
  return kDefaultGrasp;
}

Command add_noise(Command c, double fraction, const world::Limits& limits, std::mt19937_64& rng) {
  if (fraction <= 0.0) return c;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  c.dx += fraction * limits.max_step * u(rng);
  c.dy += fraction * limits.max_step * u(rng);
  c.dtheta += fraction * limits.max_rot * u(rng);
  return clamp_command(c, limits);
}

}  // namespace

std::string_view to_string(TraceEvent::Kind kind) {
  switch (kind) {
    case TraceEvent::Kind::Observe: return "observe";
    case TraceEvent::Kind::Plan: return "plan";
    case TraceEvent::Kind::Execute: return "execute";
    case TraceEvent::Kind::Handoff: return "handoff";
    case TraceEvent::Kind::Return: return "return";
    case TraceEvent::Kind::Finish: return "finish";
  }
  return "?";
}

Command clamp_command(const Command& c, const world::Limits& limits) {
  return {std::clamp(c.dx, -limits.max_step, limits.max_step), std::clamp(c.dy, -limits.max_step, limits.max_step),
          std::clamp(c.dtheta, -limits.max_rot, limits.max_rot), c.grip};
}

Command track(const Pose2& current, const Pose2& desired, const world::Limits& limits, bool grip) {
  return clamp_command({desired.x - current.x, desired.y - current.y, world::wrap_angle(desired.theta - current.theta), grip},
                       limits);
}

Command NoOpOperator::act(const Observation& obs, const Prompt&) { return {0.0, 0.0, 0.0, obs.gripper_closed}; }

ScriptedOracle::ScriptedOracle(const Task& task, double noise_fraction, std::uint64_t seed)
    : scene_(task.scene), grasps_(task.declared_grasps), noise_(noise_fraction), rng_(seed) {}

void ScriptedOracle::begin(const Prompt& prompt, const Observation&) {
  if (scene_->attach_target(prompt.child, prompt.parent) == nullptr) {
    throw std::invalid_argument("oracle has no attach target for " + prompt.child + " on " + prompt.parent);
  }
}

Command ScriptedOracle::act(const Observation& obs, const Prompt& prompt) {
  const auto* target = scene_->attach_target(prompt.child, prompt.parent);
  if (target == nullptr) throw std::invalid_argument("oracle has no attach target for " + prompt.child);
  const Pose2 ee = world::forward_kinematics(scene_->arm, obs.config);
  const Pose2 obj = obs.objects.at(prompt.child);
  const auto& limits = scene_->limits;

  // Holding is inferred from the gripper and the handle position, so the
  // oracle works from wire snapshots that carry no held field.
  const auto* spec = scene_->object(prompt.child);
  const world::Vec2 handle = obj.apply(spec->handle);
  const bool holding = obs.gripper_closed && (handle - ee.position()).norm() <= limits.grasp_tolerance;

  if (holding) {
    const Pose2 goal = obs.objects.at(prompt.parent) * target->relative;
    const auto err = world::pose_error(obj, goal);
    if (err.position <= 0.5 * target->position_tolerance && err.angle <= 0.5 * target->angle_tolerance) {
      return {0.0, 0.0, 0.0, false};
    }
    const Pose2 desired = goal * world::relative(ee, obj).inverse();
    return add_noise(track(ee, desired, limits, true), noise_, limits, rng_);
  }

  // Lost the object: open, return to its handle and close again.
  if (obs.gripper_closed) return {0.0, 0.0, 0.0, false};
  const Pose2 handle_ee = obj * grasp_for(grasps_, prompt.child).inverse();
  const Pose2 desired{handle.x, handle.y, handle_ee.theta};
  const auto err = world::pose_error(ee, desired);
  if (err.position <= 0.01 && err.angle <= 0.05) return {0.0, 0.0, 0.0, true};
  return add_noise(track(ee, desired, limits, false), noise_, limits, rng_);
}

bool monitor_effects(const WorldState& state, const lang::GroundAction& action) {
  for (const auto& e : action.eff) {
    bool holds = true;
    if (e.predicate == "Attached") {
      const auto& c = e.args[0];
      const auto& p = e.args[1];
      const bool attached =
          state.is_attached(c, p) || (!(state.held && state.held->object == c) && world::good_attach(state, c, p));
      holds = e.negated ? !attached : attached;
    } else if (e.predicate == "Empty") {
      holds = e.negated ? state.holding() : !state.holding();
    } else if (e.predicate == "AtGrasp") {
      const bool grasped = state.held && state.held->object == e.args[0];
      holds = e.negated ? !grasped : grasped;
    } else if (e.predicate == "AtPose" || e.predicate == "AtConf") {
      holds = true;  // operator-chosen values
    } else {
      holds = false;
    }
    if (!holds) return false;
  }
  return true;
}

GatedRun run_gated(const Task& task, const WorldState& initial, Operator& op,
                   const learn::ConstraintRegistry& constraints, const GateOptions& options) {
  GatedRun run;
  run.episode.task = task.name;
  run.episode.seed = options.seed;
  WorldState w = initial;
  int handoffs = 0;
  int plans = 0;

  const auto emit = [&](TraceEvent::Kind kind, std::string detail = {}) {
    run.trace.push_back({kind, w.t, run.episode.steps.size(), std::move(detail)});
  };
  const auto record = [&](const WorldState& before, const Command& cmd, Controller label, std::size_t index,
                          std::optional<world::JointVector> joint_target) {
    run.episode.steps.push_back({before.t, observe(before), cmd, label, static_cast<int>(index), joint_target});
    if (options.hooks.tick) options.hooks.tick(w, label);
  };
  const auto finish = [&](bool success, OutcomeReason reason, std::string detail) {
    run.episode.outcome = {success, reason, handoffs, std::move(detail)};
    emit(TraceEvent::Kind::Finish, std::string(to_string(reason)));
    run.final_state = w;
    return run;
  };
  const auto require_bound = [](const plan::Value& v, const std::string& handle) {
    if (v.deferred || v.optimistic) throw std::logic_error("execution reached unbound value " + handle);
  };

  for (;;) {
    const auto perceived = world::perceive(w, options.perception, mix(options.seed, static_cast<std::uint64_t>(w.t)));
    emit(TraceEvent::Kind::Observe);
    const auto problem = plan::make_problem(task, w, perceived);
    if (lang::eval_formula(problem.init, problem.goal)) return finish(true, OutcomeReason::GoalReached, "");
    if (plans >= options.replan_cap) return finish(false, OutcomeReason::PlanFailure, "replan cap reached");

    plan::PlanOptions po = options.planner;
    po.seed = mix(options.seed ^ 0x5bd1e995ULL, static_cast<std::uint64_t>(plans));
    plan::BoundPlan bp;
    try {
      bp = plan::plan(task, problem, constraints, po);
    } catch (const plan::PlanningError& e) {
      return finish(false, OutcomeReason::PlanFailure, e.what());
    }
    ++plans;
    {
      std::string sk;
      for (const auto& s : bp.skeleton()) sk += (sk.empty() ? "" : " ") + s;
      emit(TraceEvent::Kind::Plan, sk);
    }
    run.plans.push_back(bp);

    for (std::size_t i = 0; i < bp.steps.size(); ++i) {
      const auto& a = bp.steps[i];
      if (!a.human()) {
        emit(TraceEvent::Kind::Execute, a.str());
        const auto& params = a.schema->params;
        const auto traj_param = std::find_if(params.begin(), params.end(),
                                             [](const lang::Parameter& p) { return p.type == lang::ArgType::Traj; });
        const auto grasp_effect = std::find_if(a.eff.begin(), a.eff.end(), [](const lang::Literal& l) {
          return l.predicate == "AtGrasp" && !l.negated;
        });
        if (traj_param != params.end()) {
          const auto& handle = a.arg(traj_param->name);
          const auto& value = bp.value(handle);
          require_bound(value, handle);
          for (const auto& wp : value.traj.waypoints) {
            if (world::joint_distance(wp, w.config.joints) <= 1e-12) continue;
            const WorldState before = w;
            w = world::step_joints(w, wp);
            const Pose2 e0 = before.end_effector(), e1 = w.end_effector();
            record(before, {e1.x - e0.x, e1.y - e0.y, world::wrap_angle(e1.theta - e0.theta), !w.config.gripper_open},
                   Controller::Tamp, i, wp);
            if (w.saturated) return finish(false, OutcomeReason::TampFailure, "trajectory blocked in " + a.str());
          }
        } else if (grasp_effect != a.eff.end()) {
          const auto& object = grasp_effect->args[0];
          for (const auto& arg : a.args) {
            if (bp.values.contains(arg)) require_bound(bp.value(arg), arg);
          }
          const WorldState before = w;
          const Command close{0.0, 0.0, 0.0, true};
          w = world::step(w, close);
          record(before, close, Controller::Tamp, i, std::nullopt);
          if (!w.held || w.held->object != object) {
            return finish(false, OutcomeReason::TampFailure, "grasp failed: " + object);
          }
        } else {
          throw std::logic_error("no executor for schema " + a.name());
        }
        continue;
      }

      // Human-flagged action: delegate until its effects hold.
      ++handoffs;
      Prompt prompt;
      prompt.session = options.session;
      prompt.schema = a.name();
      prompt.plan_step = i;
      std::vector<std::string> objects;
      for (std::size_t k = 0; k < a.args.size(); ++k) {
        if (a.schema->params[k].type == lang::ArgType::Object) objects.push_back(a.args[k]);
      }
      if (!objects.empty()) {
        prompt.child = objects.front();
        prompt.parent = objects.back();
      }
      emit(TraceEvent::Kind::Handoff, a.str());
      if (options.hooks.acquire) options.hooks.acquire(prompt, w);
      const auto operator_view = [&] {
        const auto poses = world::perceive(w, options.operator_noise, mix(options.seed ^ 0xa5a5ULL, static_cast<std::uint64_t>(w.t)));
        return observe(w, poses);
      };
      op.begin(prompt, operator_view());
      bool satisfied = false;
      for (int tick = 0; tick < options.segment_cap; ++tick) {
        const Command cmd = clamp_command(op.act(operator_view(), prompt), task.scene->limits);
        const WorldState before = w;
        w = world::step(w, cmd);
        record(before, cmd, op.label(), i, std::nullopt);
        if (monitor_effects(w, a)) {
          satisfied = true;
          break;
        }
      }
      op.end();
      if (options.hooks.release) options.hooks.release(prompt, w);
      emit(TraceEvent::Kind::Return, satisfied ? "effects hold" : "segment cap");
      if (!satisfied) {
        return finish(false, OutcomeReason::OperatorTimeout,
                      "effects of " + a.str() + " unmet after " + std::to_string(options.segment_cap) + " ticks");
      }
      break;  // re-observe and re-plan
    }
  }
}

Episode bootstrap_demo(const Task& task, std::uint64_t seed, double noise_fraction, int phase_cap) {
  Episode ep;
  ep.task = task.name;
  ep.seed = seed;
  WorldState w = task.sample_world(seed);
  const auto& limits = task.scene->limits;
  std::mt19937_64 rng(mix(seed, 0xb007));

  const auto act = [&](const Command& c) {
    ep.steps.push_back({w.t, observe(w), c, Controller::Human, -1, std::nullopt});
    w = world::step(w, c);
  };
  const auto fail = [&](const std::string& why) {
    ep.outcome = {false, OutcomeReason::OperatorTimeout, 0, why};
    return ep;
  };

  const Pose2 home = world::forward_kinematics(task.scene->arm, task.home);
  for (const auto& target : task.goal_attachments()) {
    const Pose2 g = grasp_for(task.declared_grasps, target.child);
    const auto* spec = task.scene->object(target.child);
    int ticks = 0;
    // Transit through the home pose, away from the singular region over the base.
    for (;;) {
      if (++ticks > phase_cap) return fail("transit before " + target.child + " timed out");
      const auto err = world::pose_error(w.end_effector(), home);
      if (err.position < 0.02 && err.angle < 0.05) break;
      act(add_noise(track(w.end_effector(), home, limits, false), noise_fraction, limits, rng));
    }
    ticks = 0;
    while (!(w.held && w.held->object == target.child)) {
      if (++ticks > phase_cap) return fail("approach to " + target.child + " timed out");
      const Pose2 obj = w.object_pose(target.child);
      const world::Vec2 handle = obj.apply(spec->handle);
      const Pose2 desired{handle.x, handle.y, (obj * g.inverse()).theta};
      const Pose2 ee = w.end_effector();
      const auto err = world::pose_error(ee, desired);
      act(err.position < 1e-3 && err.angle < 1e-3 ? Command{0, 0, 0, true}
                                                   : add_noise(track(ee, desired, limits, false), noise_fraction, limits, rng));
    }

    const Pose2 above_rel{target.relative.x, target.relative.y + 0.12, target.relative.theta};
    for (ticks = 0;; ++ticks) {
      if (ticks > phase_cap) return fail("carry of " + target.child + " timed out");
      const Pose2 above = w.object_pose(target.parent) * above_rel;
      const auto err = world::pose_error(w.object_pose(target.child), above);
      if (err.position < 0.005 && err.angle < 0.02) break;
      const Pose2 desired = above * w.held->grasp.inverse();
      act(add_noise(track(w.end_effector(), desired, limits, true), noise_fraction, limits, rng));
    }

    for (ticks = 0; w.holding(); ++ticks) {
      if (ticks > phase_cap) return fail("descent of " + target.child + " timed out");
      const Pose2 goal = w.object_pose(target.parent) * target.relative;
      const auto err = world::pose_error(w.object_pose(target.child), goal);
      if (err.position <= 0.5 * target.position_tolerance && err.angle <= 0.5 * target.angle_tolerance) {
        act({0, 0, 0, false});
        break;
      }
      const Pose2 desired = goal * w.held->grasp.inverse();
      act(add_noise(track(w.end_effector(), desired, limits, true), noise_fraction, limits, rng));
    }
    if (!w.is_attached(target.child, target.parent)) return fail(target.child + " not attached");
  }
  const auto problem = plan::make_problem(task, w);
  const bool done = lang::eval_formula(problem.init, problem.goal);
  ep.outcome = {done, done ? OutcomeReason::GoalReached : OutcomeReason::OperatorTimeout, 0, done ? "" : "goal unmet"};
  return ep;
}

}  // namespace hitl::gate
