#pragma once

// TAMP-gated control: observe, stop on goal, plan, execute joint commands up
// to the first human-flagged action, hand control to an operator until that
// action's effects hold, then re-observe and re-plan.

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "hitl/constraints.hpp"
#include "hitl/episode.hpp"
#include "hitl/planner.hpp"
#include "hitl/task.hpp"

namespace hitl::gate {

/// What the operator is asked to do.
struct Prompt {
  int session = 0;
  std::string schema;
  std::string child;
  std::string parent;
  std::size_t plan_step = 0;
};

class Operator {
 public:
  virtual ~Operator() = default;
  /// Control is handed over for `prompt`.
  virtual void begin(const Prompt& /*prompt*/, const Observation& /*obs*/) {}
  /// One delta command per tick while delegated.
  virtual world::Command act(const Observation& obs, const Prompt& prompt) = 0;
  /// Control is revoked.
  virtual void end() {}
  virtual Controller label() const { return Controller::Human; }
};

/// Holds still with the gripper unchanged.
class NoOpOperator : public Operator {
 public:
  world::Command act(const Observation& obs, const Prompt& prompt) override;
};

/// Proportional controller toward the declared attach pose with bounded
/// per-tick deltas and optional uniform command noise.
class ScriptedOracle : public Operator {
 public:
  /// `noise_fraction` scales the noise half-width relative to max_step / max_rot.
  ScriptedOracle(const Task& task, double noise_fraction = 0.0, std::uint64_t seed = 0);

  void begin(const Prompt& prompt, const Observation& obs) override;
  world::Command act(const Observation& obs, const Prompt& prompt) override;

  void reseed(std::uint64_t seed) { rng_.seed(seed); }

 private:
  std::shared_ptr<const world::Scene> scene_;
  std::vector<std::pair<std::string, world::Pose2>> grasps_;
  double noise_;
  std::mt19937_64 rng_;
};

/// Clamps a command to the per-tick bounds of `limits`.
world::Command clamp_command(const world::Command& c, const world::Limits& limits);

/// Bounded proportional step that moves the end effector toward `desired`.
world::Command track(const world::Pose2& current, const world::Pose2& desired, const world::Limits& limits,
                     bool grip);

/// True iff every positive effect of `action` holds geometrically in `state`.
/// Pose and configuration outputs chosen by the operator hold trivially.
bool monitor_effects(const world::WorldState& state, const lang::GroundAction& action);

struct TraceEvent {
  enum class Kind { Observe, Plan, Execute, Handoff, Return, Finish };
  Kind kind = Kind::Observe;
  std::int64_t t = 0;
  std::size_t step = 0;  // episode step count when the event fired
  std::string detail;
};

std::string_view to_string(TraceEvent::Kind kind);

struct GateHooks {
  /// Blocks until an operator is available for `prompt`.
  std::function<void(const Prompt&, const world::WorldState&)> acquire;
  /// Control returns to TAMP (or the episode ends inside the segment).
  std::function<void(const Prompt&, const world::WorldState&)> release;
  /// Called after every executed tick.
  std::function<void(const world::WorldState&, Controller)> tick;
};

struct GateOptions {
  int session = 0;
  int segment_cap = 600;  // operator ticks per handoff
  int replan_cap = 10;
  world::NoiseModel perception;      // TAMP observations
  world::NoiseModel operator_noise;  // operator observations
  std::uint64_t seed = 0;
  plan::PlanOptions planner;
  GateHooks hooks;
};

struct GatedRun {
  Episode episode;
  std::vector<TraceEvent> trace;
  std::vector<plan::BoundPlan> plans;
  world::WorldState final_state;
};

GatedRun run_gated(const Task& task, const world::WorldState& initial, Operator& op,
                   const learn::ConstraintRegistry& constraints, const GateOptions& options = {});

/// Full-teleoperation demonstration with the oracle acting for the human on
/// every step: approach, grasp, carry above the target, descend, release, for
/// each goal attachment in order. Used to bootstrap the constraint sets.
Episode bootstrap_demo(const Task& task, std::uint64_t seed, double noise_fraction = 0.0, int phase_cap = 600);

}  // namespace hitl::gate
