#pragma once

// Hybrid planner: breadth-first search over schema sequences in an optimistic
// universe of stream outputs, then sampling-based binding of the continuous
// values used by the chosen skeleton.

#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hitl/constraints.hpp"
#include "hitl/lang.hpp"
#include "hitl/motion.hpp"
#include "hitl/task.hpp"
#include "hitl/world.hpp"

namespace hitl::plan {

enum class ValueKind { Pose, Grasp, Conf, Traj };

/// A continuous value bound to a handle. Deferred values have no content yet;
/// optimistic ones are placeholders derived from an assumed human outcome.
struct Value {
  ValueKind kind = ValueKind::Pose;
  world::Pose2 pose;  // Pose and Grasp
  world::JointVector conf{};
  Trajectory traj;
  bool deferred = false;
  bool optimistic = false;

  static Value of_pose(world::Pose2 p) { return {ValueKind::Pose, p, {}, {}, false, false}; }
  static Value of_grasp(world::Pose2 g) { return {ValueKind::Grasp, g, {}, {}, false, false}; }
  static Value of_conf(world::JointVector q) { return {ValueKind::Conf, {}, q, {}, false, false}; }
  static Value of_traj(Trajectory t) { return {ValueKind::Traj, {}, {}, std::move(t), false, false}; }

  bool operator==(const Value&) const = default;
};

using ValueTable = std::map<std::string, Value>;

/// Symbolic state plus the observed values its handles refer to.
struct PlanningProblem {
  lang::FluentState init;
  lang::Formula goal;
  ValueTable values;
  world::WorldState snapshot;  // scene, held object and configuration for geometry checks
  std::string conf_handle;
};

/// Symbolic view of `state`. Object poses come from `perceived` (defaults to
/// the true poses). Handles use the problem's names at t = 0 and `name@t` after.
PlanningProblem make_problem(const Task& task, const world::WorldState& state,
                             const std::optional<std::map<std::string, world::Pose2>>& perceived = {});

struct PlanOptions {
  std::uint64_t seed = 0;
  int depth_limit = 16;
  int per_variable = 50;  // samples per stream value before backtracking
  int motion_attempts = 3;
  int sample_budget = 5000;
  double time_limit = 5.0;  // seconds
  MotionOptions motion;
};

struct BoundPlan {
  std::vector<lang::GroundAction> steps;
  ValueTable values;
  std::optional<std::size_t> first_human_index;

  bool empty() const { return steps.empty(); }
  const Value& value(const std::string& handle) const;
  /// Schema names in order, e.g. "move pick move attach".
  std::vector<std::string> skeleton() const;
  /// Human-readable s-expression rendering.
  std::string describe(const std::string& task_name = "") const;
};

/// Throws PlanningError (NoSkeleton, BindingExhausted, Timeout).
BoundPlan plan(const Task& task, const PlanningProblem& problem, const learn::ConstraintRegistry& constraints,
               const PlanOptions& options = {});

/// Convenience: plan from the initial problem of `state`.
BoundPlan plan(const Task& task, const world::WorldState& state, const learn::ConstraintRegistry& constraints,
               const PlanOptions& options = {});

}  // namespace hitl::plan
