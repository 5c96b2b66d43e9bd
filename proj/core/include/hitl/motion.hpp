#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hitl/world.hpp"

namespace hitl::plan {

enum class ErrorKind { NoSkeleton, BindingExhausted, Timeout, NoPath, Unreachable };

std::string_view to_string(ErrorKind kind);

class PlanningError : public std::runtime_error {
 public:
  PlanningError(ErrorKind kind, const std::string& message);
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

struct Trajectory {
  std::vector<world::JointVector> waypoints;

  bool operator==(const Trajectory&) const = default;
};

struct MotionOptions {
  double step = 0.1;  // joint-space distance between waypoints
  int iterations = 5000;
  double resolution = 0.01;  // edge collision sampling
  int shortcuts = 100;
};

/// Straight line when clear, otherwise bidirectional RRT followed by random
/// shortcutting. Throws PlanningError (NoPath) when either end is in
/// collision or the iteration budget runs out.
Trajectory motion_plan(const world::Scene& scene, const std::optional<world::HeldObject>& held,
                       const world::JointVector& start, const world::JointVector& goal, std::uint64_t seed,
                       const MotionOptions& options = {});

/// Convenience overload using the scene and held object of `state`.
Trajectory motion_plan(const world::WorldState& state, const world::JointVector& start,
                       const world::JointVector& goal, std::uint64_t seed, const MotionOptions& options = {});

/// Joint configuration with f(q) * grasp = pose within 1e-3, collision free
/// while carrying `object` (when given). Tries `first_seed`, then random seeds.
/// Throws PlanningError (Unreachable) after `attempts` seeds.
world::JointVector solve_kin(const world::Scene& scene, const world::Pose2& grasp, const world::Pose2& pose,
                             std::uint64_t seed, const std::optional<world::JointVector>& first_seed = {},
                             const std::optional<std::string>& object = {}, int attempts = 50);

}  // namespace hitl::plan
