#pragma once

// Planar kinematic world: a fixed-base 3R arm with a parallel gripper, rigid
// objects with SE(2) poses, attachments, static obstacles, delta-pose
// stepping and a noisy perception channel.

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "hitl/geometry.hpp"

namespace hitl::world {

using JointVector = std::array<double, 3>;

struct ArmModel {
  std::array<double, 3> links{1.0, 1.0, 1.0};
  double joint_min = -std::numbers::pi;
  double joint_max = std::numbers::pi;

  double reach() const { return links[0] + links[1] + links[2]; }
  bool within_limits(const JointVector& q) const;
  JointVector clamp(const JointVector& q) const;
};

struct Config {
  JointVector joints{};
  bool gripper_open = true;

  bool operator==(const Config&) const = default;
};

/// Per-tick command bounds and tolerances.
struct Limits {
  double max_step = 0.05;         // world units per tick, per axis
  double max_rot = 0.1;           // radians per tick
  double grasp_tolerance = 0.05;  // gripper point to object handle
  double tick_seconds = 1.0 / 20.0;
  double joint_step = 0.1;        // max joint-space distance between trajectory waypoints
  double max_joint_delta = 0.25;  // per joint, per tick, under delta commands
};

struct ObjectSpec {
  std::string name;
  Polygon shape;  // body frame
  Vec2 handle;    // body frame
  bool fixed = false;
};

/// Declared success pose of `child` relative to `parent`.
struct AttachTarget {
  std::string child;
  std::string parent;
  Pose2 relative;
  double position_tolerance = 0.02;
  double angle_tolerance = 0.1;
};

/// Immutable scene description shared by every snapshot of one task.
struct Scene {
  ArmModel arm;
  Limits limits;
  std::vector<Polygon> obstacles;
  std::vector<ObjectSpec> objects;
  std::vector<AttachTarget> attach_targets;

  const ObjectSpec* object(const std::string& name) const;
  const AttachTarget* attach_target(const std::string& child, const std::string& parent) const;
};

struct HeldObject {
  std::string object;
  Pose2 grasp;  // object pose relative to the gripper

  bool operator==(const HeldObject&) const = default;
};

struct Attachment {
  std::string child;
  std::string parent;
  Pose2 relative;

  bool operator==(const Attachment&) const = default;
};

/// End-effector delta command. `grip` is the desired gripper state (true = closed).
struct Command {
  double dx = 0.0;
  double dy = 0.0;
  double dtheta = 0.0;
  bool grip = false;

  bool operator==(const Command&) const = default;
};

struct NoiseModel {
  double position_bound = 0.0;  // uniform half-width per axis
  double angle_bound = 0.0;     // uniform half-width

  static NoiseModel level(int index);  // 0, 1 or 2
};

/// Immutable-by-convention snapshot; every update returns a new value.
struct WorldState {
  std::shared_ptr<const Scene> scene;
  std::map<std::string, Pose2> poses;  // every object except the held one
  Config config;
  std::optional<HeldObject> held;
  std::vector<Attachment> attachments;
  std::int64_t t = 0;
  bool saturated = false;  // last step could not realise the full command

  Pose2 end_effector() const;
  /// Pose of any object; the held object is derived as f(q) * g.
  Pose2 object_pose(const std::string& name) const;
  std::map<std::string, Pose2> all_poses() const;
  bool is_attached(const std::string& child, const std::string& parent) const;
  bool is_attached_child(const std::string& child) const;
  bool holding() const { return held.has_value(); }
  /// Collision query over arm links, the held object and all objects against obstacles.
  bool in_collision() const;
};

Pose2 forward_kinematics(const ArmModel& arm, const JointVector& q);
/// Base, elbow, wrist and gripper points.
std::array<Vec2, 4> joint_positions(const ArmModel& arm, const JointVector& q);
/// Rows: x, y, theta of the gripper; columns: joints.
Eigen::Matrix3d jacobian(const ArmModel& arm, const JointVector& q);

struct IkResult {
  JointVector q{};
  double position_error = 0.0;
  double angle_error = 0.0;
  int iterations = 0;
};

/// Damped least squares iterations from `seed` toward `target`.
IkResult dls_solve(const ArmModel& arm, const JointVector& seed, const Pose2& target, int max_iterations,
                   double damping = 0.1, double tolerance = 1e-10);

/// True when the arm at `q` (carrying `held`, if any) touches an obstacle.
bool arm_collides(const Scene& scene, const JointVector& q, const std::optional<HeldObject>& held);

/// Collision-free check of the straight joint-space segment, sampled at `resolution`.
bool segment_clear(const Scene& scene, const JointVector& a, const JointVector& b,
                   const std::optional<HeldObject>& held, double resolution = 0.01);

double joint_distance(const JointVector& a, const JointVector& b);
JointVector lerp(const JointVector& a, const JointVector& b, double s);

/// One control tick under an end-effector delta command.
/// Throws std::invalid_argument when the command exceeds the per-tick bounds.
WorldState step(const WorldState& state, const Command& command);

/// One control tick under a joint position command (TAMP execution).
WorldState step_joints(const WorldState& state, const JointVector& target);

/// True iff `child` sits within tolerance of its declared pose relative to `parent`.
/// Throws std::invalid_argument for unknown objects.
bool good_attach(const WorldState& state, const std::string& child, const std::string& parent);

/// Object poses with independent uniform noise; deterministic in `seed`.
std::map<std::string, Pose2> perceive(const WorldState& state, const NoiseModel& noise, std::uint64_t seed);

/// Minimum distance between the collision polygons of two objects.
double object_distance(const WorldState& state, const std::string& a, const std::string& b);

}  // namespace hitl::world
