#include "hitl/world.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <random>
#include <stdexcept>

namespace hitl::world {

bool ArmModel::within_limits(const JointVector& q) const {
  return std::all_of(q.begin(), q.end(), [&](double v) { return v >= joint_min && v <= joint_max; });
}

JointVector ArmModel::clamp(const JointVector& q) const {
  JointVector out = q;
  for (auto& v : out) v = std::clamp(v, joint_min, joint_max);
  return out;
}

const ObjectSpec* Scene::object(const std::string& name) const {
  for (const auto& o : objects) {
    if (o.name == name) return &o;
  }
  return nullptr;
}

const AttachTarget* Scene::attach_target(const std::string& child, const std::string& parent) const {
  for (const auto& a : attach_targets) {
    if (a.child == child && a.parent == parent) return &a;
  }
  return nullptr;
}

NoiseModel NoiseModel::level(int index) {
  constexpr double kDegree = std::numbers::pi / 180.0;
  switch (index) {
    case 0: return {};
    case 1: return {0.05, 5.0 * kDegree};
    case 2: return {0.10, 10.0 * kDegree};
    default: throw std::invalid_argument("noise level must be 0, 1 or 2");
  }
}

// ---------------------------------------------------------------------------
// Kinematics

Pose2 forward_kinematics(const ArmModel& arm, const JointVector& q) {
  double x = 0.0, y = 0.0, phi = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    phi += q[i];
    x += arm.links[i] * std::cos(phi);
    y += arm.links[i] * std::sin(phi);
  }
  return {x, y, wrap_angle(phi)};
}

std::array<Vec2, 4> joint_positions(const ArmModel& arm, const JointVector& q) {
  std::array<Vec2, 4> out{};
  double phi = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    phi += q[i];
    out[i + 1] = out[i] + Vec2{std::cos(phi), std::sin(phi)} * arm.links[i];
  }
  return out;
}

Eigen::Matrix3d jacobian(const ArmModel& arm, const JointVector& q) {
  std::array<double, 3> phi{};
  double acc = 0.0;
  for (std::size_t i = 0; i < 3; ++i) phi[i] = acc += q[i];
  Eigen::Matrix3d j = Eigen::Matrix3d::Zero();
  for (std::size_t col = 0; col < 3; ++col) {
    for (std::size_t k = col; k < 3; ++k) {
      j(0, col) -= arm.links[k] * std::sin(phi[k]);
      j(1, col) += arm.links[k] * std::cos(phi[k]);
    }
    j(2, col) = 1.0;
  }
  return j;
}

IkResult dls_solve(const ArmModel& arm, const JointVector& seed, const Pose2& target, int max_iterations,
                   double damping, double tolerance) {
  IkResult result;
  result.q = arm.clamp(seed);
  const double lambda2 = damping * damping;
  for (int it = 0;; ++it) {
    const Pose2 current = forward_kinematics(arm, result.q);
    const Eigen::Vector3d e(target.x - current.x, target.y - current.y, wrap_angle(target.theta - current.theta));
    result.position_error = std::hypot(e(0), e(1));
    result.angle_error = std::abs(e(2));
    result.iterations = it;
    if ((result.position_error <= tolerance && result.angle_error <= tolerance) || it >= max_iterations) break;
    const Eigen::Matrix3d j = jacobian(arm, result.q);
    const Eigen::Matrix3d jjt = j * j.transpose() + lambda2 * Eigen::Matrix3d::Identity();
    const Eigen::Vector3d dq = j.transpose() * jjt.ldlt().solve(e);
    for (std::size_t i = 0; i < 3; ++i) result.q[i] += dq(static_cast<Eigen::Index>(i));
    result.q = arm.clamp(result.q);
  }
  return result;
}

double joint_distance(const JointVector& a, const JointVector& b) {
  return std::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) + (a[2] - b[2]) * (a[2] - b[2]));
}

JointVector lerp(const JointVector& a, const JointVector& b, double s) {
  return {a[0] + (b[0] - a[0]) * s, a[1] + (b[1] - a[1]) * s, a[2] + (b[2] - a[2]) * s};
}

// ---------------------------------------------------------------------------
// Collision

namespace {

Polygon placed_shape(const Scene& scene, const std::string& name, const Pose2& pose) {
  const ObjectSpec* spec = scene.object(name);
  if (spec == nullptr) throw std::invalid_argument("unknown object '" + name + "'");
  return spec->shape.transformed(pose);
}

bool polygon_hits_obstacles(const Scene& scene, const Polygon& poly) {
  return std::any_of(scene.obstacles.begin(), scene.obstacles.end(),
                     [&](const Polygon& o) { return polygons_overlap(poly, o); });
}

}  // namespace

bool arm_collides(const Scene& scene, const JointVector& q, const std::optional<HeldObject>& held) {
  const auto points = joint_positions(scene.arm, q);
  for (const auto& obstacle : scene.obstacles) {
    for (std::size_t i = 0; i < 3; ++i) {
      if (segment_intersects_polygon({points[i], points[i + 1]}, obstacle)) return true;
    }
  }
  if (held) {
    const Pose2 pose = forward_kinematics(scene.arm, q).compose(held->grasp);
    if (polygon_hits_obstacles(scene, placed_shape(scene, held->object, pose))) return true;
  }
  return false;
}

bool segment_clear(const Scene& scene, const JointVector& a, const JointVector& b,
                   const std::optional<HeldObject>& held, double resolution) {
  const int n = std::max(1, static_cast<int>(std::ceil(joint_distance(a, b) / resolution)));
  for (int i = 0; i <= n; ++i) {
    if (arm_collides(scene, lerp(a, b, static_cast<double>(i) / n), held)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// WorldState

Pose2 WorldState::end_effector() const { return forward_kinematics(scene->arm, config.joints); }

Pose2 WorldState::object_pose(const std::string& name) const {
  if (held && held->object == name) return end_effector().compose(held->grasp);
  const auto it = poses.find(name);
  if (it == poses.end()) throw std::invalid_argument("unknown object '" + name + "'");
  return it->second;
}

std::map<std::string, Pose2> WorldState::all_poses() const {
  auto out = poses;
  if (held) out[held->object] = object_pose(held->object);
  return out;
}

bool WorldState::is_attached(const std::string& child, const std::string& parent) const {
  return std::any_of(attachments.begin(), attachments.end(),
                     [&](const Attachment& a) { return a.child == child && a.parent == parent; });
}

bool WorldState::is_attached_child(const std::string& child) const {
  return std::any_of(attachments.begin(), attachments.end(), [&](const Attachment& a) { return a.child == child; });
}

bool WorldState::in_collision() const {
  if (arm_collides(*scene, config.joints, held)) return true;
  for (const auto& [name, pose] : poses) {
    if (polygon_hits_obstacles(*scene, placed_shape(*scene, name, pose))) return true;
  }
  return false;
}

double object_distance(const WorldState& state, const std::string& a, const std::string& b) {
  return polygon_distance(placed_shape(*state.scene, a, state.object_pose(a)),
                          placed_shape(*state.scene, b, state.object_pose(b)));
}

bool good_attach(const WorldState& state, const std::string& child, const std::string& parent) {
  const Pose2 child_pose = state.object_pose(child);
  const Pose2 parent_pose = state.object_pose(parent);
  const AttachTarget* target = state.scene->attach_target(child, parent);
  if (target == nullptr) return false;
  const PoseError err = pose_error(relative(parent_pose, child_pose), target->relative);
  return err.position <= target->position_tolerance && err.angle <= target->angle_tolerance;
}

namespace {

bool creates_cycle(const WorldState& state, const std::string& child, const std::string& parent) {
  // Walk up from parent; reaching child means the new edge closes a loop.
  std::string cursor = parent;
  for (std::size_t guard = 0; guard <= state.attachments.size(); ++guard) {
    if (cursor == child) return true;
    const auto it = std::find_if(state.attachments.begin(), state.attachments.end(),
                                 [&](const Attachment& a) { return a.child == cursor; });
    if (it == state.attachments.end()) return false;
    cursor = it->parent;
  }
  return true;
}

void apply_grip(WorldState& s, bool closed) {
  if (closed == !s.config.gripper_open) return;
  s.config.gripper_open = !closed;
  const Pose2 ee = s.end_effector();
  if (closed) {
    const std::string* best = nullptr;
    double best_distance = s.scene->limits.grasp_tolerance;
    for (const auto& [name, pose] : s.poses) {
      const ObjectSpec* spec = s.scene->object(name);
      if (spec->fixed || s.is_attached_child(name)) continue;
      const double d = (pose.apply(spec->handle) - ee.position()).norm();
      if (d <= best_distance) {
        best_distance = d;
        best = &name;
      }
    }
    if (best != nullptr) {
      const std::string name = *best;
      s.held = HeldObject{name, relative(ee, s.poses.at(name))};
      s.poses.erase(name);
    }
    return;
  }
  if (!s.held) return;
  const std::string name = s.held->object;
  s.poses[name] = ee.compose(s.held->grasp);
  s.held.reset();
  for (const auto& target : s.scene->attach_targets) {
    if (target.child != name || s.is_attached_child(name)) continue;
    if (good_attach(s, name, target.parent) && !creates_cycle(s, name, target.parent)) {
      s.attachments.push_back({name, target.parent, relative(s.poses.at(target.parent), s.poses.at(name))});
    }
  }
}

// Largest collision-free prefix of the joint-space move a -> b, as a fraction.
double free_fraction(const Scene& scene, const JointVector& a, const JointVector& b,
                     const std::optional<HeldObject>& held) {
  const int n = std::max(1, static_cast<int>(std::ceil(joint_distance(a, b) / 0.01)));
  int first_hit = -1;
  for (int i = 1; i <= n; ++i) {
    if (arm_collides(scene, lerp(a, b, static_cast<double>(i) / n), held)) {
      first_hit = i;
      break;
    }
  }
  if (first_hit < 0) return 1.0;
  double lo = static_cast<double>(first_hit - 1) / n;
  double hi = static_cast<double>(first_hit) / n;
  for (int k = 0; k < 30; ++k) {
    const double mid = 0.5 * (lo + hi);
    if (arm_collides(scene, lerp(a, b, mid), held)) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return lo;
}

}  // namespace

WorldState step(const WorldState& state, const Command& command) {
  const Limits& lim = state.scene->limits;
  constexpr double kSlack = 1e-12;
  if (std::abs(command.dx) > lim.max_step + kSlack || std::abs(command.dy) > lim.max_step + kSlack ||
      std::abs(command.dtheta) > lim.max_rot + kSlack) {
    throw std::invalid_argument("command exceeds per-tick bounds");
  }
  WorldState next = state;
  next.saturated = false;
  if (command.dx != 0.0 || command.dy != 0.0 || command.dtheta != 0.0) {
    const Pose2 ee = state.end_effector();
    const Pose2 target{ee.x + command.dx, ee.y + command.dy, wrap_angle(ee.theta + command.dtheta)};
    const IkResult ik = dls_solve(state.scene->arm, state.config.joints, target, 10);
    // Joint speed limit: near singular poses the arm slows down instead of flipping.
    double largest = 0.0;
    for (std::size_t i = 0; i < 3; ++i) largest = std::max(largest, std::abs(ik.q[i] - state.config.joints[i]));
    const double scale = largest > lim.max_joint_delta ? lim.max_joint_delta / largest : 1.0;
    const JointVector goal = lerp(state.config.joints, ik.q, scale);
    const double fraction = free_fraction(*state.scene, state.config.joints, goal, state.held);
    next.config.joints = lerp(state.config.joints, goal, fraction);
    next.saturated = fraction < 1.0 || scale < 1.0 || ik.position_error > 1e-6 || ik.angle_error > 1e-6;
  }
  apply_grip(next, command.grip);
  ++next.t;
  return next;
}

WorldState step_joints(const WorldState& state, const JointVector& target) {
  WorldState next = state;
  const JointVector goal = state.scene->arm.clamp(target);
  const double fraction = free_fraction(*state.scene, state.config.joints, goal, state.held);
  next.config.joints = fraction < 1.0 ? lerp(state.config.joints, goal, fraction) : goal;
  next.saturated = fraction < 1.0;
  ++next.t;
  return next;
}

std::map<std::string, Pose2> perceive(const WorldState& state, const NoiseModel& noise, std::uint64_t seed) {
  auto poses = state.all_poses();
  if (noise.position_bound <= 0.0 && noise.angle_bound <= 0.0) return poses;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (auto& [name, pose] : poses) {
    pose.x += noise.position_bound * unit(rng);
    pose.y += noise.position_bound * unit(rng);
    pose.theta = wrap_angle(pose.theta + noise.angle_bound * unit(rng));
  }
  return poses;
}

}  // namespace hitl::world
