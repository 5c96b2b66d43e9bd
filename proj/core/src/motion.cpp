#include "hitl/motion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace hitl::plan {

using world::JointVector;

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NoSkeleton: return "NoSkeleton";
    case ErrorKind::BindingExhausted: return "BindingExhausted";
    case ErrorKind::Timeout: return "Timeout";
    case ErrorKind::NoPath: return "NoPath";
    case ErrorKind::Unreachable: return "Unreachable";
  }
  return "?";
}

PlanningError::PlanningError(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

namespace {

std::vector<JointVector> interpolate(const JointVector& a, const JointVector& b, double step) {
  const double d = world::joint_distance(a, b);
  if (d == 0.0) return {a};
  const int n = static_cast<int>(std::ceil(d / step));
  std::vector<JointVector> out;
  out.reserve(static_cast<std::size_t>(n) + 1);
  for (int i = 0; i <= n; ++i) out.push_back(i == n ? b : world::lerp(a, b, static_cast<double>(i) / n));
  return out;
}

}  // namespace

Trajectory motion_plan(const world::Scene& scene, const std::optional<world::HeldObject>& held,
                       const JointVector& start, const JointVector& goal, std::uint64_t seed,
                       const MotionOptions& options) {
  if (world::arm_collides(scene, start, held)) throw PlanningError(ErrorKind::NoPath, "start configuration in collision");
  if (world::arm_collides(scene, goal, held)) throw PlanningError(ErrorKind::NoPath, "goal configuration in collision");
  // Execution checks each waypoint-to-waypoint segment, so the returned
  // trajectory is validated on exactly those segments.
  const auto executable = [&](const std::vector<JointVector>& wps) {
    for (std::size_t i = 1; i < wps.size(); ++i) {
      if (!world::segment_clear(scene, wps[i - 1], wps[i], held, options.resolution)) return false;
    }
    return true;
  };
  if (world::segment_clear(scene, start, goal, held, options.resolution)) {
    auto straight = interpolate(start, goal, options.step);
    if (executable(straight)) return {std::move(straight)};
  }

  struct Node {
    JointVector q;
    std::size_t parent;
  };
  using Tree = std::vector<Node>;
  enum class Extend { Trapped, Advanced, Reached };

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> joint(scene.arm.joint_min, scene.arm.joint_max);

  const auto nearest = [](const Tree& tree, const JointVector& q) {
    std::size_t best = 0;
    double d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < tree.size(); ++i) {
      const double e = world::joint_distance(tree[i].q, q);
      if (e < d) {
        d = e;
        best = i;
      }
    }
    return best;
  };
  const auto extend = [&](Tree& tree, const JointVector& target) {
    const std::size_t n = nearest(tree, target);
    const double d = world::joint_distance(tree[n].q, target);
    const JointVector q = d <= options.step ? target : world::lerp(tree[n].q, target, options.step / d);
    if (!world::segment_clear(scene, tree[n].q, q, held, options.resolution)) return Extend::Trapped;
    tree.push_back({q, n});
    return d <= options.step ? Extend::Reached : Extend::Advanced;
  };
  const auto branch = [](const Tree& tree) {
    std::vector<JointVector> out;
    for (std::size_t i = tree.size() - 1;; i = tree[i].parent) {
      out.push_back(tree[i].q);
      if (i == 0) break;
    }
    return out;  // leaf to root
  };

  constexpr int kRestarts = 3;
  for (int restart = 0; restart < kRestarts; ++restart) {
    Tree a{{start, 0}}, b{{goal, 0}};
    bool a_is_start = true;
    std::vector<JointVector> path;
    for (int it = 0; it < options.iterations && path.empty(); ++it) {
      const JointVector sample{joint(rng), joint(rng), joint(rng)};
      if (extend(a, sample) != Extend::Trapped) {
        const JointVector reached = a.back().q;
        Extend status = Extend::Advanced;
        while (status == Extend::Advanced) status = extend(b, reached);
        if (status == Extend::Reached) {
          auto from_a = branch(a);
          auto from_b = branch(b);
          std::reverse(from_a.begin(), from_a.end());
          from_a.insert(from_a.end(), from_b.begin() + 1, from_b.end());
          if (!a_is_start) std::reverse(from_a.begin(), from_a.end());
          path = std::move(from_a);
        }
      }
      std::swap(a, b);
      a_is_start = !a_is_start;
    }
    if (path.empty()) throw PlanningError(ErrorKind::NoPath, "RRT exhausted " + std::to_string(options.iterations) + " iterations");

    for (int k = 0; k < options.shortcuts && path.size() > 2; ++k) {
      std::uniform_int_distribution<std::size_t> pick(0, path.size() - 1);
      std::size_t i = pick(rng), j = pick(rng);
      if (i > j) std::swap(i, j);
      if (j - i < 2) continue;
      if (world::segment_clear(scene, path[i], path[j], held, options.resolution)) {
        path.erase(path.begin() + static_cast<std::ptrdiff_t>(i) + 1, path.begin() + static_cast<std::ptrdiff_t>(j));
      }
    }

    Trajectory out;
    out.waypoints.push_back(path.front());
    for (std::size_t i = 1; i < path.size(); ++i) {
      const auto piece = interpolate(path[i - 1], path[i], options.step);
      out.waypoints.insert(out.waypoints.end(), piece.begin() + 1, piece.end());
    }
    if (executable(out.waypoints)) return out;
  }
  throw PlanningError(ErrorKind::NoPath, "no executable path after " + std::to_string(kRestarts) + " RRT runs");
}

Trajectory motion_plan(const world::WorldState& state, const JointVector& start, const JointVector& goal,
                       std::uint64_t seed, const MotionOptions& options) {
  return motion_plan(*state.scene, state.held, start, goal, seed, options);
}

JointVector solve_kin(const world::Scene& scene, const world::Pose2& grasp, const world::Pose2& pose,
                      std::uint64_t seed, const std::optional<JointVector>& first_seed,
                      const std::optional<std::string>& object, int attempts) {
  constexpr double kTolerance = 1e-3;
  const world::Pose2 target = pose * grasp.inverse();
  if (target.position().norm() > scene.arm.reach()) {
    throw PlanningError(ErrorKind::Unreachable, "target beyond arm reach");
  }
  std::optional<world::HeldObject> held;
  if (object) held = world::HeldObject{*object, grasp};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> joint(scene.arm.joint_min, scene.arm.joint_max);
  for (int k = 0; k < attempts; ++k) {
    const JointVector start = k == 0 && first_seed ? *first_seed : JointVector{joint(rng), joint(rng), joint(rng)};
    const auto res = world::dls_solve(scene.arm, start, target, 50);
    const auto err = world::pose_error(world::forward_kinematics(scene.arm, res.q) * grasp, pose);
    if (err.position > kTolerance || err.angle > kTolerance) continue;
    if (world::arm_collides(scene, res.q, held)) continue;
    return res.q;
  }
  throw PlanningError(ErrorKind::Unreachable, "no collision-free IK solution after " + std::to_string(attempts) + " seeds");
}

}  // namespace hitl::plan
