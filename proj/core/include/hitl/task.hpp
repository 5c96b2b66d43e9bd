#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hitl/lang.hpp"
#include "hitl/world.hpp"

namespace hitl {

/// Axis-aligned sampling box over (x, y, theta).
struct Region {
  double x_min = 0, x_max = 0, y_min = 0, y_max = 0, theta_min = 0, theta_max = 0;
};

struct Placement {
  std::string object;
  std::optional<world::Pose2> fixed_pose;
  Region region;
  std::optional<Region> broad_region;
};

/// A task file: `(domain ...)`, `(problem ...)` and `(world ...)` forms.
struct Task {
  std::string name;
  lang::DomainSpec domain;
  lang::ProblemSpec problem;
  std::shared_ptr<const world::Scene> scene;
  std::vector<Placement> placements;
  world::JointVector home{};
  double delta = 0.05;  // default PreAttach separation
  /// Generic grasps for objects without learned AttachGrasp data.
  std::vector<std::pair<std::string, world::Pose2>> declared_grasps;

  static Task parse(std::string_view text);
  static Task load(const std::filesystem::path& path);

  /// Initial world with object poses drawn from the placement regions.
  world::WorldState sample_world(std::uint64_t seed, bool broad = false) const;

  /// Attach targets named by Attached(...) goal literals, in goal order.
  std::vector<world::AttachTarget> goal_attachments() const;
};

/// Resolves a task name ("tool-hang-2d") or a path to a `.tamp` file.
std::filesystem::path resolve_task_path(const std::string& name_or_path);

/// Directory holding the shipped task corpus.
std::filesystem::path data_directory();

std::string read_file(const std::filesystem::path& path);

}  // namespace hitl
