#pragma once

// PreAttach / AttachGrasp datasets learned from demonstrations by a backward
// scan from the first successful attachment, plus uniform samplers over them.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "hitl/episode.hpp"
#include "hitl/world.hpp"

namespace hitl {
struct Task;
}

namespace hitl::learn {

class EmptySetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PreAttachSet {
  std::string child;
  std::string parent;
  std::vector<world::Pose2> poses;  // child relative to parent

  bool operator==(const PreAttachSet&) const = default;
};

struct GraspSet {
  std::string object;
  std::vector<world::Pose2> grasps;  // object relative to the gripper

  bool operator==(const GraspSet&) const = default;
};

struct ExtractionReport {
  std::size_t used = 0;
  std::size_t no_attach = 0;  // episode never reaches GoodAttach
  std::size_t no_match = 0;   // no held, separated state before it
};

/// Index of the pre-contact state for one episode, or -1.
/// Scans backward from just before the first GoodAttach(child, parent) state for
/// the first state where child is held and at least `delta` from parent.
/// `attach_index` receives the GoodAttach index (-1 when there is none).
long find_precontact(const world::Scene& scene, const Episode& episode, const std::string& child,
                     const std::string& parent, double delta, long* attach_index = nullptr);

/// Throws EmptySetError when every episode is skipped.
PreAttachSet extract_preattach(const world::Scene& scene, const std::vector<Episode>& episodes,
                               const std::string& child, const std::string& parent, double delta,
                               ExtractionReport* report = nullptr);

/// Same scan as extract_preattach against every declared attach parent of
/// `object`; logs the grasp at the identified state.
GraspSet extract_grasps(const world::Scene& scene, const std::vector<Episode>& episodes, const std::string& object,
                        double delta, ExtractionReport* report = nullptr);

/// Uniform draw, deterministic in `seed`. Throws EmptySetError on an empty set.
world::Pose2 sample_preattach(const PreAttachSet& set, std::uint64_t seed);
world::Pose2 sample_grasp(const GraspSet& set, std::uint64_t seed);

struct ConstraintRegistry {
  std::string task;
  double delta = 0.05;
  std::vector<PreAttachSet> preattach;
  std::vector<GraspSet> grasps;

  const PreAttachSet* find_preattach(const std::string& child, const std::string& parent) const;
  const GraspSet* find_grasps(const std::string& object) const;

  /// `.constraints` s-expression text.
  std::string to_text() const;
  static ConstraintRegistry parse(std::string_view text);

  void save(const std::filesystem::path& path) const;
  static ConstraintRegistry load(const std::filesystem::path& path);

  bool operator==(const ConstraintRegistry&) const = default;
};

/// Learns every attach target of the task. Targets whose episodes are all
/// skipped are left out and named in `missing`.
ConstraintRegistry learn_all(const Task& task, const std::vector<Episode>& episodes, double delta,
                             std::vector<std::string>* missing = nullptr);

}  // namespace hitl::learn
