#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hitl/world.hpp"

namespace hitl {

enum class Controller { Tamp, Human, Policy };

std::string_view to_string(Controller c);
Controller parse_controller(std::string_view text);

/// Low-dimensional observation: object poses, arm joints and gripper state.
struct Observation {
  std::int64_t t = 0;
  std::map<std::string, world::Pose2> objects;
  world::JointVector config{};
  bool gripper_closed = false;
  std::optional<std::string> held;

  bool operator==(const Observation&) const = default;
};

/// Observation of `state`, with `poses` overriding the true object poses (perception).
Observation observe(const world::WorldState& state, std::optional<std::map<std::string, world::Pose2>> poses = {});

/// Rebuilds a world snapshot from a recorded observation.
world::WorldState to_world(const std::shared_ptr<const world::Scene>& scene, const Observation& obs);

struct EpisodeStep {
  std::int64_t t = 0;
  Observation obs;      // before the action
  world::Command action;  // end-effector delta (realised delta for TAMP steps)
  Controller label = Controller::Tamp;
  int schema_index = -1;  // index of the plan step being executed
  std::optional<world::JointVector> joint_target;  // TAMP joint command

  bool operator==(const EpisodeStep&) const = default;
};

enum class OutcomeReason { GoalReached, TampFailure, OperatorTimeout, PlanFailure };

std::string_view to_string(OutcomeReason r);
OutcomeReason parse_reason(std::string_view text);

struct Segment {
  Controller label = Controller::Tamp;
  std::size_t begin = 0;  // step indices [begin, end)
  std::size_t end = 0;

  std::size_t length() const { return end - begin; }
};

struct EpisodeOutcome {
  bool success = false;
  OutcomeReason reason = OutcomeReason::PlanFailure;
  int handoff_count = 0;
  std::string detail;

  bool operator==(const EpisodeOutcome&) const = default;
};

struct Episode {
  std::string task;
  std::uint64_t seed = 0;
  std::vector<EpisodeStep> steps;
  EpisodeOutcome outcome;

  /// Maximal runs of equally labelled steps.
  std::vector<Segment> segments() const;

  bool operator==(const Episode&) const = default;
};

}  // namespace hitl
