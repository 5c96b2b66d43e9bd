#include "hitl/episode.hpp"

#include <stdexcept>

namespace hitl {

std::string_view to_string(Controller c) {
  switch (c) {
    case Controller::Tamp: return "tamp";
    case Controller::Human: return "human";
    case Controller::Policy: return "policy";
  }
  return "?";
}

Controller parse_controller(std::string_view text) {
  if (text == "tamp") return Controller::Tamp;
  if (text == "human") return Controller::Human;
  if (text == "policy") return Controller::Policy;
  throw std::invalid_argument("unknown controller label '" + std::string(text) + "'");
}

std::string_view to_string(OutcomeReason r) {
  switch (r) {
    case OutcomeReason::GoalReached: return "goal-reached";
    case OutcomeReason::TampFailure: return "tamp-failure";
    case OutcomeReason::OperatorTimeout: return "operator-timeout";
    case OutcomeReason::PlanFailure: return "plan-failure";
  }
  return "?";
}

OutcomeReason parse_reason(std::string_view text) {
  if (text == "goal-reached") return OutcomeReason::GoalReached;
  if (text == "tamp-failure") return OutcomeReason::TampFailure;
  if (text == "operator-timeout") return OutcomeReason::OperatorTimeout;
  if (text == "plan-failure") return OutcomeReason::PlanFailure;
  throw std::invalid_argument("unknown outcome reason '" + std::string(text) + "'");
}

Observation observe(const world::WorldState& state, std::optional<std::map<std::string, world::Pose2>> poses) {
  Observation obs;
  obs.t = state.t;
  obs.objects = poses ? std::move(*poses) : state.all_poses();
  obs.config = state.config.joints;
  obs.gripper_closed = !state.config.gripper_open;
  if (state.held) obs.held = state.held->object;
  return obs;
}

world::WorldState to_world(const std::shared_ptr<const world::Scene>& scene, const Observation& obs) {
  world::WorldState s;
  s.scene = scene;
  s.t = obs.t;
  s.config.joints = obs.config;
  s.config.gripper_open = !obs.gripper_closed;
  s.poses = obs.objects;
  if (obs.held) {
    const auto pose = obs.objects.at(*obs.held);
    s.poses.erase(*obs.held);
    s.held = world::HeldObject{*obs.held, world::relative(world::forward_kinematics(scene->arm, obs.config), pose)};
  }
  return s;
}

std::vector<Segment> Episode::segments() const {
  std::vector<Segment> out;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (out.empty() || out.back().label != steps[i].label) out.push_back({steps[i].label, i, i});
    out.back().end = i + 1;
  }
  return out;
}

}  // namespace hitl
