#pragma once

// Behavioural cloning on human-labelled steps, and TAMP-gated evaluation of
// the resulting reactive policies.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hitl/constraints.hpp"
#include "hitl/episode.hpp"
#include "hitl/gate.hpp"
#include "hitl/task.hpp"

namespace hitl::imitate {

/// Per object: pose relative to the end effector as (dx, dy, sin, cos). Then the
/// end-effector pose (x, y, sin, cos) and the gripper bit. Objects in name order.
std::vector<double> featurize(const world::ArmModel& arm, const Observation& obs);

using Action = std::array<double, 4>;  // dx, dy, dtheta, grip (0 or 1)

Action to_action(const world::Command& c);

enum class PolicyKind { Knn, Linear };

std::string_view to_string(PolicyKind kind);
PolicyKind parse_policy_kind(std::string_view text);

struct TrainOptions {
  PolicyKind kind = PolicyKind::Knn;
  int k = 5;
  double ridge = 1e-3;
};

/// Thrown when a dataset holds no human-labelled steps.
class NoHumanData : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class Policy {
 public:
  PolicyKind kind = PolicyKind::Knn;
  std::string task;
  world::ArmModel arm;
  world::Limits limits;
  std::vector<std::string> objects;  // feature layout

  // knn
  int k = 5;
  std::vector<std::vector<double>> inputs;
  std::vector<Action> outputs;
  std::vector<double> scale;  // per-feature distance weights

  // linear: outputs = weights * [x; 1]
  Eigen::MatrixXd weights;

  /// Raw prediction, unclamped.
  Action predict(const std::vector<double>& x) const;
  /// Prediction as a bounded command.
  world::Command act(const Observation& obs) const;

  std::size_t training_pairs() const { return kind == PolicyKind::Knn ? inputs.size() : trained_on; }
  std::size_t trained_on = 0;

  void save(const std::filesystem::path& path) const;
  static Policy load(const std::filesystem::path& path);

  bool operator==(const Policy& other) const;
};

/// Trains on every step labelled Human in `dataset`. Other labels are skipped.
Policy train(const Task& task, const std::vector<Episode>& dataset, const TrainOptions& options = {});

/// Number of steps `train` would use.
std::size_t count_training_pairs(const std::vector<Episode>& dataset);

/// Mean squared BC loss of `policy` on the human-labelled steps of `dataset`.
double bc_loss(const Policy& policy, const std::vector<Episode>& dataset);

class PolicyOperator : public gate::Operator {
 public:
  explicit PolicyOperator(const Policy& policy) : policy_(policy) {}
  world::Command act(const Observation& obs, const gate::Prompt& prompt) override;
  Controller label() const override { return Controller::Policy; }

 private:
  const Policy& policy_;
};

struct EvalOptions {
  int rollouts = 50;                // non-TAMP-failure rollouts per seed
  std::vector<std::uint64_t> seeds{0};
  int attempt_factor = 3;           // attempts capped at attempt_factor * rollouts
  gate::GateOptions gate;
};

struct SeedResult {
  std::uint64_t seed = 0;
  int attempts = 0;
  int successes = 0;
  int tamp_failures = 0;  // tamp-failure or plan-failure
  std::map<std::string, int> reasons;

  double filtered() const;
  double raw() const;
  double tamp() const;
};

struct EvalResult {
  std::vector<SeedResult> per_seed;
  double filtered_sr = 0.0;  // means over seeds
  double raw_sr = 0.0;
  double tamp_sr = 0.0;
  std::map<std::string, int> reasons;  // totals
};

/// Gated rollouts with the policy acting for the human. Rollouts ending in a
/// TAMP or planning failure are excluded from the filtered rate and replaced.
EvalResult evaluate_gated(const Policy& policy, const Task& task, const learn::ConstraintRegistry& constraints,
                          const EvalOptions& options = {});

}  // namespace hitl::imitate
