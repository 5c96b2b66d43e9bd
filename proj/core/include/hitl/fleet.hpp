#pragma once

// Multi-session data collection with one operator and a FIFO handoff queue,
// either as a discrete-event model over duration distributions or as real
// gated sessions on threads under a shared virtual clock.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hitl/constraints.hpp"
#include "hitl/gate.hpp"
#include "hitl/task.hpp"

namespace hitl::fleet {

enum class Mode { Tamp, Waiting, Human };

std::string_view to_string(Mode m);

enum class Distribution { Constant, Exponential };

std::string_view to_string(Distribution d);
Distribution parse_distribution(std::string_view text);

struct FleetConfig {
  int n_robot = 1;
  double rate_h = 2.0;  // demos per minute the operator can serve
  double rate_t = 1.0;  // demos per minute one robot's TAMP produces
  double duty = 100.0;  // percent of time the operator is available
  double cycle = 10.0;  // minutes per on/off period when duty < 100
  Distribution distribution = Distribution::Constant;
  double warmup = 5.0;  // minutes excluded from the statistics

  /// Seconds.
  double human_duration() const { return 60.0 / rate_h; }
  double tamp_duration() const { return 60.0 / rate_t; }
  /// Minutes.
  double t_on() const { return cycle * duty / 100.0; }
  double t_off() const { return cycle - t_on(); }
  /// Operator availability at `seconds`.
  bool operator_on(double seconds) const;
  /// Next instant >= `seconds` at which the operator is available.
  double next_on(double seconds) const;

  /// Throws std::invalid_argument.
  void validate() const;
};

/// Smallest fleet whose TAMP production keeps the operator busy.
int min_fleet(double rate_h, double rate_t, double duty);

struct FleetEvent {
  enum class Kind { Enqueue, Start, Release, Finish };
  double time = 0.0;  // seconds
  int session = 0;
  Kind kind = Kind::Enqueue;
  bool success = false;  // Finish only
  std::string reason;    // Finish only

  bool operator==(const FleetEvent&) const = default;
};

std::string_view to_string(FleetEvent::Kind k);

struct SessionRecord {
  int id = 0;
  Mode mode = Mode::Tamp;
  double enqueued_at = 0.0;
  std::map<Mode, double> time_in;  // seconds inside the statistics window
};

struct FleetStats {
  int n_robot = 0;
  double window = 0.0;       // minutes measured
  int demos = 0;             // successful episodes finished in the window
  int failures = 0;          // unsuccessful episodes finished in the window
  int handoffs = 0;          // segments started in the window
  double throughput = 0.0;   // demos per minute
  double utilization = 0.0;  // busy time over operator on-time
  double mean_queue = 0.0;   // time-averaged waiting sessions
  std::map<Mode, double> mode_share;  // fraction of session time
  std::map<std::string, int> reasons;
  std::vector<SessionRecord> sessions;
  std::vector<FleetEvent> events;                   // full log, in time order
  std::vector<std::pair<double, int>> queue_trace;  // (seconds, waiting) after each change
};

/// Statistics from an event log. Throws std::logic_error if the log breaks
/// the mode cycle, FIFO order or operator exclusivity.
FleetStats summarize(const FleetConfig& config, const std::vector<FleetEvent>& events, double horizon_minutes);

/// Abstract model: each session alternates a TAMP phase and a human phase
/// drawn from the configured distribution. Deterministic in `seed`.
FleetStats simulate_events(const FleetConfig& config, double horizon_minutes, std::uint64_t seed = 0);

struct RunOptions {
  double horizon = 60.0;       // simulated minutes
  double wall_budget = 600.0;  // seconds of real time
  std::uint64_t seed = 0;
  /// When set, every TAMP phase lasts tamp_duration() and every human
  /// segment human_duration(), regardless of tick counts.
  bool fixed_durations = false;
  gate::GateOptions gate;
};

/// Runs n_robot gated sessions on threads. Each session enqueues itself at a
/// human action; the single operator serves the queue in FIFO order. Session
/// errors are counted as failures and the session restarts with a new seed.
FleetStats run_fleet(const FleetConfig& config, const Task& task, gate::Operator& op,
                     const learn::ConstraintRegistry& constraints, const RunOptions& options = {});

}  // namespace hitl::fleet
