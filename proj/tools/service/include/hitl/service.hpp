#pragma once

// WebSocket teleoperation service: runs gated sessions in real time and lets
// one remote operator serve their handoff queue. Other clients observe.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "hitl/constraints.hpp"
#include "hitl/fleet.hpp"
#include "hitl/gate.hpp"
#include "hitl/task.hpp"
#include "hitl/wire.hpp"

namespace hitl::hub {

struct ServiceOptions {
  std::string address = "127.0.0.1";
  unsigned short port = 0;  // 0 picks a free port
  int n_robot = 1;
  double pace = 1.0;  // TAMP ticks last pace * tick_seconds of real time; 0 runs unpaced
  int max_episodes = 0;  // stop after this many finished episodes; 0 runs until stopped
  std::uint64_t seed = 0;
  std::size_t mailbox = 8;  // pending act frames per session; the oldest is dropped
  double heartbeat = 0.05;  // seconds between queue frames
  gate::GateOptions gate;
};

class Service {
 public:
  Service(Task task, learn::ConstraintRegistry constraints, ServiceOptions options);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds and starts the network and session threads.
  void start();
  unsigned short port() const;
  /// Blocks until max_episodes have finished or stop() is called.
  void wait();
  void stop();

  std::vector<Episode> episodes() const;
  std::vector<fleet::FleetEvent> events() const;

  static std::uint64_t episode_seed(std::uint64_t base, int session, std::uint64_t index);

 private:
  void shutdown();

  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Blocking client for scripts and tests.
class WireClient {
 public:
  WireClient(const std::string& host, unsigned short port);
  ~WireClient();
  WireClient(const WireClient&) = delete;
  WireClient& operator=(const WireClient&) = delete;

  void send(const wire::Frame& frame);
  void send_text(const std::string& text);
  wire::Frame receive();
  void close();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace hitl::hub
