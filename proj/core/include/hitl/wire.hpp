#pragma once

// JSON text frames exchanged with the teleoperation client.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "hitl/world.hpp"

namespace hitl::wire {

struct ObjectPose {
  std::string name;
  world::Pose2 pose;
  bool operator==(const ObjectPose&) const = default;
};

// server -> client
struct Snapshot {
  int session = 0;
  std::int64_t t = 0;
  std::vector<ObjectPose> objects;
  world::JointVector config{};
  bool gripper = false;  // closed
  std::string mode = "tamp";  // tamp | waiting | human
  bool operator==(const Snapshot&) const = default;
};

struct Queue {
  std::vector<int> waiting;
  std::optional<int> active;
  bool operator==(const Queue&) const = default;
};

struct Prompt {
  int session = 0;
  std::string schema;
  std::string child;
  std::string parent;
  bool operator==(const Prompt&) const = default;
};

struct Done {
  int session = 0;
  std::string outcome;
  bool operator==(const Done&) const = default;
};

struct Error {
  std::string code;
  bool operator==(const Error&) const = default;
};

// client -> server
struct Act {
  int session = 0;
  double dx = 0.0, dy = 0.0, dtheta = 0.0;
  bool grip = false;
  bool operator==(const Act&) const = default;
};

struct Hello {
  std::string role = "operator";  // operator | observer
  bool operator==(const Hello&) const = default;
};

using Frame = std::variant<Snapshot, Queue, Prompt, Done, Error, Act, Hello>;

/// Frame rejected by the schema; `code()` is the error code sent back.
class ProtocolError : public std::invalid_argument {
 public:
  ProtocolError(std::string code, const std::string& message)
      : std::invalid_argument(message), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

std::string encode(const Frame& frame);

/// Parses and validates one frame. Missing, extra or mistyped fields and
/// unknown types throw ProtocolError.
Frame decode(std::string_view text);

std::string_view type_name(const Frame& frame);

}  // namespace hitl::wire
