#pragma once

#include <map>
#include <string>

#include "hitl/constraints.hpp"
#include "hitl/gate.hpp"
#include "hitl/task.hpp"

namespace hitl::test {

inline std::string task_path(const std::string& name) {
  return std::string(HITL_TEST_DATA_DIR) + "/tasks/" + name + ".tamp";
}

inline const Task& shipped(const std::string& name) {
  static std::map<std::string, Task> cache;
  auto it = cache.find(name);
  if (it == cache.end()) it = cache.emplace(name, Task::load(task_path(name))).first;
  return it->second;
}

/// Constraints learned from three full-teleoperation demos, cached per task.
inline const learn::ConstraintRegistry& bootstrapped(const std::string& name) {
  static std::map<std::string, learn::ConstraintRegistry> cache;
  auto it = cache.find(name);
  if (it == cache.end()) {
    const Task& task = shipped(name);
    std::vector<Episode> demos;
    for (std::uint64_t s = 0; s < 3; ++s) demos.push_back(gate::bootstrap_demo(task, 1000 + s));
    it = cache.emplace(name, learn::learn_all(task, demos, task.delta)).first;
  }
  return it->second;
}

inline const std::vector<std::string>& shipped_names() {
  static const std::vector<std::string> names{"tool-hang-2d", "stack-three-2d", "coffee-2d"};
  return names;
}

}  // namespace hitl::test
