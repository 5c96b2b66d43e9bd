#pragma once

// Episode datasets as JSON lines: a version header, then one episode per line.

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hitl/episode.hpp"

namespace hitl::data {

inline constexpr int kDatasetVersion = 1;

/// Load failure; `line()` is 1-based, 0 when not tied to a line.
class DatasetError : public std::runtime_error {
 public:
  DatasetError(std::size_t line, const std::string& message);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

std::string header_line();
std::string to_json_line(const Episode& episode);
/// Throws std::invalid_argument on schema violations.
Episode from_json_line(std::string_view line);

std::string to_text(const std::vector<Episode>& episodes);
std::vector<Episode> parse(std::string_view text);

void save(const std::filesystem::path& path, const std::vector<Episode>& episodes);
std::vector<Episode> load(const std::filesystem::path& path);

struct TaskStats {
  std::string task;
  std::size_t episodes = 0;
  std::size_t successes = 0;
  double mean_human_segment = 0.0;  // per-episode segment means, averaged over episodes with one
  double mean_trajectory = 0.0;     // steps per episode
  double mean_handoffs = 0.0;       // human segments per episode
  std::size_t handoffs = 0;
};

/// Human-segment mean of one episode, or 0 without human segments.
double mean_human_segment(const Episode& episode);

/// Per task, in name order. Throws std::invalid_argument on an empty dataset.
std::map<std::string, TaskStats> stats(const std::vector<Episode>& episodes);

}  // namespace hitl::data
