#include "hitl/dataset.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace hitl::data {

using nlohmann::json;

DatasetError::DatasetError(std::size_t line, const std::string& message)
    : std::runtime_error(line == 0 ? message : "line " + std::to_string(line) + ": " + message), line_(line) {}

namespace {

json pose_json(const world::Pose2& p) { return json::array({p.x, p.y, p.theta}); }
json joints_json(const world::JointVector& q) { return json::array({q[0], q[1], q[2]}); }

const json& field(const json& j, const char* key) {
  if (!j.is_object()) throw std::invalid_argument("expected an object");
  const auto it = j.find(key);
  if (it == j.end()) throw std::invalid_argument(std::string("missing field '") + key + "'");
  return *it;
}

double number(const json& j, const char* what) {
  if (!j.is_number()) throw std::invalid_argument(std::string(what) + " must be a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw std::invalid_argument(std::string(what) + " must be finite");
  return v;
}

template <std::size_t N>
std::array<double, N> numbers(const json& j, const char* what) {
  if (!j.is_array() || j.size() != N) {
    throw std::invalid_argument(std::string(what) + " must be an array of " + std::to_string(N) + " numbers");
  }
  std::array<double, N> out{};
  for (std::size_t i = 0; i < N; ++i) out[i] = number(j[i], what);
  return out;
}

std::string text(const json& j, const char* what) {
  if (!j.is_string()) throw std::invalid_argument(std::string(what) + " must be a string");
  return j.get<std::string>();
}

bool flag(const json& j, const char* what) {
  if (j.is_boolean()) return j.get<bool>();
  if (j.is_number_integer() && (j.get<int>() == 0 || j.get<int>() == 1)) return j.get<int>() == 1;
  throw std::invalid_argument(std::string(what) + " must be 0 or 1");
}

std::int64_t integer(const json& j, const char* what) {
  if (!j.is_number_integer()) throw std::invalid_argument(std::string(what) + " must be an integer");
  return j.get<std::int64_t>();
}

}  // namespace

std::string header_line() {
  json h;
  h["format"] = "hitl-episodes";
  h["version"] = kDatasetVersion;
  return h.dump();
}

std::string to_json_line(const Episode& ep) {
  json steps = json::array();
  for (const auto& s : ep.steps) {
    json objects = json::object();
    for (const auto& [name, pose] : s.obs.objects) objects[name] = pose_json(pose);
    json obs;
    obs["t"] = s.obs.t;
    obs["objects"] = std::move(objects);
    obs["config"] = joints_json(s.obs.config);
    obs["gripper"] = s.obs.gripper_closed ? 1 : 0;
    obs["held"] = s.obs.held ? json(*s.obs.held) : json(nullptr);
    json step;
    step["t"] = s.t;
    step["obs"] = std::move(obs);
    step["action"] = json::array({s.action.dx, s.action.dy, s.action.dtheta, s.action.grip ? 1 : 0});
    step["label"] = std::string(to_string(s.label));
    step["schema"] = s.schema_index;
    if (s.joint_target) step["joint_target"] = joints_json(*s.joint_target);
    steps.push_back(std::move(step));
  }
  json out;
  out["task"] = ep.task;
  out["seed"] = ep.seed;
  out["outcome"] = {{"success", ep.outcome.success},
                    {"reason", std::string(to_string(ep.outcome.reason))},
                    {"handoffs", ep.outcome.handoff_count},
                    {"detail", ep.outcome.detail}};
  out["steps"] = std::move(steps);
  return out.dump();
}

Episode from_json_line(std::string_view line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("malformed JSON: ") + e.what());
  }
  Episode ep;
  ep.task = text(field(j, "task"), "task");
  const auto& seed = field(j, "seed");
  if (!seed.is_number_unsigned() && !(seed.is_number_integer() && seed.get<std::int64_t>() >= 0)) {
    throw std::invalid_argument("seed must be a non-negative integer");
  }
  ep.seed = seed.get<std::uint64_t>();
  const auto& outcome = field(j, "outcome");
  const auto& success = field(outcome, "success");
  if (!success.is_boolean()) throw std::invalid_argument("outcome.success must be a boolean");
  ep.outcome.success = success.get<bool>();
  ep.outcome.reason = parse_reason(text(field(outcome, "reason"), "outcome.reason"));
  ep.outcome.handoff_count = static_cast<int>(integer(field(outcome, "handoffs"), "outcome.handoffs"));
  ep.outcome.detail = text(field(outcome, "detail"), "outcome.detail");

  const auto& steps = field(j, "steps");
  if (!steps.is_array()) throw std::invalid_argument("steps must be an array");
  for (const auto& sj : steps) {
    EpisodeStep s;
    s.t = integer(field(sj, "t"), "t");
    const auto& oj = field(sj, "obs");
    s.obs.t = integer(field(oj, "t"), "obs.t");
    const auto& objects = field(oj, "objects");
    if (!objects.is_object()) throw std::invalid_argument("obs.objects must be an object");
    for (const auto& [name, pose] : objects.items()) {
      const auto p = numbers<3>(pose, "object pose");
      s.obs.objects[name] = {p[0], p[1], p[2]};
    }
    s.obs.config = numbers<3>(field(oj, "config"), "obs.config");
    s.obs.gripper_closed = flag(field(oj, "gripper"), "obs.gripper");
    const auto& held = field(oj, "held");
    if (!held.is_null()) s.obs.held = text(held, "obs.held");
    const auto& action = field(sj, "action");
    if (!action.is_array() || action.size() != 4) throw std::invalid_argument("action must be [dx, dy, dtheta, grip]");
    s.action = {number(action[0], "action dx"), number(action[1], "action dy"), number(action[2], "action dtheta"),
                flag(action[3], "action grip")};
    s.label = parse_controller(text(field(sj, "label"), "label"));
    s.schema_index = static_cast<int>(integer(field(sj, "schema"), "schema"));
    if (const auto it = sj.find("joint_target"); it != sj.end()) s.joint_target = numbers<3>(*it, "joint_target");
    ep.steps.push_back(std::move(s));
  }
  return ep;
}

std::string to_text(const std::vector<Episode>& episodes) {
  std::string out = header_line() + "\n";
  for (const auto& ep : episodes) out += to_json_line(ep) + "\n";
  return out;
}

std::vector<Episode> parse(std::string_view input) {
  std::vector<Episode> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool header = false;
  while (pos < input.size()) {
    const std::size_t end = std::min(input.find('\n', pos), input.size());
    const std::string_view line = input.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!header) {
      json h;
      try {
        h = json::parse(line);
      } catch (const json::parse_error&) {
        throw DatasetError(1, "missing dataset header");
      }
      if (!h.is_object() || h.value("format", "") != "hitl-episodes") throw DatasetError(1, "missing dataset header");
      const auto v = h.find("version");
      if (v == h.end() || !v->is_number_integer()) throw DatasetError(1, "header has no version");
      if (v->get<int>() != kDatasetVersion) {
        throw DatasetError(1, "unsupported dataset version " + std::to_string(v->get<int>()) + " (expected " +
                                  std::to_string(kDatasetVersion) + ")");
      }
      header = true;
      continue;
    }
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      out.push_back(from_json_line(line));
    } catch (const std::exception& e) {
      throw DatasetError(line_no, e.what());
    }
  }
  if (!header) throw DatasetError(0, "missing dataset header");
  return out;
}

void save(const std::filesystem::path& path, const std::vector<Episode>& episodes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_text(episodes);
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::vector<Episode> load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

double mean_human_segment(const Episode& episode) {
  std::size_t total = 0, count = 0;
  for (const auto& s : episode.segments()) {
    if (s.label != Controller::Human) continue;
    total += s.length();
    ++count;
  }
  return count == 0 ? 0.0 : static_cast<double>(total) / static_cast<double>(count);
}

std::map<std::string, TaskStats> stats(const std::vector<Episode>& episodes) {
  if (episodes.empty()) throw std::invalid_argument("dataset is empty");
  std::map<std::string, TaskStats> out;
  std::map<std::string, std::size_t> with_human;
  for (const auto& ep : episodes) {
    auto& st = out[ep.task];
    st.task = ep.task;
    ++st.episodes;
    st.successes += ep.outcome.success ? 1 : 0;
    st.mean_trajectory += static_cast<double>(ep.steps.size());
    std::size_t segments = 0;
    for (const auto& s : ep.segments()) segments += s.label == Controller::Human ? 1 : 0;
    st.handoffs += segments;
    if (segments > 0) {
      st.mean_human_segment += mean_human_segment(ep);
      ++with_human[ep.task];
    }
  }
  for (auto& [task, st] : out) {
    const auto n = static_cast<double>(st.episodes);
    st.mean_trajectory /= n;
    st.mean_handoffs = static_cast<double>(st.handoffs) / n;
    if (with_human[task] > 0) st.mean_human_segment /= static_cast<double>(with_human[task]);
  }
  return out;
}

}  // namespace hitl::data
