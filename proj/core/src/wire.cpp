#include "hitl/wire.hpp"

#include <cmath>
#include <set>

#include "json.hpp"

namespace hitl::wire {

using nlohmann::json;

namespace {

template <class... Fs>
struct Overloaded : Fs... {
  using Fs::operator()...;
};
template <class... Fs>
Overloaded(Fs...) -> Overloaded<Fs...>;

[[noreturn]] void invalid(const std::string& message) { throw ProtocolError("invalid-frame", message); }

void exact_fields(const json& j, std::initializer_list<const char*> keys) {
  std::set<std::string> allowed{"type"};
  for (const char* k : keys) {
    allowed.insert(k);
    if (!j.contains(k)) invalid(std::string("missing field '") + k + "'");
  }
  for (const auto& [k, v] : j.items()) {
    if (!allowed.contains(k)) invalid("unexpected field '" + k + "'");
  }
}

double number(const json& j, const char* what) {
  if (!j.is_number()) invalid(std::string(what) + " must be a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) invalid(std::string(what) + " must be finite");
  return v;
}

int integer(const json& j, const char* what) {
  if (!j.is_number_integer()) invalid(std::string(what) + " must be an integer");
  return j.get<int>();
}

std::string text(const json& j, const char* what) {
  if (!j.is_string()) invalid(std::string(what) + " must be a string");
  return j.get<std::string>();
}

bool bit(const json& j, const char* what) {
  if (!j.is_number_integer() || (j.get<int>() != 0 && j.get<int>() != 1)) invalid(std::string(what) + " must be 0 or 1");
  return j.get<int>() == 1;
}

}  // namespace

std::string_view type_name(const Frame& frame) {
  static constexpr std::string_view names[] = {"snapshot", "queue", "prompt", "done", "error", "act", "hello"};
  return names[frame.index()];
}

std::string encode(const Frame& frame) {
  json j;
  j["type"] = std::string(type_name(frame));
  std::visit(Overloaded{
                 [&](const Snapshot& s) {
                   j["session"] = s.session;
                   j["t"] = s.t;
                   json objects = json::array();
                   for (const auto& o : s.objects) {
                     objects.push_back({{"name", o.name}, {"x", o.pose.x}, {"y", o.pose.y}, {"theta", o.pose.theta}});
                   }
                   j["objects"] = std::move(objects);
                   j["config"] = json::array({s.config[0], s.config[1], s.config[2]});
                   j["gripper"] = s.gripper ? 1 : 0;
                   j["mode"] = s.mode;
                 },
                 [&](const Queue& q) {
                   j["waiting"] = q.waiting;
                   j["active"] = q.active ? json(*q.active) : json(nullptr);
                 },
                 [&](const Prompt& p) {
                   j["session"] = p.session;
                   j["schema"] = p.schema;
                   j["child"] = p.child;
                   j["parent"] = p.parent;
                 },
                 [&](const Done& d) {
                   j["session"] = d.session;
                   j["outcome"] = d.outcome;
                 },
                 [&](const Error& e) { j["code"] = e.code; },
                 [&](const Act& a) {
                   j["session"] = a.session;
                   j["dx"] = a.dx;
                   j["dy"] = a.dy;
                   j["dtheta"] = a.dtheta;
                   j["grip"] = a.grip ? 1 : 0;
                 },
                 [&](const Hello& h) { j["role"] = h.role; },
             },
             frame);
  return j.dump();
}

Frame decode(std::string_view input) {
  json j;
  try {
    j = json::parse(input);
  } catch (const json::parse_error&) {
    throw ProtocolError("malformed", "frame is not valid JSON");
  }
  if (!j.is_object()) throw ProtocolError("malformed", "frame must be a JSON object");
  const auto type_it = j.find("type");
  if (type_it == j.end() || !type_it->is_string()) throw ProtocolError("malformed", "frame has no type");
  const std::string type = type_it->get<std::string>();

  if (type == "snapshot") {
    exact_fields(j, {"session", "t", "objects", "config", "gripper", "mode"});
    Snapshot s;
    s.session = integer(j["session"], "session");
    if (!j["t"].is_number_integer()) invalid("t must be an integer");
    s.t = j["t"].get<std::int64_t>();
    if (!j["objects"].is_array()) invalid("objects must be an array");
    for (const auto& o : j["objects"]) {
      exact_fields(o, {"name", "x", "y", "theta"});
      s.objects.push_back({text(o["name"], "name"), {number(o["x"], "x"), number(o["y"], "y"), number(o["theta"], "theta")}});
    }
    const auto& c = j["config"];
    if (!c.is_array() || c.size() != 3) invalid("config must hold 3 joint angles");
    for (std::size_t i = 0; i < 3; ++i) s.config[i] = number(c[i], "config");
    s.gripper = bit(j["gripper"], "gripper");
    s.mode = text(j["mode"], "mode");
    if (s.mode != "tamp" && s.mode != "waiting" && s.mode != "human") invalid("unknown mode '" + s.mode + "'");
    return s;
  }
  if (type == "queue") {
    exact_fields(j, {"waiting", "active"});
    Queue q;
    if (!j["waiting"].is_array()) invalid("waiting must be an array");
    for (const auto& w : j["waiting"]) q.waiting.push_back(integer(w, "waiting"));
    if (!j["active"].is_null()) q.active = integer(j["active"], "active");
    return q;
  }
  if (type == "prompt") {
    exact_fields(j, {"session", "schema", "child", "parent"});
    return Prompt{integer(j["session"], "session"), text(j["schema"], "schema"), text(j["child"], "child"),
                  text(j["parent"], "parent")};
  }
  if (type == "done") {
    exact_fields(j, {"session", "outcome"});
    return Done{integer(j["session"], "session"), text(j["outcome"], "outcome")};
  }
  if (type == "error") {
    exact_fields(j, {"code"});
    return Error{text(j["code"], "code")};
  }
  if (type == "act") {
    exact_fields(j, {"session", "dx", "dy", "dtheta", "grip"});
    return Act{integer(j["session"], "session"), number(j["dx"], "dx"), number(j["dy"], "dy"),
               number(j["dtheta"], "dtheta"), bit(j["grip"], "grip")};
  }
  if (type == "hello") {
    exact_fields(j, {"role"});
    Hello h{text(j["role"], "role")};
    if (h.role != "operator" && h.role != "observer") invalid("unknown role '" + h.role + "'");
    return h;
  }
  throw ProtocolError("unknown-type", "unknown frame type '" + type + "'");
}

}  // namespace hitl::wire
