#include "hitl/constraints.hpp"

#include <fstream>
#include <random>
#include <sstream>

#include "hitl/sexpr.hpp"
#include "hitl/task.hpp"

namespace hitl::learn {

using world::Pose2;

long find_precontact(const world::Scene& scene, const Episode& episode, const std::string& child,
                     const std::string& parent, double delta, long* attach_index) {
  if (scene.object(child) == nullptr || scene.object(parent) == nullptr) {
    throw std::invalid_argument("unknown object in " + child + "/" + parent);
  }
  auto shared = std::shared_ptr<const world::Scene>(&scene, [](const world::Scene*) {});
  std::vector<world::WorldState> states;
  states.reserve(episode.steps.size());
  long first = -1;
  for (std::size_t i = 0; i < episode.steps.size(); ++i) {
    states.push_back(to_world(shared, episode.steps[i].obs));
    if (world::good_attach(states.back(), child, parent)) {
      first = static_cast<long>(i);
      break;
    }
  }
  if (attach_index != nullptr) *attach_index = first;
  if (first < 0) return -1;
  for (long j = first - 1; j >= 0; --j) {
    const auto& s = states[static_cast<std::size_t>(j)];
    if (s.held && s.held->object == child && world::object_distance(s, child, parent) >= delta) return j;
  }
  return -1;
}

PreAttachSet extract_preattach(const world::Scene& scene, const std::vector<Episode>& episodes,
                               const std::string& child, const std::string& parent, double delta,
                               ExtractionReport* report) {
  PreAttachSet out{child, parent, {}};
  ExtractionReport local;
  auto shared = std::shared_ptr<const world::Scene>(&scene, [](const world::Scene*) {});
  for (const auto& ep : episodes) {
    long attach = -1;
    const long j = find_precontact(scene, ep, child, parent, delta, &attach);
    if (attach < 0) {
      ++local.no_attach;
    } else if (j < 0) {
      ++local.no_match;
    } else {
      const auto s = to_world(shared, ep.steps[static_cast<std::size_t>(j)].obs);
      out.poses.push_back(world::relative(s.object_pose(parent), s.object_pose(child)));
      ++local.used;
    }
  }
  if (report != nullptr) *report = local;
  if (out.poses.empty()) {
    throw EmptySetError("no PreAttach pose for " + child + " on " + parent + " (" + std::to_string(local.no_attach) +
                        " episodes without attachment, " + std::to_string(local.no_match) + " without a match)");
  }
  return out;
}

GraspSet extract_grasps(const world::Scene& scene, const std::vector<Episode>& episodes, const std::string& object,
                        double delta, ExtractionReport* report) {
  GraspSet out{object, {}};
  ExtractionReport local;
  auto shared = std::shared_ptr<const world::Scene>(&scene, [](const world::Scene*) {});
  for (const auto& ep : episodes) {
    bool attached = false;
    long found = -1;
    for (const auto& target : scene.attach_targets) {
      if (target.child != object) continue;
      long attach = -1;
      const long j = find_precontact(scene, ep, object, target.parent, delta, &attach);
      attached = attached || attach >= 0;
      if (j >= 0) {
        found = j;
        break;
      }
    }
    if (!attached) {
      ++local.no_attach;
    } else if (found < 0) {
      ++local.no_match;
    } else {
      const auto s = to_world(shared, ep.steps[static_cast<std::size_t>(found)].obs);
      out.grasps.push_back(s.held->grasp);
      ++local.used;
    }
  }
  if (report != nullptr) *report = local;
  if (out.grasps.empty()) throw EmptySetError("no AttachGrasp for " + object);
  return out;
}

namespace {

template <class T>
const T& uniform_pick(const std::vector<T>& items, std::uint64_t seed, const char* what) {
  if (items.empty()) throw EmptySetError(std::string("cannot sample from an empty ") + what + " set");
  std::mt19937_64 rng(seed);
  return items[std::uniform_int_distribution<std::size_t>(0, items.size() - 1)(rng)];
}

sexpr::Node pose_node(const Pose2& p) {
  return sexpr::list({sexpr::atom(sexpr::format_number(p.x)), sexpr::atom(sexpr::format_number(p.y)),
                      sexpr::atom(sexpr::format_number(p.theta))});
}

Pose2 parse_pose(const sexpr::Node& n) {
  if (!n.is_list || n.items.size() != 3) n.fail("pose must be (x y theta)");
  return {n.items[0].as_number(), n.items[1].as_number(), n.items[2].as_number()};
}

}  // namespace

Pose2 sample_preattach(const PreAttachSet& set, std::uint64_t seed) { return uniform_pick(set.poses, seed, "PreAttach"); }

Pose2 sample_grasp(const GraspSet& set, std::uint64_t seed) { return uniform_pick(set.grasps, seed, "AttachGrasp"); }

const PreAttachSet* ConstraintRegistry::find_preattach(const std::string& child, const std::string& parent) const {
  for (const auto& s : preattach) {
    if (s.child == child && s.parent == parent) return &s;
  }
  return nullptr;
}

const GraspSet* ConstraintRegistry::find_grasps(const std::string& object) const {
  for (const auto& s : grasps) {
    if (s.object == object) return &s;
  }
  return nullptr;
}

std::string ConstraintRegistry::to_text() const {
  std::ostringstream out;
  out << "(constraints " << task << "\n  (delta " << sexpr::format_number(delta) << ")";
  for (const auto& s : preattach) {
    out << "\n  (preattach " << s.child << " " << s.parent;
    for (const auto& p : s.poses) out << "\n    " << sexpr::to_string(pose_node(p));
    out << ")";
  }
  for (const auto& s : grasps) {
    out << "\n  (grasps " << s.object;
    for (const auto& g : s.grasps) out << "\n    " << sexpr::to_string(pose_node(g));
    out << ")";
  }
  out << ")\n";
  return out.str();
}

ConstraintRegistry ConstraintRegistry::parse(std::string_view text) {
  const auto forms = sexpr::parse_all(text);
  if (forms.size() != 1 || !forms[0].has_head("constraints")) throw ParseError("expected one (constraints ...) form");
  const auto& form = forms[0];
  if (form.items.size() < 2) form.fail("constraints form needs a task name");
  ConstraintRegistry reg;
  reg.task = form.items[1].as_symbol();
  for (std::size_t i = 2; i < form.items.size(); ++i) {
    const auto& part = form.items[i];
    if (part.has_head("delta")) {
      if (part.items.size() != 2) part.fail("expected (delta value)");
      reg.delta = part.items[1].as_number();
    } else if (part.has_head("preattach")) {
      if (part.items.size() < 3) part.fail("expected (preattach child parent poses...)");
      PreAttachSet s{part.items[1].as_symbol(), part.items[2].as_symbol(), {}};
      for (std::size_t k = 3; k < part.items.size(); ++k) s.poses.push_back(parse_pose(part.items[k]));
      reg.preattach.push_back(std::move(s));
    } else if (part.has_head("grasps")) {
      if (part.items.size() < 2) part.fail("expected (grasps object poses...)");
      GraspSet s{part.items[1].as_symbol(), {}};
      for (std::size_t k = 2; k < part.items.size(); ++k) s.grasps.push_back(parse_pose(part.items[k]));
      reg.grasps.push_back(std::move(s));
    } else {
      part.fail("unknown constraints entry");
    }
  }
  return reg;
}

void ConstraintRegistry::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_text();
}

ConstraintRegistry ConstraintRegistry::load(const std::filesystem::path& path) { return parse(read_file(path)); }

ConstraintRegistry learn_all(const Task& task, const std::vector<Episode>& episodes, double delta,
                             std::vector<std::string>* missing) {
  ConstraintRegistry reg;
  reg.task = task.name;
  reg.delta = delta;
  const auto& scene = *task.scene;
  for (const auto& target : scene.attach_targets) {
    try {
      reg.preattach.push_back(extract_preattach(scene, episodes, target.child, target.parent, delta));
    } catch (const EmptySetError& e) {
      if (missing == nullptr) throw;
      missing->push_back(e.what());
    }
    if (reg.find_grasps(target.child) != nullptr) continue;
    try {
      reg.grasps.push_back(extract_grasps(scene, episodes, target.child, delta));
    } catch (const EmptySetError& e) {
      if (missing == nullptr) throw;
      missing->push_back(e.what());
    }
  }
  return reg;
}

}  // namespace hitl::learn
