#include "hitl/task.hpp"

#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>

#ifndef HITL_DEFAULT_DATA_DIR
#define HITL_DEFAULT_DATA_DIR "data"
#endif

namespace hitl {

using world::Pose2;

namespace {

std::vector<double> numbers(const sexpr::Node& form, std::size_t expected) {
  if (form.items.size() != expected + 1) {
    form.fail("'" + form.head() + "' expects " + std::to_string(expected) + " numbers");
  }
  std::vector<double> out;
  for (std::size_t i = 1; i < form.items.size(); ++i) out.push_back(form.items[i].as_number());
  return out;
}

world::Polygon parse_shape(const sexpr::Node& node, Pose2 placement = {}) {
  if (node.has_head("box")) {
    const auto v = numbers(node, 2);
    return world::Polygon::box(v[0], v[1]).transformed(placement);
  }
  if (node.has_head("poly")) {
    world::Polygon poly;
    for (std::size_t i = 1; i < node.items.size(); ++i) {
      const auto& p = node.items[i];
      if (!p.is_list || p.items.size() != 2) p.fail("polygon vertex must be (x y)");
      poly.vertices.push_back(placement.apply({p.items[0].as_number(), p.items[1].as_number()}));
    }
    if (poly.vertices.size() < 3) node.fail("polygon needs at least 3 vertices");
    return poly;
  }
  node.fail("expected (box hx hy) or (poly (x y) ...)");
}

Region parse_region(const sexpr::Node& node) {
  const auto v = numbers(node, 6);
  Region r{v[0], v[1], v[2], v[3], v[4], v[5]};
  if (r.x_min > r.x_max || r.y_min > r.y_max || r.theta_min > r.theta_max) node.fail("empty region");
  return r;
}

Pose2 parse_pose(const sexpr::Node& node) {
  const auto v = numbers(node, 3);
  return {v[0], v[1], world::wrap_angle(v[2])};
}

void parse_world(const sexpr::Node& form, Task& task, world::Scene& scene) {
  for (std::size_t i = 2; i < form.items.size(); ++i) {
    const auto& part = form.items[i];
    const auto& head = part.head();
    if (head == "arm") {
      for (std::size_t k = 1; k < part.items.size(); ++k) {
        const auto& a = part.items[k];
        if (a.has_head("links")) {
          const auto v = numbers(a, 3);
          scene.arm.links = {v[0], v[1], v[2]};
        } else if (a.has_head("home")) {
          const auto v = numbers(a, 3);
          task.home = {v[0], v[1], v[2]};
        } else {
          a.fail("unknown arm entry");
        }
      }
    } else if (head == "limits") {
      for (std::size_t k = 1; k < part.items.size(); ++k) {
        const auto& l = part.items[k];
        const double v = numbers(l, 1)[0];
        if (l.has_head("max-step")) scene.limits.max_step = v;
        else if (l.has_head("max-rot")) scene.limits.max_rot = v;
        else if (l.has_head("grasp-tolerance")) scene.limits.grasp_tolerance = v;
        else if (l.has_head("joint-step")) scene.limits.joint_step = v;
        else if (l.has_head("max-joint-delta")) scene.limits.max_joint_delta = v;
        else l.fail("unknown limit '" + l.head() + "'");
      }
    } else if (head == "obstacle") {
      // (obstacle (at x y theta) (box hx hy)) or (obstacle (poly ...))
      Pose2 at;
      const sexpr::Node* shape = nullptr;
      for (std::size_t k = 1; k < part.items.size(); ++k) {
        if (part.items[k].has_head("at")) at = parse_pose(part.items[k]);
        else shape = &part.items[k];
      }
      if (shape == nullptr) part.fail("obstacle needs a shape");
      scene.obstacles.push_back(parse_shape(*shape, at));
    } else if (head == "object") {
      if (part.items.size() < 3) part.fail("object needs a name and a shape");
      world::ObjectSpec spec;
      Placement placement;
      spec.name = placement.object = part.items[1].as_symbol();
      bool have_shape = false, have_place = false;
      for (std::size_t k = 2; k < part.items.size(); ++k) {
        const auto& e = part.items[k];
        if (e.has_head("box") || e.has_head("poly")) {
          spec.shape = parse_shape(e);
          have_shape = true;
        } else if (e.has_head("handle")) {
          const auto v = numbers(e, 2);
          spec.handle = {v[0], v[1]};
        } else if (e.has_head("fixed")) {
          spec.fixed = true;
        } else if (e.has_head("at")) {
          placement.fixed_pose = parse_pose(e);
          have_place = true;
        } else if (e.has_head("region")) {
          placement.region = parse_region(e);
          have_place = true;
        } else if (e.has_head("broad-region")) {
          placement.broad_region = parse_region(e);
        } else if (e.has_head("grasp")) {
          task.declared_grasps.emplace_back(spec.name, parse_pose(e));
        } else {
          e.fail("unknown object entry '" + e.head() + "'");
        }
      }
      if (!have_shape) part.fail("object '" + spec.name + "' has no shape");
      if (!have_place) part.fail("object '" + spec.name + "' needs (at ...) or (region ...)");
      if (scene.object(spec.name) != nullptr) part.fail("duplicate object '" + spec.name + "'");
      scene.objects.push_back(std::move(spec));
      task.placements.push_back(std::move(placement));
    } else if (head == "attach") {
      if (part.items.size() < 4) part.fail("expected (attach child parent (rel x y theta) [(tol p a)])");
      world::AttachTarget target;
      target.child = part.items[1].as_symbol();
      target.parent = part.items[2].as_symbol();
      for (std::size_t k = 3; k < part.items.size(); ++k) {
        const auto& e = part.items[k];
        if (e.has_head("rel")) {
          target.relative = parse_pose(e);
        } else if (e.has_head("tol")) {
          const auto v = numbers(e, 2);
          target.position_tolerance = v[0];
          target.angle_tolerance = v[1];
        } else {
          e.fail("unknown attach entry");
        }
      }
      scene.attach_targets.push_back(std::move(target));
    } else if (head == "delta") {
      task.delta = numbers(part, 1)[0];
    } else {
      part.fail("unknown world section '" + head + "'");
    }
  }
  for (const auto& t : scene.attach_targets) {
    if (scene.object(t.child) == nullptr || scene.object(t.parent) == nullptr) {
      form.fail("attach target references unknown object");
    }
  }
}

}  // namespace

Task Task::parse(std::string_view text) {
  const auto forms = sexpr::parse_all(text);
  const sexpr::Node* domain_form = nullptr;
  const sexpr::Node* problem_form = nullptr;
  const sexpr::Node* world_form = nullptr;
  for (const auto& f : forms) {
    if (f.has_head("domain")) domain_form = &f;
    else if (f.has_head("problem")) problem_form = &f;
    else if (f.has_head("world")) world_form = &f;
    else f.fail("unexpected top-level form");
  }
  if (domain_form == nullptr) throw ParseError("no domain form");
  if (problem_form == nullptr) throw ParseError("no problem form");
  if (world_form == nullptr) throw ParseError("no world form");

  Task task;
  task.domain = lang::parse_domain(*domain_form);
  task.problem = lang::parse_problem(*problem_form, task.domain);
  task.name = task.problem.name;
  auto scene = std::make_shared<world::Scene>();
  parse_world(*world_form, task, *scene);
  for (const auto& o : task.problem.objects) {
    if (scene->object(o.name) == nullptr) problem_form->fail("object '" + o.name + "' has no geometry");
  }
  for (const auto& o : scene->objects) {
    if (task.problem.object(o.name) == nullptr) world_form->fail("object '" + o.name + "' missing from problem");
  }
  task.scene = std::move(scene);
  return task;
}

Task Task::load(const std::filesystem::path& path) { return parse(read_file(path)); }

world::WorldState Task::sample_world(std::uint64_t seed, bool broad) const {
  std::mt19937_64 rng(seed);
  world::WorldState state;
  state.scene = scene;
  state.config.joints = home;
  state.config.gripper_open = true;
  auto uniform = [&rng](double lo, double hi) {
    return lo == hi ? lo : std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  for (const auto& p : placements) {
    if (p.fixed_pose) {
      state.poses[p.object] = *p.fixed_pose;
      continue;
    }
    const Region& r = broad && p.broad_region ? *p.broad_region : p.region;
    const world::ObjectSpec* spec = scene->object(p.object);
    bool placed = false;
    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
      const Pose2 pose{uniform(r.x_min, r.x_max), uniform(r.y_min, r.y_max),
                       world::wrap_angle(uniform(r.theta_min, r.theta_max))};
      const auto shape = spec->shape.transformed(pose);
      bool clear = true;
      for (const auto& o : scene->obstacles) clear = clear && !world::polygons_overlap(shape, o);
      for (const auto& [other, other_pose] : state.poses) {
        clear = clear && !world::polygons_overlap(shape, scene->object(other)->shape.transformed(other_pose));
      }
      if (clear) {
        state.poses[p.object] = pose;
        placed = true;
      }
    }
    if (!placed) throw std::runtime_error("could not place object '" + p.object + "'");
  }
  return state;
}

std::vector<world::AttachTarget> Task::goal_attachments() const {
  std::vector<world::AttachTarget> out;
  for (const auto& l : problem.goal) {
    if (l.predicate != "Attached" || l.negated) continue;
    if (const auto* t = scene->attach_target(l.args[0], l.args[1])) out.push_back(*t);
  }
  return out;
}

std::filesystem::path data_directory() {
  if (const char* env = std::getenv("HITL_DATA_DIR")) return env;
  return HITL_DEFAULT_DATA_DIR;
}

std::filesystem::path resolve_task_path(const std::string& name_or_path) {
  const std::filesystem::path direct(name_or_path);
  if (std::filesystem::exists(direct)) return direct;
  const auto shipped = data_directory() / "tasks" / (name_or_path + ".tamp");
  if (std::filesystem::exists(shipped)) return shipped;
  throw std::runtime_error("task '" + name_or_path + "' not found");
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

}  // namespace hitl
