#include "hitl/planner.hpp"

#include <algorithm>
#include <deque>
#include <functional>
#include <random>
#include <set>
#include <sstream>

namespace hitl::plan {

using lang::FluentState;
using lang::GroundAction;
using lang::Literal;
using world::Pose2;

// ---------------------------------------------------------------------------
// Observation -> symbolic problem

PlanningProblem make_problem(const Task& task, const world::WorldState& state,
                             const std::optional<std::map<std::string, Pose2>>& perceived) {
  const auto poses = perceived ? *perceived : state.all_poses();
  const bool initial = state.t == 0 && !state.held && state.attachments.empty();

  PlanningProblem out;
  out.goal = task.problem.goal;
  out.snapshot = state;

  std::string conf = "q@" + std::to_string(state.t);
  if (initial) {
    for (const auto& l : task.problem.init.literals()) {
      if (l.predicate == "AtConf") conf = l.args[0];
    }
  }
  out.conf_handle = conf;
  out.init.insert({"AtConf", {conf}, false});
  out.values[conf] = Value::of_conf(state.config.joints);

  for (const auto& o : task.scene->objects) {
    if (state.held && state.held->object == o.name) continue;
    std::string handle = "p_" + o.name + "@" + std::to_string(state.t);
    if (initial) {
      if (const auto* entry = task.problem.object(o.name)) handle = entry->pose_handle;
    }
    out.init.insert({"AtPose", {o.name, handle}, false});
    out.values[handle] = Value::of_pose(poses.at(o.name));
  }
  if (state.held) {
    const std::string handle = "g_" + state.held->object + "@" + std::to_string(state.t);
    out.init.insert({"AtGrasp", {state.held->object, handle}, false});
    out.values[handle] = Value::of_grasp(state.held->grasp);
  } else {
    out.init.insert({"Empty", {}, false});
  }
  for (const auto& a : state.attachments) out.init.insert({"Attached", {a.child, a.parent}, false});
  lang::validate_state(out.init, task.domain);
  return out;
}

// ---------------------------------------------------------------------------
// BoundPlan

const Value& BoundPlan::value(const std::string& handle) const {
  const auto it = values.find(handle);
  if (it == values.end()) throw std::out_of_range("plan has no value for '" + handle + "'");
  return it->second;
}

std::vector<std::string> BoundPlan::skeleton() const {
  std::vector<std::string> out;
  for (const auto& s : steps) out.push_back(s.name());
  return out;
}

namespace {

std::string kind_name(ValueKind k) {
  switch (k) {
    case ValueKind::Pose: return "pose";
    case ValueKind::Grasp: return "grasp";
    case ValueKind::Conf: return "conf";
    case ValueKind::Traj: return "traj";
  }
  return "?";
}

std::string fmt(double v) { return sexpr::format_number(v); }

}  // namespace

std::string BoundPlan::describe(const std::string& task_name) const {
  std::ostringstream out;
  out << "(plan" << (task_name.empty() ? "" : " " + task_name);
  out << "\n  (steps";
  std::vector<std::string> order;
  std::set<std::string> seen;
  for (const auto& s : steps) {
    out << "\n    (" << s.name();
    for (const auto& a : s.args) {
      out << " " << a;
      if (values.contains(a) && seen.insert(a).second) order.push_back(a);
    }
    out << ")";
  }
  out << ")";
  if (first_human_index) out << "\n  (first-human " << *first_human_index << ")";
  out << "\n  (values";
  for (const auto& h : order) {
    const Value& v = values.at(h);
    out << "\n    (" << h << " " << kind_name(v.kind);
    if (v.deferred) {
      out << " deferred)";
      continue;
    }
    switch (v.kind) {
      case ValueKind::Pose:
      case ValueKind::Grasp: out << " (" << fmt(v.pose.x) << " " << fmt(v.pose.y) << " " << fmt(v.pose.theta) << ")"; break;
      case ValueKind::Conf: out << " (" << fmt(v.conf[0]) << " " << fmt(v.conf[1]) << " " << fmt(v.conf[2]) << ")"; break;
      case ValueKind::Traj: out << " (waypoints " << v.traj.waypoints.size() << ")"; break;
    }
    if (v.optimistic) out << " optimistic";
    out << ")";
  }
  out << "))\n";
  return out.str();
}

// ---------------------------------------------------------------------------
// Planner

namespace {

using Clock = std::chrono::steady_clock;

enum class Stream { Observed, GraspSample, PreAttach, HumanPose, HumanConf, Kin, Motion };

struct HandleInfo {
  Stream stream = Stream::Observed;
  ValueKind kind = ValueKind::Pose;
  std::string object;  // grasp / preattach / human outputs / kin
  std::string parent;  // preattach / human outputs
  std::string a, b;    // kin: grasp, pose; motion: q1, q2
  bool attach_grasp = false;
};

/// Static facts of the optimistic universe, indexed by predicate.
struct Universe {
  std::map<std::string, std::vector<std::vector<std::string>>> facts;
  std::map<std::string, HandleInfo> handles;
  std::set<std::vector<std::string>> fact_set;

  void add(const std::string& predicate, std::vector<std::string> args) {
    std::vector<std::string> key = args;
    key.insert(key.begin(), predicate);
    if (fact_set.insert(key).second) facts[predicate].push_back(std::move(args));
  }

  std::string fresh(const std::string& name, HandleInfo info) {
    handles.emplace(name, std::move(info));
    return name;
  }
};

Universe build_universe(const Task& task, const PlanningProblem& problem) {
  Universe u;
  const auto& scene = *task.scene;
  const FluentState& s = problem.init;

  std::map<std::string, std::string> pose_of;
  for (const auto& l : s.with_predicate("AtPose")) pose_of[l.args[0]] = l.args[1];
  std::optional<std::pair<std::string, std::string>> held;
  if (const auto g = s.with_predicate("AtGrasp"); !g.empty()) held = {g[0].args[0], g[0].args[1]};
  std::set<std::string> attached;
  for (const auto& l : s.with_predicate("Attached")) attached.insert(l.args[0]);
  const auto is_attach_child = [&](const std::string& o) {
    return std::any_of(scene.attach_targets.begin(), scene.attach_targets.end(),
                       [&](const world::AttachTarget& t) { return t.child == o; });
  };

  std::map<std::string, std::vector<std::string>> grasps_of;
  std::map<std::string, std::vector<std::string>> poses_of;  // kin target poses per object
  for (const auto& o : scene.objects) {
    if (o.fixed) continue;
    const bool attach_child = is_attach_child(o.name);
    if (held && held->first == o.name) {
      u.handles[held->second] = HandleInfo{Stream::Observed, ValueKind::Grasp, o.name, "", "", "", attach_child};
      u.add("Grasp", {o.name, held->second});
      if (attach_child) u.add("AttachGrasp", {o.name, held->second});
      grasps_of[o.name].push_back(held->second);
    } else if (!attached.contains(o.name) && pose_of.contains(o.name)) {
      const auto g = u.fresh("#g:" + o.name, {Stream::GraspSample, ValueKind::Grasp, o.name, "", "", "", attach_child});
      u.add("Grasp", {o.name, g});
      if (attach_child) u.add("AttachGrasp", {o.name, g});
      grasps_of[o.name].push_back(g);
      u.add("Pose", {o.name, pose_of[o.name]});
      poses_of[o.name].push_back(pose_of[o.name]);
    }
  }

  std::vector<std::string> human_confs;
  for (const auto& t : scene.attach_targets) {
    if (attached.contains(t.child) || !grasps_of.contains(t.child)) continue;
    const std::string tag = t.child + ":" + t.parent;
    const auto pre = u.fresh("#pre:" + tag, {Stream::PreAttach, ValueKind::Pose, t.child, t.parent, "", "", false});
    const auto ph = u.fresh("#ph:" + tag, {Stream::HumanPose, ValueKind::Pose, t.child, t.parent, "", "", false});
    const auto qh = u.fresh("#qh:" + tag, {Stream::HumanConf, ValueKind::Conf, t.child, t.parent, "", "", false});
    u.add("PreAttach", {t.child, pre, t.parent});
    u.add("GoodAttach", {t.child, ph, t.parent});
    u.add("HumanAttach", {t.child, ph, qh, t.parent});
    poses_of[t.child].push_back(pre);
    human_confs.push_back(qh);
  }

  std::vector<std::string> kin_confs;
  int counter = 0;
  for (const auto& o : scene.objects) {
    if (!grasps_of.contains(o.name)) continue;
    for (const auto& g : grasps_of[o.name]) {
      for (const auto& p : poses_of[o.name]) {
        const auto q = u.fresh("#q" + std::to_string(counter++), {Stream::Kin, ValueKind::Conf, o.name, "", g, p, false});
        u.add("Kin", {q, g, p});
        kin_confs.push_back(q);
      }
    }
  }

  std::vector<std::string> confs{problem.conf_handle};
  confs.insert(confs.end(), kin_confs.begin(), kin_confs.end());
  confs.insert(confs.end(), human_confs.begin(), human_confs.end());
  counter = 0;
  for (const auto& q1 : confs) {
    for (const auto& q2 : kin_confs) {
      if (q1 == q2) continue;
      const auto t = u.fresh("#t" + std::to_string(counter++), {Stream::Motion, ValueKind::Traj, "", "", q1, q2, false});
      u.add("Motion", {q1, t, q2});
      u.add("Safe", {t});
    }
  }
  return u;
}

std::vector<GroundAction> ground_actions(const lang::DomainSpec& domain, const Task& task, const Universe& u) {
  std::vector<GroundAction> out;
  for (const auto& schema : domain.actions) {
    std::vector<std::optional<std::string>> binding(schema.params.size());
    std::function<void(std::size_t)> join = [&](std::size_t k) {
      if (k == schema.con.size()) {
        // Unconstrained object parameters range over every object.
        for (std::size_t i = 0; i < binding.size(); ++i) {
          if (binding[i]) continue;
          if (schema.params[i].type != lang::ArgType::Object) return;
          for (const auto& o : task.problem.objects) {
            binding[i] = o.name;
            join(k);
          }
          binding[i].reset();
          return;
        }
        std::vector<std::string> args;
        for (const auto& b : binding) args.push_back(*b);
        out.push_back(lang::ground(schema, std::move(args)));
        return;
      }
      const Literal& c = schema.con[k];
      const auto it = u.facts.find(c.predicate);
      if (it == u.facts.end()) return;
      for (const auto& fact : it->second) {
        std::vector<std::size_t> newly;
        bool ok = true;
        for (std::size_t j = 0; j < c.args.size() && ok; ++j) {
          const std::size_t idx = *schema.param_index(c.args[j]);
          if (binding[idx]) {
            ok = *binding[idx] == fact[j];
          } else {
            binding[idx] = fact[j];
            newly.push_back(idx);
          }
        }
        if (ok) join(k + 1);
        for (const auto idx : newly) binding[idx].reset();
      }
    };
    join(0);
  }
  return out;
}

std::vector<std::size_t> search_skeleton(const std::vector<GroundAction>& actions, const FluentState& init,
                                         const lang::Formula& goal, int depth_limit, Clock::time_point deadline) {
  struct Node {
    FluentState state;
    std::size_t parent;
    std::size_t action;
    int depth;
  };
  std::vector<Node> nodes{{init, 0, 0, 0}};
  std::set<std::set<Literal>> visited{init.literals()};
  std::deque<std::size_t> frontier{0};
  const auto extract = [&](std::size_t i) {
    std::vector<std::size_t> out;
    for (; i != 0; i = nodes[i].parent) out.push_back(nodes[i].action);
    std::reverse(out.begin(), out.end());
    return out;
  };
  while (!frontier.empty()) {
    const std::size_t cur = frontier.front();
    frontier.pop_front();
    if (nodes[cur].depth >= depth_limit) continue;
    if (Clock::now() > deadline) throw PlanningError(ErrorKind::Timeout, "skeleton search exceeded the time limit");
    for (std::size_t a = 0; a < actions.size(); ++a) {
      const auto& act = actions[a];
      if (!std::all_of(act.pre.begin(), act.pre.end(), [&](const Literal& p) { return nodes[cur].state.contains(p); })) {
        continue;
      }
      FluentState next = lang::apply_effects(nodes[cur].state, act);
      if (!visited.insert(next.literals()).second) continue;
      const bool done = lang::eval_formula(next, goal);
      nodes.push_back({std::move(next), cur, a, nodes[cur].depth + 1});
      if (done) return extract(nodes.size() - 1);
      frontier.push_back(nodes.size() - 1);
    }
  }
  throw PlanningError(ErrorKind::NoSkeleton, "no action sequence reaches the goal within depth " +
                                                 std::to_string(depth_limit));
}

/// Sampling-based binding of the optimistic handles used by one skeleton.
class Binder {
 public:
  Binder(const Task& task, const PlanningProblem& problem, const learn::ConstraintRegistry& constraints,
         const PlanOptions& options, const Universe& universe, const std::vector<GroundAction>& skeleton,
         Clock::time_point deadline)
      : task_(task),
        problem_(problem),
        constraints_(constraints),
        options_(options),
        universe_(universe),
        skeleton_(skeleton),
        deadline_(deadline),
        rng_(options.seed) {}

  ValueTable bind() {
    collect();
    values_ = {};
    for (const auto& [h, v] : problem_.values) values_[h] = v;
    if (!dfs(0)) {
      std::string worst = "none";
      int count = 0;
      for (const auto& [name, n] : failures_) {
        if (n > count) {
          worst = name;
          count = n;
        }
      }
      throw PlanningError(ErrorKind::BindingExhausted,
                          "binding failed; most failures in " + worst + " (" + std::to_string(count) + ")");
    }
    return values_;
  }

 private:
  struct Var {
    std::string handle;
    HandleInfo info;
    std::vector<std::string> deps;
    std::string parent_pose;                                   // preattach / human pose
    std::optional<std::pair<std::string, std::string>> held;  // motion: (object, grasp handle)
  };

  void collect() {
    std::vector<std::string> first_use;
    std::set<std::string> seen;
    FluentState state = problem_.init;
    std::map<std::string, Var> vars;
    for (const auto& step : skeleton_) {
      for (const auto& a : step.args) {
        const auto it = universe_.handles.find(a);
        if (it == universe_.handles.end() || it->second.stream == Stream::Observed || !seen.insert(a).second) continue;
        first_use.push_back(a);
        Var v{a, it->second, {}, {}, {}};
        const auto pose_of = [&](const std::string& o) {
          for (const auto& l : state.with_predicate("AtPose")) {
            if (l.args[0] == o) return l.args[1];
          }
          throw PlanningError(ErrorKind::BindingExhausted, "object " + o + " has no pose at " + step.str());
        };
        switch (v.info.stream) {
          case Stream::PreAttach:
          case Stream::HumanPose:
            v.parent_pose = pose_of(v.info.parent);
            v.deps.push_back(v.parent_pose);
            break;
          case Stream::Kin: v.deps = {v.info.a, v.info.b}; break;
          case Stream::Motion: {
            v.deps = {v.info.a, v.info.b};
            const auto g = state.with_predicate("AtGrasp");
            if (!g.empty()) {
              v.held = std::make_pair(g[0].args[0], g[0].args[1]);
              v.deps.push_back(g[0].args[1]);
            }
            break;
          }
          default: break;
        }
        vars.emplace(a, std::move(v));
      }
      state = lang::apply_effects(state, step);
    }

    // Kahn's algorithm; ties go to the earliest first use.
    std::map<std::string, std::size_t> rank;
    for (std::size_t i = 0; i < first_use.size(); ++i) rank[first_use[i]] = i;
    std::set<std::string> placed;
    order_.clear();
    while (order_.size() < first_use.size()) {
      bool progressed = false;
      for (const auto& h : first_use) {
        if (placed.contains(h)) continue;
        const auto& v = vars.at(h);
        const bool ready = std::all_of(v.deps.begin(), v.deps.end(),
                                       [&](const std::string& d) { return !rank.contains(d) || placed.contains(d); });
        if (!ready) continue;
        placed.insert(h);
        order_.push_back(v);
        progressed = true;
        break;
      }
      if (!progressed) throw std::logic_error("cyclic stream dependencies");
    }
  }

  void fail(const std::string& constraint) { ++failures_[constraint]; }

  bool spend() {
    if (Clock::now() > deadline_) throw PlanningError(ErrorKind::Timeout, "binding exceeded the time limit");
    return samples_++ < options_.sample_budget;
  }

  bool any(const Var& v, bool Value::*flag) const {
    return std::any_of(v.deps.begin(), v.deps.end(), [&](const std::string& d) { return values_.at(d).*flag; });
  }

  bool dfs(std::size_t i) {
    if (i == order_.size()) return true;
    const Var& v = order_[i];
    const auto& scene = *task_.scene;
    const auto& info = v.info;
    const bool optimistic = any(v, &Value::optimistic);
    const bool deferred = any(v, &Value::deferred);

    const auto try_value = [&](Value value) {
      value.optimistic = value.optimistic || optimistic;
      values_[v.handle] = std::move(value);
      if (dfs(i + 1)) return true;
      values_.erase(v.handle);
      return false;
    };

    switch (info.stream) {
      case Stream::GraspSample: {
        std::vector<Pose2> candidates;
        std::string name = info.attach_grasp ? "AttachGrasp" : "Grasp";
        if (info.attach_grasp) {
          if (const auto* set = constraints_.find_grasps(info.object)) candidates = set->grasps;
        } else {
          for (const auto& [o, g] : task_.declared_grasps) {
            if (o == info.object) candidates.push_back(g);
          }
        }
        if (candidates.empty()) {
          fail(name);
          return false;
        }
        for (int k = 0; k < options_.per_variable && spend(); ++k) {
          const auto& g = candidates[std::uniform_int_distribution<std::size_t>(0, candidates.size() - 1)(rng_)];
          if (try_value(Value::of_grasp(g))) return true;
          if (candidates.size() == 1) break;
        }
        return false;
      }
      case Stream::PreAttach: {
        const auto* set = constraints_.find_preattach(info.object, info.parent);
        if (set == nullptr || set->poses.empty()) {
          fail("PreAttach");
          return false;
        }
        const Pose2 parent = values_.at(v.parent_pose).pose;
        for (int k = 0; k < options_.per_variable && spend(); ++k) {
          const auto& rel = set->poses[std::uniform_int_distribution<std::size_t>(0, set->poses.size() - 1)(rng_)];
          if (try_value(Value::of_pose(parent * rel))) return true;
          if (set->poses.size() == 1) break;
        }
        return false;
      }
      case Stream::HumanPose: {
        const auto* target = scene.attach_target(info.object, info.parent);
        Value value = Value::of_pose(values_.at(v.parent_pose).pose * target->relative);
        value.optimistic = true;
        return try_value(value);
      }
      case Stream::HumanConf: {
        Value value = Value::of_conf({});
        value.deferred = true;
        return try_value(value);
      }
      case Stream::Kin: {
        if (deferred) {
          Value value = Value::of_conf({});
          value.deferred = true;
          return try_value(value);
        }
        const Pose2 g = values_.at(info.a).pose;
        const Pose2 p = values_.at(info.b).pose;
        if ((p * g.inverse()).position().norm() > scene.arm.reach()) {
          fail("Kin");
          return false;
        }
        for (int k = 0; k < options_.per_variable && spend(); ++k) {
          try {
            const auto first = k == 0 ? std::optional(problem_.snapshot.config.joints) : std::nullopt;
            const auto q = solve_kin(scene, g, p, rng_(), first, info.object, 1);
            if (try_value(Value::of_conf(q))) return true;
          } catch (const PlanningError&) {
            fail("Kin");
          }
        }
        return false;
      }
      case Stream::Motion: {
        if (deferred) {
          Value value = Value::of_traj({});
          value.deferred = true;
          return try_value(value);
        }
        std::optional<world::HeldObject> held;
        if (v.held) held = world::HeldObject{v.held->first, values_.at(v.held->second).pose};
        const auto q1 = values_.at(info.a).conf;
        const auto q2 = values_.at(info.b).conf;
        for (int k = 0; k < options_.motion_attempts && spend(); ++k) {
          try {
            auto traj = motion_plan(scene, held, q1, q2, rng_(), options_.motion);
            if (try_value(Value::of_traj(std::move(traj)))) return true;
          } catch (const PlanningError&) {
            fail("Motion");
          }
        }
        return false;
      }
      case Stream::Observed: return dfs(i + 1);
    }
    return false;
  }

  const Task& task_;
  const PlanningProblem& problem_;
  const learn::ConstraintRegistry& constraints_;
  const PlanOptions& options_;
  const Universe& universe_;
  const std::vector<GroundAction>& skeleton_;
  Clock::time_point deadline_;
  std::mt19937_64 rng_;
  std::vector<Var> order_;
  ValueTable values_;
  std::map<std::string, int> failures_;
  int samples_ = 0;
};

/// Renames universe handles after the move that introduces them: t1, q1, g1, p2, ph2, qh2, ...
std::map<std::string, std::string> readable_names(const std::vector<GroundAction>& steps, const Universe& u,
                                                  const ValueTable& observed) {
  std::map<std::string, std::string> names;
  std::set<std::string> taken;
  for (const auto& [h, v] : observed) taken.insert(h);
  int phase = 0;
  for (const auto& s : steps) {
    if (s.name() == "move") ++phase;
    for (const auto& a : s.args) {
      const auto it = u.handles.find(a);
      if (it == u.handles.end() || it->second.stream == Stream::Observed || names.contains(a)) continue;
      std::string prefix;
      switch (it->second.stream) {
        case Stream::GraspSample: prefix = "g"; break;
        case Stream::PreAttach: prefix = "p"; break;
        case Stream::HumanPose: prefix = "ph"; break;
        case Stream::HumanConf: prefix = "qh"; break;
        case Stream::Kin: prefix = "q"; break;
        case Stream::Motion: prefix = "t"; break;
        case Stream::Observed: break;
      }
      std::string name = prefix + std::to_string(std::max(phase, 1));
      for (int k = 2; taken.contains(name); ++k) name = prefix + std::to_string(std::max(phase, 1)) + "_" + std::to_string(k);
      taken.insert(name);
      names[a] = name;
    }
  }
  return names;
}

}  // namespace

BoundPlan plan(const Task& task, const PlanningProblem& problem, const learn::ConstraintRegistry& constraints,
               const PlanOptions& options) {
  const auto deadline = Clock::now() + std::chrono::duration_cast<Clock::duration>(
                                           std::chrono::duration<double>(options.time_limit));
  BoundPlan out;
  if (lang::eval_formula(problem.init, problem.goal)) return out;

  const Universe universe = build_universe(task, problem);
  const auto actions = ground_actions(task.domain, task, universe);
  const auto indices = search_skeleton(actions, problem.init, problem.goal, options.depth_limit, deadline);
  std::vector<GroundAction> skeleton;
  for (const auto i : indices) skeleton.push_back(actions[i]);

  Binder binder(task, problem, constraints, options, universe, skeleton, deadline);
  const ValueTable bound = binder.bind();

  const auto names = readable_names(skeleton, universe, problem.values);
  const auto rename = [&](const std::string& h) {
    const auto it = names.find(h);
    return it == names.end() ? h : it->second;
  };
  for (const auto& step : skeleton) {
    std::vector<std::string> args;
    for (const auto& a : step.args) {
      args.push_back(rename(a));
      if (const auto it = bound.find(a); it != bound.end()) out.values[args.back()] = it->second;
    }
    out.steps.push_back(lang::ground(*step.schema, std::move(args)));
    if (!out.first_human_index && step.human()) out.first_human_index = out.steps.size() - 1;
  }
  return out;
}

BoundPlan plan(const Task& task, const world::WorldState& state, const learn::ConstraintRegistry& constraints,
               const PlanOptions& options) {
  return plan(task, make_problem(task, state), constraints, options);
}

}  // namespace hitl::plan
