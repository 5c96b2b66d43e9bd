#include "hitl/lang.hpp"

#include <algorithm>
#include <map>
#include <sstream>

namespace hitl::lang {

std::string_view to_string(ArgType type) {
  switch (type) {
    case ArgType::Object: return "obj";
    case ArgType::Pose: return "pose";
    case ArgType::Grasp: return "grasp";
    case ArgType::Conf: return "conf";
    case ArgType::Traj: return "traj";
  }
  return "?";
}

std::optional<ArgType> parse_arg_type(std::string_view text) {
  if (text == "obj") return ArgType::Object;
  if (text == "pose") return ArgType::Pose;
  if (text == "grasp") return ArgType::Grasp;
  if (text == "conf") return ArgType::Conf;
  if (text == "traj") return ArgType::Traj;
  return std::nullopt;
}

Literal Literal::positive() const {
  Literal out = *this;
  out.negated = false;
  return out;
}

Literal Literal::negation() const {
  Literal out = *this;
  out.negated = !negated;
  return out;
}

std::string Literal::str() const {
  std::string body = "(" + predicate;
  for (const auto& a : args) body += " " + a;
  body += ")";
  return negated ? "(not " + body + ")" : body;
}

FluentState::FluentState(const std::vector<Literal>& literals) {
  for (const auto& l : literals) insert(l);
}

void FluentState::insert(const Literal& literal) {
  if (literal.negated) throw LogicError("fluent state cannot hold negated literal " + literal.str());
  literals_.insert(literal);
}

std::vector<Literal> FluentState::with_predicate(std::string_view predicate) const {
  std::vector<Literal> out;
  for (const auto& l : literals_) {
    if (l.predicate == predicate) out.push_back(l);
  }
  return out;
}

const Parameter* ActionSchema::find_param(std::string_view var) const {
  for (const auto& p : params) {
    if (p.name == var) return &p;
  }
  return nullptr;
}

std::optional<std::size_t> ActionSchema::param_index(std::string_view var) const {
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].name == var) return i;
  }
  return std::nullopt;
}

const PredicateDecl* DomainSpec::predicate(std::string_view n) const {
  for (const auto& p : predicates) {
    if (p.name == n) return &p;
  }
  return nullptr;
}

const ActionSchema* DomainSpec::action(std::string_view n) const {
  for (const auto& a : actions) {
    if (a.name == n) return &a;
  }
  return nullptr;
}

const ObjectEntry* ProblemSpec::object(std::string_view n) const {
  for (const auto& o : objects) {
    if (o.name == n) return &o;
  }
  return nullptr;
}

const std::string& GroundAction::arg(std::string_view var) const {
  const auto index = schema->param_index(var);
  if (!index) throw LogicError("action " + schema->name + " has no parameter " + std::string(var));
  return args[*index];
}

std::string GroundAction::str() const {
  std::string out = schema->name + "(";
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (i > 0) out += ", ";
    out += args[i];
  }
  return out + ")";
}

namespace {

Literal substitute(const Literal& literal, const ActionSchema& schema, const std::vector<std::string>& args) {
  Literal out = literal;
  for (auto& a : out.args) {
    if (const auto index = schema.param_index(a)) a = args[*index];
  }
  return out;
}

std::vector<Literal> substitute_all(const std::vector<Literal>& literals, const ActionSchema& schema,
                                    const std::vector<std::string>& args) {
  std::vector<Literal> out;
  out.reserve(literals.size());
  for (const auto& l : literals) out.push_back(substitute(l, schema, args));
  return out;
}

}  // namespace

GroundAction ground(const ActionSchema& schema, std::vector<std::string> args) {
  if (args.size() != schema.params.size()) {
    throw LogicError("action " + schema.name + " expects " + std::to_string(schema.params.size()) + " arguments, got " +
                     std::to_string(args.size()));
  }
  GroundAction g;
  g.schema = &schema;
  g.con = substitute_all(schema.con, schema, args);
  g.pre = substitute_all(schema.pre, schema, args);
  g.eff = substitute_all(schema.eff, schema, args);
  g.args = std::move(args);
  return g;
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

const sexpr::Node& find_form(const std::vector<sexpr::Node>& forms, std::string_view head, std::string_view what) {
  for (const auto& f : forms) {
    if (f.has_head(head)) return f;
  }
  throw ParseError("no " + std::string(what) + " form");
}

Literal parse_literal(const sexpr::Node& node, bool allow_negation) {
  if (!node.is_list || node.items.empty()) node.fail("expected a literal");
  if (node.has_head("not")) {
    if (!allow_negation) node.fail("negated literal not allowed here");
    if (node.items.size() != 2) node.fail("'not' takes exactly one literal");
    Literal inner = parse_literal(node.items[1], false);
    inner.negated = true;
    return inner;
  }
  Literal l;
  l.predicate = node.head();
  for (std::size_t i = 1; i < node.items.size(); ++i) l.args.push_back(node.items[i].as_symbol());
  return l;
}

void check_arity(const sexpr::Node& where, const Literal& literal, const DomainSpec& domain) {
  const PredicateDecl* decl = domain.predicate(literal.predicate);
  if (decl == nullptr) where.fail("undeclared predicate '" + literal.predicate + "'");
  if (decl->params.size() != literal.args.size()) {
    where.fail("arity mismatch for '" + literal.predicate + "': expected " + std::to_string(decl->params.size()) +
               ", got " + std::to_string(literal.args.size()));
  }
}

std::vector<Literal> parse_schema_section(const sexpr::Node& section, const ActionSchema& schema,
                                          const DomainSpec& domain, bool fluent, bool allow_negation) {
  std::vector<Literal> out;
  for (std::size_t i = 1; i < section.items.size(); ++i) {
    const auto& node = section.items[i];
    Literal l = parse_literal(node, allow_negation);
    check_arity(node, l, domain);
    const PredicateDecl* decl = domain.predicate(l.predicate);
    if (decl->fluent != fluent) {
      node.fail("predicate '" + l.predicate + "' must be " + (fluent ? "fluent" : "static") + " in " +
                section.head());
    }
    for (std::size_t k = 0; k < l.args.size(); ++k) {
      const auto& a = l.args[k];
      if (!is_variable(a)) node.fail("schema arguments must be variables, got '" + a + "'");
      const Parameter* p = schema.find_param(a);
      if (p == nullptr) node.fail("variable " + a + " is not a parameter of " + schema.name);
      if (p->type != decl->params[k]) {
        node.fail("variable " + a + " has type " + std::string(to_string(p->type)) + " but '" + l.predicate +
                  "' expects " + std::string(to_string(decl->params[k])));
      }
    }
    out.push_back(std::move(l));
  }
  return out;
}

ActionSchema parse_action(const sexpr::Node& form, const DomainSpec& domain) {
  if (form.items.size() < 2) form.fail("action needs a name");
  ActionSchema schema;
  schema.name = form.items[1].as_symbol();
  bool seen_params = false;
  for (std::size_t i = 2; i < form.items.size(); ++i) {
    const auto& part = form.items[i];
    if (part.is_atom(":human")) {
      schema.human = true;
      continue;
    }
    if (!part.is_list) part.fail("unexpected atom '" + part.atom + "' in action " + schema.name);
    const auto& head = part.head();
    if (head == "params") {
      seen_params = true;
      for (std::size_t k = 1; k < part.items.size(); ++k) {
        const auto& p = part.items[k];
        if (!p.is_list || p.items.size() != 2) p.fail("parameter must be (?name type)");
        Parameter param;
        param.name = p.items[0].as_symbol();
        if (!is_variable(param.name)) p.fail("parameter names start with '?'");
        const auto type = parse_arg_type(p.items[1].as_symbol());
        if (!type) p.fail("unknown type '" + p.items[1].atom + "'");
        param.type = *type;
        if (schema.find_param(param.name) != nullptr) p.fail("duplicate parameter " + param.name);
        schema.params.push_back(std::move(param));
      }
    } else if (head == "con" || head == "pre" || head == "eff") {
      if (!seen_params) part.fail("params must precede " + head);
      if (head == "con") schema.con = parse_schema_section(part, schema, domain, false, false);
      if (head == "pre") schema.pre = parse_schema_section(part, schema, domain, true, false);
      if (head == "eff") schema.eff = parse_schema_section(part, schema, domain, true, true);
    } else {
      part.fail("unknown action section '" + head + "'");
    }
  }
  for (const auto& e : schema.eff) {
    if (std::find(schema.eff.begin(), schema.eff.end(), e.negation()) != schema.eff.end()) {
      form.fail("action " + schema.name + " both adds and deletes " + e.positive().str());
    }
  }
  return schema;
}

}  // namespace

DomainSpec parse_domain(const sexpr::Node& form) {
  if (!form.has_head("domain") || form.items.size() < 2) form.fail("expected (domain name ...)");
  DomainSpec domain;
  domain.name = form.items[1].as_symbol();
  for (std::size_t i = 2; i < form.items.size(); ++i) {
    const auto& part = form.items[i];
    const auto& head = part.head();
    if (head == "predicates") {
      for (std::size_t k = 1; k < part.items.size(); ++k) {
        const auto& d = part.items[k];
        if (!d.is_list || d.items.size() < 2) d.fail("predicate must be (fluent|static Name types...)");
        PredicateDecl decl;
        const auto& kind = d.items[0].as_symbol();
        if (kind != "fluent" && kind != "static") d.fail("predicate kind must be 'fluent' or 'static'");
        decl.fluent = kind == "fluent";
        decl.name = d.items[1].as_symbol();
        for (std::size_t t = 2; t < d.items.size(); ++t) {
          const auto type = parse_arg_type(d.items[t].as_symbol());
          if (!type) d.items[t].fail("unknown type '" + d.items[t].atom + "'");
          decl.params.push_back(*type);
        }
        if (domain.predicate(decl.name) != nullptr) d.fail("duplicate predicate '" + decl.name + "'");
        domain.predicates.push_back(std::move(decl));
      }
    } else if (head == "action") {
      ActionSchema schema = parse_action(part, domain);
      if (domain.action(schema.name) != nullptr) part.fail("duplicate schema name '" + schema.name + "'");
      domain.actions.push_back(std::move(schema));
    } else {
      part.fail("unknown domain section '" + head + "'");
    }
  }
  return domain;
}

DomainSpec parse_domain(std::string_view text) {
  const auto forms = sexpr::parse_all(text);
  return parse_domain(find_form(forms, "domain", "domain"));
}

ProblemSpec parse_problem(const sexpr::Node& form, const DomainSpec& domain) {
  if (!form.has_head("problem") || form.items.size() < 2) form.fail("expected (problem name ...)");
  ProblemSpec problem;
  problem.name = form.items[1].as_symbol();
  bool have_goal = false;
  const sexpr::Node* init_form = nullptr;
  const sexpr::Node* goal_form = nullptr;
  for (std::size_t i = 2; i < form.items.size(); ++i) {
    const auto& part = form.items[i];
    const auto& head = part.head();
    if (head == "domain") {
      if (part.items.size() != 2) part.fail("expected (domain name)");
      problem.domain = part.items[1].as_symbol();
      if (problem.domain != domain.name) part.fail("problem targets domain '" + problem.domain + "'");
    } else if (head == "objects") {
      for (std::size_t k = 1; k < part.items.size(); ++k) {
        const auto& o = part.items[k];
        if (!o.is_list || o.items.size() != 2) o.fail("object entry must be (name pose-handle)");
        ObjectEntry entry{o.items[0].as_symbol(), o.items[1].as_symbol()};
        if (problem.object(entry.name) != nullptr) o.fail("duplicate object '" + entry.name + "'");
        problem.objects.push_back(std::move(entry));
      }
    } else if (head == "init") {
      init_form = &part;
    } else if (head == "goal") {
      goal_form = &part;
      have_goal = true;
    } else {
      part.fail("unknown problem section '" + head + "'");
    }
  }
  if (!have_goal) form.fail("problem has no goal");

  auto check_objects = [&](const sexpr::Node& where, const Literal& l) {
    const PredicateDecl* decl = domain.predicate(l.predicate);
    for (std::size_t k = 0; k < l.args.size(); ++k) {
      if (is_variable(l.args[k])) where.fail("unexpected variable " + l.args[k]);
      if (decl->params[k] == ArgType::Object && l.args[k] != kWildcard && problem.object(l.args[k]) == nullptr) {
        where.fail("unknown object '" + l.args[k] + "'");
      }
    }
  };

  if (init_form != nullptr) {
    for (std::size_t k = 1; k < init_form->items.size(); ++k) {
      const auto& node = init_form->items[k];
      Literal l = parse_literal(node, false);
      check_arity(node, l, domain);
      if (!domain.predicate(l.predicate)->fluent) node.fail("initial state holds only fluent literals");
      check_objects(node, l);
      if (l.predicate == "AtPose") {
        const ObjectEntry* entry = problem.object(l.args[0]);
        if (entry->pose_handle != l.args[1]) node.fail("object '" + entry->name + "' has pose entry " + entry->pose_handle);
      }
      problem.init.insert(l);
    }
  }
  for (std::size_t k = 1; k < goal_form->items.size(); ++k) {
    const auto& node = goal_form->items[k];
    Literal l = parse_literal(node, true);
    check_arity(node, l, domain);
    check_objects(node, l);
    problem.goal.push_back(std::move(l));
  }
  try {
    validate_state(problem.init, domain);
  } catch (const LogicError& e) {
    form.fail(e.what());
  }
  return problem;
}

ProblemSpec parse_problem(std::string_view text, const DomainSpec& domain) {
  const auto forms = sexpr::parse_all(text);
  return parse_problem(find_form(forms, "problem", "problem"), domain);
}

// ---------------------------------------------------------------------------
// Printing

namespace {

void print_literals(std::ostringstream& out, std::string_view section, const std::vector<Literal>& literals) {
  out << "\n    (" << section;
  for (const auto& l : literals) out << ' ' << l.str();
  out << ')';
}

}  // namespace

std::string print_domain(const DomainSpec& domain) {
  std::ostringstream out;
  out << "(domain " << domain.name << "\n  (predicates";
  for (const auto& p : domain.predicates) {
    out << "\n    (" << (p.fluent ? "fluent " : "static ") << p.name;
    for (auto t : p.params) out << ' ' << to_string(t);
    out << ')';
  }
  out << ')';
  for (const auto& a : domain.actions) {
    out << "\n  (action " << a.name << "\n    (params";
    for (const auto& p : a.params) out << " (" << p.name << ' ' << to_string(p.type) << ')';
    out << ')';
    print_literals(out, "con", a.con);
    print_literals(out, "pre", a.pre);
    print_literals(out, "eff", a.eff);
    if (a.human) out << "\n    :human";
    out << ')';
  }
  out << ")\n";
  return out.str();
}

std::string print_problem(const ProblemSpec& problem) {
  std::ostringstream out;
  out << "(problem " << problem.name << "\n  (domain " << problem.domain << ")\n  (objects";
  for (const auto& o : problem.objects) out << " (" << o.name << ' ' << o.pose_handle << ')';
  out << ")\n  (init";
  for (const auto& l : problem.init.literals()) out << ' ' << l.str();
  out << ")\n  (goal";
  for (const auto& l : problem.goal) out << ' ' << l.str();
  out << "))\n";
  return out.str();
}

// ---------------------------------------------------------------------------
// Semantics

void validate_state(const FluentState& state, const DomainSpec& domain) {
  int confs = 0;
  bool empty = false;
  int grasps = 0;
  std::map<std::string, int> poses;
  for (const auto& l : state.literals()) {
    const PredicateDecl* decl = domain.predicate(l.predicate);
    if (decl == nullptr) throw LogicError("undeclared predicate in state: " + l.str());
    if (!decl->fluent) throw LogicError("static literal in fluent state: " + l.str());
    if (decl->params.size() != l.args.size()) throw LogicError("arity mismatch in state: " + l.str());
    if (l.predicate == "AtConf") ++confs;
    if (l.predicate == "Empty") empty = true;
    if (l.predicate == "AtGrasp") ++grasps;
    if (l.predicate == "AtPose" && ++poses[l.args[0]] > 1) throw LogicError("object " + l.args[0] + " has two poses");
  }
  if (confs > 1) throw LogicError("state has more than one AtConf literal");
  if (grasps > 1) throw LogicError("state holds more than one grasp");
  if (empty == (grasps == 1)) throw LogicError("exactly one of Empty() and AtGrasp(...) must hold");
}

namespace {

bool matches(const Literal& pattern, const Literal& fact) {
  if (pattern.predicate != fact.predicate || pattern.args.size() != fact.args.size()) return false;
  for (std::size_t i = 0; i < pattern.args.size(); ++i) {
    if (pattern.args[i] != kWildcard && pattern.args[i] != fact.args[i]) return false;
  }
  return true;
}

bool holds(const FluentState& state, const Literal& positive) {
  const bool wildcard = std::find(positive.args.begin(), positive.args.end(), kWildcard) != positive.args.end();
  if (!wildcard) return state.contains(positive);
  return std::any_of(state.literals().begin(), state.literals().end(),
                     [&](const Literal& fact) { return matches(positive, fact); });
}

}  // namespace

bool eval_formula(const FluentState& state, const Formula& goal) {
  for (const auto& conjunct : goal) {
    for (const auto& a : conjunct.args) {
      if (is_variable(a)) throw LogicError("unground variable " + a + " in goal literal " + conjunct.str());
    }
  }
  for (const auto& conjunct : goal) {
    const bool present = holds(state, conjunct.positive());
    if (present == conjunct.negated) return false;
  }
  return true;
}

FluentState apply_effects(const FluentState& state, const GroundAction& action) {
  for (const auto& p : action.pre) {
    if (!state.contains(p)) throw LogicError("precondition " + p.str() + " of " + action.str() + " does not hold");
  }
  FluentState next = state;
  for (const auto& e : action.eff) {
    if (e.negated) next.erase(e.positive());
  }
  for (const auto& e : action.eff) {
    if (!e.negated) next.insert(e);
  }
  return next;
}

}  // namespace hitl::lang
