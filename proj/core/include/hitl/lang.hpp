#pragma once

// Logic layer: predicates, literals, fluent states, conjunctive goals and
// action schemata with static constraints, preconditions and effects.
//
// Continuous values (poses, grasps, configurations, trajectories) appear in
// literals only as opaque handle names. Nothing here interprets geometry.

#include <compare>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hitl/sexpr.hpp"

namespace hitl::lang {

/// Raised when a logic-level contract is violated (unmet precondition,
/// unground goal, broken state invariant).
class LogicError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ArgType { Object, Pose, Grasp, Conf, Traj };

std::string_view to_string(ArgType type);
std::optional<ArgType> parse_arg_type(std::string_view text);

/// Goal arguments equal to this symbol match any value.
inline constexpr std::string_view kWildcard = "_";

inline bool is_variable(std::string_view term) { return !term.empty() && term.front() == '?'; }

struct Literal {
  std::string predicate;
  std::vector<std::string> args;
  bool negated = false;

  auto operator<=>(const Literal&) const = default;

  Literal positive() const;
  Literal negation() const;
  std::string str() const;
};

using Formula = std::vector<Literal>;

/// A set of true, non-negated ground fluent literals.
class FluentState {
 public:
  FluentState() = default;
  explicit FluentState(const std::vector<Literal>& literals);

  bool contains(const Literal& literal) const { return literals_.contains(literal); }
  const std::set<Literal>& literals() const { return literals_; }
  std::size_t size() const { return literals_.size(); }
  bool empty() const { return literals_.empty(); }

  void insert(const Literal& literal);
  void erase(const Literal& literal) { literals_.erase(literal); }

  /// Literals of `predicate`, in sorted order.
  std::vector<Literal> with_predicate(std::string_view predicate) const;

  bool operator==(const FluentState&) const = default;

 private:
  std::set<Literal> literals_;
};

struct PredicateDecl {
  std::string name;
  bool fluent = false;
  std::vector<ArgType> params;

  bool operator==(const PredicateDecl&) const = default;
};

struct Parameter {
  std::string name;  // includes the leading '?'
  ArgType type = ArgType::Object;

  bool operator==(const Parameter&) const = default;
};

struct ActionSchema {
  std::string name;
  std::vector<Parameter> params;
  std::vector<Literal> con;
  std::vector<Literal> pre;
  std::vector<Literal> eff;
  bool human = false;

  const Parameter* find_param(std::string_view var) const;
  std::optional<std::size_t> param_index(std::string_view var) const;

  bool operator==(const ActionSchema&) const = default;
};

struct DomainSpec {
  std::string name;
  std::vector<PredicateDecl> predicates;
  std::vector<ActionSchema> actions;

  const PredicateDecl* predicate(std::string_view name) const;
  const ActionSchema* action(std::string_view name) const;

  bool operator==(const DomainSpec&) const = default;
};

/// A schema with every parameter replaced by a concrete term.
struct GroundAction {
  const ActionSchema* schema = nullptr;
  std::vector<std::string> args;
  std::vector<Literal> con;
  std::vector<Literal> pre;
  std::vector<Literal> eff;

  const std::string& name() const { return schema->name; }
  bool human() const { return schema->human; }
  /// Value bound to a schema parameter, e.g. arg("?o").
  const std::string& arg(std::string_view var) const;
  std::string str() const;
};

GroundAction ground(const ActionSchema& schema, std::vector<std::string> args);

struct ObjectEntry {
  std::string name;
  std::string pose_handle;

  bool operator==(const ObjectEntry&) const = default;
};

struct ProblemSpec {
  std::string name;
  std::string domain;
  std::vector<ObjectEntry> objects;
  FluentState init;
  Formula goal;

  const ObjectEntry* object(std::string_view name) const;

  bool operator==(const ProblemSpec&) const = default;
};

/// Parses the `(domain ...)` form found in `text`.
DomainSpec parse_domain(std::string_view text);
DomainSpec parse_domain(const sexpr::Node& form);

/// Parses the `(problem ...)` form found in `text` against `domain`.
ProblemSpec parse_problem(std::string_view text, const DomainSpec& domain);
ProblemSpec parse_problem(const sexpr::Node& form, const DomainSpec& domain);

std::string print_domain(const DomainSpec& domain);
std::string print_problem(const ProblemSpec& problem);

/// Checks fluent-only content plus the single-AtConf, single-AtPose-per-object
/// and AtGrasp-xor-Empty invariants. Throws LogicError on violation.
void validate_state(const FluentState& state, const DomainSpec& domain);

/// True iff every positive conjunct is in `state` and no negative one is.
/// Throws LogicError for goals containing variables.
bool eval_formula(const FluentState& state, const Formula& goal);

/// Returns `state` minus the negated effects plus the positive ones.
/// Throws LogicError when a precondition does not hold.
FluentState apply_effects(const FluentState& state, const GroundAction& action);

}  // namespace hitl::lang
