#include "hitl/imitate.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

namespace hitl::imitate {

using world::Pose2;

std::vector<double> featurize(const world::ArmModel& arm, const Observation& obs) {
  const Pose2 ee = world::forward_kinematics(arm, obs.config);
  std::vector<double> x;
  x.reserve(4 * obs.objects.size() + 5);
  for (const auto& [name, pose] : obs.objects) {
    const Pose2 rel = world::relative(ee, pose);
    x.insert(x.end(), {rel.x, rel.y, std::sin(rel.theta), std::cos(rel.theta)});
  }
  x.insert(x.end(), {ee.x, ee.y, std::sin(ee.theta), std::cos(ee.theta), obs.gripper_closed ? 1.0 : 0.0});
  return x;
}

Action to_action(const world::Command& c) { return {c.dx, c.dy, c.dtheta, c.grip ? 1.0 : 0.0}; }

std::string_view to_string(PolicyKind kind) { return kind == PolicyKind::Knn ? "knn" : "linear"; }

PolicyKind parse_policy_kind(std::string_view text) {
  if (text == "knn") return PolicyKind::Knn;
  if (text == "linear") return PolicyKind::Linear;
  throw std::invalid_argument("unknown policy kind '" + std::string(text) + "'");
}

Action Policy::predict(const std::vector<double>& x) const {
  if (kind == PolicyKind::Linear) {
    if (weights.cols() != static_cast<Eigen::Index>(x.size()) + 1) {
      throw std::invalid_argument("feature size " + std::to_string(x.size()) + " does not match the policy");
    }
    Eigen::VectorXd v(x.size() + 1);
    for (std::size_t i = 0; i < x.size(); ++i) v[static_cast<Eigen::Index>(i)] = x[i];
    v[static_cast<Eigen::Index>(x.size())] = 1.0;
    const Eigen::VectorXd y = weights * v;
    return {y[0], y[1], y[2], y[3]};
  }

  if (inputs.empty()) throw std::logic_error("knn policy has no stored pairs");
  if (inputs.front().size() != x.size()) {
    throw std::invalid_argument("feature size " + std::to_string(x.size()) + " does not match the policy");
  }
  std::vector<std::pair<double, std::size_t>> d(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double e = (inputs[i][j] - x[j]) * (scale.empty() ? 1.0 : scale[j]);
      s += e * e;
    }
    d[i] = {std::sqrt(s), i};
  }
  const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(std::max(k, 1)), d.size());
  std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(n), d.end());
  if (d.front().first <= 1e-12) return outputs[d.front().second];

  Action out{0, 0, 0, 0};
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = 1.0 / d[i].first;
    total += w;
    for (int c = 0; c < 4; ++c) out[c] += w * outputs[d[i].second][c];
  }
  for (auto& v : out) v /= total;
  return out;
}

world::Command Policy::act(const Observation& obs) const {
  const Action a = predict(featurize(arm, obs));
  return gate::clamp_command({a[0], a[1], a[2], a[3] >= 0.5}, limits);
}

bool Policy::operator==(const Policy& o) const {
  return kind == o.kind && task == o.task && arm.links == o.arm.links && arm.joint_min == o.arm.joint_min &&
         arm.joint_max == o.arm.joint_max && limits.max_step == o.limits.max_step && limits.max_rot == o.limits.max_rot &&
         objects == o.objects && k == o.k && inputs == o.inputs && outputs == o.outputs && scale == o.scale && trained_on == o.trained_on &&
         weights.rows() == o.weights.rows() && weights.cols() == o.weights.cols() && weights == o.weights;
}

std::size_t count_training_pairs(const std::vector<Episode>& dataset) {
  std::size_t n = 0;
  for (const auto& ep : dataset) {
    for (const auto& s : ep.steps) n += s.label == Controller::Human ? 1 : 0;
  }
  return n;
}

Policy train(const Task& task, const std::vector<Episode>& dataset, const TrainOptions& options) {
  Policy p;
  p.kind = options.kind;
  p.task = task.name;
  p.arm = task.scene->arm;
  p.limits = task.scene->limits;
  p.k = options.k;
  for (const auto& o : task.scene->objects) p.objects.push_back(o.name);
  std::sort(p.objects.begin(), p.objects.end());

  std::vector<std::vector<double>> xs;
  std::vector<Action> ys;
  for (const auto& ep : dataset) {
    if (ep.task != task.name) throw std::invalid_argument("episode of task '" + ep.task + "' in a " + task.name + " dataset");
    for (const auto& s : ep.steps) {
      if (s.label != Controller::Human) continue;
      xs.push_back(featurize(p.arm, s.obs));
      ys.push_back(to_action(s.action));
    }
  }
  if (xs.empty()) throw NoHumanData("dataset has no human-labelled steps");
  p.trained_on = xs.size();

  if (p.kind == PolicyKind::Knn) {
    if (options.k < 1) throw std::invalid_argument("k must be at least 1");
    // Inverse standard deviation per feature; constant features get weight 1.
    const std::size_t d = xs.front().size();
    p.scale.assign(d, 1.0);
    for (std::size_t j = 0; j < d; ++j) {
      double mean = 0.0, var = 0.0;
      for (const auto& x : xs) mean += x[j];
      mean /= static_cast<double>(xs.size());
      for (const auto& x : xs) var += (x[j] - mean) * (x[j] - mean);
      const double sd = std::sqrt(var / static_cast<double>(xs.size()));
      if (sd > 1e-9) p.scale[j] = 1.0 / sd;
    }
    p.inputs = std::move(xs);
    p.outputs = std::move(ys);
    return p;
  }

  if (options.ridge < 0.0) throw std::invalid_argument("ridge must be non-negative");
  const auto n = static_cast<Eigen::Index>(xs.size());
  const auto d = static_cast<Eigen::Index>(xs.front().size());
  Eigen::MatrixXd X(n, d + 1);
  Eigen::MatrixXd Y(n, 4);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) X(i, j) = xs[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    X(i, d) = 1.0;
    for (int c = 0; c < 4; ++c) Y(i, c) = ys[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
  }
  // Bias column is not regularised.
  Eigen::MatrixXd A = X.transpose() * X;
  for (Eigen::Index j = 0; j < d; ++j) A(j, j) += options.ridge;
  const Eigen::MatrixXd B = X.transpose() * Y;
  p.weights = A.completeOrthogonalDecomposition().solve(B).transpose();
  return p;
}

double bc_loss(const Policy& policy, const std::vector<Episode>& dataset) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& ep : dataset) {
    for (const auto& s : ep.steps) {
      if (s.label != Controller::Human) continue;
      const Action y = to_action(s.action);
      const Action f = policy.predict(featurize(policy.arm, s.obs));
      for (int c = 0; c < 4; ++c) sum += (f[c] - y[c]) * (f[c] - y[c]);
      ++n;
    }
  }
  if (n == 0) throw NoHumanData("dataset has no human-labelled steps");
  return sum / static_cast<double>(n);
}

// policy.bin: magic, then little-endian fields in declaration order.
namespace {

constexpr char kMagic[8] = {'H', 'I', 'T', 'L', 'P', 'O', 'L', '1'};

struct Writer {
  std::ofstream out;
  void u64(std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }
  void f64(double v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }
  void str(const std::string& s) {
    u64(s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
};

struct Reader {
  std::ifstream in;
  std::uint64_t u64() {
    std::uint64_t v = 0;
    get(&v, sizeof v);
    return v;
  }
  double f64() {
    double v = 0;
    get(&v, sizeof v);
    return v;
  }
  std::string str() {
    const auto n = u64();
    if (n > (1u << 20)) throw std::runtime_error("policy file: implausible string length");
    std::string s(n, '\0');
    get(s.data(), n);
    return s;
  }
  void get(void* p, std::size_t n) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!in) throw std::runtime_error("policy file truncated");
  }
};

}  // namespace

void Policy::save(const std::filesystem::path& path) const {
  Writer w{std::ofstream(path, std::ios::binary)};
  if (!w.out) throw std::runtime_error("cannot write " + path.string());
  w.out.write(kMagic, sizeof kMagic);
  w.u64(kind == PolicyKind::Knn ? 0 : 1);
  w.str(task);
  for (double l : arm.links) w.f64(l);
  w.f64(arm.joint_min);
  w.f64(arm.joint_max);
  w.f64(limits.max_step);
  w.f64(limits.max_rot);
  w.u64(objects.size());
  for (const auto& o : objects) w.str(o);
  w.u64(trained_on);
  if (kind == PolicyKind::Knn) {
    w.u64(static_cast<std::uint64_t>(k));
    w.u64(inputs.size());
    w.u64(inputs.empty() ? 0 : inputs.front().size());
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      for (double v : inputs[i]) w.f64(v);
      for (double v : outputs[i]) w.f64(v);
    }
    w.u64(scale.size());
    for (double v : scale) w.f64(v);
  } else {
    w.u64(static_cast<std::uint64_t>(weights.rows()));
    w.u64(static_cast<std::uint64_t>(weights.cols()));
    for (Eigen::Index r = 0; r < weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < weights.cols(); ++c) w.f64(weights(r, c));
    }
  }
  if (!w.out) throw std::runtime_error("failed writing " + path.string());
}

Policy Policy::load(const std::filesystem::path& path) {
  Reader r{std::ifstream(path, std::ios::binary)};
  if (!r.in) throw std::runtime_error("cannot open " + path.string());
  char magic[8];
  r.get(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw std::runtime_error(path.string() + " is not a policy file");
  Policy p;
  const auto kind = r.u64();
  if (kind > 1) throw std::runtime_error("policy file: unknown kind");
  p.kind = kind == 0 ? PolicyKind::Knn : PolicyKind::Linear;
  p.task = r.str();
  for (double& l : p.arm.links) l = r.f64();
  p.arm.joint_min = r.f64();
  p.arm.joint_max = r.f64();
  p.limits.max_step = r.f64();
  p.limits.max_rot = r.f64();
  const auto n_objects = r.u64();
  if (n_objects > 1024) throw std::runtime_error("policy file: implausible object count");
  for (std::uint64_t i = 0; i < n_objects; ++i) p.objects.push_back(r.str());
  p.trained_on = r.u64();
  const auto dims_limit = std::uint64_t{1} << 32;
  if (p.kind == PolicyKind::Knn) {
    p.k = static_cast<int>(r.u64());
    const auto n = r.u64();
    const auto d = r.u64();
    if (n * d >= dims_limit) throw std::runtime_error("policy file: implausible size");
    p.inputs.assign(n, std::vector<double>(d));
    p.outputs.assign(n, Action{});
    for (std::uint64_t i = 0; i < n; ++i) {
      for (auto& v : p.inputs[i]) v = r.f64();
      for (auto& v : p.outputs[i]) v = r.f64();
    }
    const auto n_scale = r.u64();
    if (n_scale != 0 && n_scale != d) throw std::runtime_error("policy file: scale size mismatch");
    p.scale.resize(n_scale);
    for (auto& v : p.scale) v = r.f64();
  } else {
    const auto rows = r.u64();
    const auto cols = r.u64();
    if (rows * cols >= dims_limit) throw std::runtime_error("policy file: implausible size");
    p.weights.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < p.weights.rows(); ++i) {
      for (Eigen::Index j = 0; j < p.weights.cols(); ++j) p.weights(i, j) = r.f64();
    }
  }
  return p;
}

world::Command PolicyOperator::act(const Observation& obs, const gate::Prompt&) { return policy_.act(obs); }

double SeedResult::filtered() const {
  const int kept = attempts - tamp_failures;
  return kept == 0 ? 0.0 : static_cast<double>(successes) / kept;
}
double SeedResult::raw() const { return attempts == 0 ? 0.0 : static_cast<double>(successes) / attempts; }
double SeedResult::tamp() const {
  return attempts == 0 ? 0.0 : static_cast<double>(attempts - tamp_failures) / attempts;
}

EvalResult evaluate_gated(const Policy& policy, const Task& task, const learn::ConstraintRegistry& constraints,
                          const EvalOptions& options) {
  if (options.rollouts < 1) throw std::invalid_argument("rollouts must be at least 1");
  if (options.seeds.empty()) throw std::invalid_argument("no evaluation seeds");
  EvalResult result;
  for (const auto seed : options.seeds) {
    SeedResult sr;
    sr.seed = seed;
    const int cap = options.attempt_factor * options.rollouts;
    while (sr.attempts - sr.tamp_failures < options.rollouts && sr.attempts < cap) {
      const std::uint64_t ep_seed = seed * 1000003ULL + static_cast<std::uint64_t>(sr.attempts);
      PolicyOperator op(policy);
      gate::GateOptions g = options.gate;
      g.seed = ep_seed;
      const auto run = gate::run_gated(task, task.sample_world(ep_seed), op, constraints, g);
      const auto& out = run.episode.outcome;
      ++sr.attempts;
      ++sr.reasons[std::string(to_string(out.reason))];
      if (out.success) ++sr.successes;
      if (out.reason == OutcomeReason::TampFailure || out.reason == OutcomeReason::PlanFailure) ++sr.tamp_failures;
    }
    for (const auto& [k, v] : sr.reasons) result.reasons[k] += v;
    result.per_seed.push_back(sr);
  }
  for (const auto& s : result.per_seed) {
    result.filtered_sr += s.filtered();
    result.raw_sr += s.raw();
    result.tamp_sr += s.tamp();
  }
  const double n = static_cast<double>(result.per_seed.size());
  result.filtered_sr /= n;
  result.raw_sr /= n;
  result.tamp_sr /= n;
  return result;
}

}  // namespace hitl::imitate
