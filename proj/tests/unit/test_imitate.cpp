#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>

#include <Eigen/Dense>

#include "doctest.h"
#include "hitl/imitate.hpp"
#include "test_support.hpp"

using namespace hitl;
using namespace hitl::imitate;
using world::Pose2;

namespace {

const Task& hang() { return test::shipped("tool-hang-2d"); }

Observation random_obs(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.5, 1.5), a(-3.1, 3.1);
  std::bernoulli_distribution coin(0.5);
  Observation obs;
  for (const char* name : {"frame", "stand", "tool"}) obs.objects[name] = {u(rng), u(rng), a(rng)};
  obs.config = {a(rng), a(rng), a(rng)};
  obs.gripper_closed = coin(rng);
  return obs;
}

Episode synthetic(std::size_t n, std::uint64_t seed, const std::function<world::Command(const std::vector<double>&)>& f,
                  Controller label = Controller::Human) {
  std::mt19937_64 rng(seed);
  Episode ep;
  ep.task = "tool-hang-2d";
  for (std::size_t i = 0; i < n; ++i) {
    EpisodeStep s;
    s.t = static_cast<std::int64_t>(i);
    s.obs = random_obs(rng);
    s.action = f(featurize(hang().scene->arm, s.obs));
    s.label = label;
    ep.steps.push_back(s);
  }
  return ep;
}

std::vector<Episode> oracle_corpus(const Task& task, int n, double noise) {
  std::vector<Episode> out;
  for (int i = 0; i < n; ++i) {
    const auto seed = static_cast<std::uint64_t>(i);
    gate::ScriptedOracle oracle(task, noise, seed);
    gate::GateOptions opt;
    opt.seed = seed;
    out.push_back(gate::run_gated(task, task.sample_world(seed), oracle, test::bootstrapped(task.name), opt).episode);
  }
  return out;
}

}  // namespace

TEST_CASE("featurize layout") {
  const auto& arm = hang().scene->arm;
  Observation obs;
  obs.config = {0.0, 0.0, 0.0};
  obs.objects = {{"frame", {3.0, 1.0, 0.5}}, {"stand", {2.0, 0.0, 0.0}}, {"tool", {3.0, -1.0, -0.5}}};
  obs.gripper_closed = true;
  const auto x = featurize(arm, obs);
  REQUIRE(x.size() == 3 * 4 + 5);
  // Objects in name order, relative to the end effector at (3, 0, 0).
  CHECK(x[0] == doctest::Approx(0.0));
  CHECK(x[1] == doctest::Approx(1.0));
  CHECK(x[2] == doctest::Approx(std::sin(0.5)));
  CHECK(x[3] == doctest::Approx(std::cos(0.5)));
  CHECK(x[4] == doctest::Approx(-1.0));
  CHECK(x[5] == doctest::Approx(0.0));
  CHECK(x[12] == doctest::Approx(3.0));
  CHECK(x[13] == doctest::Approx(0.0));
  CHECK(x[16] == 1.0);
}

TEST_CASE("linear training recovers a planted model as the ridge vanishes") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n01;
  const std::size_t d = 17;
  Eigen::MatrixXd W(4, d + 1);
  for (Eigen::Index r = 0; r < 3; ++r) {
    for (Eigen::Index c = 0; c <= static_cast<Eigen::Index>(d); ++c) W(r, c) = n01(rng);
  }
  W.row(3).setZero();  // grip stays 0 so the boolean channel is exact
  const auto f = [&](const std::vector<double>& x) {
    Eigen::VectorXd v(d + 1);
    for (std::size_t j = 0; j < d; ++j) v(static_cast<Eigen::Index>(j)) = x[j];
    v(static_cast<Eigen::Index>(d)) = 1.0;
    const Eigen::VectorXd y = W * v;
    return world::Command{y(0), y(1), y(2), false};
  };
  TrainOptions opt;
  opt.kind = PolicyKind::Linear;
  opt.ridge = 1e-12;
  const auto policy = train(hang(), {synthetic(400, 2, f)}, opt);
  REQUIRE(policy.weights.rows() == 4);
  REQUIRE(policy.weights.cols() == static_cast<Eigen::Index>(d + 1));
  CHECK((policy.weights - W).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("linear training loss matches an independent ridge solution") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n01;
  const auto f = [&](const std::vector<double>& x) {
    return world::Command{0.3 * x[0] - x[5] + 0.1 * n01(rng), x[12] * x[13] + 0.1 * n01(rng), std::sin(x[2]), x[16] > 0.5};
  };
  const std::vector<Episode> data{synthetic(300, 4, f)};
  TrainOptions opt;
  opt.kind = PolicyKind::Linear;
  opt.ridge = 0.5;
  const auto policy = train(hang(), data, opt);

  // Augmented least squares: [X; sqrt(l) [I 0]] w = [Y; 0], solved by QR.
  std::vector<std::vector<double>> xs;
  std::vector<Action> ys;
  for (const auto& s : data[0].steps) {
    xs.push_back(featurize(hang().scene->arm, s.obs));
    ys.push_back(to_action(s.action));
  }
  const auto n = static_cast<Eigen::Index>(xs.size());
  const auto d = static_cast<Eigen::Index>(xs[0].size());
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n + d, d + 1);
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(n + d, 4);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) A(i, j) = xs[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    A(i, d) = 1.0;
    for (int c = 0; c < 4; ++c) B(i, c) = ys[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
  }
  for (Eigen::Index j = 0; j < d; ++j) A(n + j, j) = std::sqrt(opt.ridge);
  const Eigen::MatrixXd Wt = A.colPivHouseholderQr().solve(B);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) loss += (A.row(i) * Wt - B.row(i)).squaredNorm();
  loss /= static_cast<double>(n);
  CHECK(std::abs(bc_loss(policy, data) - loss) < 1e-9);

  // The ridge objective is locally minimal at the trained weights.
  const auto objective = [&](const Eigen::MatrixXd& w) {
    double j = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) j += (A.row(i) * w.transpose() - B.row(i)).squaredNorm();
    return j + opt.ridge * w.leftCols(d).squaredNorm();
  };
  const double base = objective(policy.weights);
  std::uniform_int_distribution<Eigen::Index> row(0, 3), col(0, d);
  for (int k = 0; k < 50; ++k) {
    Eigen::MatrixXd w = policy.weights;
    w(row(rng), col(rng)) += (k % 2 == 0 ? 1e-4 : -1e-4);
    CHECK(objective(w) >= base);
  }
}

TEST_CASE("knn with k = 1 returns the stored action for a training observation") {
  const auto f = [](const std::vector<double>& x) { return world::Command{x[0] * 0.01, -x[1] * 0.01, 0.02, x[0] > 0}; };
  const std::vector<Episode> data{synthetic(100, 5, f)};
  TrainOptions opt;
  opt.k = 1;
  const auto policy = train(hang(), data, opt);
  for (const auto& s : data[0].steps) {
    const auto a = policy.predict(featurize(policy.arm, s.obs));
    CHECK(a == to_action(s.action));
  }
}

TEST_CASE("training uses human-labelled steps only") {
  const auto f = [](const std::vector<double>&) { return world::Command{0.01, 0.0, 0.0, true}; };
  const auto tamp_only = synthetic(30, 6, f, Controller::Tamp);
  CHECK_THROWS_AS(train(hang(), {tamp_only}), NoHumanData);
  CHECK_THROWS_AS(train(hang(), {synthetic(10, 6, f, Controller::Policy)}), NoHumanData);

  auto mixed = synthetic(40, 7, f);
  for (std::size_t i = 0; i < mixed.steps.size(); i += 3) mixed.steps[i].label = Controller::Tamp;
  const auto policy = train(hang(), {mixed, tamp_only});
  std::size_t human = 0;
  for (const auto& s : mixed.steps) human += s.label == Controller::Human ? 1 : 0;
  CHECK(policy.inputs.size() == human);
  CHECK(count_training_pairs({mixed, tamp_only}) == human);

  auto other = mixed;
  other.task = "coffee-2d";
  CHECK_THROWS_AS(train(hang(), {other}), std::invalid_argument);
}

TEST_CASE("policy outputs are clamped to the command bounds") {
  const auto f = [](const std::vector<double>&) { return world::Command{5.0, -5.0, 9.0, true}; };
  const auto policy = train(hang(), {synthetic(20, 8, f)});
  std::mt19937_64 rng(9);
  const auto cmd = policy.act(random_obs(rng));
  CHECK(cmd.dx == doctest::Approx(policy.limits.max_step));
  CHECK(cmd.dy == doctest::Approx(-policy.limits.max_step));
  CHECK(cmd.dtheta == doctest::Approx(policy.limits.max_rot));
  CHECK(cmd.grip);
}

TEST_CASE("policy files round-trip") {
  const auto f = [](const std::vector<double>& x) { return world::Command{x[0] * 0.01, x[3] * 0.01, -0.01, x[16] > 0.5}; };
  const std::vector<Episode> data{synthetic(60, 10, f)};
  const auto dir = std::filesystem::temp_directory_path();
  for (auto kind : {PolicyKind::Knn, PolicyKind::Linear}) {
    TrainOptions opt;
    opt.kind = kind;
    const auto policy = train(hang(), data, opt);
    const auto path = dir / ("hitl_policy_" + std::string(to_string(kind)) + ".bin");
    policy.save(path);
    const auto back = Policy::load(path);
    CHECK(back == policy);
    std::filesystem::remove(path);
  }
  const auto bad = dir / "hitl_policy_bad.bin";
  {
    std::ofstream out(bad, std::ios::binary);
    out << "NOTAPOLICY";
  }
  CHECK_THROWS(Policy::load(bad));
  std::filesystem::remove(bad);
}

TEST_CASE("gated evaluation of an exact oracle replay succeeds on every rollout") {
  // Rollouts of seed 0 use episode seeds 0, 1, 2, ...; a k = 1 policy trained
  // on oracle runs with those seeds replays them exactly.
  const Task& task = hang();
  const auto corpus = oracle_corpus(task, 20, 0.0);
  TrainOptions opt;
  opt.k = 1;
  const auto policy = train(task, corpus, opt);
  EvalOptions eval;
  eval.rollouts = 20;
  const auto r = evaluate_gated(policy, task, test::bootstrapped(task.name), eval);
  CHECK(r.filtered_sr == 1.0);
  CHECK(r.raw_sr == 1.0);
  CHECK(r.per_seed.at(0).attempts == 20);
}

TEST_CASE("a zero-output policy never succeeds") {
  const Task& task = hang();
  Policy zero;
  zero.kind = PolicyKind::Linear;
  zero.task = task.name;
  zero.arm = task.scene->arm;
  zero.limits = task.scene->limits;
  zero.objects = {"frame", "stand", "tool"};
  zero.weights = Eigen::MatrixXd::Zero(4, 3 * 4 + 5 + 1);
  EvalOptions eval;
  eval.rollouts = 5;
  eval.gate.segment_cap = 100;
  const auto r = evaluate_gated(zero, task, test::bootstrapped(task.name), eval);
  CHECK(r.filtered_sr == 0.0);
  CHECK(r.raw_sr == 0.0);
  CHECK(r.reasons.at("operator-timeout") == r.per_seed[0].attempts - r.per_seed[0].tamp_failures);
}

TEST_CASE("filtered success rate is never below the raw rate") {
  SeedResult s;
  for (int attempts = 1; attempts < 30; ++attempts) {
    for (int tamp = 0; tamp < attempts; ++tamp) {
      for (int ok = 0; ok + tamp <= attempts; ++ok) {
        s.attempts = attempts;
        s.tamp_failures = tamp;
        s.successes = ok;
        CHECK(s.filtered() >= s.raw());
      }
    }
  }
}
