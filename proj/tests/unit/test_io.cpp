#include <filesystem>
#include <random>

#include "doctest.h"
#include "hitl/dataset.hpp"
#include "hitl/gate.hpp"
#include "hitl/wire.hpp"
#include "json.hpp"
#include "test_support.hpp"

using namespace hitl;

namespace {

EpisodeStep step(Controller label, std::int64_t t = 0) {
  EpisodeStep s;
  s.t = t;
  s.label = label;
  return s;
}

Episode labelled(const std::string& task, std::string_view labels) {
  Episode ep;
  ep.task = task;
  std::int64_t t = 0;
  for (char c : labels) ep.steps.push_back(step(c == 'H' ? Controller::Human : c == 'P' ? Controller::Policy : Controller::Tamp, t++));
  return ep;
}

Episode random_episode(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  std::uniform_int_distribution<int> len(0, 12), lab(0, 2), coin(0, 1);
  Episode ep;
  ep.task = "tool-hang-2d";
  ep.seed = rng();
  const int n = len(rng);
  for (int i = 0; i < n; ++i) {
    EpisodeStep s;
    s.t = i;
    s.obs.t = i;
    s.obs.objects["frame"] = {u(rng), u(rng), u(rng)};
    s.obs.objects["tool"] = {u(rng), u(rng), u(rng)};
    s.obs.config = {u(rng), u(rng), u(rng)};
    s.obs.gripper_closed = coin(rng) == 1;
    if (s.obs.gripper_closed && coin(rng) == 1) s.obs.held = "frame";
    s.action = {u(rng), u(rng), u(rng), coin(rng) == 1};
    s.label = static_cast<Controller>(lab(rng));
    s.schema_index = lab(rng) - 1;
    if (s.label == Controller::Tamp) s.joint_target = world::JointVector{u(rng), u(rng), u(rng)};
    ep.steps.push_back(std::move(s));
  }
  ep.outcome.success = coin(rng) == 1;
  ep.outcome.reason = ep.outcome.success ? OutcomeReason::GoalReached : OutcomeReason::OperatorTimeout;
  ep.outcome.handoff_count = len(rng);
  ep.outcome.detail = coin(rng) == 1 ? "" : "note \"quoted\"\n";
  return ep;
}

}  // namespace

TEST_CASE("episode segments are maximal runs") {
  CHECK(labelled("x", "").segments().empty());
  const auto segs = labelled("x", "TTHHHTPPT").segments();
  REQUIRE(segs.size() == 5);
  const std::vector<std::tuple<Controller, std::size_t, std::size_t>> expected{
      {Controller::Tamp, 0, 2}, {Controller::Human, 2, 5}, {Controller::Tamp, 5, 6}, {Controller::Policy, 6, 8},
      {Controller::Tamp, 8, 9}};
  for (std::size_t i = 0; i < segs.size(); ++i) {
    CHECK(segs[i].label == std::get<0>(expected[i]));
    CHECK(segs[i].begin == std::get<1>(expected[i]));
    CHECK(segs[i].end == std::get<2>(expected[i]));
  }
}

TEST_CASE("segments partition the steps") {
  std::mt19937_64 rng(3);
  for (int n = 0; n < 200; ++n) {
    const auto ep = random_episode(rng);
    std::size_t next = 0;
    const auto segs = ep.segments();
    for (std::size_t i = 0; i < segs.size(); ++i) {
      CHECK(segs[i].begin == next);
      CHECK(segs[i].length() > 0);
      if (i > 0) CHECK(segs[i].label != segs[i - 1].label);
      for (std::size_t k = segs[i].begin; k < segs[i].end; ++k) CHECK(ep.steps[k].label == segs[i].label);
      next = segs[i].end;
    }
    CHECK(next == ep.steps.size());
  }
}

TEST_CASE("segment statistics average per episode first") {
  // Episode A: human runs of 2 and 4 (mean 3). Episode B: one run of 9.
  // Episode C has none and is left out of the human mean.
  // Pooled runs would give 5; per-episode averaging gives (3 + 9) / 2 = 6.
  const std::vector<Episode> eps{labelled("t", "TTHHTTHHHHT"), labelled("t", "THHHHHHHHHT"), labelled("t", "TTTT")};
  CHECK(data::mean_human_segment(eps[0]) == doctest::Approx(3.0));
  CHECK(data::mean_human_segment(eps[2]) == 0.0);
  const auto st = data::stats(eps).at("t");
  CHECK(st.episodes == 3);
  CHECK(st.handoffs == 3);
  CHECK(st.mean_human_segment == doctest::Approx(6.0));
  CHECK(st.mean_trajectory == doctest::Approx((11.0 + 11.0 + 4.0) / 3.0));
  CHECK(st.mean_handoffs == doctest::Approx(1.0));
  CHECK_THROWS_AS(data::stats({}), std::invalid_argument);
}

TEST_CASE("stats split by task") {
  const std::vector<Episode> eps{labelled("b", "THT"), labelled("a", "TT"), labelled("b", "T")};
  const auto st = data::stats(eps);
  REQUIRE(st.size() == 2);
  CHECK(st.begin()->first == "a");
  CHECK(st.at("b").episodes == 2);
  CHECK(st.at("a").mean_human_segment == 0.0);
}

TEST_CASE("dataset text round-trips random episodes") {
  std::mt19937_64 rng(11);
  std::vector<Episode> eps;
  for (int n = 0; n < 50; ++n) eps.push_back(random_episode(rng));
  const auto text = data::to_text(eps);
  CHECK(text.rfind(data::header_line() + "\n", 0) == 0);
  CHECK(data::parse(text) == eps);
  for (const auto& ep : eps) CHECK(data::from_json_line(data::to_json_line(ep)) == ep);
}

TEST_CASE("dataset files round-trip gated episodes") {
  const Task& task = test::shipped("coffee-2d");
  std::vector<Episode> eps;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    gate::ScriptedOracle oracle(task, 0.1, seed);
    gate::GateOptions opt;
    opt.seed = seed;
    eps.push_back(gate::run_gated(task, task.sample_world(seed), oracle, test::bootstrapped("coffee-2d"), opt).episode);
  }
  const auto path = std::filesystem::temp_directory_path() / "hitl_io_roundtrip.jsonl";
  data::save(path, eps);
  CHECK(data::load(path) == eps);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(data::load(path), std::runtime_error);
}

TEST_CASE("dataset loading rejects bad input with line numbers") {
  const std::string header = data::header_line() + "\n";
  const std::string good = data::to_json_line(labelled("t", "TH")) + "\n";

  const auto line_of = [](const std::string& text) -> std::size_t {
    try {
      data::parse(text);
    } catch (const data::DatasetError& e) {
      return e.line();
    }
    return 999;
  };
  CHECK(line_of("") == 0);
  CHECK(line_of(good) == 1);
  CHECK(line_of(R"({"format":"hitl-episodes","version":2})" "\n") == 1);
  CHECK(line_of(header + good + "{not json}\n") == 3);
  CHECK(line_of(header + good + good + R"({"task":"t"})" "\n") == 4);
  CHECK(data::parse(header).empty());
  CHECK(data::parse(header + good + "\n" + good).size() == 2);  // blank lines are skipped
  CHECK_THROWS_AS(data::from_json_line("[1,2]"), std::invalid_argument);
}

TEST_CASE("wire frames round-trip") {
  const std::vector<wire::Frame> frames{
      wire::Snapshot{2, 40, {{"frame", {1.0, -0.5, 0.25}}}, {0.1, 0.2, 0.3}, true, "human"},
      wire::Snapshot{},
      wire::Queue{{3, 1}, 0},
      wire::Queue{},
      wire::Prompt{1, "attach", "frame", "stand"},
      wire::Done{1, "goal-reached"},
      wire::Error{"not-your-session"},
      wire::Act{1, 0.01, -0.02, 0.05, true},
      wire::Hello{"observer"},
  };
  for (const auto& f : frames) {
    CAPTURE(wire::encode(f));
    CHECK(wire::decode(wire::encode(f)) == f);
  }
}

TEST_CASE("wire frames match the documented layout") {
  CHECK(wire::encode(wire::Queue{{}, std::nullopt}) == R"({"active":null,"type":"queue","waiting":[]})");
  CHECK(wire::encode(wire::Act{0, 0.0, 0.0, 0.0, true}) ==
        R"({"dtheta":0.0,"dx":0.0,"dy":0.0,"grip":1,"session":0,"type":"act"})");
  const auto act = std::get<wire::Act>(wire::decode(R"({"type":"act","session":3,"dx":0.1,"dy":0,"dtheta":-0.2,"grip":0})"));
  CHECK(act == wire::Act{3, 0.1, 0.0, -0.2, false});
}

TEST_CASE("wire decode rejects frames outside the schema") {
  const auto code_of = [](std::string_view text) -> std::string {
    try {
      wire::decode(text);
    } catch (const wire::ProtocolError& e) {
      return e.code();
    }
    return "accepted";
  };
  CHECK(code_of("{") == "malformed");
  CHECK(code_of("[]") == "malformed");
  CHECK(code_of(R"({"session":1})") == "malformed");
  CHECK(code_of(R"({"type":"teleport"})") == "unknown-type");
  CHECK(code_of(R"({"type":"act","session":1,"dx":0,"dy":0,"dtheta":0})") == "invalid-frame");
  CHECK(code_of(R"({"type":"act","session":1,"dx":0,"dy":0,"dtheta":0,"grip":1,"extra":2})") == "invalid-frame");
  CHECK(code_of(R"({"type":"act","session":1,"dx":"0","dy":0,"dtheta":0,"grip":1})") == "invalid-frame");
  CHECK(code_of(R"({"type":"act","session":1.5,"dx":0,"dy":0,"dtheta":0,"grip":1})") == "invalid-frame");
  CHECK(code_of(R"({"type":"act","session":1,"dx":0,"dy":0,"dtheta":0,"grip":2})") == "invalid-frame");
  CHECK(code_of(R"({"type":"act","session":1,"dx":0,"dy":0,"dtheta":0,"grip":true})") == "invalid-frame");
  CHECK(code_of(R"({"type":"hello","role":"admin"})") == "invalid-frame");
  CHECK(code_of(R"({"type":"snapshot","session":0,"t":0,"objects":[],"config":[0,0],"gripper":0,"mode":"tamp"})") ==
        "invalid-frame");
  CHECK(code_of(R"({"type":"snapshot","session":0,"t":0,"objects":[],"config":[0,0,0],"gripper":0,"mode":"idle"})") ==
        "invalid-frame");
  CHECK(code_of(R"({"type":"queue","waiting":[1],"active":"x"})") == "invalid-frame");
  CHECK(code_of(R"({"type":"hello","role":"operator"})") == "accepted");
}

TEST_CASE("wire decode never accepts a mutated frame silently") {
  // Dropping any single field from a valid frame must be rejected.
  const std::string act = wire::encode(wire::Act{1, 0.1, 0.2, 0.3, true});
  auto j = nlohmann::json::parse(act);
  for (const auto& [key, value] : j.items()) {
    if (key == "type") continue;
    auto broken = j;
    broken.erase(key);
    CAPTURE(key);
    CHECK_THROWS_AS(wire::decode(broken.dump()), wire::ProtocolError);
  }
}
