#include <optional>
#include <set>

#include "doctest.h"
#include "hitl/gate.hpp"
#include "hitl/service.hpp"
#include "test_support.hpp"

using namespace hitl;
using hub::Service;
using hub::ServiceOptions;
using hub::WireClient;

namespace {

learn::ConstraintRegistry bootstrap(const Task& task) {
  std::vector<Episode> demos;
  for (std::uint64_t s = 0; s < 3; ++s) demos.push_back(gate::bootstrap_demo(task, 1000 + s));
  return learn::learn_all(task, demos, task.delta);
}

Observation from_snapshot(const wire::Snapshot& s) {
  Observation obs;
  for (const auto& o : s.objects) obs.objects[o.name] = o.pose;
  obs.config = s.config;
  obs.gripper_closed = s.gripper;
  return obs;
}

template <class T>
T receive_until(WireClient& c) {
  for (;;) {
    auto f = c.receive();
    if (auto* x = std::get_if<T>(&f)) return *x;
  }
}

}  // namespace

TEST_CASE("a new client gets the queue frame, empty before any handoff") {
  const Task& task = test::shipped("tool-hang-2d");
  ServiceOptions opt;
  opt.pace = 1.0;  // real time keeps the first handoff seconds away
  Service svc(task, bootstrap(task), opt);
  svc.start();
  WireClient c("127.0.0.1", svc.port());
  const auto first = c.receive();
  REQUIRE(std::holds_alternative<wire::Queue>(first));
  CHECK(std::get<wire::Queue>(first).waiting.empty());
  CHECK_FALSE(std::get<wire::Queue>(first).active.has_value());
  c.close();
  svc.stop();
}

TEST_CASE("act frames are refused unless they come from the operator for the delegated session") {
  const Task& task = test::shipped("tool-hang-2d");
  ServiceOptions opt;
  opt.pace = 1.0;
  Service svc(task, bootstrap(task), opt);
  svc.start();
  WireClient c("127.0.0.1", svc.port());

  c.send(wire::Act{0, 0.01, 0.0, 0.0, false});
  CHECK(receive_until<wire::Error>(c).code == "not-operator");

  c.send(wire::Hello{"operator"});
  c.send(wire::Act{0, 0.01, 0.0, 0.0, false});
  CHECK(receive_until<wire::Error>(c).code == "not-your-session");

  // Malformed input earns an error frame and the connection stays usable.
  c.send_text("{not json");
  CHECK(receive_until<wire::Error>(c).code == "malformed");
  c.send_text(R"({"type":"teleport"})");
  CHECK(receive_until<wire::Error>(c).code == "unknown-type");
  c.send(wire::Act{3, 0.0, 0.0, 0.0, false});
  CHECK(receive_until<wire::Error>(c).code == "not-your-session");

  WireClient second("127.0.0.1", svc.port());
  second.send(wire::Hello{"operator"});
  CHECK(receive_until<wire::Error>(second).code == "operator-taken");
  c.close();
  second.close();
  svc.stop();
}

TEST_CASE("an oracle driven over the wire reproduces the in-process episodes") {
  const Task& task = test::shipped("tool-hang-2d");
  const auto reg = bootstrap(task);
  ServiceOptions opt;
  opt.pace = 0.0;
  opt.max_episodes = 3;
  opt.seed = 42;
  Service svc(task, reg, opt);
  svc.start();

  WireClient c("127.0.0.1", svc.port());
  c.send(wire::Hello{"operator"});
  gate::ScriptedOracle oracle(task);
  std::optional<wire::Prompt> prompt;
  std::map<int, std::int64_t> last_t;
  int done = 0;
  while (done < opt.max_episodes) {
    const auto frame = c.receive();
    if (const auto* p = std::get_if<wire::Prompt>(&frame)) {
      prompt = *p;
    } else if (const auto* s = std::get_if<wire::Snapshot>(&frame)) {
      if (last_t.count(s->session)) CHECK(s->t > last_t[s->session]);
      last_t[s->session] = s->t;
      if (s->mode == "human" && prompt && prompt->session == s->session) {
        const gate::Prompt gp{s->session, prompt->schema, prompt->child, prompt->parent, 0};
        const auto cmd = oracle.act(from_snapshot(*s), gp);
        c.send(wire::Act{s->session, cmd.dx, cmd.dy, cmd.dtheta, cmd.grip});
      }
    } else if (std::holds_alternative<wire::Done>(frame)) {
      ++done;
    }
  }
  svc.wait();
  svc.stop();

  const auto remote = svc.episodes();
  REQUIRE(remote.size() == 3);
  int handoffs = 0;
  for (std::uint64_t k = 0; k < 3; ++k) {
    gate::ScriptedOracle local(task);
    gate::GateOptions g;
    g.seed = Service::episode_seed(opt.seed, 0, k);
    const auto run = gate::run_gated(task, task.sample_world(g.seed), local, reg, g);
    CHECK(remote[k].outcome == run.episode.outcome);
    CHECK(remote[k] == run.episode);
    handoffs += run.episode.outcome.handoff_count;
  }
  CHECK(handoffs > 0);

  // The event log follows the fleet rules.
  fleet::FleetConfig cfg;
  cfg.warmup = 0.0;
  CHECK_NOTHROW(fleet::summarize(cfg, svc.events(), 60.0));
}

TEST_CASE("an operator leaving mid-segment puts the session back at the front of the queue") {
  const Task& task = test::shipped("tool-hang-2d");
  ServiceOptions opt;
  opt.pace = 0.0;
  opt.n_robot = 2;
  Service svc(task, bootstrap(task), opt);
  svc.start();

  int interrupted = -1;
  {
    WireClient c("127.0.0.1", svc.port());
    c.send(wire::Hello{"operator"});
    const auto prompt = receive_until<wire::Prompt>(c);
    interrupted = prompt.session;
    for (;;) {
      const auto s = receive_until<wire::Snapshot>(c);
      if (s.mode == "human" && s.session == interrupted) break;
    }
    c.close();
  }

  WireClient observer("127.0.0.1", svc.port());
  wire::Queue q;
  do {
    q = receive_until<wire::Queue>(observer);
  } while (q.active.has_value() || q.waiting.empty() || q.waiting.front() != interrupted);
  CHECK(q.waiting.front() == interrupted);

  observer.send(wire::Hello{"operator"});
  CHECK(receive_until<wire::Prompt>(observer).session == interrupted);
  observer.close();
  svc.stop();

  // Start, then the re-enqueue, then Start again for the same session.
  std::vector<fleet::FleetEvent::Kind> kinds;
  for (const auto& e : svc.events()) {
    if (e.session == interrupted) kinds.push_back(e.kind);
  }
  using K = fleet::FleetEvent::Kind;
  REQUIRE(kinds.size() >= 4);
  CHECK(kinds[0] == K::Enqueue);
  CHECK(kinds[1] == K::Start);
  CHECK(kinds[2] == K::Enqueue);
  CHECK(kinds[3] == K::Start);
}
