#include "hitl/fleet.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <queue>
#include <random>
#include <thread>
#include <tuple>

namespace hitl::fleet {

std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::Tamp: return "tamp";
    case Mode::Waiting: return "waiting";
    case Mode::Human: return "human";
  }
  return "?";
}

std::string_view to_string(Distribution d) { return d == Distribution::Constant ? "constant" : "exponential"; }

Distribution parse_distribution(std::string_view text) {
  if (text == "constant") return Distribution::Constant;
  if (text == "exponential") return Distribution::Exponential;
  throw std::invalid_argument("unknown distribution '" + std::string(text) + "'");
}

std::string_view to_string(FleetEvent::Kind k) {
  switch (k) {
    case FleetEvent::Kind::Enqueue: return "enqueue";
    case FleetEvent::Kind::Start: return "start";
    case FleetEvent::Kind::Release: return "release";
    case FleetEvent::Kind::Finish: return "finish";
  }
  return "?";
}

bool FleetConfig::operator_on(double seconds) const {
  if (duty >= 100.0) return true;
  const double period = cycle * 60.0;
  const double phase = seconds - period * std::floor(seconds / period);
  return phase < t_on() * 60.0;
}

double FleetConfig::next_on(double seconds) const {
  if (operator_on(seconds)) return seconds;
  const double period = cycle * 60.0;
  return period * (std::floor(seconds / period) + 1.0);
}

void FleetConfig::validate() const {
  if (n_robot < 1) throw std::invalid_argument("n_robot must be at least 1");
  if (!(rate_h > 0.0) || !(rate_t > 0.0)) throw std::invalid_argument("rates must be positive");
  if (!(duty > 0.0) || duty > 100.0) throw std::invalid_argument("duty cycle must be in (0, 100]");
  if (!(cycle > 0.0)) throw std::invalid_argument("cycle must be positive");
  if (warmup < 0.0) throw std::invalid_argument("warm-up must be non-negative");
}

int min_fleet(double rate_h, double rate_t, double duty) {
  if (!(rate_t > 0.0)) throw std::invalid_argument("R_T must be positive");
  if (rate_h < 0.0) throw std::invalid_argument("R_H must be non-negative");
  if (!(duty > 0.0) || duty > 100.0) throw std::invalid_argument("duty cycle must be in (0, 100]");
  const double bound = 1.0 + (rate_h / rate_t) * (duty / 100.0);
  return static_cast<int>(std::ceil(bound - 1e-9));
}

namespace {

// Operator on-time inside [a, b], seconds.
double on_time(const FleetConfig& c, double a, double b) {
  if (b <= a) return 0.0;
  if (c.duty >= 100.0) return b - a;
  const double period = c.cycle * 60.0;
  const double on = c.t_on() * 60.0;
  double total = 0.0;
  for (double k = std::floor(a / period); k * period < b; k += 1.0) {
    const double lo = std::max(a, k * period);
    const double hi = std::min(b, k * period + on);
    if (hi > lo) total += hi - lo;
  }
  return total;
}

double overlap(double a, double b, double lo, double hi) { return std::max(0.0, std::min(b, hi) - std::max(a, lo)); }

}  // namespace

FleetStats summarize(const FleetConfig& config, const std::vector<FleetEvent>& events, double horizon_minutes) {
  using Kind = FleetEvent::Kind;
  FleetStats st;
  st.n_robot = config.n_robot;
  const double h = std::max(0.0, horizon_minutes) * 60.0;
  const double w0 = std::min(config.warmup * 60.0, h);
  st.window = (h - w0) / 60.0;

  st.sessions.resize(static_cast<std::size_t>(config.n_robot));
  std::vector<double> since(st.sessions.size(), 0.0);
  for (std::size_t i = 0; i < st.sessions.size(); ++i) st.sessions[i].id = static_cast<int>(i);

  std::deque<int> queue;
  std::optional<int> active;
  double last = 0.0, busy = 0.0, queue_area = 0.0;

  const auto advance = [&](double t) {
    queue_area += overlap(last, t, w0, h) * static_cast<double>(queue.size());
    if (active) busy += on_time(config, std::max(last, w0), std::min(t, h));
    last = t;
  };
  const auto set_mode = [&](int s, Mode m, double t) {
    auto& rec = st.sessions[static_cast<std::size_t>(s)];
    rec.time_in[rec.mode] += overlap(since[static_cast<std::size_t>(s)], t, w0, h);
    since[static_cast<std::size_t>(s)] = t;
    rec.mode = m;
  };
  const auto fail = [](const FleetEvent& e, const std::string& what) {
    throw std::logic_error("session " + std::to_string(e.session) + " at " + std::to_string(e.time) + "s: " + what);
  };

  for (const auto& e : events) {
    if (e.time > h) break;
    if (e.time < last) fail(e, "events out of time order");
    if (e.session < 0 || e.session >= config.n_robot) fail(e, "unknown session");
    advance(e.time);
    const bool in_window = e.time >= w0;
    auto& rec = st.sessions[static_cast<std::size_t>(e.session)];
    switch (e.kind) {
      case Kind::Enqueue:
        if (rec.mode == Mode::Human && active == e.session) {
          // Interrupted segment goes back to the front of the queue.
          active.reset();
          queue.push_front(e.session);
        } else if (rec.mode == Mode::Tamp) {
          queue.push_back(e.session);
        } else {
          fail(e, "enqueue while " + std::string(to_string(rec.mode)));
        }
        rec.enqueued_at = e.time;
        set_mode(e.session, Mode::Waiting, e.time);
        break;
      case Kind::Start:
        if (rec.mode != Mode::Waiting) fail(e, "start while " + std::string(to_string(rec.mode)));
        if (active) fail(e, "operator already serving session " + std::to_string(*active));
        if (queue.empty() || queue.front() != e.session) fail(e, "dequeue out of FIFO order");
        queue.pop_front();
        active = e.session;
        set_mode(e.session, Mode::Human, e.time);
        if (in_window) ++st.handoffs;
        break;
      case Kind::Release:
        if (rec.mode != Mode::Human || active != e.session) fail(e, "release without control");
        active.reset();
        set_mode(e.session, Mode::Tamp, e.time);
        break;
      case Kind::Finish:
        if (rec.mode != Mode::Tamp) fail(e, "finish while " + std::string(to_string(rec.mode)));
        if (in_window) {
          (e.success ? st.demos : st.failures) += 1;
          ++st.reasons[e.reason];
        }
        break;
    }
    if (e.kind == Kind::Enqueue || e.kind == Kind::Start) st.queue_trace.emplace_back(e.time, static_cast<int>(queue.size()));
    st.events.push_back(e);
  }
  advance(h);
  for (std::size_t s = 0; s < st.sessions.size(); ++s) set_mode(static_cast<int>(s), st.sessions[s].mode, h);

  const double span = h - w0;
  if (span > 0.0) {
    st.throughput = st.demos / (span / 60.0);
    const double available = on_time(config, w0, h);
    st.utilization = available > 0.0 ? busy / available : 0.0;
    st.mean_queue = queue_area / span;
    for (const Mode m : {Mode::Tamp, Mode::Waiting, Mode::Human}) {
      double total = 0.0;
      for (const auto& rec : st.sessions) {
        const auto it = rec.time_in.find(m);
        if (it != rec.time_in.end()) total += it->second;
      }
      st.mode_share[m] = total / (span * config.n_robot);
    }
  }
  return st;
}

namespace {

// Heap entry; ties resolve by kind rank, then session, then posting order.
struct Pending {
  double time;
  int rank;
  int session;
  std::uint64_t seq;
  FleetEvent event;

  bool operator>(const Pending& o) const {
    return std::tie(time, rank, session, seq) > std::tie(o.time, o.rank, o.session, o.seq);
  }
};

enum Rank { kRelease = 0, kFinish = 1, kOperatorOn = 2, kEnqueue = 3 };

using Heap = std::priority_queue<Pending, std::vector<Pending>, std::greater<>>;

}  // namespace

FleetStats simulate_events(const FleetConfig& config, double horizon_minutes, std::uint64_t seed) {
  config.validate();
  using Kind = FleetEvent::Kind;
  const double h = std::max(0.0, horizon_minutes) * 60.0;
  std::mt19937_64 rng(seed);
  const auto draw = [&](double mean) {
    if (config.distribution == Distribution::Constant) return mean;
    return std::exponential_distribution<double>(1.0 / mean)(rng);
  };

  Heap heap;
  std::uint64_t seq = 0;
  const auto post = [&](double t, int rank, int s, Kind k) { heap.push({t, rank, s, seq++, {t, s, k, false, {}}}); };
  for (int s = 0; s < config.n_robot; ++s) post(draw(config.tamp_duration()), kEnqueue, s, Kind::Enqueue);

  std::vector<FleetEvent> log;
  std::deque<int> queue;
  bool busy = false, wake_pending = false;
  const auto dispatch = [&](double t) {
    if (busy || queue.empty()) return;
    if (!config.operator_on(t)) {
      if (!wake_pending) {
        wake_pending = true;
        heap.push({config.next_on(t), kOperatorOn, -1, seq++, {}});
      }
      return;
    }
    const int s = queue.front();
    queue.pop_front();
    busy = true;
    log.push_back({t, s, Kind::Start, false, {}});
    post(t + draw(config.human_duration()), kRelease, s, Kind::Release);
  };

  while (!heap.empty()) {
    const Pending p = heap.top();
    heap.pop();
    if (p.time > h) break;
    if (p.rank == kOperatorOn) {
      wake_pending = false;
    } else if (p.event.kind == Kind::Enqueue) {
      log.push_back(p.event);
      queue.push_back(p.session);
    } else if (p.event.kind == Kind::Release) {
      busy = false;
      log.push_back(p.event);
      log.push_back({p.time, p.session, Kind::Finish, true, "goal-reached"});
      post(p.time + draw(config.tamp_duration()), kEnqueue, p.session, Kind::Enqueue);
    }
    dispatch(p.time);
  }
  return summarize(config, log, horizon_minutes);
}

namespace {

struct Stop {};

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Conservative virtual-time coordinator: an event is processed only when no
// session thread is running, so every earlier event has already been posted.
class Coordinator {
 public:
  Coordinator(const FleetConfig& config, double horizon_s, double wall_budget)
      : config_(config), horizon_(horizon_s), wall_budget_(wall_budget), granted_(static_cast<std::size_t>(config.n_robot)),
        running_(config.n_robot) {}

  // Session side.
  double enqueue_and_wait(int s, double t) {
    std::unique_lock lk(m_);
    if (stop_) throw Stop{};
    post_locked(t, kEnqueue, s, {t, s, FleetEvent::Kind::Enqueue, false, {}});
    granted_[static_cast<std::size_t>(s)].reset();
    --running_;
    cv_.notify_all();
    cv_.wait(lk, [&] { return stop_ || granted_[static_cast<std::size_t>(s)].has_value(); });
    if (stop_ && !granted_[static_cast<std::size_t>(s)]) {
      ++running_;
      throw Stop{};
    }
    return *granted_[static_cast<std::size_t>(s)];
  }

  void post(double t, int rank, const FleetEvent& e) {
    std::lock_guard lk(m_);
    post_locked(t, rank, e.session, e);
  }

  void done(int /*s*/) {
    std::lock_guard lk(m_);
    --running_;
    cv_.notify_all();
  }

  bool stopped() {
    std::lock_guard lk(m_);
    return stop_;
  }

  // Operator side; returns the processed log.
  std::vector<FleetEvent> run(bool* truncated) {
    const auto t0 = std::chrono::steady_clock::now();
    std::unique_lock lk(m_);
    for (;;) {
      cv_.wait(lk, [&] { return running_ == 0; });
      const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (heap_.empty() || heap_.top().time > horizon_ || wall > wall_budget_) {
        *truncated = wall > wall_budget_;
        stop_ = true;
        cv_.notify_all();
        return std::move(log_);
      }
      const Pending p = heap_.top();
      heap_.pop();
      last_time_ = p.time;
      switch (p.rank) {
        case kOperatorOn: wake_pending_ = false; break;
        case kEnqueue:
          log_.push_back(p.event);
          queue_.push_back(p.session);
          break;
        case kRelease:
          busy_ = false;
          log_.push_back(p.event);
          break;
        case kFinish: log_.push_back(p.event); break;
        default: break;
      }
      dispatch(p.time);
    }
  }

  double last_time() const { return last_time_; }

 private:
  void post_locked(double t, int rank, int s, const FleetEvent& e) { heap_.push({t, rank, s, seq_++, e}); }

  void dispatch(double t) {
    if (busy_ || queue_.empty()) return;
    if (!config_.operator_on(t)) {
      if (!wake_pending_) {
        wake_pending_ = true;
        heap_.push({config_.next_on(t), kOperatorOn, -1, seq_++, {}});
      }
      return;
    }
    const int s = queue_.front();
    queue_.pop_front();
    busy_ = true;
    log_.push_back({t, s, FleetEvent::Kind::Start, false, {}});
    granted_[static_cast<std::size_t>(s)] = t;
    ++running_;
    cv_.notify_all();
  }

  const FleetConfig& config_;
  double horizon_;
  double wall_budget_;
  std::mutex m_;
  std::condition_variable cv_;
  Heap heap_;
  std::uint64_t seq_ = 0;
  std::vector<std::optional<double>> granted_;
  int running_;
  bool stop_ = false;
  bool busy_ = false;
  bool wake_pending_ = false;
  std::deque<int> queue_;
  std::vector<FleetEvent> log_;
  double last_time_ = 0.0;
};

}  // namespace

FleetStats run_fleet(const FleetConfig& config, const Task& task, gate::Operator& op,
                     const learn::ConstraintRegistry& constraints, const RunOptions& options) {
  config.validate();
  const double horizon_s = std::max(0.0, options.horizon) * 60.0;
  Coordinator coord(config, horizon_s, options.wall_budget);
  const double dt = task.scene->limits.tick_seconds;

  const auto session = [&](int s) {
    double clock = 0.0;
    try {
      for (std::uint64_t k = 0;; ++k) {
        const std::uint64_t ep_seed = mix(mix(options.seed, static_cast<std::uint64_t>(s)), k);
        bool in_human = false;
        int handoffs = 0;
        double human_start = 0.0;
        gate::GateOptions g = options.gate;
        g.seed = ep_seed;
        g.session = s;
        g.hooks.tick = [&](const world::WorldState&, Controller) {
          if (!options.fixed_durations) clock += dt;
          if (coord.stopped()) throw Stop{};
          if (!in_human && clock > horizon_s) throw Stop{};
        };
        g.hooks.acquire = [&](const gate::Prompt&, const world::WorldState&) {
          if (options.fixed_durations) clock += config.tamp_duration();
          human_start = coord.enqueue_and_wait(s, clock);
          clock = human_start;
          in_human = true;
          ++handoffs;
        };
        g.hooks.release = [&](const gate::Prompt&, const world::WorldState&) {
          if (options.fixed_durations) clock = human_start + config.human_duration();
          in_human = false;
          coord.post(clock, kRelease, {clock, s, FleetEvent::Kind::Release, false, {}});
        };
        std::string reason;
        bool success = false;
        try {
          const auto run = gate::run_gated(task, task.sample_world(ep_seed), op, constraints, g);
          success = run.episode.outcome.success;
          reason = std::string(to_string(run.episode.outcome.reason));
        } catch (const Stop&) {
          throw;
        } catch (const std::exception& e) {
          if (in_human) {
            in_human = false;
            coord.post(clock, kRelease, {clock, s, FleetEvent::Kind::Release, false, {}});
          }
          reason = std::string("error: ") + e.what();
        }
        if (options.fixed_durations && handoffs == 0) clock += config.tamp_duration();
        coord.post(clock, kFinish, {clock, s, FleetEvent::Kind::Finish, success, reason});
        if (clock > horizon_s) break;
      }
    } catch (const Stop&) {
    }
    coord.done(s);
  };

  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(config.n_robot));
  for (int s = 0; s < config.n_robot; ++s) threads.emplace_back(session, s);
  bool truncated = false;
  auto log = coord.run(&truncated);
  for (auto& t : threads) t.join();

  const double horizon_min = truncated ? coord.last_time() / 60.0 : options.horizon;
  return summarize(config, log, horizon_min);
}

}  // namespace hitl::fleet
