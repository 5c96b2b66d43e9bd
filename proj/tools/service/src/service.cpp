#include "hitl/service.hpp"

#include <chrono>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <optional>
#include <set>
#include <thread>

#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/steady_timer.hpp>
#include <boost/asio/strand.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

namespace hitl::hub {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

namespace {

struct Stop {};

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

wire::Snapshot snapshot_of(int session, std::int64_t t, const Observation& obs, const char* mode) {
  wire::Snapshot s;
  s.session = session;
  s.t = t;
  for (const auto& [name, pose] : obs.objects) s.objects.push_back({name, pose});
  s.config = obs.config;
  s.gripper = obs.gripper_closed;
  s.mode = mode;
  return s;
}

}  // namespace

std::uint64_t Service::episode_seed(std::uint64_t base, int session, std::uint64_t index) {
  return mix(mix(base, static_cast<std::uint64_t>(session)), index);
}

struct Service::Impl {
  struct Connection;

  Task task;
  learn::ConstraintRegistry constraints;
  ServiceOptions options;

  net::io_context ioc;
  net::strand<net::io_context::executor_type> strand{net::make_strand(ioc)};
  tcp::acceptor acceptor{strand};
  net::steady_timer heartbeat{strand};
  std::thread io_thread;
  std::vector<std::thread> sessions;
  unsigned short bound_port = 0;

  // Strand-only state.
  std::set<std::shared_ptr<Connection>> connections;
  std::shared_ptr<Connection> controller;

  // Fleet state, guarded by m.
  mutable std::mutex m;
  std::condition_variable cv;
  bool stopping = false;
  std::once_flag stopped;
  bool operator_connected = false;
  std::uint64_t operator_generation = 0;
  std::deque<int> queue;
  std::optional<int> active;
  std::vector<std::deque<world::Command>> mailboxes;
  std::vector<gate::Prompt> prompts;
  std::vector<fleet::FleetEvent> log;
  std::vector<Episode> finished;
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();

  Impl(Task t, learn::ConstraintRegistry c, ServiceOptions o)
      : task(std::move(t)), constraints(std::move(c)), options(std::move(o)) {
    if (options.n_robot < 1) throw std::invalid_argument("n_robot must be at least 1");
    mailboxes.resize(static_cast<std::size_t>(options.n_robot));
    prompts.resize(static_cast<std::size_t>(options.n_robot));
  }

  double now() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); }

  // ---------------------------------------------------------------- network

  struct Connection : std::enable_shared_from_this<Connection> {
    Impl& svc;
    websocket::stream<beast::tcp_stream> ws;
    beast::flat_buffer buffer;
    std::deque<std::string> outbox;
    bool writing = false;
    bool open = false;

    Connection(Impl& s, tcp::socket socket) : svc(s), ws(std::move(socket)) {}

    void run() {
      ws.text(true);
      ws.async_accept(net::bind_executor(svc.strand, [self = shared_from_this()](beast::error_code ec) {
        if (ec) return;
        self->open = true;
        self->svc.on_open(self);
        self->read();
      }));
    }

    void read() {
      ws.async_read(buffer, net::bind_executor(svc.strand, [self = shared_from_this()](beast::error_code ec, std::size_t) {
        if (ec) {
          self->open = false;
          self->svc.on_close(self);
          return;
        }
        const std::string text = beast::buffers_to_string(self->buffer.data());
        self->buffer.consume(self->buffer.size());
        self->svc.on_message(self, text);
        self->read();
      }));
    }

    void send(std::string text) {
      if (!open) return;
      outbox.push_back(std::move(text));
      if (!writing) write();
    }

    void write() {
      writing = true;
      ws.async_write(net::buffer(outbox.front()),
                     net::bind_executor(svc.strand, [self = shared_from_this()](beast::error_code ec, std::size_t) {
                       self->outbox.pop_front();
                       if (ec) {
                         self->writing = false;
                         return;
                       }
                       if (!self->outbox.empty()) {
                         self->write();
                       } else {
                         self->writing = false;
                       }
                     }));
    }

    void shutdown() {
      open = false;
      beast::error_code ec;
      beast::get_lowest_layer(ws).socket().shutdown(tcp::socket::shutdown_both, ec);
      beast::get_lowest_layer(ws).socket().close(ec);
    }
  };

  void accept() {
    acceptor.async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      auto c = std::make_shared<Connection>(*this, std::move(socket));
      // Connection handlers run on the service strand.
      net::post(strand, [this, c] {
        connections.insert(c);
        c->run();
      });
      accept();
    });
  }

  void broadcast(const wire::Frame& frame) {
    net::post(strand, [this, text = wire::encode(frame)] {
      for (const auto& c : connections) c->send(text);
    });
  }

  wire::Queue queue_frame_locked() const {
    wire::Queue q;
    q.waiting.assign(queue.begin(), queue.end());
    q.active = active;
    return q;
  }

  void on_open(const std::shared_ptr<Connection>& c) {
    std::lock_guard lk(m);
    c->send(wire::encode(queue_frame_locked()));
  }

  void release_controller() {
    controller.reset();
    std::lock_guard lk(m);
    operator_connected = false;
    ++operator_generation;
    cv.notify_all();
  }

  void on_close(const std::shared_ptr<Connection>& c) {
    connections.erase(c);
    if (controller == c) release_controller();
  }

  void on_message(const std::shared_ptr<Connection>& c, const std::string& text) {
    const auto reply_error = [&](const std::string& code) { c->send(wire::encode(wire::Error{code})); };
    wire::Frame frame;
    try {
      frame = wire::decode(text);
    } catch (const wire::ProtocolError& e) {
      reply_error(e.code());
      return;
    }
    if (const auto* hello = std::get_if<wire::Hello>(&frame)) {
      if (hello->role == "observer") {
        if (controller == c) release_controller();
        return;
      }
      if (controller && controller != c) {
        reply_error("operator-taken");
        return;
      }
      controller = c;
      std::lock_guard lk(m);
      operator_connected = true;
      dispatch_locked();
      return;
    }
    if (const auto* act = std::get_if<wire::Act>(&frame)) {
      if (controller != c) {
        reply_error("not-operator");
        return;
      }
      std::lock_guard lk(m);
      if (!active || *active != act->session) {
        reply_error("not-your-session");
        return;
      }
      auto& box = mailboxes[static_cast<std::size_t>(act->session)];
      if (box.size() >= std::max<std::size_t>(options.mailbox, 1)) box.pop_front();
      box.push_back({act->dx, act->dy, act->dtheta, act->grip});
      cv.notify_all();
      return;
    }
    reply_error("unexpected-type");
  }

  void tick_heartbeat() {
    heartbeat.expires_after(std::chrono::duration_cast<std::chrono::steady_clock::duration>(
        std::chrono::duration<double>(options.heartbeat)));
    heartbeat.async_wait([this](beast::error_code ec) {
      if (ec) return;
      std::string text;
      {
        std::lock_guard lk(m);
        text = wire::encode(queue_frame_locked());
      }
      for (const auto& c : connections) c->send(text);
      tick_heartbeat();
    });
  }

  // ------------------------------------------------------------------ fleet

  void record_locked(int s, fleet::FleetEvent::Kind kind, bool success = false, std::string reason = {}) {
    log.push_back({now(), s, kind, success, std::move(reason)});
  }

  void dispatch_locked() {
    if (active || queue.empty() || !operator_connected || stopping) return;
    const int s = queue.front();
    queue.pop_front();
    active = s;
    record_locked(s, fleet::FleetEvent::Kind::Start);
    const auto& p = prompts[static_cast<std::size_t>(s)];
    broadcast(wire::Prompt{s, p.schema, p.child, p.parent});
    broadcast(queue_frame_locked());
    cv.notify_all();
  }

  void stop_locked() {
    stopping = true;
    cv.notify_all();
  }

  class RemoteHuman : public gate::Operator {
   public:
    RemoteHuman(Impl& svc, int session, std::int64_t& frame_t) : svc_(svc), s_(session), frame_t_(frame_t) {}

    world::Command act(const Observation& obs, const gate::Prompt&) override {
      std::unique_lock lk(svc_.m);
      for (;;) {
        svc_.cv.wait(lk, [&] { return svc_.stopping || svc_.active == s_; });
        if (svc_.stopping) throw Stop{};
        const std::uint64_t generation = svc_.operator_generation;
        svc_.broadcast(snapshot_of(s_, ++frame_t_, obs, "human"));
        auto& box = svc_.mailboxes[static_cast<std::size_t>(s_)];
        svc_.cv.wait(lk, [&] { return svc_.stopping || !box.empty() || svc_.operator_generation != generation; });
        if (svc_.stopping) throw Stop{};
        if (!box.empty()) {
          const world::Command cmd = box.back();  // latest wins
          box.clear();
          return cmd;
        }
        // Operator left mid-segment: back to the front of the queue.
        svc_.active.reset();
        svc_.queue.push_front(s_);
        svc_.record_locked(s_, fleet::FleetEvent::Kind::Enqueue);
        svc_.broadcast(svc_.queue_frame_locked());
        svc_.dispatch_locked();
      }
    }

   private:
    Impl& svc_;
    int s_;
    std::int64_t& frame_t_;
  };

  void run_session(int s) {
    std::int64_t frame_t = 0;
    const auto pause = std::chrono::duration<double>(options.pace * task.scene->limits.tick_seconds);
    try {
      for (std::uint64_t k = 0;; ++k) {
        {
          std::lock_guard lk(m);
          if (stopping) return;
        }
        const std::uint64_t seed = episode_seed(options.seed, s, k);
        const auto initial = task.sample_world(seed);
        broadcast(snapshot_of(s, ++frame_t, observe(initial), "tamp"));
        RemoteHuman op(*this, s, frame_t);
        gate::GateOptions g = options.gate;
        g.seed = seed;
        g.session = s;
        g.hooks.tick = [&](const world::WorldState& w, Controller label) {
          if (label != Controller::Tamp) return;
          broadcast(snapshot_of(s, ++frame_t, observe(w), "tamp"));
          if (options.pace > 0.0) std::this_thread::sleep_for(pause);
          std::lock_guard lk(m);
          if (stopping) throw Stop{};
        };
        g.hooks.acquire = [&](const gate::Prompt& prompt, const world::WorldState& w) {
          std::unique_lock lk(m);
          if (stopping) throw Stop{};
          prompts[static_cast<std::size_t>(s)] = prompt;
          mailboxes[static_cast<std::size_t>(s)].clear();
          queue.push_back(s);
          record_locked(s, fleet::FleetEvent::Kind::Enqueue);
          broadcast(snapshot_of(s, ++frame_t, observe(w), "waiting"));
          broadcast(queue_frame_locked());
          dispatch_locked();
        };
        g.hooks.release = [&](const gate::Prompt&, const world::WorldState&) {
          std::lock_guard lk(m);
          if (active == s) {
            active.reset();
            record_locked(s, fleet::FleetEvent::Kind::Release);
          }
          broadcast(queue_frame_locked());
          dispatch_locked();
        };

        Episode episode;
        std::string reason;
        bool success = false;
        try {
          auto run = gate::run_gated(task, initial, op, constraints, g);
          success = run.episode.outcome.success;
          reason = std::string(to_string(run.episode.outcome.reason));
          episode = std::move(run.episode);
        } catch (const Stop&) {
          throw;
        } catch (const std::exception& e) {
          reason = std::string("error: ") + e.what();
          std::lock_guard lk(m);
          if (active == s) {
            active.reset();
            record_locked(s, fleet::FleetEvent::Kind::Release);
            dispatch_locked();
          }
        }
        std::lock_guard lk(m);
        record_locked(s, fleet::FleetEvent::Kind::Finish, success, reason);
        if (!episode.task.empty()) finished.push_back(std::move(episode));
        broadcast(wire::Done{s, reason});
        if (options.max_episodes > 0 && static_cast<int>(log_finishes_locked()) >= options.max_episodes) stop_locked();
      }
    } catch (const Stop&) {
    }
  }

  std::size_t log_finishes_locked() const {
    std::size_t n = 0;
    for (const auto& e : log) n += e.kind == fleet::FleetEvent::Kind::Finish ? 1 : 0;
    return n;
  }
};

Service::Service(Task task, learn::ConstraintRegistry constraints, ServiceOptions options)
    : impl_(std::make_unique<Impl>(std::move(task), std::move(constraints), std::move(options))) {}

Service::~Service() {
  try {
    stop();
  } catch (...) {
  }
}

void Service::start() {
  auto& im = *impl_;
  const tcp::endpoint endpoint(net::ip::make_address(im.options.address), im.options.port);
  im.acceptor.open(endpoint.protocol());
  im.acceptor.set_option(net::socket_base::reuse_address(true));
  im.acceptor.bind(endpoint);
  im.acceptor.listen();
  im.bound_port = im.acceptor.local_endpoint().port();
  net::post(im.strand, [&im] {
    im.accept();
    im.tick_heartbeat();
  });
  im.io_thread = std::thread([&im] { im.ioc.run(); });
  for (int s = 0; s < im.options.n_robot; ++s) im.sessions.emplace_back([&im, s] { im.run_session(s); });
}

unsigned short Service::port() const { return impl_->bound_port; }

void Service::wait() {
  std::unique_lock lk(impl_->m);
  impl_->cv.wait(lk, [&] { return impl_->stopping; });
}

void Service::stop() {
  // Concurrent callers block until the first one has finished.
  std::call_once(impl_->stopped, [this] { shutdown(); });
}

void Service::shutdown() {
  auto& im = *impl_;
  {
    std::lock_guard lk(im.m);
    im.stop_locked();
  }
  for (auto& t : im.sessions) {
    if (t.joinable()) t.join();
  }
  if (im.io_thread.joinable()) {
    net::post(im.strand, [&im] {
      beast::error_code ec;
      im.acceptor.close(ec);
      im.heartbeat.cancel();
      for (const auto& c : im.connections) c->shutdown();
      im.connections.clear();
      im.controller.reset();
    });
    // Let pending writes and closes drain, then stop.
    net::post(im.strand, [&im] { im.ioc.stop(); });
    im.io_thread.join();
  }
}

std::vector<Episode> Service::episodes() const {
  std::lock_guard lk(impl_->m);
  return impl_->finished;
}

std::vector<fleet::FleetEvent> Service::events() const {
  std::lock_guard lk(impl_->m);
  return impl_->log;
}

// ------------------------------------------------------------------- client

struct WireClient::Impl {
  net::io_context ioc;
  websocket::stream<tcp::socket> ws{ioc};
  beast::flat_buffer buffer;
};

WireClient::WireClient(const std::string& host, unsigned short port) : impl_(std::make_unique<Impl>()) {
  tcp::resolver resolver(impl_->ioc);
  const auto results = resolver.resolve(host, std::to_string(port));
  net::connect(impl_->ws.next_layer(), results.begin(), results.end());
  impl_->ws.handshake(host, "/");
  impl_->ws.text(true);
}

WireClient::~WireClient() {
  try {
    close();
  } catch (...) {
  }
}

void WireClient::send(const wire::Frame& frame) { send_text(wire::encode(frame)); }

void WireClient::send_text(const std::string& text) { impl_->ws.write(net::buffer(text)); }

wire::Frame WireClient::receive() {
  impl_->buffer.consume(impl_->buffer.size());
  impl_->ws.read(impl_->buffer);
  return wire::decode(beast::buffers_to_string(impl_->buffer.data()));
}

void WireClient::close() {
  if (!impl_->ws.is_open()) return;
  beast::error_code ec;
  impl_->ws.close(websocket::close_code::normal, ec);
}

}  // namespace hitl::hub
