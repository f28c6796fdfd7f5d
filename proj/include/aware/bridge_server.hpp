#pragma once

// WebSocket transport for the bridge: one pilot (newest connection wins),
// any number of read-only observers, telemetry fan-out off the control thread.

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include <atomic>
#include <future>
#include <set>
#include <thread>

#include "aware/bridge.hpp"

namespace aware {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

class BridgeServer {
 public:
  /// Binds 127.0.0.1:port (0 picks a free port) and starts the I/O thread.
  BridgeServer(int port, const BridgeSettings& s, const JoystickLimits& lim, const std::string& address = "127.0.0.1")
      : settings_(s),
        mailbox_(std::chrono::milliseconds(static_cast<long>(s.deadman_ms)), lim),
        acceptor_(ioc_) {
    const tcp::endpoint ep(net::ip::make_address(address), static_cast<unsigned short>(port));
    beast::error_code ec;
    acceptor_.open(ep.protocol(), ec);
    if (!ec) acceptor_.set_option(net::socket_base::reuse_address(true), ec);
    if (!ec) acceptor_.bind(ep, ec);
    if (!ec) acceptor_.listen(net::socket_base::max_listen_connections, ec);
    if (ec) throw Error("bridge: cannot listen on " + address + ":" + std::to_string(port) + ": " + ec.message());
    port_ = acceptor_.local_endpoint().port();
    do_accept();
    thread_ = std::thread([this] { ioc_.run(); });
  }

  ~BridgeServer() { stop(); }
  BridgeServer(const BridgeServer&) = delete;
  BridgeServer& operator=(const BridgeServer&) = delete;

  int port() const { return port_; }
  CommandMailbox& mailbox() { return mailbox_; }
  bool pilot_connected() const { return pilot_connected_.load(); }
  std::size_t clients() const { return clients_.load(); }
  uint64_t frames_dropped() const { return dropped_.load(); }

  /// Queues a text frame for every client that completed its handshake.
  void broadcast(std::string frame) {
    net::post(ioc_, [this, f = std::make_shared<const std::string>(std::move(frame))] {
      for (const auto& s : sessions_)
        if (s->hello) send(s, *f);
    });
  }

  void stop() {
    if (stopped_.exchange(true)) return;
    // Close sockets on the I/O thread and wait for that to happen, so
    // clients see the connection drop instead of hanging.
    std::promise<void> closed;
    net::post(ioc_, [this, &closed] {
      beast::error_code ec;
      acceptor_.close(ec);
      for (const auto& s : sessions_) beast::get_lowest_layer(s->ws).socket().close(ec);
      sessions_.clear();
      pilot_.reset();
      closed.set_value();
    });
    closed.get_future().wait_for(std::chrono::seconds(2));
    ioc_.stop();
    if (thread_.joinable()) thread_.join();
  }

 private:
  struct Session {
    explicit Session(tcp::socket&& sock, std::size_t queue) : ws(std::move(sock)), out(queue) {}
    websocket::stream<beast::tcp_stream> ws;
    beast::flat_buffer buf;
    FrameQueue out;
    std::string inflight;
    bool writing = false;
    bool hello = false;
    Role role = Role::Observer;
    uint64_t dropped_seen = 0;
  };
  using SessionPtr = std::shared_ptr<Session>;

  void do_accept() {
    acceptor_.async_accept([this](beast::error_code ec, tcp::socket sock) {
      if (ec) return;  // acceptor closed
      auto s = std::make_shared<Session>(std::move(sock), static_cast<std::size_t>(std::max(settings_.observer_queue, 1)));
      s->ws.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
      s->ws.async_accept([this, s](beast::error_code aec) {
        if (aec) return;
        sessions_.insert(s);
        clients_ = sessions_.size();
        do_read(s);
      });
      do_accept();
    });
  }

  void do_read(const SessionPtr& s) {
    s->ws.async_read(s->buf, [this, s](beast::error_code ec, std::size_t) {
      if (ec) {
        drop(s);
        return;
      }
      const std::string text = beast::buffers_to_string(s->buf.data());
      s->buf.consume(s->buf.size());
      handle(s, text);
      do_read(s);
    });
  }

  void handle(const SessionPtr& s, const std::string& text) {
    try {
      const ClientMessage m = parse_client_message(text);
      if (const auto* h = std::get_if<HelloMessage>(&m)) {
        s->hello = true;
        s->role = h->role;
        if (h->role == Role::Pilot) {
          if (pilot_ && pilot_ != s) {
            pilot_->role = Role::Observer;
            send(pilot_, error_frame("pilot role taken over by a newer connection"));
          }
          pilot_ = s;
          pilot_connected_ = true;
        }
        send(s, hello_json(h->role));
        return;
      }
      const auto& c = std::get<CommandMessage>(m);
      if (!s->hello) throw ProtocolError("send hello before commands");
      if (s->role != Role::Pilot) throw ProtocolError("observers cannot send commands");
      mailbox_.post(c);
    } catch (const ProtocolError& e) {
      send(s, error_frame(e.what()));
    }
  }

  void send(const SessionPtr& s, const std::string& frame) {
    s->out.push(frame);
    dropped_ += s->out.dropped() - s->dropped_seen;
    s->dropped_seen = s->out.dropped();
    if (!s->writing) do_write(s);
  }

  void do_write(const SessionPtr& s) {
    if (s->out.empty()) {
      s->writing = false;
      return;
    }
    s->writing = true;
    s->inflight = std::move(s->out.front());
    s->out.pop();
    s->ws.text(true);
    s->ws.async_write(net::buffer(s->inflight), [this, s](beast::error_code ec, std::size_t) {
      if (ec) {
        drop(s);
        return;
      }
      do_write(s);
    });
  }

  void drop(const SessionPtr& s) {
    sessions_.erase(s);
    clients_ = sessions_.size();
    if (pilot_ == s) {
      pilot_.reset();
      pilot_connected_ = false;
    }
  }

  BridgeSettings settings_;
  CommandMailbox mailbox_;
  net::io_context ioc_;
  tcp::acceptor acceptor_;
  std::thread thread_;
  std::set<SessionPtr> sessions_;  // touched only on the I/O thread
  SessionPtr pilot_;
  int port_ = 0;
  std::atomic<bool> pilot_connected_{false};
  std::atomic<std::size_t> clients_{0};
  std::atomic<uint64_t> dropped_{0};
  std::atomic<bool> stopped_{false};
};

struct ServeOptions {
  bool realtime = true;
  const std::atomic<bool>* stop = nullptr;
  std::function<void(const StepRecord&)> on_step;
};

/// Runs one episode with commands from the server's mailbox, streaming a
/// telemetry frame after every control step.
inline EpisodeLog serve_episode(BridgeServer& srv, const Scenario& sc, const SimConfig& cfg, const ControllerSpec& spec,
                                uint64_t seed, const ActorCritic* policy = nullptr, const ServeOptions& opt = {},
                                EpisodeOptions eo = {}) {
  LivePilot pilot([&srv](const PilotContext&) { return srv.mailbox().read(); }, cfg.pilot.limits);
  if (!eo.start_index) eo.start_index = draw_start_index(sc, eo.train_segment, seed);
  Episode ep(sc, cfg, spec, pilot, seed, eo);
  std::mt19937_64 act_rng(seed);
  const auto dt = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
      std::chrono::duration<double>(cfg.episode.control_dt));
  auto next = std::chrono::steady_clock::now();
  uint64_t seq = 0;
  while (!ep.done() && !(opt.stop && opt.stop->load())) {
    if (opt.realtime) {
      next += dt;
      std::this_thread::sleep_until(next);
    }
    MpcWeights w = ep.spec_weights();
    double policy_ms = 0.0;
    if (policy) {
      const auto t0 = std::chrono::steady_clock::now();
      w = map_action(policy->act(ep.observation().s_int, ep.observation().v_raw, false, act_rng).action, cfg.bounds);
      policy_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    }
    const StepRecord& rec = ep.step(w, policy_ms);
    srv.broadcast(make_frame(seq++, ep, rec).to_json());
    if (opt.on_step) opt.on_step(rec);
  }
  return ep.take_log();
}

}  // namespace aware
