// Starts the bridge in-process, then plays a pilot client that pushes
// forward, strafes, and finally goes quiet so the dead-man brings the
// vehicle to a stop. An observer client prints every tenth telemetry frame.
//
//   demo_live_pilot [scene]

#include <cstdio>

#include "aware/bridge_server.hpp"

using namespace aware;
using namespace std::chrono_literals;

namespace {

websocket::stream<tcp::socket> connect(net::io_context& ioc, int port, const char* role) {
  websocket::stream<tcp::socket> ws(ioc);
  tcp::resolver r(ioc);
  net::connect(ws.next_layer(), r.resolve("127.0.0.1", std::to_string(port)));
  ws.handshake("127.0.0.1", "/");
  ws.text(true);
  ws.write(net::buffer(nlohmann::json{{"v", 1}, {"type", "hello"}, {"role", role}}.dump()));
  beast::flat_buffer ack;
  ws.read(ack);
  return ws;
}

}  // namespace

int main(int argc, char** argv) {
  SimConfig cfg;
  const Scenario sc = Scenario::from_scene(parse_scene_kind(argc > 1 ? argv[1] : "corridor"), cfg);
  BridgeServer srv(0, cfg.bridge, cfg.pilot.limits);
  std::printf("bridge on ws://127.0.0.1:%d\n", srv.port());

  std::atomic<bool> done{false};
  std::thread pilot([&] {
    net::io_context ioc;
    auto ws = connect(ioc, srv.port(), "pilot");
    const auto t0 = std::chrono::steady_clock::now();
    while (!done) {
      const double t = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      CommandMessage c;
      c.stamp = t;
      if (t < 3.0) c.vx = 1.0;
      else if (t < 5.0) c.vy = 0.5;
      else break;  // silence: the dead-man zeroes the command 0.5 s later
      ws.write(net::buffer(command_json(c)));
      std::this_thread::sleep_for(50ms);
    }
  });
  std::thread observer([&] {
    net::io_context ioc;
    auto ws = connect(ioc, srv.port(), "observer");
    try {
      while (!done) {
        beast::flat_buffer b;
        ws.read(b);
        const auto j = nlohmann::json::parse(beast::buffers_to_string(b.data()));
        if (j["type"] != "telemetry" || j["seq"].get<int>() % 10 != 0) continue;
        const auto f = TelemetryFrame::from_json(j.dump());
        std::printf("t=%5.1f  pos=(%6.2f %6.2f %5.2f)  est err=%.3f  cmd=(%.1f %.1f)  lambda_obs=%.0f  decide %.1f ms\n",
                    f.stamp, f.gt[0], f.gt[1], f.gt[2], std::hypot(f.gt[0] - f.est[0], f.gt[1] - f.est[1]),
                    f.cmd_echo[0], f.cmd_echo[1], f.weights[4], f.timing_ms);
      }
    } catch (...) {
    }
  });
  while (!srv.pilot_connected()) std::this_thread::sleep_for(5ms);

  EpisodeOptions eo;
  eo.duration = 7.0;
  const EpisodeLog log = serve_episode(srv, sc, cfg, ControllerSpec::static_mpc(1000), 1, nullptr, {}, eo);
  done = true;
  pilot.join();
  srv.stop();
  observer.join();
  std::printf("%s, %zu steps, final command (%.1f %.1f %.1f)\n", status_name(log.status), log.steps.size(),
              log.steps.back().cmd.vx, log.steps.back().cmd.vy, log.steps.back().cmd.vz);
}
