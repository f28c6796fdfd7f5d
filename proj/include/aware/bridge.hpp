#pragma once

// Live telemetry/command protocol: message schemas, the latest-wins command
// mailbox with dead-man decay, and bounded per-observer frame queues.
// Transport lives in bridge_server.hpp.

#include <boost/archive/iterators/base64_from_binary.hpp>
#include <boost/archive/iterators/binary_from_base64.hpp>
#include <boost/archive/iterators/transform_width.hpp>

#include <chrono>
#include <deque>
#include <mutex>
#include <variant>

#include "aware/sim.hpp"

namespace aware {

inline constexpr int kProtocolVersion = 1;

class ProtocolError : public Error {
 public:
  using Error::Error;
};

inline std::string base64_encode(const std::string& bin) {
  using namespace boost::archive::iterators;
  using It = base64_from_binary<transform_width<std::string::const_iterator, 6, 8>>;
  std::string out(It(bin.begin()), It(bin.end()));
  out.append((3 - bin.size() % 3) % 3, '=');
  return out;
}

inline std::string base64_decode(std::string text) {
  using namespace boost::archive::iterators;
  using It = transform_width<binary_from_base64<std::string::const_iterator>, 8, 6>;
  std::size_t pad = 0;
  while (!text.empty() && text.back() == '=') {
    text.pop_back();
    ++pad;
  }
  if (pad > 2) throw ProtocolError("base64: bad padding");
  try {
    std::string out(It(text.begin()), It(text.end()));
    // Leftover bits of a padded group must not become a byte.
    if (out.size() > text.size() * 6 / 8) out.resize(text.size() * 6 / 8);
    return out;
  } catch (const std::exception& e) {
    throw ProtocolError(std::string("base64: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Messages.

struct CommandMessage {
  double vx = 0, vy = 0, vz = 0;
  double yaw_rate = 0;
  double stamp = 0;  // client clock, echoed for latency measurement

  PilotCommand to_command(const JoystickLimits& lim) const { return PilotCommand{vx, vy, vz, yaw_rate}.clamped(lim); }
};

enum class Role { Pilot, Observer };

struct HelloMessage {
  Role role = Role::Observer;
};

using ClientMessage = std::variant<HelloMessage, CommandMessage>;

/// Parses one client text message; throws ProtocolError with a reason.
inline ClientMessage parse_client_message(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception&) {
    throw ProtocolError("message is not valid JSON");
  }
  if (!j.is_object()) throw ProtocolError("message must be an object");
  if (!j.contains("v") || !j["v"].is_number_integer() || j["v"].get<int>() != kProtocolVersion)
    throw ProtocolError("unsupported or missing protocol version");
  if (!j.contains("type") || !j["type"].is_string()) throw ProtocolError("missing message type");
  const std::string type = j["type"].get<std::string>();
  if (type == "hello") {
    if (!j.contains("role") || !j["role"].is_string()) throw ProtocolError("hello needs a role");
    const std::string role = j["role"].get<std::string>();
    if (role == "pilot") return HelloMessage{Role::Pilot};
    if (role == "observer") return HelloMessage{Role::Observer};
    throw ProtocolError("unknown role '" + role + "'");
  }
  if (type == "cmd") {
    CommandMessage c;
    auto num = [&](const char* k, double& out, bool required) {
      if (!j.contains(k)) {
        if (required) throw ProtocolError(std::string("cmd is missing '") + k + "'");
        return;
      }
      if (!j[k].is_number() || !std::isfinite(j[k].get<double>()))
        throw ProtocolError(std::string("cmd field '") + k + "' must be a finite number");
      out = j[k].get<double>();
    };
    num("vx", c.vx, true);
    num("vy", c.vy, true);
    num("vz", c.vz, true);
    num("yaw_rate", c.yaw_rate, false);
    num("stamp", c.stamp, false);
    return c;
  }
  throw ProtocolError("unknown message type '" + type + "'");
}

inline std::string error_frame(const std::string& reason) {
  return nlohmann::json{{"v", kProtocolVersion}, {"type", "error"}, {"reason", reason}}.dump();
}

inline std::string command_json(const CommandMessage& c) {
  return nlohmann::json{{"v", kProtocolVersion}, {"type", "cmd"},         {"vx", c.vx},      {"vy", c.vy},
                        {"vz", c.vz},            {"yaw_rate", c.yaw_rate}, {"stamp", c.stamp}}
      .dump();
}

inline std::string hello_json(Role r) {
  return nlohmann::json{{"v", kProtocolVersion}, {"type", "hello"}, {"role", r == Role::Pilot ? "pilot" : "observer"}}
      .dump();
}

struct TelemetryFrame {
  uint64_t seq = 0;
  double stamp = 0.0;
  std::array<double, 7> gt{};   // x y z qw qx qy qz
  std::array<double, 7> est{};
  std::array<double, 5> weights{};
  std::vector<std::pair<double, double>> obs_curve;  // (psi, cost)
  std::string depth;                                 // serialized low-res depth map
  std::array<double, 6> sfc{};
  std::array<double, 4> cmd_echo{};
  double timing_ms = 0.0;

  std::string to_json() const {
    nlohmann::json c = nlohmann::json::array();
    for (const auto& [psi, cost] : obs_curve) c.push_back({psi, cost});
    return nlohmann::json{{"v", kProtocolVersion}, {"type", "telemetry"}, {"seq", seq},
                          {"stamp", stamp},        {"gt", gt},            {"est", est},
                          {"weights", weights},    {"obs_curve", c},      {"depth_b64", base64_encode(depth)},
                          {"sfc", sfc},            {"cmd_echo", cmd_echo}, {"timing_ms", timing_ms}}
        .dump();
  }

  static TelemetryFrame from_json(const std::string& text) {
    try {
      const auto j = nlohmann::json::parse(text);
      if (j.at("type") != "telemetry") throw ProtocolError("not a telemetry frame");
      TelemetryFrame f;
      f.seq = j.at("seq").get<uint64_t>();
      f.stamp = j.at("stamp").get<double>();
      f.gt = j.at("gt").get<std::array<double, 7>>();
      f.est = j.at("est").get<std::array<double, 7>>();
      f.weights = j.at("weights").get<std::array<double, 5>>();
      for (const auto& p : j.at("obs_curve")) f.obs_curve.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
      f.depth = base64_decode(j.at("depth_b64").get<std::string>());
      f.sfc = j.at("sfc").get<std::array<double, 6>>();
      f.cmd_echo = j.at("cmd_echo").get<std::array<double, 4>>();
      f.timing_ms = j.at("timing_ms").get<double>();
      return f;
    } catch (const nlohmann::json::exception& e) {
      throw ProtocolError(std::string("telemetry: ") + e.what());
    }
  }
};

inline std::array<double, 7> pose7(const Vec3& p, double yaw) {
  const Eigen::Quaterniond q(rot_z(yaw));
  return {p.x(), p.y(), p.z(), q.w(), q.x(), q.y(), q.z()};
}

/// Frame describing the episode state right after `rec`.
inline TelemetryFrame make_frame(uint64_t seq, const Episode& ep, const StepRecord& rec) {
  TelemetryFrame f;
  f.seq = seq;
  f.stamp = rec.stamp;
  f.gt = pose7(rec.gt.p, rec.gt.psi);
  f.est = pose7(rec.est_p, rec.est_yaw);
  f.weights = rec.weights.as_array();
  const auto& c = ep.curve();
  for (std::size_t i = 0; i < c.yaws.size(); ++i) f.obs_curve.emplace_back(c.yaws[i], c.costs[i]);
  f.depth = serialize_depth_map(ep.depth_lo());
  f.sfc = rec.sfc;
  f.cmd_echo = {rec.cmd.vx, rec.cmd.vy, rec.cmd.vz, rec.cmd.yaw_rate_hint};
  f.timing_ms = rec.timing.decision_ms();
  return f;
}

// ---------------------------------------------------------------------------
// Command mailbox: one slot, newest write wins, stale commands read as zero.

class CommandMailbox {
 public:
  using clock = std::chrono::steady_clock;

  explicit CommandMailbox(std::chrono::milliseconds deadman = std::chrono::milliseconds(500), JoystickLimits lim = {})
      : deadman_(deadman), lim_(lim) {}

  void post(const CommandMessage& m, clock::time_point received = clock::now()) {
    std::lock_guard<std::mutex> lk(mu_);
    cmd_ = m.to_command(lim_);
    received_ = received;
    has_ = true;
    ++posts_;
  }

  /// The command in effect at `now`: the newest one unless it is older
  /// than the dead-man interval.
  PilotCommand read(clock::time_point now = clock::now()) const {
    std::lock_guard<std::mutex> lk(mu_);
    if (!has_ || now - received_ > deadman_) return {};
    return cmd_;
  }

  void clear() {
    std::lock_guard<std::mutex> lk(mu_);
    has_ = false;
  }
  uint64_t posts() const {
    std::lock_guard<std::mutex> lk(mu_);
    return posts_;
  }

 private:
  mutable std::mutex mu_;
  std::chrono::milliseconds deadman_;
  JoystickLimits lim_;
  PilotCommand cmd_;
  clock::time_point received_{};
  bool has_ = false;
  uint64_t posts_ = 0;
};

/// Bounded FIFO that drops its oldest entry instead of blocking the producer.
class FrameQueue {
 public:
  explicit FrameQueue(std::size_t capacity) : cap_(std::max<std::size_t>(capacity, 1)) {}

  void push(std::string frame) {
    if (q_.size() >= cap_) {
      q_.pop_front();
      ++dropped_;
    }
    q_.push_back(std::move(frame));
  }
  bool empty() const { return q_.empty(); }
  std::size_t size() const { return q_.size(); }
  std::string& front() { return q_.front(); }
  void pop() { q_.pop_front(); }
  uint64_t dropped() const { return dropped_; }

 private:
  std::size_t cap_;
  std::deque<std::string> q_;
  uint64_t dropped_ = 0;
};

}  // namespace aware
