#pragma once

// Closed-loop episode engine: dynamics -> skewed noisy raycast -> estimator
// -> panorama -> observability sweep -> MPC, with per-step logging.

#include <chrono>
#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <unordered_set>

#include <json.hpp>

#include "aware/config.hpp"

namespace aware {

// ---------------------------------------------------------------------------
// Scenario: world map plus expert path, split into train/eval segments.

struct Scenario {
  std::string name;
  std::shared_ptr<const PointMap> world;
  Trajectory expert;
  double train_fraction = 0.5;

  /// Half-open expert index range of the train or the held-out segment.
  std::pair<std::size_t, std::size_t> segment(bool train) const {
    const std::size_t n = expert.size();
    const auto split = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n)));
    return train ? std::make_pair(std::size_t{0}, split) : std::make_pair(split, n);
  }

  /// Every expert pose must sit in a free voxel inside the map bounds.
  void validate() const {
    if (!world || world->empty()) throw ConfigError("scenario " + name + ": empty map");
    if (expert.size() < 4) throw ConfigError("scenario " + name + ": expert path too short");
    if (!(train_fraction > 0 && train_fraction < 1)) throw ConfigError("scenario " + name + ": bad train fraction");
    for (std::size_t i = 0; i < expert.size(); ++i) {
      const Vec3& p = expert[i].p;
      if (!world->bounds().contains(p) || world->occupied(world->key_of(p)))
        throw ConfigError("scenario " + name + ": expert pose " + std::to_string(i) + " is not in free space");
    }
    const auto [a, b] = segment(true);
    const auto [c, d] = segment(false);
    if (b - a < 2 || d - c < 2) throw ConfigError("scenario " + name + ": segments too short");
  }

  static Scenario from_points(std::string name, std::vector<Vec3> points, Trajectory expert, const SimConfig& cfg) {
    Scenario s;
    s.name = std::move(name);
    s.world = std::make_shared<const PointMap>(PointMap::from_points(std::move(points), cfg.sensing.world_voxel));
    s.expert = std::move(expert);
    s.train_fraction = cfg.episode.train_fraction;
    s.validate();
    return s;
  }

  static Scenario from_scene(SceneKind kind, const SimConfig& cfg) {
    auto scene = gen_synthetic_scene(kind, cfg.scene);
    return from_points(scene_kind_name(kind), std::move(scene.points), std::move(scene.expert), cfg);
  }

  static Scenario load(std::string name, const std::string& map_path, const std::string& traj_path,
                       const SimConfig& cfg) {
    return from_points(std::move(name), parse_map_points(read_file(map_path)), load_trajectory(traj_path), cfg);
  }
};

// ---------------------------------------------------------------------------
// Controllers under comparison.

struct ControllerSpec {
  enum class Kind { FixedRate, StaticMpc, Adaptive };
  Kind kind = Kind::StaticMpc;
  double omega = 1.0;
  double lambda_obs = 0.0;
  std::string checkpoint;

  static ControllerSpec fixed_rate(double w) { return {Kind::FixedRate, w, 0.0, {}}; }
  static ControllerSpec static_mpc(double l) { return {Kind::StaticMpc, 1.0, l, {}}; }
  static ControllerSpec adaptive(std::string path) { return {Kind::Adaptive, 1.0, 0.0, std::move(path)}; }

  void validate() const {
    if (kind == Kind::FixedRate && !(omega > 0 && std::isfinite(omega)))
      throw ConfigError("fixed-rate controller needs omega > 0");
    if (kind == Kind::StaticMpc && !(lambda_obs >= 0 && std::isfinite(lambda_obs)))
      throw ConfigError("static controller needs lambda_obs >= 0");
    if (kind == Kind::Adaptive && checkpoint.empty()) throw ConfigError("adaptive controller needs a checkpoint");
  }

  /// "fixed:<omega>", "static:<lambda_obs>" or "adaptive:<checkpoint path>".
  static ControllerSpec parse(const std::string& s) {
    const auto colon = s.find(':');
    if (colon == std::string::npos) throw ConfigError("controller '" + s + "': expected kind:value");
    const std::string kind = s.substr(0, colon), val = s.substr(colon + 1);
    ControllerSpec c;
    if (kind == "fixed")
      c = fixed_rate(detail::parse_double("controller", val));
    else if (kind == "static")
      c = static_mpc(detail::parse_double("controller", val));
    else if (kind == "adaptive")
      c = adaptive(val);
    else
      throw ConfigError("controller '" + s + "': unknown kind '" + kind + "'");
    c.validate();
    return c;
  }

  std::string label() const {
    switch (kind) {
      case Kind::FixedRate: return "fixed:" + detail::fmt_double(omega);
      case Kind::StaticMpc: return "static:" + detail::fmt_double(lambda_obs);
      case Kind::Adaptive: return "adaptive";
    }
    return "?";
  }
};

// ---------------------------------------------------------------------------
// Pilots (translational command sources).

struct PilotContext {
  double stamp = 0.0;
  UavState gt;
};

class Pilot {
 public:
  virtual ~Pilot() = default;
  virtual PilotCommand command(const PilotContext& c) = 0;
  /// Where the pilot is heading, for the policy state. Defaults to "here".
  virtual Vec3 goal(const PilotContext& c) const { return c.gt.p; }
};

class ZeroPilot final : public Pilot {
 public:
  PilotCommand command(const PilotContext&) override { return {}; }
};

/// Follows the expert path inside [lo, hi), reversing at either end.
class ScriptedPilot final : public Pilot {
 public:
  ScriptedPilot(const Trajectory& expert, std::size_t lo, std::size_t hi, std::size_t start, const PilotSettings& s)
      : path_(&expert), lo_(lo), hi_(hi), cursor_(start), s_(s) {
    if (!(lo < hi && hi <= expert.size() && start >= lo && start < hi)) throw ConfigError("scripted pilot: bad segment");
    if (cursor_ + 1 >= hi_) dir_ = -1;
  }

  PilotCommand command(const PilotContext& c) override {
    const Vec3& p = c.gt.p;
    // Advance the cursor until its waypoint is at least `lookahead` away.
    for (std::size_t guard = 0; guard < 2 * (hi_ - lo_); ++guard) {
      if ((at(cursor_) - p).norm() >= s_.lookahead) break;
      const bool at_end = dir_ > 0 ? cursor_ + 1 >= hi_ : cursor_ <= lo_;
      if (at_end) {
        if ((at(cursor_) - p).norm() > 0.5 * s_.lookahead) break;
        dir_ = -dir_;
      }
      cursor_ = static_cast<std::size_t>(static_cast<long>(cursor_) + dir_);
    }
    Vec3 d = at(cursor_) - p;
    const double n = d.norm();
    const Vec3 vw = n > 1e-9 ? Vec3(d * (s_.speed / n)) : Vec3::Zero();
    const Vec3 vb = rot_z(c.gt.psi).transpose() * vw;
    return PilotCommand{vb.x(), vb.y(), vb.z(), 0.0}.clamped(s_.limits);
  }

  Vec3 goal(const PilotContext&) const override { return at(cursor_); }
  std::size_t cursor() const { return cursor_; }

 private:
  const Vec3& at(std::size_t i) const { return (*path_)[i].p; }

  const Trajectory* path_;
  std::size_t lo_, hi_, cursor_;
  int dir_ = 1;
  PilotSettings s_;
};

/// Holds a random full-speed world heading for a few seconds, then picks another.
class AdversarialPilot final : public Pilot {
 public:
  AdversarialPilot(uint64_t seed, const PilotSettings& s) : rng_(seed), s_(s) {}

  PilotCommand command(const PilotContext& c) override {
    if (c.stamp >= next_switch_) {
      std::uniform_real_distribution<double> H(-kPi, kPi);
      std::uniform_int_distribution<int> Z(-1, 1);
      const double th = H(rng_);
      vw_ = Vec3(std::cos(th) * s_.limits.v_xy, std::sin(th) * s_.limits.v_xy, Z(rng_) * s_.limits.v_z);
      next_switch_ = c.stamp + s_.adversarial_hold;
    }
    const Vec3 vb = rot_z(c.gt.psi).transpose() * vw_;
    return PilotCommand{vb.x(), vb.y(), vb.z(), 0.0}.clamped(s_.limits);
  }

  Vec3 goal(const PilotContext& c) const override { return c.gt.p + vw_ * 5.0; }

 private:
  std::mt19937_64 rng_;
  PilotSettings s_;
  Vec3 vw_ = Vec3::Zero();
  double next_switch_ = -1.0;
};

/// Commands from an external source (the bridge). Unset callback means hover.
class LivePilot final : public Pilot {
 public:
  using Source = std::function<PilotCommand(const PilotContext&)>;
  explicit LivePilot(Source src, JoystickLimits lim = {}) : src_(std::move(src)), lim_(lim) {}
  PilotCommand command(const PilotContext& c) override { return src_ ? src_(c).clamped(lim_) : PilotCommand{}; }

 private:
  Source src_;
  JoystickLimits lim_;
};

// ---------------------------------------------------------------------------
// Sensing: a sweeping sensor whose columns are captured at different times
// within the frame, delivered in the end-of-frame body frame.

class SkewedScanner {
 public:
  SkewedScanner(const SensorModel& sensor, const SensingSettings& s) : sensor_(sensor), s_(s) {
    const auto dirs = sensor.ray_directions();
    const int A = sensor.rays_az, E = sensor.rays_el, S = std::min(s.skew_slices, A);
    slices_.resize(static_cast<std::size_t>(S));
    for (int j = 0; j < E; ++j)
      for (int i = 0; i < A; ++i) {
        const auto sl = static_cast<std::size_t>(i * S / A);
        slices_[sl].push_back(dirs[static_cast<std::size_t>(j * A + i)]);
      }
  }

  /// `from` and `to` are the states at the start and end of the frame.
  Scan scan(const PointMap& world, const UavState& from, const UavState& to, double stamp, std::mt19937_64& rng) const {
    const auto S = slices_.size();
    const Mat3 Rt = rot_z(to.psi).transpose();
    const double dpsi = wrap_angle(to.psi - from.psi);
    std::vector<Vec3> hits;
    for (std::size_t k = 0; k < S; ++k) {
      const double f = 1.0 - s_.scan_skew * (1.0 - (static_cast<double>(k) + 0.5) / static_cast<double>(S));
      const BodyPose pose(from.p + f * (to.p - from.p), from.psi + f * dpsi);
      raycast(world, pose, sensor_, &slices_[k], &hits);
    }
    Scan out;
    out.stamp = stamp;
    out.points.reserve(hits.size());
    std::normal_distribution<double> N(0.0, 1.0);
    for (const Vec3& w : hits) {
      Vec3 p = Rt * (w - to.p);
      if (s_.noise_sigma > 0) p += s_.noise_sigma * Vec3(N(rng), N(rng), N(rng));
      out.points.push_back(p);
    }
    return out;
  }

 private:
  SensorModel sensor_;
  SensingSettings s_;
  std::vector<std::vector<Vec3>> slices_;
};

// ---------------------------------------------------------------------------
// Episode records.

enum class EpisodeStatus { Running, Completed, Lost, Infeasible };

inline const char* status_name(EpisodeStatus s) {
  switch (s) {
    case EpisodeStatus::Running: return "running";
    case EpisodeStatus::Completed: return "completed";
    case EpisodeStatus::Lost: return "lost";
    case EpisodeStatus::Infeasible: return "infeasible";
  }
  return "?";
}

inline EpisodeStatus parse_status(const std::string& s) {
  if (s == "running") return EpisodeStatus::Running;
  if (s == "completed") return EpisodeStatus::Completed;
  if (s == "lost") return EpisodeStatus::Lost;
  if (s == "infeasible") return EpisodeStatus::Infeasible;
  throw ParseError("unknown episode status '" + s + "'", 0);
}

struct StepTiming {
  double raycast_ms = 0, estimator_ms = 0, panorama_ms = 0, sweep_ms = 0, policy_ms = 0, mpc_ms = 0;
  /// The decision pipeline: everything a real system computes per frame
  /// except sensor rendering and state estimation.
  double decision_ms() const { return panorama_ms + sweep_ms + policy_ms + mpc_ms; }
};

struct StepRecord {
  int step = 0;
  double stamp = 0.0;
  UavState gt;          // after the step
  Vec3 est_p = Vec3::Zero();
  double est_yaw = 0.0;
  PilotCommand cmd;
  ControlInput u;
  MpcWeights weights;
  std::vector<double> curve;  // J_obs per candidate, body-relative, used for this decision
  double fit_h = 0.0, fit_g = 0.0;
  bool fit_anchored = false;
  QpStatus qp_status = QpStatus::Solved;
  int qp_iterations = 0;
  int active_constraints = 0;
  bool fallback = false;
  bool corridor_error = false;
  std::array<double, 6> sfc{};
  double sfc_violation = 0.0;  // new gt position against this step's corridor
  bool degenerate = false;
  double rte = 0.0;
  RewardParts reward;
  StepTiming timing;
};

struct EpisodeLog {
  std::string scenario;
  std::string controller;
  uint64_t seed = 0;
  bool train_segment = false;
  std::size_t start_index = 0;
  double init_yaw = 0.0;
  double dt = 0.1;
  EpisodeStatus status = EpisodeStatus::Running;
  std::vector<StepRecord> steps;

  Trajectory gt_trajectory() const {
    Trajectory t;
    for (const auto& s : steps) t.push_back({s.stamp, s.gt.p, Eigen::Quaterniond(rot_z(s.gt.psi))});
    return t;
  }
  Trajectory est_trajectory() const {
    Trajectory t;
    for (const auto& s : steps) t.push_back({s.stamp, s.est_p, Eigen::Quaterniond(rot_z(s.est_yaw))});
    return t;
  }
  TrajMetrics metrics() const { return ape(est_trajectory(), gt_trajectory(), dt); }
};

// JSON lines: a header, one line per step, a footer.
namespace detail {

inline nlohmann::json vec_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }
inline Vec3 json_vec(const nlohmann::json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

}  // namespace detail

inline nlohmann::json step_json(const StepRecord& r, bool timing) {
  nlohmann::json j;
  j["step"] = r.step;
  j["t"] = r.stamp;
  j["gt"] = {{"p", detail::vec_json(r.gt.p)}, {"v", detail::vec_json(r.gt.v)}, {"a", detail::vec_json(r.gt.a)}, {"psi", r.gt.psi}};
  j["est"] = {{"p", detail::vec_json(r.est_p)}, {"yaw", r.est_yaw}};
  j["cmd"] = {r.cmd.vx, r.cmd.vy, r.cmd.vz, r.cmd.yaw_rate_hint};
  j["u"] = {r.u.jerk.x(), r.u.jerk.y(), r.u.jerk.z(), r.u.yaw_rate};
  j["w"] = r.weights.as_array();
  j["J"] = r.curve;
  j["fit"] = {{"h", r.fit_h}, {"g", r.fit_g}, {"anchored", r.fit_anchored}};
  j["qp"] = {{"status", qp_status_name(r.qp_status)}, {"iters", r.qp_iterations}, {"active", r.active_constraints},
             {"fallback", r.fallback}, {"corridor_error", r.corridor_error}};
  j["sfc"] = r.sfc;
  j["sfc_violation"] = r.sfc_violation;
  j["degenerate"] = r.degenerate;
  j["rte"] = r.rte;
  j["reward"] = {r.reward.total, r.reward.acc, r.reward.exp, r.reward.smooth};
  if (timing)
    j["ms"] = {{"raycast", r.timing.raycast_ms}, {"estimator", r.timing.estimator_ms},
               {"panorama", r.timing.panorama_ms}, {"sweep", r.timing.sweep_ms},
               {"policy", r.timing.policy_ms}, {"mpc", r.timing.mpc_ms}, {"decision", r.timing.decision_ms()}};
  return j;
}

inline StepRecord step_from_json(const nlohmann::json& j) {
  StepRecord r;
  r.step = j.at("step").get<int>();
  r.stamp = j.at("t").get<double>();
  const auto& g = j.at("gt");
  r.gt.p = detail::json_vec(g.at("p"));
  r.gt.v = detail::json_vec(g.at("v"));
  r.gt.a = detail::json_vec(g.at("a"));
  r.gt.psi = g.at("psi").get<double>();
  r.est_p = detail::json_vec(j.at("est").at("p"));
  r.est_yaw = j.at("est").at("yaw").get<double>();
  const auto& c = j.at("cmd");
  r.cmd = {c.at(0).get<double>(), c.at(1).get<double>(), c.at(2).get<double>(), c.at(3).get<double>()};
  const auto& u = j.at("u");
  r.u.jerk = Vec3(u.at(0).get<double>(), u.at(1).get<double>(), u.at(2).get<double>());
  r.u.yaw_rate = u.at(3).get<double>();
  r.weights = MpcWeights::from_array(j.at("w").get<std::array<double, 5>>());
  r.curve = j.at("J").get<std::vector<double>>();
  r.fit_h = j.at("fit").at("h").get<double>();
  r.fit_g = j.at("fit").at("g").get<double>();
  r.fit_anchored = j.at("fit").at("anchored").get<bool>();
  const auto& q = j.at("qp");
  const std::string st = q.at("status").get<std::string>();
  for (QpStatus s : {QpStatus::Solved, QpStatus::MaxIterations, QpStatus::PrimalInfeasible, QpStatus::DualInfeasible})
    if (st == qp_status_name(s)) r.qp_status = s;
  r.qp_iterations = q.at("iters").get<int>();
  r.active_constraints = q.at("active").get<int>();
  r.fallback = q.at("fallback").get<bool>();
  r.corridor_error = q.at("corridor_error").get<bool>();
  r.sfc = j.at("sfc").get<std::array<double, 6>>();
  r.sfc_violation = j.at("sfc_violation").get<double>();
  r.degenerate = j.at("degenerate").get<bool>();
  r.rte = j.at("rte").get<double>();
  const auto& w = j.at("reward");
  r.reward = {w.at(0).get<double>(), w.at(1).get<double>(), w.at(2).get<double>(), w.at(3).get<double>()};
  if (j.contains("ms")) {
    const auto& m = j.at("ms");
    r.timing = {m.at("raycast").get<double>(), m.at("estimator").get<double>(), m.at("panorama").get<double>(),
                m.at("sweep").get<double>(), m.at("policy").get<double>(), m.at("mpc").get<double>()};
  }
  return r;
}

/// Serialized log. Without timing the text is a pure function of the inputs.
inline std::string encode_log(const EpisodeLog& log, bool timing = true) {
  std::string out;
  nlohmann::json h = {{"type", "header"},       {"scenario", log.scenario},      {"controller", log.controller},
                      {"seed", log.seed},       {"train_segment", log.train_segment}, {"start_index", log.start_index},
                      {"init_yaw", log.init_yaw}, {"dt", log.dt}};
  out += h.dump() + "\n";
  for (const auto& s : log.steps) out += step_json(s, timing).dump() + "\n";
  nlohmann::json f = {{"type", "end"}, {"status", status_name(log.status)}, {"steps", log.steps.size()}};
  out += f.dump() + "\n";
  return out;
}

inline EpisodeLog decode_log(const std::string& text) {
  EpisodeLog log;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  bool header = false, footer = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const std::string type = j.contains("type") ? j.at("type").get<std::string>() : "step";
      if (type == "header") {
        log.scenario = j.at("scenario").get<std::string>();
        log.controller = j.at("controller").get<std::string>();
        log.seed = j.at("seed").get<uint64_t>();
        log.train_segment = j.at("train_segment").get<bool>();
        log.start_index = j.at("start_index").get<std::size_t>();
        log.init_yaw = j.at("init_yaw").get<double>();
        log.dt = j.at("dt").get<double>();
        header = true;
      } else if (type == "end") {
        log.status = parse_status(j.at("status").get<std::string>());
        footer = true;
      } else {
        log.steps.push_back(step_from_json(j));
      }
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("episode log: ") + e.what(), lineno);
    }
  }
  if (!header) throw ParseError("episode log: missing header", 0);
  if (!footer) log.status = EpisodeStatus::Running;
  return log;
}

inline void save_log(const std::string& path, const EpisodeLog& log) {
  std::ofstream f(path);
  if (!f) throw Error("cannot write " + path);
  f << encode_log(log);
}

inline EpisodeLog load_log(const std::string& path) { return decode_log(read_file(path)); }

// ---------------------------------------------------------------------------
// The episode.

struct Observation {
  VectorXd s_int;
  VectorXd v_raw;
};

struct EpisodeOptions {
  bool train_segment = false;
  std::optional<std::size_t> start_index;  // otherwise drawn from the segment
  std::optional<double> init_yaw;          // otherwise the path heading
  std::optional<double> duration;          // otherwise cfg.episode.duration
};

/// Relative-displacement RMS, used when the RTE alignment is undefined.
inline double displacement_rms(const std::vector<Vec3>& est, const std::vector<Vec3>& gt) {
  if (est.size() < 2) return 0.0;
  double s = 0;
  for (std::size_t i = 1; i < est.size(); ++i) s += ((est[i] - est[0]) - (gt[i] - gt[0])).squaredNorm();
  return std::sqrt(s / static_cast<double>(est.size() - 1));
}

class Episode {
 public:
  Episode(const Scenario& sc, const SimConfig& cfg, const ControllerSpec& spec, Pilot& pilot, uint64_t seed,
          const EpisodeOptions& opt = {})
      : sc_(sc), cfg_(cfg), spec_(spec), pilot_(pilot), rng_(seed), mpc_(mpc_config(cfg, spec)),
        scanner_(cfg.sensor, cfg.sensing), lio_(cfg.estimator), explored_(),
        duration_(opt.duration.value_or(cfg.episode.duration)) {
    cfg_.validate();
    spec_.validate();
    if (!(duration_ > 0)) throw ConfigError("episode duration must be positive");
    const auto [lo, hi] = sc.segment(opt.train_segment);
    std::size_t start = 0;
    if (opt.start_index) {
      start = *opt.start_index;
    } else {
      std::uniform_int_distribution<std::size_t> U(lo, hi - 1);
      start = U(rng_);
    }
    if (start < lo || start >= hi) throw ConfigError("episode start index outside the requested segment");
    const std::size_t nxt = std::min(start + 1, sc.expert.size() - 1), prv = nxt == start ? start - 1 : start;
    const Vec3 tangent = sc.expert[nxt].p - sc.expert[prv].p;
    const double yaw = opt.init_yaw.value_or(std::atan2(tangent.y(), tangent.x()));

    log_.scenario = sc.name;
    log_.controller = spec.label();
    log_.seed = seed;
    log_.train_segment = opt.train_segment;
    log_.start_index = start;
    log_.init_yaw = wrap_angle(yaw);
    log_.dt = cfg.episode.control_dt;
    start_ = start;

    gt_.p = sc.expert[start].p;
    gt_.psi = wrap_angle(yaw);
    weights_ = cfg.weights;
    weights_.lambda_obs = spec.kind == ControllerSpec::Kind::StaticMpc ? spec.lambda_obs : 0.0;

    // First frame, then an optional in-place turn to seed the map and panorama.
    const Scan first = scanner_.scan(*sc.world, gt_, gt_, 0.0, rng_);
    if (!cfg.episode.oracle_estimator) lio_.initialize(Rigid::from_yaw(gt_.p, gt_.psi), first);
    est_ = Rigid::from_yaw(gt_.p, gt_.psi);
    push_history(first);
    if (cfg.episode.warm_start_survey && cfg.episode.survey_steps > 0) {
      const double rate = kTwoPi / (cfg.episode.survey_steps * cfg.episode.control_dt);
      for (int i = 0; i < cfg.episode.survey_steps; ++i) {
        const UavState prev = gt_;
        gt_ = step_dynamics(gt_, ControlInput{Vec3::Zero(), rate}, cfg.episode.control_dt);
        sense(prev, nullptr);
        if (lost_) break;
      }
    }
    if (lost_) status_ = EpisodeStatus::Lost;
    pending_timing_ = perceive(nullptr);
  }

  static MpcConfig mpc_config(const SimConfig& cfg, const ControllerSpec& spec) {
    MpcConfig m = cfg.mpc;
    if (spec.kind == ControllerSpec::Kind::FixedRate) m.track_yaw_rate = spec.omega;
    return m;
  }

  bool done() const { return status_ != EpisodeStatus::Running; }
  EpisodeStatus status() const { return status_; }
  const Observation& observation() const { return obs_; }
  const ObservabilityCurve& curve() const { return curve_; }
  const PanoramicDepthMap& depth_lo() const { return depth_lo_; }
  const UavState& gt() const { return gt_; }
  const Rigid& est() const { return est_; }
  const EpisodeLog& log() const { return log_; }
  EpisodeLog take_log() { return std::move(log_); }
  const MpcWeights& spec_weights() const { return weights_; }
  const Scenario& scenario() const { return sc_; }
  double stamp() const { return static_cast<double>(log_.steps.size()) * cfg_.episode.control_dt; }

  /// Advances one control period with the given weights. `policy_ms` is
  /// the caller's policy inference time, folded into the decision timing.
  const StepRecord& step(const MpcWeights& w, double policy_ms = 0.0) {
    if (done()) throw Error("episode already finished");
    using clock = std::chrono::steady_clock;
    StepRecord rec;
    rec.step = static_cast<int>(log_.steps.size());
    rec.weights = w;
    rec.curve = curve_.costs;
    rec.timing = pending_timing_;
    rec.timing.policy_ms = policy_ms;

    const PilotContext ctx{stamp(), gt_};
    rec.cmd = pilot_.command(ctx);
    const auto t0 = clock::now();
    const MpcOutput out = mpc_.step(gt_, rec.cmd, w, *sc_.world, &curve_);
    rec.timing.mpc_ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    rec.u = out.u;
    rec.fit_h = out.diag.fit.h_obs;
    rec.fit_g = out.diag.fit.g_obs;
    rec.fit_anchored = out.diag.fit.anchored;
    rec.qp_status = out.diag.status;
    rec.qp_iterations = out.diag.iterations;
    rec.active_constraints = out.diag.active_constraints;
    rec.fallback = out.diag.fallback;
    rec.corridor_error = out.diag.corridor_error;
    rec.sfc = out.diag.sfc.as_array();
    last_yaw_rate_ = out.u.yaw_rate;

    const UavState prev = gt_;
    gt_ = step_dynamics(gt_, out.u, cfg_.episode.control_dt);
    rec.stamp = static_cast<double>(rec.step + 1) * cfg_.episode.control_dt;
    rec.gt = gt_;
    rec.sfc_violation = out.diag.corridor_error ? 0.0 : out.diag.sfc.violation(gt_.p);

    const bool collided = !sc_.world->bounds().contains(gt_.p) || sc_.world->occupied(sc_.world->key_of(gt_.p));
    StepTiming t;
    if (!collided) {
      t = sense(prev, &rec);
      rec.degenerate = last_degenerate_;
    }
    rec.est_p = est_.t;
    rec.est_yaw = est_.yaw();
    rec.timing.raycast_ms = t.raycast_ms;
    rec.timing.estimator_ms = t.estimator_ms;

    if (collided || out.diag.corridor_error)
      status_ = EpisodeStatus::Infeasible;
    else if (lost_)
      status_ = EpisodeStatus::Lost;
    else if (rec.stamp >= duration_ - 1e-9)
      status_ = EpisodeStatus::Completed;
    if (!done()) pending_timing_ = perceive(&rec);
    log_.status = status_;
    log_.steps.push_back(std::move(rec));
    return log_.steps.back();
  }

 private:
  // Scan, estimator update and history; reward terms when `rec` is given.
  StepTiming sense(const UavState& prev, StepRecord* rec) {
    using clock = std::chrono::steady_clock;
    StepTiming t;
    ++frame_;
    const double stamp = static_cast<double>(frame_) * cfg_.episode.control_dt;
    const auto t0 = clock::now();
    const Scan scan = scanner_.scan(*sc_.world, prev, gt_, stamp, rng_);
    const auto t1 = clock::now();
    last_degenerate_ = false;
    if (cfg_.episode.oracle_estimator) {
      est_ = Rigid::from_yaw(gt_.p, gt_.psi);
    } else {
      const auto r = lio_.step(scan, cfg_.episode.control_dt, wrap_angle(gt_.psi - prev.psi));
      est_ = lio_.state().pose;
      last_degenerate_ = r.degenerate;
      lost_ = lio_.lost();
    }
    const auto t2 = clock::now();
    t.raycast_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    t.estimator_ms = std::chrono::duration<double, std::milli>(t2 - t1).count();
    push_history(scan);
    if (rec) {
      // Accuracy: windowed RTE of estimated against true positions.
      est_win_.push_back(est_.t);
      gt_win_.push_back(gt_.p);
      rate_win_.push_back(last_yaw_rate_);
      const auto k = static_cast<std::size_t>(cfg_.reward.rte_window);
      while (est_win_.size() > k) est_win_.pop_front();
      while (gt_win_.size() > k) gt_win_.pop_front();
      while (rate_win_.size() > k) rate_win_.pop_front();
      const std::vector<Vec3> e(est_win_.begin(), est_win_.end()), g(gt_win_.begin(), gt_win_.end());
      try {
        rec->rte = rte(e, g);
      } catch (const AlignmentError&) {
        rec->rte = displacement_rms(e, g);
      }
      // Exploration: share of this frame's voxels never seen before.
      std::unordered_set<VoxelKey, VoxelKeyHash> frame;
      for (const Vec3& p : scan.points) frame.insert(voxel_key(est_ * p, cfg_.reward.voxel_size_exp));
      double n_new = 0;
      for (const auto& key : frame)
        if (explored_.insert(key).second) n_new += 1;
      rec->reward = reward(rec->rte, n_new, static_cast<double>(frame.size()),
                           std::vector<double>(rate_win_.begin(), rate_win_.end()), cfg_.reward);
    } else {
      for (const Vec3& p : scan.points) explored_.insert(voxel_key(est_ * p, cfg_.reward.voxel_size_exp));
    }
    return t;
  }

  void push_history(const Scan& scan) {
    history_.push_back({scan, est_});
    const auto keep = static_cast<std::size_t>(std::max(cfg_.panorama.window, 1));
    while (history_.size() > keep) history_.pop_front();
  }

  // Panorama, sweep and observation at the current estimated pose.
  StepTiming perceive(StepRecord*) {
    using clock = std::chrono::steady_clock;
    StepTiming t;
    const auto t0 = clock::now();
    const Rigid inv = est_.inverse();
    std::vector<TimedScan> hist;
    hist.reserve(history_.size());
    for (const auto& h : history_) hist.push_back({h.scan, inv * h.pose});
    const ScanBlock block = aggregate(hist, cfg_.panorama.window, cfg_.panorama.leaf);
    const PanoramicDepthMap hi = build_depth_map(block, cfg_.panorama.hi_h, cfg_.panorama.hi_w);
    const auto t1 = clock::now();
    curve_ = sweep(PanoramaGeometry(hi), cfg_.sensor, cfg_.mpc.sweep);
    const auto t2 = clock::now();
    depth_lo_ = downsample_map(hi, cfg_.panorama.lo_h, cfg_.panorama.lo_w);
    const auto flat = flatten(depth_lo_, cfg_.panorama.max_range, static_cast<std::size_t>(cfg_.arch.v_raw));
    obs_.v_raw = Eigen::Map<const Eigen::VectorXf>(flat.data(), static_cast<Eigen::Index>(flat.size())).cast<double>();
    obs_.s_int = internal_state();
    const auto t3 = clock::now();
    t.panorama_ms = std::chrono::duration<double, std::milli>((t1 - t0) + (t3 - t2)).count();
    t.sweep_ms = std::chrono::duration<double, std::milli>(t2 - t1).count();
    return t;
  }

  VectorXd internal_state() const {
    const auto M = static_cast<Eigen::Index>(curve_.costs.size());
    VectorXd s(11 + M);
    const Vec3 dp = (pilot_.goal({stamp(), gt_}) - est_.t) / 10.0;
    s.segment<3>(0) = dp;
    s.segment<3>(3) = gt_.v / 2.0;
    s.segment<3>(6) = gt_.a / 4.0;
    s(9) = est_.yaw() / kPi;
    s(10) = last_yaw_rate_ / 8.0;
    const double scale = std::log10(6.0 / cfg_.mpc.sweep.reg);
    for (Eigen::Index m = 0; m < M; ++m) s(11 + m) = std::log10(curve_.costs[static_cast<std::size_t>(m)]) / scale;
    return s;
  }

  struct Frame {
    Scan scan;
    Rigid pose;  // estimated pose at capture
  };

  const Scenario& sc_;
  SimConfig cfg_;
  ControllerSpec spec_;
  Pilot& pilot_;
  std::mt19937_64 rng_;
  MpcController mpc_;
  SkewedScanner scanner_;
  LioLite lio_;
  std::unordered_set<VoxelKey, VoxelKeyHash> explored_;
  double duration_;
  std::size_t start_ = 0;

  UavState gt_;
  Rigid est_;
  MpcWeights weights_;
  std::deque<Frame> history_;
  std::deque<Vec3> est_win_, gt_win_;
  std::deque<double> rate_win_;
  ObservabilityCurve curve_;
  PanoramicDepthMap depth_lo_;
  Observation obs_;
  StepTiming pending_timing_;
  double last_yaw_rate_ = 0.0;
  long frame_ = 0;
  bool lost_ = false;
  bool last_degenerate_ = false;
  EpisodeStatus status_ = EpisodeStatus::Running;
  EpisodeLog log_;
};

/// Runs one episode to completion. Adaptive controllers need `policy`.
inline EpisodeLog run_episode(const Scenario& sc, const SimConfig& cfg, const ControllerSpec& spec, Pilot& pilot,
                              uint64_t seed, const EpisodeOptions& opt = {}, const ActorCritic* policy = nullptr,
                              const std::function<void(const Episode&, const StepRecord&)>& on_step = {}) {
  if (spec.kind == ControllerSpec::Kind::Adaptive && !policy) throw ConfigError("adaptive controller needs a policy");
  Episode ep(sc, cfg, spec, pilot, seed, opt);
  std::mt19937_64 act_rng(seed ^ 0x9e3779b97f4a7c15ULL);
  while (!ep.done()) {
    MpcWeights w = ep.spec_weights();
    double policy_ms = 0.0;
    if (policy) {
      const auto t0 = std::chrono::steady_clock::now();
      const auto a = policy->act(ep.observation().s_int, ep.observation().v_raw, false, act_rng);
      w = map_action(a.action, cfg.bounds);
      policy_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    }
    const StepRecord& r = ep.step(w, policy_ms);
    if (on_step) on_step(ep, r);
  }
  return ep.take_log();
}

/// Builds the pilot a scripted run uses: the expert follower from the start index.
inline std::unique_ptr<Pilot> make_scripted_pilot(const Scenario& sc, const SimConfig& cfg, bool train_segment,
                                                  std::size_t start) {
  const auto [lo, hi] = sc.segment(train_segment);
  return std::make_unique<ScriptedPilot>(sc.expert, lo, hi, start, cfg.pilot);
}

/// Start index an Episode would draw for this seed and segment.
inline std::size_t draw_start_index(const Scenario& sc, bool train_segment, uint64_t seed) {
  const auto [lo, hi] = sc.segment(train_segment);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> U(lo, hi - 1);
  return U(rng);
}

/// Scripted run: draws the start, builds the expert follower and runs.
inline EpisodeLog run_scripted(const Scenario& sc, const SimConfig& cfg, const ControllerSpec& spec, uint64_t seed,
                               EpisodeOptions opt = {}, const ActorCritic* policy = nullptr) {
  if (!opt.start_index) opt.start_index = draw_start_index(sc, opt.train_segment, seed);
  auto pilot = make_scripted_pilot(sc, cfg, opt.train_segment, *opt.start_index);
  return run_episode(sc, cfg, spec, *pilot, seed, opt, policy);
}

}  // namespace aware
