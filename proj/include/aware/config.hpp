#pragma once

// Every tunable default in one struct, plus a flat "key = value" file
// format bound to it field by field.

#include <charconv>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "aware/estimator.hpp"
#include "aware/mpc.hpp"
#include "aware/policy.hpp"
#include "aware/scenes.hpp"

namespace aware {

struct EpisodeSettings {
  double duration = 120.0;
  double control_dt = 0.1;
  uint64_t seed = 1;
  double train_fraction = 0.5;
  bool warm_start_survey = true;
  int survey_steps = 16;
  bool oracle_estimator = false;  // estimator reports ground truth
};

struct SensingSettings {
  double world_voxel = 0.25;
  double noise_sigma = 0.02;
  double scan_skew = 1.0;  // fraction of the frame period the sweep spans
  int skew_slices = 8;
};

struct PanoramaSettings {
  int window = 5;
  double leaf = 0.2;
  int hi_h = 80, hi_w = 160;
  int lo_h = 40, lo_w = 80;
  double max_range = 40.0;
};

struct PilotSettings {
  double speed = 1.1;
  double lookahead = 1.5;
  JoystickLimits limits;
  double adversarial_hold = 2.0;  // seconds per adversarial heading
};

struct TrainSettings {
  std::vector<std::string> scenes{"corridor", "pillar_forest", "corridor_with_alcoves"};
  int checkpoint_every = 10;  // PPO updates
  double episode_duration = 120.0;
  double reward_clip = 10.0;  // bound on normalized rewards (0 = off)
};

struct EvalSettings {
  int runs_per_pair = 5;
  std::vector<std::string> controllers{"fixed:1.0", "fixed:8.0", "static:100", "static:500", "static:1000",
                                       "static:1500", "static:2000"};
};

struct BridgeSettings {
  int port = 8765;
  double deadman_ms = 500.0;
  int observer_queue = 8;
  bool realtime = true;
};

struct SimConfig {
  EpisodeSettings episode;
  SceneKind scene_kind = SceneKind::Corridor;
  SceneParams scene;
  SensorModel sensor;
  SensingSettings sensing;
  PanoramaSettings panorama;
  LioOptions estimator;
  MpcConfig mpc;
  MpcWeights weights;  // translation defaults; lambda_obs set per controller
  PilotSettings pilot;
  RewardConfig reward;
  PpoConfig ppo;
  PolicyArch arch;
  WeightBounds bounds;
  TrainSettings train;
  EvalSettings eval;
  BridgeSettings bridge;

  void validate() const {
    if (!(episode.duration > 0)) throw ConfigError("episode.duration must be positive");
    if (!(episode.control_dt > 0)) throw ConfigError("episode.control_dt must be positive");
    if (std::abs(mpc.dt - episode.control_dt) > 1e-12) throw ConfigError("mpc.dt must equal episode.control_dt");
    if (!(episode.train_fraction > 0 && episode.train_fraction < 1))
      throw ConfigError("episode.train_fraction must lie in (0, 1)");
    if (panorama.lo_h * panorama.lo_w != arch.v_raw) throw ConfigError("panorama low-res size must equal policy.v_raw");
    if (panorama.hi_h % panorama.lo_h != 0 || panorama.hi_w % panorama.lo_w != 0)
      throw ConfigError("panorama high-res size must be a multiple of the low-res size");
    if (arch.s_int != 11 + mpc.sweep.candidates) throw ConfigError("policy.s_int must equal 11 + sweep candidates");
    if (sensing.skew_slices < 1 || sensing.scan_skew < 0 || sensing.scan_skew > 1)
      throw ConfigError("invalid scan skew settings");
    if (sensing.noise_sigma < 0) throw ConfigError("sensing.noise_sigma must be >= 0");
    sensor.validate();
    mpc.validate();
    weights.validate();
    reward.validate();
    ppo.validate();
    bounds.validate();
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& key, const std::string& v) {
  double out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size() || !std::isfinite(out))
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

template <class I>
I parse_int(const std::string& key, const std::string& v) {
  I out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline std::string fmt_double(double x) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, r.ptr);
}

}  // namespace detail

/// Field bindings for one SimConfig instance.
class ConfigRegistry {
 public:
  struct Entry {
    std::string key;
    std::function<std::string()> get;
    std::function<void(const std::string&)> set;
  };

  explicit ConfigRegistry(SimConfig& c) {
    num("episode.duration", c.episode.duration);
    num("episode.control_dt", c.episode.control_dt);
    integer("episode.seed", c.episode.seed);
    num("episode.train_fraction", c.episode.train_fraction);
    flag("episode.warm_start_survey", c.episode.warm_start_survey);
    integer("episode.survey_steps", c.episode.survey_steps);
    flag("episode.oracle_estimator", c.episode.oracle_estimator);

    add("scene.kind", [&c] { return scene_kind_name(c.scene_kind); },
        [&c](const std::string& v) { c.scene_kind = parse_scene_kind(v); });
    num("scene.density", c.scene.density);
    num("scene.room_x", c.scene.room_x);
    num("scene.room_y", c.scene.room_y);
    num("scene.room_z", c.scene.room_z);
    num("scene.length", c.scene.length);
    num("scene.width", c.scene.width);
    num("scene.height", c.scene.height);
    num("scene.end_clearance", c.scene.end_clearance);
    num("scene.alcove_spacing", c.scene.alcove_spacing);
    num("scene.alcove_depth", c.scene.alcove_depth);
    num("scene.alcove_width", c.scene.alcove_width);
    num("scene.cave_radius", c.scene.cave_radius);
    num("scene.cave_waviness", c.scene.cave_waviness);
    num("scene.forest_extent", c.scene.forest_extent);
    integer("scene.pillars", c.scene.pillars);
    num("scene.pillar_radius", c.scene.pillar_radius);
    num("scene.pillar_height", c.scene.pillar_height);
    num("scene.loop_radius", c.scene.loop_radius);
    num("scene.fly_height", c.scene.fly_height);
    num("scene.speed_mean", c.scene.speed_mean);
    num("scene.speed_amp", c.scene.speed_amp);
    num("scene.speed_period", c.scene.speed_period);
    integer("scene.seed", c.scene.seed);

    degrees("sensor.azimuth_fov_deg", c.sensor.azimuth_fov);
    degrees("sensor.elevation_fov_deg", c.sensor.elevation_fov);
    integer("sensor.rays_az", c.sensor.rays_az);
    integer("sensor.rays_el", c.sensor.rays_el);
    num("sensor.max_range", c.sensor.max_range);
    num("sensor.rate_hz", c.sensor.rate_hz);

    num("sensing.world_voxel", c.sensing.world_voxel);
    num("sensing.noise_sigma", c.sensing.noise_sigma);
    num("sensing.scan_skew", c.sensing.scan_skew);
    integer("sensing.skew_slices", c.sensing.skew_slices);

    integer("panorama.window", c.panorama.window);
    num("panorama.leaf", c.panorama.leaf);
    integer("panorama.hi_h", c.panorama.hi_h);
    integer("panorama.hi_w", c.panorama.hi_w);
    integer("panorama.lo_h", c.panorama.lo_h);
    integer("panorama.lo_w", c.panorama.lo_w);
    num("panorama.max_range", c.panorama.max_range);

    num("estimator.voxel_size", c.estimator.voxel_size);
    integer("estimator.iters", c.estimator.reg.iters);
    num("estimator.tol", c.estimator.reg.tol);
    num("estimator.damping", c.estimator.reg.damping);
    integer("estimator.max_points", c.estimator.reg.max_points);
    integer("estimator.min_assoc", c.estimator.reg.min_assoc);
    integer("estimator.revoxelize_every", c.estimator.revoxelize_every);
    integer("estimator.max_points_per_voxel", c.estimator.max_points_per_voxel);
    integer("estimator.lost_after", c.estimator.lost_after);

    integer("mpc.horizon", c.mpc.N);
    num("mpc.dt", c.mpc.dt);
    num("mpc.lambda_R", c.mpc.lambda_R);
    num("mpc.lambda_Rcon", c.mpc.lambda_Rcon);
    num("mpc.terminal_factor", c.mpc.terminal_factor);
    num("mpc.v_max", c.mpc.v_max);
    num("mpc.a_max", c.mpc.a_max);
    num("mpc.j_max", c.mpc.j_max);
    num("mpc.yaw_rate_max", c.mpc.yaw_rate_max);
    num("mpc.lambda_track", c.mpc.lambda_track);
    num("mpc.fit_half_width", c.mpc.fit_half_width);
    integer("mpc.fit_n_local", c.mpc.fit_n_local);
    flag("mpc.global_steering", c.mpc.global_steering);
    num("mpc.braking_tau", c.mpc.braking_tau);
    integer("mpc.sweep_candidates", c.mpc.sweep.candidates);
    num("mpc.sweep_reg", c.mpc.sweep.reg);
    integer("mpc.sweep_max_corrs", c.mpc.sweep.max_corrs);
    num("mpc.sfc_max_half_extent", c.mpc.sfc.max_half_extent);
    num("mpc.sfc_margin", c.mpc.sfc.margin);
    integer("mpc.qp_max_iter", c.mpc.qp.max_iter);
    num("mpc.qp_eps_abs", c.mpc.qp.eps_abs);
    num("mpc.qp_eps_rel", c.mpc.qp.eps_rel);
    flag("mpc.qp_polish", c.mpc.qp.polish);
    num("mpc.lambda_p", c.weights.lambda_p);
    num("mpc.lambda_v", c.weights.lambda_v);
    num("mpc.lambda_a", c.weights.lambda_a);
    num("mpc.lambda_yawrate", c.weights.lambda_yawrate);

    num("pilot.speed", c.pilot.speed);
    num("pilot.lookahead", c.pilot.lookahead);
    num("pilot.v_xy", c.pilot.limits.v_xy);
    num("pilot.v_z", c.pilot.limits.v_z);
    num("pilot.yaw_rate", c.pilot.limits.yaw_rate);
    num("pilot.adversarial_hold", c.pilot.adversarial_hold);

    num("reward.alpha1", c.reward.alpha1);
    num("reward.alpha2", c.reward.alpha2);
    num("reward.alpha3", c.reward.alpha3);
    integer("reward.rte_window", c.reward.rte_window);
    num("reward.voxel_size_exp", c.reward.voxel_size_exp);

    integer("ppo.total_steps", c.ppo.total_steps);
    num("ppo.lr_start", c.ppo.lr_start);
    num("ppo.lr_end", c.ppo.lr_end);
    num("ppo.gamma", c.ppo.gamma);
    num("ppo.gae_lambda", c.ppo.gae_lambda);
    num("ppo.clip", c.ppo.clip);
    num("ppo.kl_limit", c.ppo.kl_limit);
    integer("ppo.rollout", c.ppo.rollout);
    integer("ppo.batch", c.ppo.batch);
    integer("ppo.epochs", c.ppo.epochs);
    num("ppo.value_coef", c.ppo.value_coef);
    num("ppo.entropy_coef", c.ppo.entropy_coef);
    num("ppo.max_grad_norm", c.ppo.max_grad_norm);

    integer("policy.s_int", c.arch.s_int);
    integer("policy.v_raw", c.arch.v_raw);
    int_list("policy.enc_hidden", c.arch.enc_hidden);
    integer("policy.enc_out", c.arch.enc_out);
    int_list("policy.head_hidden", c.arch.head_hidden);
    num("policy.init_log_std", c.arch.init_log_std);
    array5("policy.weights_min", c.bounds.lo);
    array5("policy.weights_max", c.bounds.hi);

    str_list("train.scenes", c.train.scenes);
    integer("train.checkpoint_every", c.train.checkpoint_every);
    num("train.episode_duration", c.train.episode_duration);
    num("train.reward_clip", c.train.reward_clip);
    integer("eval.runs_per_pair", c.eval.runs_per_pair);
    str_list("eval.controllers", c.eval.controllers);

    integer("bridge.port", c.bridge.port);
    num("bridge.deadman_ms", c.bridge.deadman_ms);
    integer("bridge.observer_queue", c.bridge.observer_queue);
    flag("bridge.realtime", c.bridge.realtime);
  }

  const std::vector<Entry>& entries() const { return entries_; }

  void set(const std::string& key, const std::string& value) {
    for (auto& e : entries_)
      if (e.key == key) {
        e.set(value);
        return;
      }
    throw ConfigError("unknown config key '" + key + "'");
  }

  std::string get(const std::string& key) const {
    for (const auto& e : entries_)
      if (e.key == key) return e.get();
    throw ConfigError("unknown config key '" + key + "'");
  }

  /// Applies "key = value" lines; '#' starts a comment.
  void apply_text(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.resize(hash);
      line = detail::trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
      try {
        set(detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
      } catch (const ConfigError& e) {
        throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
      }
    }
  }

  std::string dump() const {
    std::string out;
    std::string section;
    for (const auto& e : entries_) {
      const std::string sec = e.key.substr(0, e.key.find('.'));
      if (sec != section) {
        if (!section.empty()) out += "\n";
        out += "# " + sec + "\n";
        section = sec;
      }
      out += e.key + " = " + e.get() + "\n";
    }
    return out;
  }

 private:
  void add(std::string key, std::function<std::string()> g, std::function<void(const std::string&)> s) {
    entries_.push_back({std::move(key), std::move(g), std::move(s)});
  }
  void num(const std::string& k, double& f) {
    add(k, [&f] { return detail::fmt_double(f); }, [&f, k](const std::string& v) { f = detail::parse_double(k, v); });
  }
  void degrees(const std::string& k, double& rad) {
    add(k, [&rad] { return detail::fmt_double(rad * 180.0 / kPi); },
        [&rad, k](const std::string& v) { rad = detail::parse_double(k, v) * kPi / 180.0; });
  }
  template <class I>
  void integer(const std::string& k, I& f) {
    add(k, [&f] { return std::to_string(f); }, [&f, k](const std::string& v) { f = detail::parse_int<I>(k, v); });
  }
  void flag(const std::string& k, bool& f) {
    add(k, [&f] { return std::string(f ? "true" : "false"); },
        [&f, k](const std::string& v) { f = detail::parse_bool(k, v); });
  }
  void str_list(const std::string& k, std::vector<std::string>& f) {
    add(k,
        [&f] {
          std::string s;
          for (std::size_t i = 0; i < f.size(); ++i) s += (i ? "," : "") + f[i];
          return s;
        },
        [&f](const std::string& v) { f = detail::split_list(v); });
  }
  void int_list(const std::string& k, std::vector<int>& f) {
    add(k,
        [&f] {
          std::string s;
          for (std::size_t i = 0; i < f.size(); ++i) s += (i ? "," : "") + std::to_string(f[i]);
          return s;
        },
        [&f, k](const std::string& v) {
          std::vector<int> out;
          for (const auto& item : detail::split_list(v)) out.push_back(detail::parse_int<int>(k, item));
          f = out;
        });
  }
  void array5(const std::string& k, std::array<double, 5>& f) {
    add(k,
        [&f] {
          std::string s;
          for (std::size_t i = 0; i < 5; ++i) s += (i ? "," : "") + detail::fmt_double(f[i]);
          return s;
        },
        [&f, k](const std::string& v) {
          const auto items = detail::split_list(v);
          if (items.size() != 5) throw ConfigError(k + ": expected 5 comma-separated numbers");
          for (std::size_t i = 0; i < 5; ++i) f[i] = detail::parse_double(k, items[i]);
        });
  }

  std::vector<Entry> entries_;
};

inline SimConfig load_config(const std::string& path) {
  SimConfig c;
  ConfigRegistry(c).apply_text(read_file(path));
  c.validate();
  return c;
}

}  // namespace aware
