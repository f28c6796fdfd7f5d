// Command-line front end: scene generation, single episodes, training,
// evaluation, log replay and the live bridge server.

#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <numeric>

#include "aware/bridge_server.hpp"
#include "aware/training.hpp"

namespace fs = std::filesystem;
using namespace aware;

namespace {

struct Common {
  std::string config;
  std::optional<uint64_t> seed;
  std::string out;
  std::vector<std::string> sets;

  SimConfig load() const {
    SimConfig cfg = config.empty() ? SimConfig{} : load_config(config);
    ConfigRegistry reg(cfg);
    for (const auto& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      reg.set(detail::trim(kv.substr(0, eq)), detail::trim(kv.substr(eq + 1)));
    }
    cfg.validate();
    return cfg;
  }
  uint64_t seed_or(const SimConfig& cfg) const { return seed.value_or(cfg.episode.seed); }
  std::string out_or(const std::string& fallback) const { return out.empty() ? fallback : out; }
};

std::atomic<bool> g_stop{false};
extern "C" void on_signal(int) { g_stop = true; }

std::optional<ActorCritic> policy_for(const ControllerSpec& spec) {
  if (spec.kind != ControllerSpec::Kind::Adaptive) return std::nullopt;
  return load_checkpoint(spec.checkpoint).policy;
}

std::unique_ptr<Pilot> make_pilot(const std::string& kind, const Scenario& sc, const SimConfig& cfg, bool train_segment,
                                  std::size_t start, uint64_t seed) {
  if (kind == "scripted") return make_scripted_pilot(sc, cfg, train_segment, start);
  if (kind == "zero") return std::make_unique<ZeroPilot>();
  if (kind == "adversarial") return std::make_unique<AdversarialPilot>(mix_seed(seed, 0xad), cfg.pilot);
  throw ConfigError("unknown pilot '" + kind + "' (scripted, zero, adversarial)");
}

void write_errors(const fs::path& path, const TrajMetrics& m, double dt) {
  std::ofstream f(path);
  f << "# stamp\terror_m\n";
  for (std::size_t i = 0; i < m.per_frame_errors.size(); ++i)
    f << detail::fmt_double(static_cast<double>(i + 1) * dt) << '\t' << detail::fmt_double(m.per_frame_errors[i]) << '\n';
}

void print_metrics(const EpisodeLog& log) {
  const TrajMetrics m = log.metrics();
  std::vector<double> ms;
  for (const auto& s : log.steps) ms.push_back(s.timing.decision_ms());
  std::printf("%s  %s  seed=%llu  status=%s  steps=%zu  ape_mean=%.4f  ape_rmse=%.4f  ape_max=%.4f  drift=%.3f%%  "
              "decision_ms(mean/p95)=%.2f/%.2f\n",
              log.scenario.c_str(), log.controller.c_str(), static_cast<unsigned long long>(log.seed),
              status_name(log.status), log.steps.size(), m.ape_mean, m.ape_rmse, m.ape_max, m.drift_rate,
              ms.empty() ? 0.0 : std::accumulate(ms.begin(), ms.end(), 0.0) / static_cast<double>(ms.size()),
              ms.empty() ? 0.0 : quantile(ms, 0.95));
}

int cmd_gen_scene(const Common& c, const std::string& kind_name, bool ascii) {
  SimConfig cfg = c.load();
  if (c.seed) cfg.scene.seed = *c.seed;
  const SceneKind kind = kind_name.empty() ? cfg.scene_kind : parse_scene_kind(kind_name);
  const SyntheticScene s = gen_synthetic_scene(kind, cfg.scene);
  const fs::path dir = c.out_or("scenes");
  fs::create_directories(dir);
  const std::string name = scene_kind_name(kind);
  const fs::path map = dir / (name + (ascii ? ".ply" : ".apc"));
  const fs::path traj = dir / (name + ".traj");
  if (ascii) {
    std::ofstream f(map);
    f << "ply\nformat ascii 1.0\nelement vertex " << s.points.size()
      << "\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
    for (const auto& p : s.points) f << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
  } else {
    save_map(map.string(), s.points, true);
  }
  save_trajectory(traj.string(), s.expert);
  // Round-trip through the loader so a broken file fails here, not later.
  const Scenario check = Scenario::load(name, map.string(), traj.string(), cfg);
  std::printf("%s: %zu points, %zu expert poses\n", name.c_str(), s.points.size(), check.expert.size());
  std::printf("scenario entry: %s@%s@%s\n", name.c_str(), map.c_str(), traj.c_str());
  return 0;
}

int cmd_run(const Common& c, const std::string& scene, const std::string& controller, const std::string& pilot_kind,
            bool train_segment, std::optional<double> duration) {
  const SimConfig cfg = c.load();
  const uint64_t seed = c.seed_or(cfg);
  const Scenario sc = make_scenario(scene.empty() ? scene_kind_name(cfg.scene_kind) : scene, cfg);
  const ControllerSpec spec = ControllerSpec::parse(controller);
  const auto policy = policy_for(spec);
  EpisodeOptions eo;
  eo.train_segment = train_segment;
  eo.duration = duration;
  eo.start_index = draw_start_index(sc, train_segment, seed);
  auto pilot = make_pilot(pilot_kind, sc, cfg, train_segment, *eo.start_index, seed);
  const EpisodeLog log = run_episode(sc, cfg, spec, *pilot, seed, eo, policy ? &*policy : nullptr);

  const fs::path dir = c.out_or("run");
  fs::create_directories(dir);
  save_log((dir / "episode.jsonl").string(), log);
  write_errors(dir / "errors.txt", log.metrics(), log.dt);
  print_metrics(log);
  return log.status == EpisodeStatus::Completed ? 0 : 2;
}

int cmd_train(const Common& c, std::vector<std::string> scenes, bool resume, std::optional<long> steps) {
  SimConfig cfg = c.load();
  if (steps) cfg.ppo.total_steps = *steps;
  if (scenes.empty()) scenes = cfg.train.scenes;
  TrainOptions to;
  to.out_dir = c.out_or("train");
  to.seed = c.seed_or(cfg);
  to.resume = resume;
  to.on_metrics = [](const nlohmann::json& j) {
    if (j.at("type") == "update")
      std::printf("update %4d  step %8ld  kl %.4f  value_loss %.3f  entropy %.3f%s\n", j.at("update").get<int>(),
                  j.at("step").get<long>(), j.at("kl").get<double>(), j.at("value_loss").get<double>(),
                  j.at("entropy").get<double>(), j.at("rolled_back").get<bool>() ? "  (rolled back)" : "");
    else if (j.at("type") == "episode")
      std::printf("episode %4d  %-22s %-10s reward %.4f  lambda_obs %.0f\n", j.at("episode").get<int>(),
                  j.at("scenario").get<std::string>().c_str(), j.at("status").get<std::string>().c_str(),
                  j.at("reward").get<double>(), j.at("lambda_obs").get<double>());
    std::fflush(stdout);
  };
  const TrainResult r = train(make_scenarios(scenes, cfg), cfg, to);
  std::printf("done: %ld steps, %d updates, checkpoint %s\n", r.global_step, r.updates,
              (fs::path(to.out_dir) / "checkpoint.awpk").c_str());
  return 0;
}

int cmd_eval(const Common& c, std::vector<std::string> scenes, std::vector<std::string> controllers, bool save_logs,
             std::optional<int> runs) {
  SimConfig cfg = c.load();
  if (runs) cfg.eval.runs_per_pair = *runs;
  if (scenes.empty()) scenes = cfg.train.scenes;
  if (controllers.empty()) controllers = cfg.eval.controllers;
  std::vector<ControllerSpec> specs;
  for (const auto& s : controllers) specs.push_back(ControllerSpec::parse(s));
  EvalOptions eo;
  eo.out_dir = c.out_or("eval");
  eo.seed = c.seed_or(cfg);
  eo.save_logs = save_logs;
  eo.on_run = [](const EvalRun& r) {
    std::printf("%-22s %-14s run %d  %-10s ape_mean %.4f\n", r.scenario.c_str(), r.controller.c_str(), r.run,
                status_name(r.status), r.metrics.ape_mean);
    std::fflush(stdout);
  };
  const EvalResult res = evaluate(make_scenarios(scenes, cfg), specs, cfg, eo);
  write_eval(eo.out_dir, res);
  std::cout << "\n" << results_tsv(res);
  return 0;
}

int cmd_replay(const Common& c, const std::string& path, int every, bool verify, const std::string& checkpoint) {
  const EpisodeLog log = load_log(path);
  const TrajMetrics m = log.metrics();
  std::printf("# stamp\tgt_x\tgt_y\tgt_z\tgt_yaw\test_yaw\terror_m\tlambda_obs\tqp\n");
  for (std::size_t i = 0; i < log.steps.size(); ++i) {
    if (every > 1 && i % static_cast<std::size_t>(every) != 0 && i + 1 != log.steps.size()) continue;
    const StepRecord& s = log.steps[i];
    std::printf("%.2f\t%.3f\t%.3f\t%.3f\t%.3f\t%.3f\t%.4f\t%.1f\t%s\n", s.stamp, s.gt.p.x(), s.gt.p.y(), s.gt.p.z(),
                s.gt.psi, s.est_yaw, i < m.per_frame_errors.size() ? m.per_frame_errors[i] : 0.0,
                s.weights.lambda_obs, qp_status_name(s.qp_status));
  }
  print_metrics(log);
  if (!verify) return 0;

  // Re-simulate from the header and compare everything but wall-clock timing.
  const SimConfig cfg = c.load();
  const Scenario sc = make_scenario(log.scenario, cfg);
  ControllerSpec spec = log.controller == "adaptive" ? ControllerSpec::adaptive(checkpoint)
                                                     : ControllerSpec::parse(log.controller);
  spec.validate();
  const auto policy = policy_for(spec);
  EpisodeOptions eo;
  eo.train_segment = log.train_segment;
  eo.start_index = log.start_index;
  eo.init_yaw = log.init_yaw;
  eo.duration = static_cast<double>(log.steps.size()) * log.dt;
  const EpisodeLog again = run_scripted(sc, cfg, spec, log.seed, eo, policy ? &*policy : nullptr);
  const std::size_t n = std::min(log.steps.size(), again.steps.size());
  for (std::size_t i = 0; i < n; ++i)
    if (step_json(log.steps[i], false) != step_json(again.steps[i], false)) {
      std::printf("replay diverges at step %zu (stamp %.2f)\n", i, log.steps[i].stamp);
      return 3;
    }
  if (log.steps.size() != again.steps.size() || log.status != again.status) {
    std::printf("replay length or status differs: %zu/%s vs %zu/%s\n", log.steps.size(),
                status_name(log.status), again.steps.size(), status_name(again.status));
    return 3;
  }
  std::printf("replay matches the log bit for bit (%zu steps)\n", n);
  return 0;
}

int cmd_serve(const Common& c, const std::string& scene, const std::string& controller, std::optional<int> port,
              const std::string& bind, int episodes) {
  const SimConfig cfg = c.load();
  const uint64_t seed = c.seed_or(cfg);
  const Scenario sc = make_scenario(scene.empty() ? scene_kind_name(cfg.scene_kind) : scene, cfg);
  const ControllerSpec spec = ControllerSpec::parse(controller);
  const auto policy = policy_for(spec);
  BridgeServer srv(port.value_or(cfg.bridge.port), cfg.bridge, cfg.pilot.limits, bind);
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::printf("bridge listening on ws://%s:%d  scene=%s controller=%s\n", bind.c_str(), srv.port(), sc.name.c_str(),
              spec.label().c_str());
  std::fflush(stdout);

  ServeOptions so;
  so.realtime = cfg.bridge.realtime;
  so.stop = &g_stop;
  for (int k = 0; (episodes <= 0 || k < episodes) && !g_stop; ++k) {
    srv.mailbox().clear();
    const EpisodeLog log = serve_episode(srv, sc, cfg, spec, mix_seed(seed, static_cast<uint64_t>(k)),
                                         policy ? &*policy : nullptr, so);
    print_metrics(log);
    if (!c.out.empty()) {
      fs::create_directories(c.out);
      save_log((fs::path(c.out) / ("live_" + std::to_string(k) + ".jsonl")).string(), log);
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Observability-aware yaw control: simulation, training and evaluation"};
  app.require_subcommand(1);
  Common c;
  app.add_option("--config", c.config, "key = value config file")->check(CLI::ExistingFile);
  app.add_option("--seed", c.seed, "master seed (default: episode.seed)");
  app.add_option("--out", c.out, "output directory");
  app.add_option("--set", c.sets, "override one config key, key=value (repeatable)");
  app.fallthrough();

  auto* dump = app.add_subcommand("dump-config", "print the effective configuration");

  std::string kind;
  bool ascii = false;
  auto* gen = app.add_subcommand("gen-scene", "write a synthetic map and expert trajectory");
  gen->add_option("kind", kind, "box_room, corridor, corridor_with_alcoves, cylinder_cave, pillar_forest");
  gen->add_flag("--ascii", ascii, "write an ASCII PLY instead of binary APC1");

  std::string scene, controller = "static:1000", pilot = "scripted";
  bool train_segment = false;
  std::optional<double> duration;
  auto* run = app.add_subcommand("run", "simulate one episode and write its log");
  run->add_option("--scene", scene, "scene kind or name@map@trajectory");
  run->add_option("--controller", controller, "fixed:<omega>, static:<lambda_obs> or adaptive:<checkpoint>");
  run->add_option("--pilot", pilot, "scripted, zero or adversarial");
  run->add_flag("--train-segment", train_segment, "start on the training part of the path");
  run->add_option("--duration", duration, "seconds");

  std::vector<std::string> scenes, controllers;
  bool resume = false;
  std::optional<long> steps;
  auto* tr = app.add_subcommand("train", "train the weight policy with PPO");
  tr->add_option("--scenes", scenes, "scenario list (default train.scenes)")->delimiter(',');
  tr->add_flag("--resume", resume, "continue from the checkpoint in --out");
  tr->add_option("--steps", steps, "total environment steps");

  bool save_logs = false;
  std::optional<int> runs;
  auto* ev = app.add_subcommand("eval", "compare controllers on held-out starts");
  ev->add_option("--scenes", scenes, "scenario list (default train.scenes)")->delimiter(',');
  ev->add_option("--controllers", controllers, "controller list (default eval.controllers)")->delimiter(',');
  ev->add_option("--runs", runs, "runs per (scenario, controller)");
  ev->add_flag("--save-logs", save_logs, "keep every episode log");

  std::string log_path, checkpoint;
  int every = 10;
  bool verify = false;
  auto* rp = app.add_subcommand("replay", "print a recorded episode, optionally re-simulate it");
  rp->add_option("log", log_path, "episode .jsonl")->required()->check(CLI::ExistingFile);
  rp->add_option("--every", every, "print every Nth step");
  rp->add_flag("--verify", verify, "re-run a scripted-pilot episode and compare");
  rp->add_option("--checkpoint", checkpoint, "policy for adaptive logs");

  std::optional<int> port;
  std::string bind = "127.0.0.1";
  int episodes = 0;
  auto* sv = app.add_subcommand("serve", "run episodes driven by a live WebSocket pilot");
  sv->add_option("--scene", scene, "scene kind or name@map@trajectory");
  sv->add_option("--controller", controller, "controller spec");
  sv->add_option("--port", port, "TCP port (default bridge.port, 0 = any)");
  sv->add_option("--bind", bind, "listen address");
  sv->add_option("--episodes", episodes, "episodes to serve (0 = until interrupted)");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*dump) {
      SimConfig cfg = c.load();
      std::cout << ConfigRegistry(cfg).dump();
      return 0;
    }
    if (*gen) return cmd_gen_scene(c, kind, ascii);
    if (*run) return cmd_run(c, scene, controller, pilot, train_segment, duration);
    if (*tr) return cmd_train(c, scenes, resume, steps);
    if (*ev) return cmd_eval(c, scenes, controllers, save_logs, runs);
    if (*rp) return cmd_replay(c, log_path, every, verify, checkpoint);
    if (*sv) return cmd_serve(c, scene, controller, port, bind, episodes);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
