#pragma once

// PPO training over a round-robin scenario suite, and held-out evaluation
// of controller sets.

#include <filesystem>
#include <fstream>
#include <map>

#include "aware/sim.hpp"

namespace aware {

inline uint64_t mix_seed(uint64_t a, uint64_t b) {
  uint64_t z = a * 0x9e3779b97f4a7c15ULL + b + 0x632be59bd9b4e019ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// A synthetic scene kind, or "name@map_path@trajectory_path" for files.
inline Scenario make_scenario(const std::string& entry, const SimConfig& cfg) {
  const auto at = entry.find('@');
  if (at == std::string::npos) return Scenario::from_scene(parse_scene_kind(entry), cfg);
  const auto at2 = entry.find('@', at + 1);
  if (at2 == std::string::npos) throw ConfigError("scenario '" + entry + "': expected name@map@trajectory");
  return Scenario::load(entry.substr(0, at), entry.substr(at + 1, at2 - at - 1), entry.substr(at2 + 1), cfg);
}

inline std::vector<Scenario> make_scenarios(const std::vector<std::string>& entries, const SimConfig& cfg) {
  std::vector<Scenario> out;
  for (const auto& e : entries) out.push_back(make_scenario(e, cfg));
  return out;
}

// ---------------------------------------------------------------------------
// Training.

struct TrainOptions {
  std::string out_dir;
  uint64_t seed = 1;
  bool resume = false;
  std::function<void(const nlohmann::json&)> on_metrics;  // every metrics line
};

struct EpisodeSummary {
  long end_step = 0;
  int index = 0;
  std::string scenario;
  EpisodeStatus status = EpisodeStatus::Running;
  int steps = 0;
  double mean_reward = 0.0;       // raw
  double mean_norm_reward = 0.0;  // normalized by the running statistic
  double acc = 0.0, exp = 0.0, smooth = 0.0;
  double mean_lambda_obs = 0.0;
};

struct TrainResult {
  long global_step = 0;
  int updates = 0;
  std::vector<EpisodeSummary> episodes;
  Checkpoint final;
};

namespace detail {

inline nlohmann::json episode_json(const EpisodeSummary& e) {
  return {{"type", "episode"},         {"step", e.end_step},       {"episode", e.index},
          {"scenario", e.scenario},    {"status", status_name(e.status)}, {"steps", e.steps},
          {"reward", e.mean_reward},   {"norm_reward", e.mean_norm_reward}, {"acc", e.acc},
          {"exp", e.exp},              {"smooth", e.smooth},       {"lambda_obs", e.mean_lambda_obs}};
}

inline void write_json_file(const std::filesystem::path& p, const nlohmann::json& j) {
  const auto tmp = p.string() + ".tmp";
  {
    std::ofstream f(tmp);
    if (!f) throw Error("cannot write " + tmp);
    f << j.dump(2) << "\n";
  }
  std::filesystem::rename(tmp, p);
}

}  // namespace detail

/// Episodes draw their start from the training fraction of each path and
/// cycle through the scenarios in order. Metrics go to out_dir/metrics.jsonl,
/// checkpoints to out_dir/checkpoint.awpk.
inline TrainResult train(const std::vector<Scenario>& scenarios, const SimConfig& cfg, const TrainOptions& opt) {
  namespace fs = std::filesystem;
  if (scenarios.empty()) throw ConfigError("train: need at least one scenario");
  cfg.validate();
  const fs::path dir = opt.out_dir.empty() ? fs::path(".") : fs::path(opt.out_dir);
  fs::create_directories(dir);
  const fs::path ckpt_path = dir / "checkpoint.awpk", state_path = dir / "train_state.json",
                 metrics_path = dir / "metrics.jsonl";

  TrainResult res;
  Checkpoint ck{ActorCritic(cfg.arch, opt.seed), Adam{}, 0, RunningStat{}};
  ck.opt = Adam(ck.policy.num_params());
  int episode_index = 0;
  if (opt.resume && fs::exists(ckpt_path)) {
    ck = load_checkpoint(ckpt_path.string());
    if (fs::exists(state_path)) {
      const auto st = nlohmann::json::parse(read_file(state_path.string()));
      episode_index = st.at("episodes").get<int>();
      res.updates = st.at("updates").get<int>();
    }
  }
  std::ofstream metrics(metrics_path, opt.resume ? std::ios::app : std::ios::trunc);
  auto emit = [&](const nlohmann::json& j) {
    metrics << j.dump() << "\n";
    metrics.flush();
    if (opt.on_metrics) opt.on_metrics(j);
  };
  auto save = [&] {
    save_checkpoint(ckpt_path.string(), ck);
    detail::write_json_file(state_path, {{"episodes", episode_index}, {"updates", res.updates}, {"global_step", ck.global_step}});
  };

  const auto R = static_cast<Eigen::Index>(cfg.ppo.rollout);
  PpoBatch buf;
  buf.s_int.resize(cfg.arch.s_int, R);
  buf.v_raw.resize(cfg.arch.v_raw, R);
  buf.raw_actions.resize(cfg.arch.act_dim, R);
  buf.old_logp.resize(R);
  VectorXd values(R), rewards(R);
  std::vector<uint8_t> dones(static_cast<std::size_t>(R), 0);
  Eigen::Index fill = 0;
  std::mt19937_64 rng(mix_seed(opt.seed, static_cast<uint64_t>(ck.global_step)));

  while (ck.global_step < cfg.ppo.total_steps) {
    const Scenario& sc = scenarios[static_cast<std::size_t>(episode_index) % scenarios.size()];
    const uint64_t ep_seed = mix_seed(opt.seed, static_cast<uint64_t>(episode_index) + 1);
    EpisodeOptions eo;
    eo.train_segment = true;
    eo.duration = cfg.train.episode_duration;
    eo.start_index = draw_start_index(sc, true, ep_seed);
    auto pilot = make_scripted_pilot(sc, cfg, true, *eo.start_index);
    Episode ep(sc, cfg, ControllerSpec::adaptive("training"), *pilot, ep_seed, eo);

    EpisodeSummary sum;
    sum.index = episode_index;
    sum.scenario = sc.name;
    while (!ep.done() && ck.global_step < cfg.ppo.total_steps) {
      const Observation& o = ep.observation();
      ActionSample a;
      try {
        a = ck.policy.act(o.s_int, o.v_raw, true, rng);
      } catch (const PolicyFault&) {
        save();
        throw;
      }
      const MpcWeights w = map_action(a.action, cfg.bounds);
      buf.s_int.col(fill) = o.s_int;
      buf.v_raw.col(fill) = o.v_raw;
      buf.raw_actions.col(fill) = a.raw;
      buf.old_logp(fill) = a.logprob;
      values(fill) = a.value;

      const StepRecord& rec = ep.step(w);
      ck.reward_stat.push(rec.reward.total);
      double rn = normalize(rec.reward.total, ck.reward_stat);
      if (cfg.train.reward_clip > 0) rn = std::clamp(rn, -cfg.train.reward_clip, cfg.train.reward_clip);
      rewards(fill) = rn;
      dones[static_cast<std::size_t>(fill)] = ep.done() ? 1 : 0;
      ++fill;
      ++ck.global_step;

      sum.steps += 1;
      sum.mean_reward += rec.reward.total;
      sum.mean_norm_reward += rn;
      sum.acc += rec.reward.acc;
      sum.exp += rec.reward.exp;
      sum.smooth += rec.reward.smooth;
      sum.mean_lambda_obs += w.lambda_obs;

      if (fill == R) {
        double last_value = 0.0;
        if (!ep.done()) last_value = ck.policy.act(ep.observation().s_int, ep.observation().v_raw, false, rng).value;
        GaeResult g = gae(rewards, values, dones, last_value, cfg.ppo.gamma, cfg.ppo.gae_lambda);
        buf.returns = g.returns;
        buf.advantages = g.advantages;
        standardize(buf.advantages);
        const PpoReport rep = ppo_update(ck.policy, ck.opt, buf, cfg.ppo, ck.global_step, rng);
        ++res.updates;
        emit({{"type", "update"},
              {"step", ck.global_step},
              {"update", res.updates},
              {"lr", rep.lr},
              {"kl", rep.kl},
              {"loss", rep.last.total},
              {"policy_loss", rep.last.policy},
              {"value_loss", rep.last.value},
              {"entropy", rep.last.entropy},
              {"clip_frac", rep.last.clip_frac},
              {"epochs", rep.epochs_run},
              {"minibatches", rep.minibatches},
              {"early_stop", rep.early_stop},
              {"rolled_back", rep.rolled_back},
              {"aborted", rep.aborted},
              {"reward_mean", ck.reward_stat.mean},
              {"reward_var", ck.reward_stat.variance()}});
        fill = 0;
        if (cfg.train.checkpoint_every > 0 && res.updates % cfg.train.checkpoint_every == 0) save();
      }
    }
    sum.end_step = ck.global_step;
    sum.status = ep.status();
    if (sum.steps > 0) {
      const double n = sum.steps;
      sum.mean_reward /= n;
      sum.mean_norm_reward /= n;
      sum.acc /= n;
      sum.exp /= n;
      sum.smooth /= n;
      sum.mean_lambda_obs /= n;
    }
    ++episode_index;
    emit(detail::episode_json(sum));
    res.episodes.push_back(sum);
  }
  save();
  res.global_step = ck.global_step;
  res.final = std::move(ck);
  return res;
}

/// Episode summaries from a metrics log (for resumed or external analysis).
inline std::vector<EpisodeSummary> read_episode_metrics(const std::string& path) {
  std::vector<EpisodeSummary> out;
  std::istringstream in(read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    const auto j = nlohmann::json::parse(line);
    if (j.at("type") != "episode") continue;
    EpisodeSummary e;
    e.end_step = j.at("step").get<long>();
    e.index = j.at("episode").get<int>();
    e.scenario = j.at("scenario").get<std::string>();
    e.status = parse_status(j.at("status").get<std::string>());
    e.steps = j.at("steps").get<int>();
    e.mean_reward = j.at("reward").get<double>();
    e.mean_norm_reward = j.at("norm_reward").get<double>();
    e.acc = j.at("acc").get<double>();
    e.exp = j.at("exp").get<double>();
    e.smooth = j.at("smooth").get<double>();
    e.mean_lambda_obs = j.at("lambda_obs").get<double>();
    out.push_back(e);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation.

struct EvalRun {
  std::string scenario, controller;
  int run = 0;
  uint64_t seed = 0;
  std::size_t start_index = 0;
  EpisodeStatus status = EpisodeStatus::Running;
  int steps = 0;
  TrajMetrics metrics;
  double mean_decision_ms = 0.0;
  double p95_decision_ms = 0.0;

  /// APE used for ranking: a run whose estimator got lost counts as worst.
  double ranked_ape() const {
    return status == EpisodeStatus::Completed ? metrics.ape_mean : std::numeric_limits<double>::infinity();
  }
};

struct EvalRow {
  std::string scenario, controller;
  int runs = 0, completed = 0;
  double ape_mean_median = 0, ape_rmse_median = 0, ape_max_median = 0, drift_median = 0;
  double ape_mean_q1 = 0, ape_mean_q3 = 0;
  double err_p25 = 0, err_p50 = 0, err_p75 = 0, err_p95 = 0;  // pooled per-frame errors
};

struct EvalResult {
  std::vector<EvalRun> runs;
  std::vector<EvalRow> rows;
};

inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(pos));
  const double f = pos - static_cast<double>(i);
  if (i + 1 >= v.size()) return v.back();
  if (!std::isfinite(v[i]) || !std::isfinite(v[i + 1])) return f > 0 ? v[i + 1] : v[i];
  return v[i] + f * (v[i + 1] - v[i]);
}

inline double median(std::vector<double> v) { return quantile(std::move(v), 0.5); }

inline std::string file_safe(std::string s) {
  for (char& c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '.' && c != '-' && c != '_') c = '_';
  return s;
}

struct EvalOptions {
  std::string out_dir;  // empty: nothing written
  uint64_t seed = 1;
  bool save_logs = false;
  std::function<void(const EvalRun&)> on_run;
};

/// Every (scenario, controller) pair runs runs_per_pair seeds starting on
/// the held-out half of the path. Run r uses the same seed for every
/// controller, so pairs share start points and noise draws.
inline EvalResult evaluate(const std::vector<Scenario>& scenarios, const std::vector<ControllerSpec>& controllers,
                           const SimConfig& cfg, const EvalOptions& opt) {
  namespace fs = std::filesystem;
  cfg.validate();
  EvalResult res;
  std::map<std::string, ActorCritic> policies;
  for (const auto& c : controllers) {
    c.validate();
    if (c.kind == ControllerSpec::Kind::Adaptive && !policies.count(c.checkpoint))
      policies.emplace(c.checkpoint, load_checkpoint(c.checkpoint).policy);
  }
  if (!opt.out_dir.empty()) fs::create_directories(fs::path(opt.out_dir) / "errors");
  if (!opt.out_dir.empty() && opt.save_logs) fs::create_directories(fs::path(opt.out_dir) / "logs");

  for (const auto& sc : scenarios)
    for (const auto& c : controllers) {
      EvalRow row;
      row.scenario = sc.name;
      row.controller = c.label();
      std::vector<double> ape_mean, ape_rmse, ape_max, drift, pooled;
      for (int r = 0; r < cfg.eval.runs_per_pair; ++r) {
        const uint64_t seed = mix_seed(opt.seed, static_cast<uint64_t>(r));
        const ActorCritic* pol = c.kind == ControllerSpec::Kind::Adaptive ? &policies.at(c.checkpoint) : nullptr;
        const EpisodeLog log = run_scripted(sc, cfg, c, seed, {}, pol);
        EvalRun run;
        run.scenario = sc.name;
        run.controller = c.label();
        run.run = r;
        run.seed = seed;
        run.start_index = log.start_index;
        run.status = log.status;
        run.steps = static_cast<int>(log.steps.size());
        if (log.steps.size() >= 3) run.metrics = log.metrics();
        std::vector<double> dec;
        for (const auto& s : log.steps) dec.push_back(s.timing.decision_ms());
        if (!dec.empty()) {
          run.mean_decision_ms = std::accumulate(dec.begin(), dec.end(), 0.0) / static_cast<double>(dec.size());
          run.p95_decision_ms = quantile(dec, 0.95);
        }
        ape_mean.push_back(run.ranked_ape());
        ape_rmse.push_back(run.status == EpisodeStatus::Completed ? run.metrics.ape_rmse : INFINITY);
        ape_max.push_back(run.status == EpisodeStatus::Completed ? run.metrics.ape_max : INFINITY);
        drift.push_back(run.status == EpisodeStatus::Completed ? run.metrics.drift_rate : INFINITY);
        pooled.insert(pooled.end(), run.metrics.per_frame_errors.begin(), run.metrics.per_frame_errors.end());
        row.completed += run.status == EpisodeStatus::Completed;
        ++row.runs;
        if (!opt.out_dir.empty()) {
          const std::string stem = file_safe(sc.name) + "__" + file_safe(c.label()) + "__run" + std::to_string(r);
          std::ofstream f(fs::path(opt.out_dir) / "errors" / (stem + ".txt"));
          f << "# stamp\terror_m\n";
          for (std::size_t i = 0; i < run.metrics.per_frame_errors.size() && i < log.steps.size(); ++i)
            f << detail::fmt_double(log.steps[i].stamp) << "\t" << detail::fmt_double(run.metrics.per_frame_errors[i]) << "\n";
          if (opt.save_logs) save_log((fs::path(opt.out_dir) / "logs" / (stem + ".jsonl")).string(), log);
        }
        if (opt.on_run) opt.on_run(run);
        res.runs.push_back(std::move(run));
      }
      row.ape_mean_median = median(ape_mean);
      row.ape_rmse_median = median(ape_rmse);
      row.ape_max_median = median(ape_max);
      row.drift_median = median(drift);
      row.ape_mean_q1 = quantile(ape_mean, 0.25);
      row.ape_mean_q3 = quantile(ape_mean, 0.75);
      row.err_p25 = quantile(pooled, 0.25);
      row.err_p50 = quantile(pooled, 0.5);
      row.err_p75 = quantile(pooled, 0.75);
      row.err_p95 = quantile(pooled, 0.95);
      res.rows.push_back(row);
    }
  std::sort(res.rows.begin(), res.rows.end(), [](const EvalRow& a, const EvalRow& b) {
    return std::tie(a.scenario, a.controller) < std::tie(b.scenario, b.controller);
  });
  return res;
}

inline std::string results_tsv(const EvalResult& r) {
  auto f = [](double x) { return detail::fmt_double(x); };
  std::string s =
      "scenario\tcontroller\truns\tcompleted\tape_mean_median\tape_rmse_median\tape_max_median\tdrift_pct_median\t"
      "ape_mean_q1\tape_mean_q3\terr_p25\terr_p50\terr_p75\terr_p95\n";
  for (const auto& w : r.rows)
    s += w.scenario + "\t" + w.controller + "\t" + std::to_string(w.runs) + "\t" + std::to_string(w.completed) + "\t" +
         f(w.ape_mean_median) + "\t" + f(w.ape_rmse_median) + "\t" + f(w.ape_max_median) + "\t" + f(w.drift_median) +
         "\t" + f(w.ape_mean_q1) + "\t" + f(w.ape_mean_q3) + "\t" + f(w.err_p25) + "\t" + f(w.err_p50) + "\t" +
         f(w.err_p75) + "\t" + f(w.err_p95) + "\n";
  return s;
}

inline std::string runs_tsv(const EvalResult& r, bool timing = true) {
  auto f = [](double x) { return detail::fmt_double(x); };
  std::string s = "scenario\tcontroller\trun\tseed\tstart_index\tstatus\tsteps\tape_mean\tape_rmse\tape_max\tdrift_pct\tlength_m";
  s += timing ? "\tdecision_ms_mean\tdecision_ms_p95\n" : "\n";
  for (const auto& x : r.runs) {
    s += x.scenario + "\t" + x.controller + "\t" + std::to_string(x.run) + "\t" + std::to_string(x.seed) + "\t" +
         std::to_string(x.start_index) + "\t" + status_name(x.status) + "\t" + std::to_string(x.steps) + "\t" +
         f(x.metrics.ape_mean) + "\t" + f(x.metrics.ape_rmse) + "\t" + f(x.metrics.ape_max) + "\t" +
         f(x.metrics.drift_rate) + "\t" + f(x.metrics.length);
    s += timing ? "\t" + f(x.mean_decision_ms) + "\t" + f(x.p95_decision_ms) + "\n" : "\n";
  }
  return s;
}

inline void write_eval(const std::string& out_dir, const EvalResult& r) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  std::ofstream(fs::path(out_dir) / "results.tsv") << results_tsv(r);
  std::ofstream(fs::path(out_dir) / "runs.tsv") << runs_tsv(r);
}

}  // namespace aware
