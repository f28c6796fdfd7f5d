#include <gtest/gtest.h>

#include "aware/sim.hpp"

using namespace aware;

namespace {

SimConfig quick_config(double duration) {
  SimConfig c;
  c.episode.duration = duration;
  return c;
}

const Scenario& corridor() {
  static const Scenario sc = Scenario::from_scene(SceneKind::Corridor, SimConfig{});
  return sc;
}

}  // namespace

TEST(ControllerSpec, ParseAndLabel) {
  const auto f = ControllerSpec::parse("fixed:1.0");
  EXPECT_EQ(f.kind, ControllerSpec::Kind::FixedRate);
  EXPECT_EQ(f.omega, 1.0);
  EXPECT_EQ(f.label(), "fixed:1");
  const auto s = ControllerSpec::parse("static:1500");
  EXPECT_EQ(s.lambda_obs, 1500.0);
  EXPECT_EQ(ControllerSpec::parse(s.label()).lambda_obs, 1500.0);
  EXPECT_EQ(ControllerSpec::parse("adaptive:run/policy.awpk").checkpoint, "run/policy.awpk");
  EXPECT_THROW(ControllerSpec::parse("fixed:0"), ConfigError);
  EXPECT_THROW(ControllerSpec::parse("static:-1"), ConfigError);
  EXPECT_THROW(ControllerSpec::parse("adaptive:"), ConfigError);
  EXPECT_THROW(ControllerSpec::parse("spin:3"), ConfigError);
  EXPECT_THROW(ControllerSpec::parse("static"), ConfigError);
}

TEST(Scenario, RejectsExpertPathThroughObstacle) {
  SimConfig cfg;
  auto scene = gen_synthetic_scene(SceneKind::Corridor, cfg.scene);
  scene.expert[scene.expert.size() / 2].p.y() += 10.0;  // through a wall, outside the map
  EXPECT_THROW(Scenario::from_points("bad", scene.points, scene.expert, cfg), ConfigError);
  auto ok = gen_synthetic_scene(SceneKind::Corridor, cfg.scene);
  EXPECT_NO_THROW(Scenario::from_points("ok", ok.points, ok.expert, cfg));
}

TEST(Scenario, SegmentsPartitionThePath) {
  const auto& sc = corridor();
  const auto [a, b] = sc.segment(true);
  const auto [c, d] = sc.segment(false);
  EXPECT_EQ(a, 0u);
  EXPECT_EQ(b, c);
  EXPECT_EQ(d, sc.expert.size());
  EXPECT_EQ(b, static_cast<std::size_t>(std::floor(0.5 * static_cast<double>(sc.expert.size()))));
}

TEST(SplitDiscipline, EvalEpisodesNeverStartInTrainingFraction) {
  const auto& sc = corridor();
  const auto split = sc.segment(true).second;
  for (uint64_t seed = 0; seed < 500; ++seed) {
    EXPECT_GE(draw_start_index(sc, false, seed), split);
    EXPECT_LT(draw_start_index(sc, true, seed), split);
  }
  EpisodeOptions bad;
  bad.start_index = split - 1;
  ZeroPilot pilot;
  EXPECT_THROW(Episode(sc, quick_config(1.0), ControllerSpec::static_mpc(0), pilot, 1, bad), ConfigError);
}

TEST(SplitDiscipline, ScriptedPilotStaysInsideItsSegment) {
  const auto& sc = corridor();
  const SimConfig cfg = quick_config(40.0);
  const auto [lo, hi] = sc.segment(false);
  ScriptedPilot pilot(sc.expert, lo, hi, hi - 5, cfg.pilot);
  EpisodeOptions opt;
  opt.start_index = hi - 5;
  Episode ep(sc, cfg, ControllerSpec::static_mpc(0), pilot, 2, opt);
  double min_x = 1e9;
  while (!ep.done()) {
    ep.step(ep.spec_weights());
    EXPECT_GE(pilot.cursor(), lo);
    EXPECT_LT(pilot.cursor(), hi);
    min_x = std::min(min_x, ep.gt().p.x());
  }
  EXPECT_EQ(ep.status(), EpisodeStatus::Completed);
  // The path bounces off the far end and heads back, never into the training half.
  EXPECT_GT(min_x, sc.expert[lo].p.x() - 1.0);
}

TEST(Scanner, ZeroSkewNoNoiseMatchesRaycast) {
  const auto& sc = corridor();
  SimConfig cfg;
  cfg.sensing.scan_skew = 0.0;
  cfg.sensing.noise_sigma = 0.0;
  SkewedScanner sk(cfg.sensor, cfg.sensing);
  UavState from, to;
  from.p = to.p = sc.expert[10].p;
  from.psi = 0.3;
  to.psi = 0.3;
  std::mt19937_64 rng(1);
  const Scan a = sk.scan(*sc.world, from, to, 0.0, rng);
  const Scan b = raycast(*sc.world, BodyPose(to.p, to.psi), cfg.sensor);
  ASSERT_EQ(a.points.size(), b.points.size());
  // Same rays in a different order: every point has an exact partner.
  for (const auto& p : a.points) {
    double best = 1e9;
    for (const auto& q : b.points) best = std::min(best, (p - q).norm());
    EXPECT_LT(best, 1e-9);
  }
}

TEST(Scanner, SkewDistortsRotatingScans) {
  const auto& sc = corridor();
  SimConfig cfg;
  cfg.sensing.noise_sigma = 0.0;
  SkewedScanner sk(cfg.sensor, cfg.sensing);
  UavState from, to;
  from.p = to.p = sc.expert[10].p;
  from.psi = 0.0;
  to.psi = 0.8;
  std::mt19937_64 rng(1);
  const Scan a = sk.scan(*sc.world, from, to, 0.0, rng);
  const Scan still = sk.scan(*sc.world, to, to, 0.0, rng);
  // Fewer than all points coincide with the static end-of-frame scan.
  ASSERT_FALSE(a.points.empty());
  EXPECT_NE(a.points.size() == still.points.size() &&
                std::equal(a.points.begin(), a.points.end(), still.points.begin()),
            true);
}

TEST(Episode, EmptyRoomFixedRateHoldsOmega) {
  SimConfig cfg = quick_config(20.0);
  const Scenario room = Scenario::from_scene(SceneKind::BoxRoom, cfg);
  ZeroPilot pilot;
  const auto log = run_episode(room, cfg, ControllerSpec::fixed_rate(1.0), pilot, 4);
  ASSERT_EQ(log.status, EpisodeStatus::Completed);
  double turned = 0.0;
  double prev = log.init_yaw;
  // The survey ends a full turn later, close to the initial yaw.
  for (const auto& s : log.steps) {
    turned += wrap_angle(s.gt.psi - prev);
    prev = s.gt.psi;
  }
  // First step starts from the survey's end state, which may differ slightly from init_yaw.
  const double mean_rate = turned / log.steps.back().stamp;
  EXPECT_NEAR(mean_rate, 1.0, 0.1);
  for (const auto& s : log.steps) EXPECT_LT(s.gt.v.norm(), 0.05);
}

TEST(Episode, StraightCorridorLengthMatchesSpeed) {
  const auto& sc = corridor();
  SimConfig cfg = quick_config(20.0);
  EpisodeOptions opt;
  opt.train_segment = true;
  opt.start_index = 0;
  const auto log = run_scripted(sc, cfg, ControllerSpec::static_mpc(0), 5, opt);
  ASSERT_EQ(log.status, EpisodeStatus::Completed);
  double len = 0;
  Vec3 prev = sc.expert[0].p;
  for (const auto& s : log.steps) {
    len += (s.gt.p - prev).norm();
    prev = s.gt.p;
  }
  const double commanded = cfg.pilot.speed * cfg.episode.duration;
  EXPECT_NEAR(len, commanded, 0.05 * commanded);
}

TEST(Episode, DeterministicLogs) {
  const auto& sc = corridor();
  const SimConfig cfg = quick_config(6.0);
  for (const char* c : {"fixed:1", "static:1000"}) {
    const auto a = run_scripted(sc, cfg, ControllerSpec::parse(c), 11);
    const auto b = run_scripted(sc, cfg, ControllerSpec::parse(c), 11);
    EXPECT_EQ(encode_log(a, false), encode_log(b, false));
    const auto other = run_scripted(sc, cfg, ControllerSpec::parse(c), 12);
    EXPECT_NE(encode_log(a, false), encode_log(other, false));
  }
}

TEST(Episode, TimestampsAdvanceAtControlRate) {
  const auto& sc = corridor();
  const SimConfig cfg = quick_config(5.0);
  const auto log = run_scripted(sc, cfg, ControllerSpec::static_mpc(500), 3);
  ASSERT_EQ(log.steps.size(), 50u);
  for (std::size_t i = 0; i < log.steps.size(); ++i) {
    EXPECT_EQ(log.steps[i].step, static_cast<int>(i));
    EXPECT_NEAR(log.steps[i].stamp, 0.1 * static_cast<double>(i + 1), 1e-12);
    if (i) {
      EXPECT_GT(log.steps[i].stamp, log.steps[i - 1].stamp);
    }
    EXPECT_EQ(log.steps[i].curve.size(), 36u);
    EXPECT_GE(log.steps[i].reward.total, 0.0);
    EXPECT_LE(log.steps[i].reward.total, cfg.reward.alpha1 + cfg.reward.alpha2 + cfg.reward.alpha3);
  }
}

TEST(Episode, OracleEstimatorHasZeroApe) {
  const auto& sc = corridor();
  SimConfig cfg = quick_config(10.0);
  cfg.episode.oracle_estimator = true;
  for (const char* c : {"fixed:1", "fixed:8", "static:1000"}) {
    const auto log = run_scripted(sc, cfg, ControllerSpec::parse(c), 7);
    const auto m = log.metrics();
    EXPECT_LT(m.ape_max, 1e-9) << c;
  }
}

TEST(Episode, FixedRateTranslationMatchesStaticZero) {
  const auto& sc = corridor();
  const SimConfig cfg = quick_config(10.0);
  const auto a = run_scripted(sc, cfg, ControllerSpec::static_mpc(0), 9);
  const auto b = run_scripted(sc, cfg, ControllerSpec::fixed_rate(1.0), 9);
  ASSERT_EQ(a.steps.size(), b.steps.size());
  for (std::size_t i = 0; i < a.steps.size(); ++i) {
    EXPECT_LT((a.steps[i].gt.p - b.steps[i].gt.p).norm(), 1e-6);
    EXPECT_LT((a.steps[i].u.jerk - b.steps[i].u.jerk).norm(), 1e-6);
  }
}

TEST(Episode, ObservationShapes) {
  const auto& sc = corridor();
  SimConfig cfg = quick_config(1.0);
  ZeroPilot pilot;
  Episode ep(sc, cfg, ControllerSpec::static_mpc(0), pilot, 1);
  EXPECT_EQ(ep.observation().s_int.size(), cfg.arch.s_int);
  EXPECT_EQ(ep.observation().v_raw.size(), cfg.arch.v_raw);
  EXPECT_TRUE(ep.observation().s_int.allFinite());
  EXPECT_GE(ep.observation().v_raw.minCoeff(), 0.0);
  EXPECT_LE(ep.observation().v_raw.maxCoeff(), 1.0);
  // Normalized observability costs are at most 1.
  EXPECT_LE(ep.observation().s_int.tail(36).maxCoeff(), 1.0 + 1e-12);
}

TEST(Episode, AdversarialPilotStaysInsideCorridors) {
  SimConfig cfg = quick_config(20.0);
  const Scenario sc = Scenario::from_scene(SceneKind::CorridorWithAlcoves, cfg);
  AdversarialPilot pilot(3, cfg.pilot);
  const auto log = run_episode(sc, cfg, ControllerSpec::static_mpc(500), pilot, 3);
  EXPECT_NE(log.status, EpisodeStatus::Infeasible);
  for (const auto& s : log.steps) {
    EXPECT_LE(s.sfc_violation, cfg.mpc.sfc.margin + 1e-9);
    if (s.qp_status != QpStatus::Solved && s.qp_status != QpStatus::MaxIterations) {
      EXPECT_TRUE(s.fallback);
    }
  }
}

TEST(EpisodeLog, EncodeDecodeRoundTrip) {
  const auto& sc = corridor();
  const auto log = run_scripted(sc, quick_config(2.0), ControllerSpec::fixed_rate(8.0), 1);
  const std::string text = encode_log(log, true);
  const EpisodeLog back = decode_log(text);
  EXPECT_EQ(encode_log(back, true), text);
  EXPECT_EQ(back.status, log.status);
  EXPECT_EQ(back.controller, "fixed:8");
  EXPECT_THROW(decode_log("{\"type\":\"step\"}\n"), ParseError);
  EXPECT_THROW(decode_log("not json\n"), ParseError);
}
