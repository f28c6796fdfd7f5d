#include <gtest/gtest.h>

#include <random>

#include "aware/estimator.hpp"
#include "aware/scenes.hpp"

namespace aware {
namespace {

// Box room with a few interior blocks so every pose axis is constrained.
const std::vector<Vec3>& room_points() {
  static const std::vector<Vec3> pts = [] {
    SceneParams prm;
    auto pts = gen_synthetic_scene(SceneKind::BoxRoom, prm).points;
    detail::sample_box_shell(pts, Vec3(2.0, 1.0, 0.0), Vec3(3.0, 2.2, 1.4), prm.density);
    detail::sample_box_shell(pts, Vec3(-3.5, -2.5, 0.0), Vec3(-2.5, -1.0, 2.0), prm.density);
    return pts;
  }();
  return pts;
}

Scan scan_of(const std::vector<Vec3>& world, const Rigid& T, double range, std::mt19937* rng = nullptr,
             double sigma = 0.0) {
  Scan s;
  const Rigid inv = T.inverse();
  std::normal_distribution<double> N(0, sigma);
  for (std::size_t i = 0; i < world.size(); i += 7) {
    if ((world[i] - T.t).norm() > range) continue;
    Vec3 p = inv * world[i];
    if (rng) p += Vec3(N(*rng), N(*rng), N(*rng));
    s.points.push_back(p);
  }
  return s;
}

TEST(Predict, Examples) {
  EstimatorState s;
  s.velocity = Vec3(1, 0, 0);
  const auto p = predict(s, 0.1);
  EXPECT_NEAR(p.pose.t.x(), 0.1, 1e-15);
  EXPECT_EQ(p.pose.R, Mat3::Identity());
  EstimatorState still;
  still.pose = Rigid::from_yaw(Vec3(1, 2, 3), 0.4);
  EXPECT_EQ(predict(still, 0.5).pose.t, still.pose.t);
  EXPECT_THROW(predict(s, 0.0), ConfigError);
}

TEST(Predict, ChainedEqualsSingle) {
  EstimatorState s;
  s.velocity = Vec3(0.3, -1.2, 0.7);
  EstimatorState c = s;
  for (int i = 0; i < 10; ++i) c = predict(c, 0.1);
  const auto one = predict(s, 1.0);
  EXPECT_LT((c.pose.t - one.pose.t).norm(), 1e-12);
  EXPECT_NEAR(c.stamp, one.stamp, 1e-12);
}

TEST(Register, RecoversPerturbedPose) {
  const PointMap map = PointMap::from_points(room_points(), 0.3);
  std::mt19937 rng(41);
  std::uniform_real_distribution<double> U(-1, 1);
  for (int trial = 0; trial < 10; ++trial) {
    const Rigid truth = Rigid::from_yaw(Vec3(U(rng), U(rng), 1.5 + 0.3 * U(rng)), kPi * U(rng));
    const Scan scan = scan_of(room_points(), truth, 8.0);
    // Offset of at most 0.2 m and 5 degrees.
    const Vec3 dt = Vec3(U(rng), U(rng), U(rng)).normalized() * 0.2 * std::abs(U(rng));
    const Vec3 dth = Vec3(U(rng), U(rng), U(rng)).normalized() * (5.0 * kPi / 180) * std::abs(U(rng));
    const Rigid init{truth.R * so3_exp(dth), truth.t + dt};
    RegistrationOptions opt;
    opt.iters = 30;
    opt.tol = 1e-7;
    const auto r = register_scan(scan, map, init, opt);
    const double ang = Eigen::AngleAxisd(r.pose.R.transpose() * truth.R).angle();
    EXPECT_LT((r.pose.t - truth.t).norm(), 1e-3) << trial;
    EXPECT_LT(ang, 0.1 * kPi / 180) << trial;
  }
}

TEST(Register, FixedPointAtTruth) {
  // A voxel holding exact plane samples reproduces that plane, so scan
  // points coincident with the map cost nothing at the truth.
  std::vector<Vec3> pts;
  for (double a = 0.05; a < 6; a += 0.1)
    for (double b = 0.05; b < 3; b += 0.1) {
      pts.emplace_back(a, b, 0.0);
      pts.emplace_back(a, 0.0, b);
      pts.emplace_back(0.0, a, b);
    }
  for (double a = 0.05; a < 3; a += 0.1)
    for (double b = 0.05; b < 3; b += 0.1) pts.emplace_back(3.0 + 0.0 * a, 3.0 + a / 3, b);
  const PointMap map = PointMap::from_points(pts, 0.3);
  const Rigid truth = Rigid::from_yaw(Vec3(1.5, 1.2, 1.0), 0.3);
  Scan scan;
  const Rigid inv = truth.inverse();
  for (const auto& p : pts) scan.points.push_back(inv * p);
  const auto r = register_scan(scan, map, truth);
  EXPECT_LT((r.pose.t - truth.t).norm(), 1e-9);
  EXPECT_LT((r.pose.R - truth.R).norm(), 1e-9);
  EXPECT_LT(r.rms, 1e-9);
}

TEST(Register, SinglePlaneIsDegenerate) {
  std::vector<Vec3> pts;
  for (double x = -5; x <= 5; x += 0.05)
    for (double y = -5; y <= 5; y += 0.05) pts.emplace_back(x, y, 0.0);
  const PointMap map = PointMap::from_points(pts, 0.3);
  const Rigid truth = Rigid::from_yaw(Vec3(0.2, 0.1, 1.0), 0.2);
  const Scan scan = scan_of(pts, truth, 4.0);
  try {
    const auto r = register_scan(scan, map, truth);
    const auto ev = Eigen::SelfAdjointEigenSolver<Mat6>(r.info.matrix).eigenvalues();
    int near_zero = 0;
    for (int i = 0; i < 6; ++i) near_zero += ev(i) < 1e-6 * ev.maxCoeff();
    EXPECT_GE(near_zero, 3);
  } catch (const DegenerateError&) {
    SUCCEED();
  }
  EXPECT_THROW(register_scan(Scan{}, map, truth), DegenerateError);
}

TEST(Register, EmpiricalCovarianceMatchesInverseFisher) {
  const PointMap map = PointMap::from_points(room_points(), 0.3);
  const Rigid truth = Rigid::from_yaw(Vec3(0.4, -0.3, 1.4), 0.6);
  const double sigma = 0.02;
  std::mt19937 rng(43);
  RegistrationOptions opt;
  opt.iters = 20;
  opt.tol = 1e-8;
  const int draws = 200;
  std::vector<Vec6> errs;
  Mat6 info_sum = Mat6::Zero();
  for (int d = 0; d < draws; ++d) {
    const Scan scan = scan_of(room_points(), truth, 8.0, &rng, sigma);
    const auto r = register_scan(scan, map, truth, opt);
    Vec6 e;
    e.head<3>() = r.pose.t - truth.t;
    const Eigen::AngleAxisd aa(truth.R.transpose() * r.pose.R);
    e.tail<3>() = aa.axis() * aa.angle();
    errs.push_back(e);
    info_sum += r.info.matrix;
  }
  Vec6 mean = Vec6::Zero();
  for (const auto& e : errs) mean += e / draws;
  Mat6 cov = Mat6::Zero();
  for (const auto& e : errs) cov += (e - mean) * (e - mean).transpose() / (draws - 1);
  const Mat6 predicted = sigma * sigma * (info_sum / draws).inverse();
  for (int i = 0; i < 6; ++i) {
    const double ratio = cov(i, i) / predicted(i, i);
    EXPECT_GT(ratio, 0.5) << i;
    EXPECT_LT(ratio, 2.0) << i;
  }
}

TEST(Umeyama, IdentityAndConstructed) {
  std::mt19937 rng(47);
  std::uniform_real_distribution<double> U(-10, 10);
  std::vector<Vec3> gt;
  for (int i = 0; i < 30; ++i) gt.emplace_back(U(rng), U(rng), U(rng));
  const Rigid I = umeyama_align(gt, gt);
  EXPECT_LT((I.R - Mat3::Identity()).norm(), 1e-9);
  EXPECT_LT(I.t.norm(), 1e-9);
  const Mat3 R0 = so3_exp(Vec3(0.3, -1.1, 2.0));
  const Vec3 t0(4, -2, 7);
  std::vector<Vec3> est;
  for (const auto& g : gt) est.push_back(R0 * g + t0);
  const Rigid T = umeyama_align(est, gt);
  EXPECT_LT((T.R - R0.transpose()).norm(), 1e-9);
  for (std::size_t i = 0; i < gt.size(); ++i) EXPECT_LT((T * est[i] - gt[i]).norm(), 1e-9);
  EXPECT_NEAR(T.R.determinant(), 1.0, 1e-12);
}

TEST(Umeyama, Errors) {
  EXPECT_THROW(umeyama_align({Vec3::Zero(), Vec3::Ones()}, {Vec3::Zero(), Vec3::Ones()}), AlignmentError);
  std::vector<Vec3> same(5, Vec3(1, 2, 3));
  EXPECT_THROW(umeyama_align(same, same), AlignmentError);
  EXPECT_THROW(umeyama_align(same, std::vector<Vec3>(4, Vec3::Zero())), AlignmentError);
}

TEST(Rte, ZeroForIdenticalAndOffset) {
  std::vector<Vec3> gt;
  for (int i = 0; i < 50; ++i) gt.emplace_back(0.1 * i, std::sin(0.2 * i), 0.01 * i * i);
  EXPECT_NEAR(rte(gt, gt), 0.0, 1e-9);
  auto off = gt;
  for (auto& p : off) p += Vec3(3, -1, 2);
  EXPECT_NEAR(rte(off, gt), 0.0, 1e-9);
}

TEST(Rte, NoiseLevelMatchesMonteCarlo) {
  // Per-axis noise s gives a 3D RMS of s*sqrt(3); fitting 6 parameters from
  // 3n coordinates leaves a (1 - 2/n) fraction of the squared error.
  std::mt19937 rng(53);
  const double s = 0.05;
  std::normal_distribution<double> N(0, s);
  for (int n : {10, 50}) {
    double acc = 0;
    const int trials = 400;
    for (int t = 0; t < trials; ++t) {
      std::vector<Vec3> gt, est;
      for (int i = 0; i < n; ++i) {
        gt.emplace_back(0.5 * i, 2 * std::sin(0.3 * i), 0.3 * std::cos(0.7 * i));
        est.push_back(gt.back() + Vec3(N(rng), N(rng), N(rng)));
      }
      acc += rte(est, gt);
    }
    const double expect = s * std::sqrt(3.0) * std::sqrt(1.0 - 2.0 / n);
    EXPECT_NEAR(acc / trials, expect, 0.2 * expect) << n;
  }
}

Trajectory straight_line(int n, double length) {
  Trajectory t;
  for (int i = 0; i < n; ++i) t.push_back({0.1 * i, Vec3(length * i / (n - 1), 0, 1), Eigen::Quaterniond::Identity()});
  return t;
}

TEST(Ape, IdenticalAndRotated) {
  Trajectory gt;
  for (int i = 0; i < 100; ++i) gt.push_back({0.1 * i, Vec3(std::cos(0.05 * i), std::sin(0.05 * i), 0.01 * i), {}});
  const auto m = ape(gt, gt);
  EXPECT_NEAR(m.ape_max, 0, 1e-9);
  EXPECT_NEAR(m.ape_rmse, 0, 1e-9);
  auto rot = gt;
  for (auto& p : rot) p.p = rot_z(kPi / 2) * p.p;
  EXPECT_NEAR(ape(rot, gt).ape_max, 0, 1e-9);
}

TEST(Ape, LinearDriftAlongStraightPath) {
  // Growing along-track offset of 0..2 m over 100 m. Alignment removes its
  // mean, so the aligned error is |offset - 1|, peaking at 1 m at both ends.
  const int n = 1001;
  const auto gt = straight_line(n, 100.0);
  auto est = gt;
  for (int i = 0; i < n; ++i) est[i].p.x() += 2.0 * i / (n - 1);
  const auto m = ape(est, gt);
  EXPECT_NEAR(m.length, 100.0, 1e-9);
  EXPECT_NEAR(m.ape_max, 1.0, 1e-6);
  EXPECT_NEAR(m.drift_rate, 1.0, 1e-6);
  EXPECT_NEAR(m.ape_mean, 0.5, 1e-3);
  EXPECT_GE(m.ape_max, m.ape_rmse);
  ASSERT_EQ(m.per_frame_errors.size(), static_cast<std::size_t>(n));
}

TEST(Ape, InvariantUnderRigidTransformOfEstimate) {
  std::mt19937 rng(59);
  std::normal_distribution<double> N(0, 0.1);
  Trajectory gt, est;
  for (int i = 0; i < 200; ++i) {
    gt.push_back({0.1 * i, Vec3(0.2 * i, 3 * std::sin(0.04 * i), 1 + 0.2 * std::cos(0.1 * i)), {}});
    est.push_back(gt.back());
    est.back().p += Vec3(N(rng), N(rng), N(rng));
  }
  auto moved = est;
  const Rigid T{so3_exp(Vec3(0.4, 0.2, -1.7)), Vec3(10, -4, 2)};
  for (auto& p : moved) p.p = T * p.p;
  const auto a = ape(est, gt), b = ape(moved, gt);
  EXPECT_NEAR(a.ape_rmse, b.ape_rmse, 1e-9);
  EXPECT_NEAR(a.ape_max, b.ape_max, 1e-9);
  std::vector<Vec3> we, wg, wm;
  for (int i = 0; i < 50; ++i) {
    we.push_back(est[i].p);
    wg.push_back(gt[i].p);
    wm.push_back(moved[i].p);
  }
  EXPECT_NEAR(rte(we, wg), rte(wm, wg), 1e-9);
}

TEST(Ape, TimestampMatching) {
  auto gt = straight_line(50, 10.0);
  auto est = gt;
  for (auto& p : est) p.stamp += 0.03;
  EXPECT_EQ(ape(est, gt).per_frame_errors.size(), 50u);
  for (auto& p : est) p.stamp += 100.0;
  EXPECT_THROW(ape(est, gt), AlignmentError);
}

TEST(TrajectoryFile, RoundTrip) {
  Trajectory t;
  for (int i = 0; i < 5; ++i)
    t.push_back({0.1 * i, Vec3(i, -i, 0.5 * i), Eigen::Quaterniond(Eigen::AngleAxisd(0.3 * i, Vec3::UnitZ()))});
  const auto back = parse_trajectory(format_trajectory(t));
  ASSERT_EQ(back.size(), t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    EXPECT_NEAR(back[i].stamp, t[i].stamp, 1e-9);
    EXPECT_LT((back[i].p - t[i].p).norm(), 1e-7);
    EXPECT_NEAR(std::abs(back[i].q.dot(t[i].q)), 1.0, 1e-9);
  }
  EXPECT_THROW(parse_trajectory("0 1 2 3 1 0 0\n"), ParseError);
}

TEST(LioLite, TracksSlowMotionInRoom) {
  const PointMap world = PointMap::from_points(room_points(), 0.2);
  SensorModel sensor;
  sensor.azimuth_fov = kTwoPi * 0.75;
  sensor.rays_az = 240;
  LioLite lio;
  Rigid truth = Rigid::from_yaw(Vec3(-1, -1, 1.5), 0.0);
  Scan s0 = raycast(world, BodyPose(truth.t, truth.yaw()), sensor);
  lio.initialize(truth, s0);
  double prev_yaw = truth.yaw();
  for (int k = 1; k <= 40; ++k) {
    const double yaw = 0.02 * k;
    truth = Rigid::from_yaw(Vec3(-1 + 0.05 * k, -1 + 0.03 * k, 1.5), yaw);
    Scan s = raycast(world, BodyPose(truth.t, yaw), sensor);
    s.stamp = 0.1 * k;
    const auto r = lio.step(s, 0.1, yaw - prev_yaw);
    prev_yaw = yaw;
    EXPECT_FALSE(r.degenerate) << k;
  }
  EXPECT_FALSE(lio.lost());
  EXPECT_LT((lio.state().pose.t - truth.t).norm(), 0.05);
  EXPECT_NEAR(wrap_angle(lio.state().pose.yaw() - truth.yaw()), 0.0, 0.01);
}

}  // namespace
}  // namespace aware
