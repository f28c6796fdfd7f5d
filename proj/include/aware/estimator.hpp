#pragma once

// LIO-lite: constant-velocity prediction plus point-to-plane scan-to-map
// registration, and the trajectory metrics (Umeyama, RTE, APE, drift).

#include <Eigen/SVD>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "aware/common.hpp"
#include "aware/observability.hpp"
#include "aware/worldmap.hpp"

namespace aware {

struct EstimatorState {
  Rigid pose;
  Vec3 velocity = Vec3::Zero();
  double stamp = 0.0;
};

inline EstimatorState predict(const EstimatorState& s, double dt) {
  if (!(dt > 0)) throw ConfigError("predict: dt must be positive");
  EstimatorState out = s;
  out.pose.t += s.velocity * dt;
  out.stamp += dt;
  return out;
}

struct RegistrationOptions {
  int iters = 10;
  double tol = 1e-4;
  double assoc_radius = 0.6;
  double damping = 1e-4;
  std::size_t max_points = 600;
  std::size_t min_assoc = 20;
};

struct RegistrationResult {
  Rigid pose;
  FisherInfo info;
  double rms = 0.0;
  int iterations = 0;
  std::size_t associations = 0;
};

namespace detail {

inline std::vector<Correspondence> associate(const std::vector<Vec3>& pts, const PointMap& map, const Rigid& pose,
                                             double radius) {
  std::vector<Correspondence> out;
  out.reserve(pts.size());
  const double r2 = radius * radius;
  for (const Vec3& p : pts) {
    const Vec3 w = pose * p;
    const VoxelKey k = map.key_of(w);
    // Among nearby planes, the one the point lies closest to; the nearest
    // centroid alone picks the floor for wall points just above it.
    const VoxelRecord* best = nullptr;
    double best_r = std::numeric_limits<double>::infinity();
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const VoxelRecord* r = map.find({k.x + dx, k.y + dy, k.z + dz});
          if (!r || !r->normal) continue;
          if ((r->centroid - w).squaredNorm() > r2) continue;
          const double dist = std::abs(r->normal->dot(w - r->centroid));
          if (dist < best_r) {
            best_r = dist;
            best = r;
          }
        }
    if (!best) continue;
    Vec3 n = *best->normal;
    if (n.dot(pose.t - best->centroid) < 0) n = -n;
    Correspondence c{p, n, best->centroid};
    if (std::abs(residual(c, pose)) > radius) continue;
    out.push_back(c);
  }
  return out;
}

inline double sq_cost(const std::vector<Correspondence>& cs, const Rigid& pose) {
  double s = 0;
  for (const auto& c : cs) {
    const double e = residual(c, pose);
    s += e * e;
  }
  return s;
}

}  // namespace detail

/// Levenberg-damped Gauss-Newton on point-to-plane residuals against the
/// map's voxel planes. Throws DegenerateError when associations run short.
inline RegistrationResult register_scan(const Scan& scan, const PointMap& map, const Rigid& init,
                                        const RegistrationOptions& opt = {}) {
  if (scan.points.empty()) throw DegenerateError("register: empty scan");
  std::vector<Vec3> pts;
  if (opt.max_points > 0 && scan.points.size() > opt.max_points) {
    const std::size_t stride = (scan.points.size() + opt.max_points - 1) / opt.max_points;
    for (std::size_t i = 0; i < scan.points.size(); i += stride) pts.push_back(scan.points[i]);
  } else {
    pts = scan.points;
  }
  RegistrationResult res;
  res.pose = init;
  double lambda = opt.damping;
  std::vector<Correspondence> cs;
  for (int it = 0; it < opt.iters; ++it) {
    cs = detail::associate(pts, map, res.pose, opt.assoc_radius);
    if (cs.size() < opt.min_assoc) throw DegenerateError("register: too few associations");
    Mat6 H = Mat6::Zero();
    Vec6 b = Vec6::Zero();
    for (const auto& c : cs) {
      const Row6 J = jacobian(c, res.pose);
      H.noalias() += J.transpose() * J;
      b.noalias() += J.transpose() * residual(c, res.pose);
    }
    const double cost0 = detail::sq_cost(cs, res.pose);
    Vec6 delta = Vec6::Zero();
    Rigid cand = res.pose;
    bool accepted = false;
    for (int tries = 0; tries < 6; ++tries) {
      delta = (H + lambda * Mat6::Identity()).ldlt().solve(-b);
      cand.t = res.pose.t + delta.head<3>();
      cand.R = orthonormalize(res.pose.R * so3_exp(delta.tail<3>()));
      if (detail::sq_cost(cs, cand) <= cost0) {
        accepted = true;
        lambda = std::max(lambda / 10.0, 1e-12);
        break;
      }
      lambda *= 10.0;
    }
    res.iterations = it + 1;
    if (!accepted) break;
    res.pose = cand;
    if (delta.norm() < opt.tol) break;
  }
  cs = detail::associate(pts, map, res.pose, opt.assoc_radius);
  if (cs.size() < opt.min_assoc) throw DegenerateError("register: too few associations");
  res.info = fim(cs, res.pose);
  res.associations = cs.size();
  res.rms = std::sqrt(detail::sq_cost(cs, res.pose) / static_cast<double>(cs.size()));
  return res;
}

struct LioOptions {
  double voxel_size = 0.3;
  RegistrationOptions reg;
  int revoxelize_every = 20;
  uint32_t max_points_per_voxel = 20;
  int lost_after = 10;
};

/// Sequential scan-to-map estimator that grows its own local map.
class LioLite {
 public:
  explicit LioLite(const LioOptions& opt = {}) : opt_(opt), map_(opt.voxel_size) {
    opt_.reg.assoc_radius = 2.0 * opt.voxel_size;
    map_.set_max_points_per_voxel(opt.max_points_per_voxel);
  }

  void initialize(const Rigid& pose, const Scan& scan) {
    state_.pose = pose;
    state_.velocity.setZero();
    state_.stamp = scan.stamp;
    insert(scan);
  }

  struct StepResult {
    bool degenerate = false;
    FisherInfo info;
    double rms = 0.0;
  };

  /// One frame: predict (constant velocity, gyro yaw increment), register,
  /// grow the map. Degenerate frames keep the predicted pose.
  StepResult step(const Scan& scan, double dt, double gyro_dyaw) {
    EstimatorState pred = predict(state_, dt);
    pred.pose.R = orthonormalize(pred.pose.R * rot_z(gyro_dyaw));
    StepResult out;
    try {
      const RegistrationResult r = register_scan(scan, map_, pred.pose, opt_.reg);
      state_.velocity = (r.pose.t - state_.pose.t) / dt;
      state_.pose = r.pose;
      out.info = r.info;
      out.rms = r.rms;
      degenerate_streak_ = 0;
    } catch (const DegenerateError&) {
      state_.pose = pred.pose;
      out.degenerate = true;
      ++degenerate_streak_;
    }
    state_.stamp = scan.stamp;
    if (!out.degenerate) insert(scan);
    return out;
  }

  bool lost() const { return degenerate_streak_ >= opt_.lost_after; }
  const EstimatorState& state() const { return state_; }
  const PointMap& local_map() const { return map_; }

 private:
  void insert(const Scan& scan) {
    for (const auto& p : scan.points) map_.insert_one(state_.pose * p);
    map_.refresh();
    if (opt_.revoxelize_every > 0 && ++frames_ % opt_.revoxelize_every == 0) map_.revoxelize(opt_.max_points_per_voxel);
  }

  LioOptions opt_;
  PointMap map_;
  EstimatorState state_;
  int degenerate_streak_ = 0;
  long frames_ = 0;
};

// ---------------------------------------------------------------------------
// Trajectory metrics.

/// Closed-form rigid (no scale) alignment T minimizing sum |T est_i - gt_i|^2.
inline Rigid umeyama_align(const std::vector<Vec3>& est, const std::vector<Vec3>& gt) {
  if (est.size() != gt.size() || est.size() < 3) throw AlignmentError("umeyama: need >= 3 paired positions");
  const double n = static_cast<double>(est.size());
  Vec3 me = Vec3::Zero(), mg = Vec3::Zero();
  for (std::size_t i = 0; i < est.size(); ++i) {
    me += est[i];
    mg += gt[i];
  }
  me /= n;
  mg /= n;
  Mat3 S = Mat3::Zero();
  double spread = 0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    S += (gt[i] - mg) * (est[i] - me).transpose();
    spread += (est[i] - me).squaredNorm();
  }
  S /= n;
  if (!(spread / n > 1e-18)) throw AlignmentError("umeyama: rank-deficient covariance (no spread)");
  Eigen::JacobiSVD<Mat3> svd(S, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 D = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0) D(2, 2) = -1;
  Rigid T;
  T.R = svd.matrixU() * D * svd.matrixV().transpose();
  T.t = mg - T.R * me;
  return T;
}

/// RMS position error of a window after Umeyama alignment.
inline double rte(const std::vector<Vec3>& est, const std::vector<Vec3>& gt) {
  const Rigid T = umeyama_align(est, gt);
  double s = 0;
  for (std::size_t i = 0; i < est.size(); ++i) s += (T * est[i] - gt[i]).squaredNorm();
  return std::sqrt(s / static_cast<double>(est.size()));
}

struct TrajPose {
  double stamp = 0.0;
  Vec3 p = Vec3::Zero();
  Eigen::Quaterniond q = Eigen::Quaterniond::Identity();
};
using Trajectory = std::vector<TrajPose>;

struct TrajMetrics {
  double ape_mean = 0.0;
  double ape_rmse = 0.0;
  double ape_max = 0.0;
  double drift_rate = 0.0;  // percent
  double length = 0.0;
  std::vector<double> per_frame_errors;
};

/// Globally aligned absolute position error. Poses are matched by nearest
/// timestamp within half the nominal frame period.
inline TrajMetrics ape(const Trajectory& est, const Trajectory& gt, double dt = 0.1) {
  std::vector<Vec3> e, g;
  std::size_t j = 0;
  for (const auto& ep : est) {
    while (j + 1 < gt.size() && std::abs(gt[j + 1].stamp - ep.stamp) <= std::abs(gt[j].stamp - ep.stamp)) ++j;
    if (j < gt.size() && std::abs(gt[j].stamp - ep.stamp) <= dt / 2 + 1e-9) {
      e.push_back(ep.p);
      g.push_back(gt[j].p);
    }
  }
  if (e.size() < 3) throw AlignmentError("ape: fewer than 3 matched poses");
  const Rigid T = umeyama_align(e, g);
  TrajMetrics m;
  double sum = 0, sq = 0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    const double err = (T * e[i] - g[i]).norm();
    m.per_frame_errors.push_back(err);
    sum += err;
    sq += err * err;
    m.ape_max = std::max(m.ape_max, err);
  }
  const double n = static_cast<double>(e.size());
  m.ape_mean = sum / n;
  m.ape_rmse = std::sqrt(sq / n);
  for (std::size_t i = 1; i < g.size(); ++i) m.length += (g[i] - g[i - 1]).norm();
  m.drift_rate = m.length > 0 ? 100.0 * m.ape_max / m.length : 0.0;
  return m;
}

// Trajectory files: "stamp x y z qw qx qy qz" per line.

inline Trajectory parse_trajectory(const std::string& text) {
  Trajectory out;
  std::istringstream in(text);
  std::string line;
  std::size_t offset = 0;
  while (std::getline(in, line)) {
    const std::size_t here = offset;
    offset += line.size() + 1;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    TrajPose p;
    double qw, qx, qy, qz;
    if (!(ls >> p.stamp >> p.p.x() >> p.p.y() >> p.p.z() >> qw >> qx >> qy >> qz))
      throw ParseError("trajectory: malformed line", here);
    p.q = Eigen::Quaterniond(qw, qx, qy, qz).normalized();
    out.push_back(p);
  }
  return out;
}

inline std::string format_trajectory(const Trajectory& t) {
  std::ostringstream os;
  os << std::setprecision(9);
  for (const auto& p : t)
    os << p.stamp << ' ' << p.p.x() << ' ' << p.p.y() << ' ' << p.p.z() << ' ' << p.q.w() << ' ' << p.q.x() << ' '
       << p.q.y() << ' ' << p.q.z() << '\n';
  return os.str();
}

inline Trajectory load_trajectory(const std::string& path) { return parse_trajectory(read_file(path)); }

inline void save_trajectory(const std::string& path, const Trajectory& t) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << format_trajectory(t);
}

}  // namespace aware
