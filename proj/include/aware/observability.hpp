#pragma once

// Point-to-plane Fisher information, the A-optimality cost over candidate
// yaws, and the local quadratic surrogate handed to the MPC.

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include <algorithm>
#include <optional>
#include <vector>

#include "aware/common.hpp"
#include "aware/panorama.hpp"
#include "aware/worldmap.hpp"

namespace aware {

struct Correspondence {
  Vec3 p_body = Vec3::Zero();
  Vec3 n = Vec3::UnitZ();  // unit, world frame
  Vec3 q = Vec3::Zero();   // plane point, world frame
};

inline double residual(const Correspondence& c, const Rigid& pose) {
  return c.n.dot(pose.R * c.p_body + pose.t - c.q);
}

/// d(residual)/d[dt, dtheta] under the perturbation (R exp(dtheta), t + dt).
inline Row6 jacobian(const Correspondence& c, const Rigid& pose) {
  Row6 J;
  J.head<3>() = c.n.transpose();
  J.tail<3>() = -c.n.transpose() * pose.R * skew(c.p_body);
  return J;
}

struct FisherInfo {
  Mat6 matrix = Mat6::Zero();
  std::size_t count = 0;
  bool empty_warning = false;
};

inline FisherInfo fim(const std::vector<Correspondence>& corrs, const Rigid& pose) {
  FisherInfo f;
  f.count = corrs.size();
  f.empty_warning = corrs.empty();
  for (const auto& c : corrs) {
    const Row6 J = jacobian(c, pose);
    f.matrix.noalias() += J.transpose() * J;
  }
  return f;
}

/// Tr((phi + reg I)^-1).
inline double a_optimality(const Mat6& phi, double reg) {
  if (!(reg > 0)) throw ConfigError("a_optimality: regularization must be positive");
  Eigen::LLT<Mat6> llt(phi + reg * Mat6::Identity());
  if (llt.info() != Eigen::Success) throw NumericError("a_optimality: factorization failed");
  const Mat6 inv = llt.solve(Mat6::Identity());
  return inv.trace();
}
inline double a_optimality(const FisherInfo& phi, double reg) { return a_optimality(phi.matrix, reg); }

/// Back-projected points and tangent-plane normals of every usable pixel.
struct PanoramaGeometry {
  int H = 0, W = 0;
  std::vector<Vec3> point;   // body frame
  std::vector<Vec3> normal;  // oriented toward the sensor
  std::vector<uint8_t> usable;

  explicit PanoramaGeometry(const PanoramicDepthMap& map) : H(map.H), W(map.W) {
    const std::size_t n = map.depth.size();
    point.assign(n, Vec3::Zero());
    normal.assign(n, Vec3::Zero());
    usable.assign(n, 0);
    for (int v = 0; v < H; ++v)
      for (int u = 0; u < W; ++u)
        if (map.is_valid(u, v)) point[map.idx(u, v)] = pixel_direction(u, v, H, W) * map.at(u, v);
    for (int v = 1; v + 1 < H; ++v)
      for (int u = 0; u < W; ++u) {
        const int ul = (u + W - 1) % W, ur = (u + 1) % W;
        if (!map.is_valid(u, v) || !map.is_valid(ul, v) || !map.is_valid(ur, v) || !map.is_valid(u, v - 1) ||
            !map.is_valid(u, v + 1))
          continue;
        const Vec3 tu = point[map.idx(ur, v)] - point[map.idx(ul, v)];
        const Vec3 tv = point[map.idx(u, v + 1)] - point[map.idx(u, v - 1)];
        Vec3 nn = tu.cross(tv);
        const double len = nn.norm();
        if (!(len > 1e-12)) continue;
        nn /= len;
        const std::size_t i = map.idx(u, v);
        if (nn.dot(point[i]) > 0) nn = -nn;
        normal[i] = nn;
        usable[i] = 1;
      }
  }
};

namespace detail {

// Window columns for a candidate yaw, ordered from the window's left edge.
inline std::vector<int> window_columns(int W, double yaw, double azimuth_fov) {
  const double center = (wrap_angle(yaw) + kPi) / kTwoPi * W;
  const double half = azimuth_fov / 2 / kTwoPi * W;
  std::vector<std::pair<double, int>> cols;
  for (int u = 0; u < W; ++u) {
    double off = (u + 0.5) - center;
    off -= W * std::floor(off / W + 0.5);  // wrap to [-W/2, W/2)
    if (std::abs(off) <= half + 1e-9) cols.emplace_back(off, u);
  }
  std::sort(cols.begin(), cols.end());
  std::vector<int> out;
  out.reserve(cols.size());
  for (const auto& c : cols) out.push_back(c.second);
  return out;
}

}  // namespace detail

/// Virtual scan at a candidate yaw: usable pixels inside the sensor window,
/// with the plane point set to the back-projected pixel itself.
inline std::vector<Correspondence> virtual_scan(const PanoramaGeometry& geo, double candidate_yaw,
                                                const SensorModel& sensor, std::size_t max_corrs = 512) {
  std::vector<Correspondence> out;
  const auto cols = detail::window_columns(geo.W, candidate_yaw, sensor.azimuth_fov);
  for (int v = 0; v < geo.H; ++v) {
    if (std::abs(row_elevation(v, geo.H)) > sensor.elevation_fov / 2 + 1e-9) continue;
    for (int u : cols) {
      const std::size_t i = static_cast<std::size_t>(v) * static_cast<std::size_t>(geo.W) + static_cast<std::size_t>(u);
      if (!geo.usable[i]) continue;
      out.push_back({geo.point[i], geo.normal[i], geo.point[i]});
    }
  }
  if (max_corrs > 0 && out.size() > max_corrs) {
    const std::size_t stride = (out.size() + max_corrs - 1) / max_corrs;
    std::vector<Correspondence> sub;
    sub.reserve(max_corrs);
    for (std::size_t i = 0; i < out.size(); i += stride) sub.push_back(out[i]);
    out.swap(sub);
  }
  return out;
}

inline std::vector<Correspondence> virtual_scan(const PanoramicDepthMap& map, double candidate_yaw,
                                                const SensorModel& sensor, std::size_t max_corrs = 512) {
  return virtual_scan(PanoramaGeometry(map), candidate_yaw, sensor, max_corrs);
}

struct ObservabilityCurve {
  std::vector<double> yaws;   // ascending in (-pi, pi]
  std::vector<double> costs;  // J_obs at each yaw

  std::size_t argmin() const {
    return static_cast<std::size_t>(std::min_element(costs.begin(), costs.end()) - costs.begin());
  }

  /// Periodic linear interpolation of the cost at any yaw.
  double interpolate(double yaw) const {
    const std::size_t M = yaws.size();
    const double step = kTwoPi / static_cast<double>(M);
    const double s = (wrap_angle(yaw) - yaws[0]) / step;
    const double fl = std::floor(s);
    const double frac = s - fl;
    const long long i0 = static_cast<long long>(fl);
    const auto m = static_cast<long long>(M);
    const auto a = static_cast<std::size_t>(((i0 % m) + m) % m);
    const auto b = (a + 1) % M;
    return (1 - frac) * costs[a] + frac * costs[b];
  }
};

inline std::vector<double> sweep_yaws(int M) {
  std::vector<double> y(static_cast<std::size_t>(M));
  for (int m = 0; m < M; ++m) y[static_cast<std::size_t>(m)] = -kPi + (m + 1) * kTwoPi / M;
  return y;
}

struct SweepOptions {
  int candidates = 36;
  double reg = 1e-3;
  std::size_t max_corrs = 512;
};

inline ObservabilityCurve sweep(const PanoramaGeometry& geo, const SensorModel& sensor, const SweepOptions& opt = {}) {
  if (opt.candidates < 4) throw ConfigError("sweep: need at least 4 candidates");
  ObservabilityCurve c;
  c.yaws = sweep_yaws(opt.candidates);
  c.costs.reserve(c.yaws.size());
  for (double yaw : c.yaws) {
    const auto corrs = virtual_scan(geo, yaw, sensor, opt.max_corrs);
    if (corrs.empty()) {
      c.costs.push_back(6.0 / opt.reg);
      continue;
    }
    c.costs.push_back(a_optimality(fim(corrs, Rigid::identity()), opt.reg));
  }
  return c;
}

inline ObservabilityCurve sweep(const PanoramicDepthMap& map, const SensorModel& sensor, const SweepOptions& opt = {}) {
  return sweep(PanoramaGeometry(map), sensor, opt);
}

struct QuadraticFit {
  double h_obs = 0.0;
  double g_obs = 0.0;
  double c_obs_const = 0.0;
  double psi0 = 0.0;
  double residual_rms = 0.0;
  double h_raw = 0.0;
  bool clamped = false;
  bool anchored = false;  // expanded toward a distant global minimum

  double eval(double local) const { return 0.5 * h_obs * local * local + g_obs * local + c_obs_const; }
};

/// Least-squares fit of 0.5 h x^2 + g x + c to (x, J) samples.
inline QuadraticFit fit_quadratic_samples(const std::vector<double>& x, const std::vector<double>& J) {
  if (x.size() != J.size() || x.size() < 3) throw ConfigError("fit_quadratic: need >= 3 samples");
  const auto n = static_cast<Eigen::Index>(x.size());
  Eigen::MatrixXd A(n, 3);
  Eigen::VectorXd b(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double xi = x[static_cast<std::size_t>(i)];
    A(i, 0) = 0.5 * xi * xi;
    A(i, 1) = xi;
    A(i, 2) = 1.0;
    b(i) = J[static_cast<std::size_t>(i)];
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
  if (qr.rank() < 3) throw NumericError("fit_quadratic: degenerate design matrix");
  const Eigen::Vector3d coef = qr.solve(b);
  QuadraticFit f;
  f.h_raw = coef(0);
  f.h_obs = coef(0);
  f.g_obs = coef(1);
  f.c_obs_const = coef(2);
  f.residual_rms = std::sqrt((A * coef - b).squaredNorm() / static_cast<double>(n));
  if (f.h_obs < 0) {
    f.h_obs = 0;
    f.clamped = true;
  }
  return f;
}

/// Local quadratic in x = wrap(psi - psi0) over n_local samples spanning
/// +-half_width, interpolated from the curve.
inline QuadraticFit fit_quadratic(const ObservabilityCurve& curve, double psi0, double half_width = 0.35,
                                  int n_local = 5) {
  if (n_local < 3 || n_local % 2 == 0) throw ConfigError("fit_quadratic: n_local must be odd and >= 3");
  if (!(half_width > 0)) throw ConfigError("fit_quadratic: half_width must be positive");
  const int K = (n_local - 1) / 2;
  const double step = half_width / K;
  std::vector<double> x, J;
  for (int k = -K; k <= K; ++k) {
    x.push_back(k * step);
    J.push_back(curve.interpolate(psi0 + k * step));
  }
  QuadraticFit f = fit_quadratic_samples(x, J);
  f.psi0 = wrap_angle(psi0);
  return f;
}

/// Local fit about psi0, or, when the curve's global minimum lies outside
/// the local window and is markedly lower, the quadratic through the current
/// cost with its minimum at the global argmin.
inline QuadraticFit steering_fit(const ObservabilityCurve& curve, double psi0, double half_width = 0.35,
                                 int n_local = 5, double anchor_gain = 0.2) {
  QuadraticFit local = fit_quadratic(curve, psi0, half_width, n_local);
  const std::size_t m = curve.argmin();
  const double delta = wrap_angle(curve.yaws[m] - psi0);
  if (std::abs(delta) <= half_width) return local;
  double local_min = std::numeric_limits<double>::infinity();
  const int K = (n_local - 1) / 2;
  for (int k = -K; k <= K; ++k) local_min = std::min(local_min, curve.interpolate(psi0 + k * half_width / K));
  const double jstar = curve.costs[m];
  if (!(jstar < (1.0 - anchor_gain) * local_min)) return local;
  const double j0 = curve.interpolate(psi0);
  QuadraticFit f;
  f.psi0 = wrap_angle(psi0);
  f.h_obs = std::max(2.0 * (j0 - jstar) / (delta * delta), 0.0);
  f.h_raw = f.h_obs;
  f.g_obs = -f.h_obs * delta;
  f.c_obs_const = j0;
  f.anchored = true;
  return f;
}

}  // namespace aware
