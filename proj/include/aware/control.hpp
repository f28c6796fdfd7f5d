#pragma once

// Flat translational model (triple integrator plus yaw integrator), pilot
// reference generation and the box-shaped safe flight corridor.

#include <algorithm>
#include <array>
#include <vector>

#include "aware/common.hpp"
#include "aware/worldmap.hpp"

namespace aware {

inline constexpr int kNx = 10;  // p(3) v(3) a(3) psi
inline constexpr int kNu = 4;   // jerk(3) yaw_rate

using StateVec = Eigen::Matrix<double, kNx, 1>;
using InputVec = Eigen::Matrix<double, kNu, 1>;
using MatA = Eigen::Matrix<double, kNx, kNx>;
using MatB = Eigen::Matrix<double, kNx, kNu>;

struct UavState {
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  Vec3 a = Vec3::Zero();
  double psi = 0.0;

  StateVec vec() const {
    StateVec x;
    x << p, v, a, psi;
    return x;
  }
  static UavState from_vec(const StateVec& x) {
    UavState s;
    s.p = x.segment<3>(0);
    s.v = x.segment<3>(3);
    s.a = x.segment<3>(6);
    s.psi = wrap_angle(x(9));
    return s;
  }
};

struct ControlInput {
  Vec3 jerk = Vec3::Zero();
  double yaw_rate = 0.0;

  InputVec vec() const {
    InputVec u;
    u << jerk, yaw_rate;
    return u;
  }
  static ControlInput from_vec(const InputVec& u) { return {u.head<3>(), u(3)}; }
};

struct DynamicsModel {
  MatA A = MatA::Identity();
  MatB B = MatB::Zero();
  double dt = 0.1;

  explicit DynamicsModel(double dt_ = 0.1) : dt(dt_) {
    if (!(dt > 0)) throw ConfigError("dynamics: dt must be positive");
    const double d2 = dt * dt / 2, d3 = dt * dt * dt / 6;
    for (int i = 0; i < 3; ++i) {
      A(i, 3 + i) = dt;
      A(i, 6 + i) = d2;
      A(3 + i, 6 + i) = dt;
      B(i, i) = d3;
      B(3 + i, i) = d2;
      B(6 + i, i) = dt;
    }
    B(9, 3) = dt;
  }
};

/// Exact one-step update of the triple integrator and yaw integrator.
inline UavState step_dynamics(const UavState& x, const ControlInput& u, double dt) {
  UavState n;
  n.p = x.p + x.v * dt + x.a * (dt * dt / 2) + u.jerk * (dt * dt * dt / 6);
  n.v = x.v + x.a * dt + u.jerk * (dt * dt / 2);
  n.a = x.a + u.jerk * dt;
  n.psi = wrap_angle(x.psi + u.yaw_rate * dt);
  return n;
}

struct JoystickLimits {
  double v_xy = 2.0;
  double v_z = 1.0;
  double yaw_rate = 8.0;
};

/// Body-aligned velocity command from the pilot. The yaw-rate channel is
/// recorded only; yaw is chosen by the controller.
struct PilotCommand {
  double vx = 0.0, vy = 0.0, vz = 0.0;
  double yaw_rate_hint = 0.0;

  PilotCommand clamped(const JoystickLimits& lim) const {
    return {std::clamp(vx, -lim.v_xy, lim.v_xy), std::clamp(vy, -lim.v_xy, lim.v_xy), std::clamp(vz, -lim.v_z, lim.v_z),
            std::clamp(yaw_rate_hint, -lim.yaw_rate, lim.yaw_rate)};
  }
  bool operator==(const PilotCommand&) const = default;
};

/// N+1 reference states: constant world-frame velocity from the command
/// rotated by the current yaw, zero acceleration, yaw left at the start value.
inline std::vector<UavState> build_reference(const UavState& x0, const PilotCommand& cmd, int N, double dt) {
  const Vec3 vw = rot_z(x0.psi) * Vec3(cmd.vx, cmd.vy, cmd.vz);
  std::vector<UavState> refs(static_cast<std::size_t>(N + 1));
  for (int k = 0; k <= N; ++k) {
    auto& r = refs[static_cast<std::size_t>(k)];
    r.p = x0.p + vw * (k * dt);
    r.v = vw;
    r.a.setZero();
    r.psi = x0.psi;
  }
  return refs;
}

struct Halfspace {
  Vec3 a = Vec3::UnitX();
  double b = 0.0;
};

/// Convex region {p : a_i . p <= b_i}.
struct SafeCorridor {
  std::vector<Halfspace> halfspaces;
  Vec3 box_min = Vec3::Zero(), box_max = Vec3::Zero();  // emitted box, margin applied

  bool contains(const Vec3& p, double tol = 0.0) const {
    for (const auto& h : halfspaces)
      if (h.a.dot(p) > h.b + tol) return false;
    return true;
  }
  /// Largest violation max_i (a_i . p - b_i), negative inside.
  double violation(const Vec3& p) const {
    double v = -std::numeric_limits<double>::infinity();
    for (const auto& h : halfspaces) v = std::max(v, h.a.dot(p) - h.b);
    return v;
  }
  std::array<double, 6> as_array() const {
    return {box_min.x(), box_min.y(), box_min.z(), box_max.x(), box_max.y(), box_max.z()};
  }
};

struct SfcOptions {
  double max_half_extent = 5.0;
  double margin = 0.3;
  bool within_map_bounds = true;  // unmapped space counts as blocked
};

/// Axis-aligned box grown one voxel layer at a time, faces in round-robin
/// order, while the swept slab stays free and within max_half_extent of the
/// seed (the last layer is clipped to the extent) and inside the map bounds.
/// The margin shrinks each face but never past the seed itself.
inline SafeCorridor build_sfc(const PointMap& map, const Vec3& seed, const SfcOptions& opt = {}) {
  const double vs = map.voxel_size();
  const VoxelKey s = map.key_of(seed);
  if (map.occupied(s)) throw CorridorError("sfc: seed voxel is occupied");
  std::array<int, 3> lo{s.x, s.y, s.z}, hi{s.x, s.y, s.z};
  const std::array<double, 3> sp{seed.x(), seed.y(), seed.z()};
  std::array<bool, 6> open{true, true, true, true, true, true};
  const Bounds& bb = map.bounds();
  const bool clip = opt.within_map_bounds && !bb.empty();
  auto slab_free = [&](int axis, int layer) {
    if (clip && ((layer + 1) * vs > bb.max(axis) + 1e-9 || layer * vs < bb.min(axis) - 1e-9)) return false;
    const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
    std::array<int, 3> k{};
    k[static_cast<std::size_t>(axis)] = layer;
    for (int i = lo[static_cast<std::size_t>(a1)]; i <= hi[static_cast<std::size_t>(a1)]; ++i)
      for (int j = lo[static_cast<std::size_t>(a2)]; j <= hi[static_cast<std::size_t>(a2)]; ++j) {
        k[static_cast<std::size_t>(a1)] = i;
        k[static_cast<std::size_t>(a2)] = j;
        if (map.occupied({k[0], k[1], k[2]})) return false;
      }
    return true;
  };
  bool grew = true;
  while (grew) {
    grew = false;
    for (int f = 0; f < 6; ++f) {
      if (!open[static_cast<std::size_t>(f)]) continue;
      const auto axis = static_cast<std::size_t>(f % 3);
      const bool up = f >= 3;
      const int layer = up ? hi[axis] + 1 : lo[axis] - 1;
      const double face = up ? layer * vs : (layer + 1) * vs;  // current face, before growing
      if (std::abs(face - sp[axis]) >= opt.max_half_extent || !slab_free(static_cast<int>(axis), layer)) {
        open[static_cast<std::size_t>(f)] = false;
        continue;
      }
      (up ? hi[axis] : lo[axis]) = layer;
      grew = true;
    }
  }
  SafeCorridor c;
  for (std::size_t ax = 0; ax < 3; ++ax) {
    double bmin = lo[ax] * vs, bmax = (hi[ax] + 1) * vs;
    // Clip faces that stopped at the extent limit rather than an obstacle.
    bmin = std::max(bmin, sp[ax] - opt.max_half_extent);
    bmax = std::min(bmax, sp[ax] + opt.max_half_extent);
    c.box_min(static_cast<Eigen::Index>(ax)) = std::min(bmin + opt.margin, sp[ax]);
    c.box_max(static_cast<Eigen::Index>(ax)) = std::max(bmax - opt.margin, sp[ax]);
  }
  for (int ax = 0; ax < 3; ++ax) {
    c.halfspaces.push_back({Vec3::Unit(ax), c.box_max(ax)});
    c.halfspaces.push_back({-Vec3::Unit(ax), -c.box_min(ax)});
  }
  return c;
}

}  // namespace aware
