#pragma once

// Synthetic stand-ins for structured, degraded and unstructured scenes:
// deterministic surface sampling plus a timed expert centerline.

#include <random>
#include <string>
#include <vector>

#include "aware/common.hpp"
#include "aware/estimator.hpp"

namespace aware {

enum class SceneKind { BoxRoom, Corridor, CorridorWithAlcoves, CylinderCave, PillarForest };

inline SceneKind parse_scene_kind(const std::string& s) {
  if (s == "box_room") return SceneKind::BoxRoom;
  if (s == "corridor") return SceneKind::Corridor;
  if (s == "corridor_with_alcoves") return SceneKind::CorridorWithAlcoves;
  if (s == "cylinder_cave") return SceneKind::CylinderCave;
  if (s == "pillar_forest") return SceneKind::PillarForest;
  throw ConfigError("unknown scene kind: " + s);
}

inline std::string scene_kind_name(SceneKind k) {
  switch (k) {
    case SceneKind::BoxRoom: return "box_room";
    case SceneKind::Corridor: return "corridor";
    case SceneKind::CorridorWithAlcoves: return "corridor_with_alcoves";
    case SceneKind::CylinderCave: return "cylinder_cave";
    case SceneKind::PillarForest: return "pillar_forest";
  }
  return "?";
}

struct SceneParams {
  double density = 100.0;  // points per m^2
  // box_room
  double room_x = 10.0, room_y = 10.0, room_z = 3.0;
  // corridor / alcoves / cave
  double length = 60.0;
  double width = 3.0;
  double height = 3.0;
  double end_clearance = 2.0;
  double alcove_spacing = 8.0;
  double alcove_depth = 1.2;
  double alcove_width = 2.0;
  double cave_radius = 2.5;
  double cave_waviness = 0.15;
  // pillar_forest
  double forest_extent = 30.0;
  int pillars = 40;
  double pillar_radius = 0.3;
  double pillar_height = 4.0;
  double loop_radius = 8.0;
  // expert path
  double fly_height = 1.5;
  double speed_mean = 1.1;
  double speed_amp = 0.5;
  double speed_period = 12.0;  // meters of path per speed cycle
  uint64_t seed = 7;
};

struct SyntheticScene {
  SceneKind kind = SceneKind::BoxRoom;
  std::vector<Vec3> points;
  Trajectory expert;
  std::vector<Vec3> pillar_centers;  // pillar_forest only (base, z = 0)
};

namespace detail {

// Grid-samples the parallelogram origin + s*a + t*b, s,t in [0,1].
inline void sample_rect(std::vector<Vec3>& out, const Vec3& origin, const Vec3& a, const Vec3& b, double density) {
  const double step = 1.0 / std::sqrt(density);
  const int na = std::max(1, static_cast<int>(std::lround(a.norm() / step)));
  const int nb = std::max(1, static_cast<int>(std::lround(b.norm() / step)));
  for (int i = 0; i < na; ++i)
    for (int j = 0; j < nb; ++j) out.push_back(origin + a * ((i + 0.5) / na) + b * ((j + 0.5) / nb));
}

// Vertical cylinder side surface.
inline void sample_cylinder(std::vector<Vec3>& out, const Vec3& base, double radius, double height, double density) {
  const double step = 1.0 / std::sqrt(density);
  const int na = std::max(3, static_cast<int>(std::lround(kTwoPi * radius / step)));
  const int nh = std::max(1, static_cast<int>(std::lround(height / step)));
  for (int i = 0; i < na; ++i) {
    const double th = kTwoPi * (i + 0.5) / na;
    for (int j = 0; j < nh; ++j)
      out.push_back(base + Vec3(radius * std::cos(th), radius * std::sin(th), height * (j + 0.5) / nh));
  }
}

// Times a polyline by a smoothly varying speed profile, sampled every dt.
inline Trajectory time_polyline(const std::vector<Vec3>& poly, const SceneParams& prm, double dt = 0.1) {
  std::vector<double> s(poly.size(), 0.0);
  for (std::size_t i = 1; i < poly.size(); ++i) s[i] = s[i - 1] + (poly[i] - poly[i - 1]).norm();
  const double total = s.back();
  auto speed = [&](double d) { return prm.speed_mean + prm.speed_amp * std::sin(kTwoPi * d / prm.speed_period); };
  auto pos_at = [&](double d) {
    std::size_t k = 1;
    while (k + 1 < poly.size() && s[k] < d) ++k;
    const double seg = s[k] - s[k - 1];
    const double f = seg > 0 ? std::clamp((d - s[k - 1]) / seg, 0.0, 1.0) : 0.0;
    return Vec3(poly[k - 1] + f * (poly[k] - poly[k - 1]));
  };
  Trajectory traj;
  double d = 0.0, t = 0.0;
  while (true) {
    const Vec3 p = pos_at(std::min(d, total));
    const Vec3 ahead = pos_at(std::min(d + 0.05, total));
    const Vec3 back = pos_at(std::max(d - 0.05, 0.0));
    const double yaw = std::atan2(ahead.y() - back.y(), ahead.x() - back.x());
    TrajPose tp;
    tp.stamp = t;
    tp.p = p;
    tp.q = Eigen::Quaterniond(Eigen::AngleAxisd(yaw, Vec3::UnitZ()));
    traj.push_back(tp);
    if (d >= total) break;
    // Midpoint integration of ds/dt = speed(s).
    const double v1 = speed(d);
    const double v2 = speed(d + 0.5 * v1 * dt);
    d = std::min(d + v2 * dt, total);
    t += dt;
  }
  return traj;
}

inline void sample_box_shell(std::vector<Vec3>& out, const Vec3& lo, const Vec3& hi, double density,
                             bool floor = true, bool ceiling = true) {
  const Vec3 e = hi - lo;
  const Vec3 X(e.x(), 0, 0), Y(0, e.y(), 0), Z(0, 0, e.z());
  if (floor) sample_rect(out, lo, X, Y, density);
  if (ceiling) sample_rect(out, lo + Z, X, Y, density);
  sample_rect(out, lo, X, Z, density);
  sample_rect(out, lo + Y, X, Z, density);
  sample_rect(out, lo, Y, Z, density);
  sample_rect(out, lo + X, Y, Z, density);
}

}  // namespace detail

inline SyntheticScene gen_synthetic_scene(SceneKind kind, const SceneParams& prm = {}) {
  SyntheticScene sc;
  sc.kind = kind;
  auto& pts = sc.points;
  const double h = prm.fly_height;
  std::vector<Vec3> path;
  switch (kind) {
    case SceneKind::BoxRoom: {
      detail::sample_box_shell(pts, Vec3(-prm.room_x / 2, -prm.room_y / 2, 0), Vec3(prm.room_x / 2, prm.room_y / 2, prm.room_z),
                               prm.density);
      const double a = prm.room_x / 2 - 2.0, b = prm.room_y / 2 - 2.0;
      path = {{-a, -b, h}, {a, -b, h}, {a, b, h}, {-a, b, h}, {-a, -b, h}};
      break;
    }
    case SceneKind::Corridor:
    case SceneKind::CorridorWithAlcoves: {
      const double L = prm.length + 2 * prm.end_clearance, w = prm.width, H = prm.height;
      const Vec3 X(L, 0, 0), Z(0, 0, H);
      detail::sample_rect(pts, Vec3(0, -w / 2, 0), X, Vec3(0, w, 0), prm.density);  // floor
      detail::sample_rect(pts, Vec3(0, -w / 2, H), X, Vec3(0, w, 0), prm.density);  // ceiling
      detail::sample_rect(pts, Vec3(0, -w / 2, 0), Vec3(0, w, 0), Z, prm.density);  // end walls
      detail::sample_rect(pts, Vec3(L, -w / 2, 0), Vec3(0, w, 0), Z, prm.density);
      if (kind == SceneKind::Corridor) {
        detail::sample_rect(pts, Vec3(0, -w / 2, 0), X, Z, prm.density);
        detail::sample_rect(pts, Vec3(0, w / 2, 0), X, Z, prm.density);
      } else {
        // Side walls interrupted by alternating rectangular alcoves.
        for (int side : {-1, 1}) {
          const double y = side * w / 2;
          double x = 0.0;
          int k = 0;
          while (x < L) {
            const double centre = prm.alcove_spacing * (k + 0.5) + (side > 0 ? prm.alcove_spacing / 2 : 0.0);
            const double a0 = centre - prm.alcove_width / 2, a1 = centre + prm.alcove_width / 2;
            if (a1 >= L - 0.5) {
              detail::sample_rect(pts, Vec3(x, y, 0), Vec3(L - x, 0, 0), Z, prm.density);
              break;
            }
            detail::sample_rect(pts, Vec3(x, y, 0), Vec3(a0 - x, 0, 0), Z, prm.density);
            const double yd = y + side * prm.alcove_depth;
            detail::sample_rect(pts, Vec3(a0, y, 0), Vec3(0, yd - y, 0), Z, prm.density);
            detail::sample_rect(pts, Vec3(a1, y, 0), Vec3(0, yd - y, 0), Z, prm.density);
            detail::sample_rect(pts, Vec3(a0, yd, 0), Vec3(a1 - a0, 0, 0), Z, prm.density);
            detail::sample_rect(pts, Vec3(a0, std::min(y, yd), 0), Vec3(a1 - a0, 0, 0), Vec3(0, std::abs(yd - y), 0),
                                prm.density);
            detail::sample_rect(pts, Vec3(a0, std::min(y, yd), H), Vec3(a1 - a0, 0, 0), Vec3(0, std::abs(yd - y), 0),
                                prm.density);
            x = a1;
            ++k;
          }
        }
      }
      path = {{prm.end_clearance, 0, h}, {prm.end_clearance + prm.length, 0, h}};
      break;
    }
    case SceneKind::CylinderCave: {
      const double L = prm.length + 2 * prm.end_clearance;
      const double step = 1.0 / std::sqrt(prm.density);
      const int nx = std::max(1, static_cast<int>(std::lround(L / step)));
      const int na = std::max(8, static_cast<int>(std::lround(kTwoPi * prm.cave_radius / step)));
      const double zc = prm.cave_radius;  // axis height; floor touches z = 0 on average
      for (int i = 0; i < nx; ++i) {
        const double x = L * (i + 0.5) / nx;
        for (int j = 0; j < na; ++j) {
          const double th = kTwoPi * (j + 0.5) / na;
          const double r = prm.cave_radius *
                           (1.0 + prm.cave_waviness * std::sin(0.9 * x + 3.0 * th) + 0.5 * prm.cave_waviness * std::sin(0.37 * x - 2.0 * th));
          pts.emplace_back(x, r * std::cos(th), zc + r * std::sin(th));
        }
      }
      // End caps: grid-sampled discs.
      const double rc = prm.cave_radius * (1.0 - 1.5 * prm.cave_waviness);
      for (double x : {0.0, L})
        for (double y = -rc + step / 2; y < rc; y += step)
          for (double z = -rc + step / 2; z < rc; z += step)
            if (y * y + z * z <= rc * rc) pts.emplace_back(x, y, zc + z);
      path = {{prm.end_clearance, 0, zc}, {prm.end_clearance + prm.length, 0, zc}};
      break;
    }
    case SceneKind::PillarForest: {
      const double E = prm.forest_extent;
      detail::sample_rect(pts, Vec3(-E / 2, -E / 2, 0), Vec3(E, 0, 0), Vec3(0, E, 0), prm.density);
      const int nseg = 72;
      for (int i = 0; i <= nseg; ++i) {
        const double th = kTwoPi * i / nseg;
        path.emplace_back(prm.loop_radius * std::cos(th), prm.loop_radius * std::sin(th), h);
      }
      std::mt19937_64 rng(prm.seed);
      std::uniform_real_distribution<double> U(-E / 2 + 1.0, E / 2 - 1.0);
      int placed = 0, attempts = 0;
      while (placed < prm.pillars && attempts < 100000) {
        ++attempts;
        const Vec3 c(U(rng), U(rng), 0.0);
        const double dr = std::abs(std::hypot(c.x(), c.y()) - prm.loop_radius);
        if (dr < 2.0) continue;
        bool clash = false;
        for (const auto& o : sc.pillar_centers)
          if ((o - c).norm() < 4 * prm.pillar_radius + 0.5) clash = true;
        if (clash) continue;
        sc.pillar_centers.push_back(c);
        detail::sample_cylinder(pts, c, prm.pillar_radius, prm.pillar_height, prm.density);
        ++placed;
      }
      break;
    }
  }
  sc.expert = detail::time_polyline(path, prm);
  return sc;
}

}  // namespace aware
