#pragma once

// Point-cloud world maps: voxel occupancy, per-voxel plane features, file
// loading and virtual LiDAR raycasting.

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "aware/common.hpp"

namespace aware {

struct VoxelKey {
  int32_t x = 0, y = 0, z = 0;
  bool operator==(const VoxelKey&) const = default;
};

struct VoxelKeyHash {
  std::size_t operator()(const VoxelKey& k) const noexcept {
    // Large-prime spatial hash.
    const uint64_t h = static_cast<uint64_t>(static_cast<uint32_t>(k.x)) * 73856093ULL ^
                       static_cast<uint64_t>(static_cast<uint32_t>(k.y)) * 19349663ULL ^
                       static_cast<uint64_t>(static_cast<uint32_t>(k.z)) * 83492791ULL;
    return static_cast<std::size_t>(h ^ (h >> 29));
  }
};

inline VoxelKey voxel_key(const Vec3& p, double voxel_size) {
  return {static_cast<int32_t>(std::floor(p.x() / voxel_size)),
          static_cast<int32_t>(std::floor(p.y() / voxel_size)),
          static_cast<int32_t>(std::floor(p.z() / voxel_size))};
}

struct VoxelRecord {
  Vec3 centroid = Vec3::Zero();
  std::optional<Vec3> normal;
  uint32_t count = 0;
  double planarity = 0.0;
};

struct Bounds {
  Vec3 min = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 max = Vec3::Constant(-std::numeric_limits<double>::infinity());

  bool empty() const { return (min.array() > max.array()).any(); }
  void extend(const Vec3& p) {
    min = min.cwiseMin(p);
    max = max.cwiseMax(p);
  }
  bool contains(const Vec3& p) const {
    return !empty() && (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
};

struct PlaneFit {
  Vec3 normal = Vec3::UnitZ();
  Vec3 centroid = Vec3::Zero();
  double planarity = 0.0;
};

namespace detail {

// Eigen-decomposes a 3x3 scatter; returns false when the two largest
// directions do not span a plane.
inline bool plane_from_scatter(const Mat3& cov, const Vec3& centroid, const Vec3& orient_to,
                               PlaneFit& out, bool direct) {
  Eigen::SelfAdjointEigenSolver<Mat3> es;
  if (direct)
    es.computeDirect(cov);
  else
    es.compute(cov);
  const Vec3 ev = es.eigenvalues();  // ascending
  const double lmin = std::max(ev(0), 0.0), lmid = std::max(ev(1), 0.0), lmax = std::max(ev(2), 0.0);
  out.centroid = centroid;
  if (lmax <= 0.0 || lmid <= 1e-10 * lmax) {
    out.planarity = 0.0;
    return false;
  }
  out.planarity = std::clamp(1.0 - lmin / lmid, 0.0, 1.0);
  Vec3 n = es.eigenvectors().col(0).normalized();
  if (n.dot(orient_to - centroid) < 0) n = -n;
  out.normal = n;
  return true;
}

}  // namespace detail

/// Fits a plane to >= 3 points by PCA of the scatter matrix. The normal is
/// the smallest-eigenvalue direction, oriented toward the world origin.
inline PlaneFit estimate_plane(const std::vector<Vec3>& points) {
  if (points.size() < 3) throw InsufficientPointsError("estimate_plane needs at least 3 points");
  Vec3 c = Vec3::Zero();
  for (const auto& p : points) c += p;
  c /= static_cast<double>(points.size());
  Mat3 S = Mat3::Zero();
  for (const auto& p : points) S += (p - c) * (p - c).transpose();
  S /= static_cast<double>(points.size());
  PlaneFit fit;
  if (!detail::plane_from_scatter(S, c, Vec3::Zero(), fit, false))
    throw DegenerateError("estimate_plane: collinear or coincident points, normal undefined");
  return fit;
}

/// Voxelized point map. Immutable world maps and the estimator's growing
/// local map share this type; the dense index is only built for the former.
class PointMap {
 public:
  explicit PointMap(double voxel_size = 0.3, double planarity_min = 0.3)
      : voxel_size_(voxel_size), planarity_min_(planarity_min) {
    if (!(voxel_size > 0)) throw ConfigError("voxel_size must be positive");
  }

  static PointMap from_points(std::vector<Vec3> points, double voxel_size, double planarity_min = 0.3) {
    PointMap m(voxel_size, planarity_min);
    m.insert(points);
    m.refresh();
    m.build_dense_index();
    return m;
  }

  double voxel_size() const { return voxel_size_; }
  double planarity_min() const { return planarity_min_; }
  const std::vector<Vec3>& points() const { return points_; }
  const Bounds& bounds() const { return bounds_; }
  std::size_t num_voxels() const { return records_.size(); }
  const std::vector<VoxelRecord>& records() const { return records_; }
  const std::vector<VoxelKey>& keys() const { return keys_; }
  bool empty() const { return points_.empty(); }

  VoxelKey key_of(const Vec3& p) const { return voxel_key(p, voxel_size_); }

  const VoxelRecord* find(const VoxelKey& k) const {
    const int32_t idx = index_of(k);
    return idx < 0 ? nullptr : &records_[static_cast<std::size_t>(idx)];
  }
  bool occupied(const VoxelKey& k) const { return index_of(k) >= 0; }

  /// Appends points; voxel features stay stale until refresh().
  void insert(const std::vector<Vec3>& pts) {
    for (const auto& p : pts) insert_one(p);
  }

  void insert_one(const Vec3& p) {
    const VoxelKey k = key_of(p);
    auto [it, fresh] = lookup_.try_emplace(k, static_cast<int32_t>(records_.size()));
    if (fresh) {
      records_.emplace_back();
      keys_.push_back(k);
      moments_.emplace_back();
      dirty_flag_.push_back(0);
      dense_.clear();  // dense index no longer covers every voxel
    }
    const auto idx = static_cast<std::size_t>(it->second);
    if (max_per_voxel_ > 0 && moments_[idx].n >= max_per_voxel_) return;
    const Vec3 local = p - origin_of(k);
    auto& m = moments_[idx];
    m.n += 1;
    m.sum += local;
    m.outer += local * local.transpose();
    if (!dirty_flag_[idx]) {
      dirty_flag_[idx] = 1;
      dirty_.push_back(static_cast<int32_t>(idx));
    }
    points_.push_back(p);
    bounds_.extend(p);
  }

  /// Recomputes centroid/normal/planarity of voxels touched since the last call.
  void refresh() {
    for (int32_t idx : dirty_) {
      const auto i = static_cast<std::size_t>(idx);
      const auto& m = moments_[i];
      auto& r = records_[i];
      const double n = static_cast<double>(m.n);
      const Vec3 mean = m.sum / n;
      r.count = m.n;
      r.centroid = origin_of(keys_[i]) + mean;
      r.normal.reset();
      r.planarity = 0.0;
      if (m.n >= 3) {
        const Mat3 cov = m.outer / n - mean * mean.transpose();
        PlaneFit fit;
        if (detail::plane_from_scatter(cov, r.centroid, Vec3::Zero(), fit, true)) {
          r.planarity = fit.planarity;
          if (fit.planarity >= planarity_min_) r.normal = fit.normal;
        }
      }
      dirty_flag_[i] = 0;
    }
    dirty_.clear();
  }

  /// Caps the number of points any voxel accumulates (0 = unbounded).
  void set_max_points_per_voxel(uint32_t cap) { max_per_voxel_ = cap; }

  /// Rebuilds the map keeping at most `cap` points per voxel.
  void revoxelize(uint32_t cap) {
    std::vector<Vec3> old;
    old.swap(points_);
    std::unordered_map<VoxelKey, uint32_t, VoxelKeyHash> counts;
    std::vector<Vec3> kept;
    kept.reserve(old.size());
    for (const auto& p : old) {
      auto& c = counts[key_of(p)];
      if (c < cap) {
        ++c;
        kept.push_back(p);
      }
    }
    const uint32_t saved_cap = max_per_voxel_;
    clear_index();
    max_per_voxel_ = saved_cap;
    insert(kept);
    refresh();
  }

  /// Dense voxel->record table for fast raycasting on static maps.
  void build_dense_index(std::size_t max_cells = 64u << 20) {
    dense_.clear();
    if (records_.empty()) return;
    VoxelKey lo = keys_[0], hi = keys_[0];
    for (const auto& k : keys_) {
      lo = {std::min(lo.x, k.x), std::min(lo.y, k.y), std::min(lo.z, k.z)};
      hi = {std::max(hi.x, k.x), std::max(hi.y, k.y), std::max(hi.z, k.z)};
    }
    const std::size_t nx = static_cast<std::size_t>(hi.x - lo.x + 1), ny = static_cast<std::size_t>(hi.y - lo.y + 1),
                      nz = static_cast<std::size_t>(hi.z - lo.z + 1);
    if (nx * ny * nz > max_cells) return;
    dense_lo_ = lo;
    dense_dim_ = {static_cast<int32_t>(nx), static_cast<int32_t>(ny), static_cast<int32_t>(nz)};
    dense_.assign(nx * ny * nz, -1);
    for (std::size_t i = 0; i < keys_.size(); ++i) dense_[dense_offset(keys_[i])] = static_cast<int32_t>(i);
  }

  /// Integer voxel range [lo, hi] covering every occupied voxel.
  std::pair<VoxelKey, VoxelKey> key_range() const {
    VoxelKey lo{}, hi{};
    if (keys_.empty()) return {lo, hi};
    lo = hi = keys_[0];
    for (const auto& k : keys_) {
      lo = {std::min(lo.x, k.x), std::min(lo.y, k.y), std::min(lo.z, k.z)};
      hi = {std::max(hi.x, k.x), std::max(hi.y, k.y), std::max(hi.z, k.z)};
    }
    return {lo, hi};
  }

 private:
  struct Moments {
    uint32_t n = 0;
    Vec3 sum = Vec3::Zero();
    Mat3 outer = Mat3::Zero();
  };

  Vec3 origin_of(const VoxelKey& k) const { return Vec3(k.x, k.y, k.z) * voxel_size_; }

  std::size_t dense_offset(const VoxelKey& k) const {
    return (static_cast<std::size_t>(k.z - dense_lo_.z) * static_cast<std::size_t>(dense_dim_.y) +
            static_cast<std::size_t>(k.y - dense_lo_.y)) *
               static_cast<std::size_t>(dense_dim_.x) +
           static_cast<std::size_t>(k.x - dense_lo_.x);
  }

  int32_t index_of(const VoxelKey& k) const {
    if (!dense_.empty()) {
      if (k.x < dense_lo_.x || k.y < dense_lo_.y || k.z < dense_lo_.z || k.x >= dense_lo_.x + dense_dim_.x ||
          k.y >= dense_lo_.y + dense_dim_.y || k.z >= dense_lo_.z + dense_dim_.z)
        return -1;
      return dense_[dense_offset(k)];
    }
    auto it = lookup_.find(k);
    return it == lookup_.end() ? -1 : it->second;
  }

  void clear_index() {
    points_.clear();
    records_.clear();
    keys_.clear();
    moments_.clear();
    dirty_.clear();
    dirty_flag_.clear();
    lookup_.clear();
    dense_.clear();
    bounds_ = Bounds{};
  }

  double voxel_size_;
  double planarity_min_;
  uint32_t max_per_voxel_ = 0;
  std::vector<Vec3> points_;
  Bounds bounds_;
  std::vector<VoxelRecord> records_;
  std::vector<VoxelKey> keys_;
  std::vector<Moments> moments_;
  std::vector<int32_t> dirty_;
  std::vector<uint8_t> dirty_flag_;
  std::unordered_map<VoxelKey, int32_t, VoxelKeyHash> lookup_;
  std::vector<int32_t> dense_;
  VoxelKey dense_lo_{};
  VoxelKey dense_dim_{};
};

// ---------------------------------------------------------------------------
// Map files: "APC1 <count> <ascii|binary>" header, or ascii PLY.

namespace detail {

inline std::vector<Vec3> parse_apc1(const std::string& buf) {
  const std::size_t eol = buf.find('\n');
  if (eol == std::string::npos) throw ParseError("APC1: missing header line terminator", buf.size());
  std::istringstream hs(buf.substr(0, eol));
  std::string magic, mode;
  long long count = -1;
  hs >> magic >> count >> mode;
  if (magic != "APC1") throw ParseError("APC1: bad magic", 0);
  if (count < 0 || hs.fail()) throw ParseError("APC1: bad point count", 5);
  if (mode != "ascii" && mode != "binary") throw ParseError("APC1: mode must be ascii or binary", 5);
  std::vector<Vec3> pts;
  pts.reserve(static_cast<std::size_t>(count));
  std::size_t pos = eol + 1;
  if (mode == "binary") {
    const std::size_t need = static_cast<std::size_t>(count) * 12;
    if (buf.size() - pos < need) throw ParseError("APC1: truncated binary body", buf.size());
    for (long long i = 0; i < count; ++i) {
      std::array<float, 3> f{};
      for (int c = 0; c < 3; ++c) {
        uint32_t u = 0;
        for (int b = 0; b < 4; ++b)
          u |= static_cast<uint32_t>(static_cast<unsigned char>(buf[pos + static_cast<std::size_t>(4 * c + b)]))
               << (8 * b);
        f[static_cast<std::size_t>(c)] = std::bit_cast<float>(u);
      }
      pts.emplace_back(f[0], f[1], f[2]);
      pos += 12;
    }
    return pts;
  }
  const char* base = buf.c_str();
  for (long long i = 0; i < count; ++i) {
    double v[3];
    for (double& x : v) {
      while (pos < buf.size() && std::isspace(static_cast<unsigned char>(buf[pos]))) ++pos;
      if (pos >= buf.size()) throw ParseError("APC1: unexpected end of ascii body", pos);
      char* end = nullptr;
      x = std::strtod(base + pos, &end);
      if (end == base + pos) throw ParseError("APC1: malformed number", pos);
      pos = static_cast<std::size_t>(end - base);
    }
    pts.emplace_back(v[0], v[1], v[2]);
  }
  return pts;
}

inline std::vector<Vec3> parse_ply_ascii(const std::string& buf) {
  std::size_t pos = 0;
  long long count = -1;
  std::vector<std::string> props;
  bool in_vertex = false, ascii = false;
  for (;;) {
    const std::size_t eol = buf.find('\n', pos);
    if (eol == std::string::npos) throw ParseError("PLY: missing end_header", pos);
    std::string line = buf.substr(pos, eol - pos);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string w;
    ls >> w;
    if (w == "format") {
      std::string f;
      ls >> f;
      ascii = f == "ascii";
      if (!ascii) throw ParseError("PLY: only ascii format supported", pos);
    } else if (w == "element") {
      std::string name;
      ls >> name;
      in_vertex = name == "vertex";
      if (in_vertex) ls >> count;
    } else if (w == "property" && in_vertex) {
      std::string type, name;
      ls >> type >> name;
      props.push_back(name);
    } else if (w == "end_header") {
      pos = eol + 1;
      break;
    }
    pos = eol + 1;
  }
  if (count < 0 || !ascii) throw ParseError("PLY: no vertex element", pos);
  int ix = -1, iy = -1, iz = -1;
  for (int i = 0; i < static_cast<int>(props.size()); ++i) {
    if (props[static_cast<std::size_t>(i)] == "x") ix = i;
    if (props[static_cast<std::size_t>(i)] == "y") iy = i;
    if (props[static_cast<std::size_t>(i)] == "z") iz = i;
  }
  if (ix < 0 || iy < 0 || iz < 0) throw ParseError("PLY: vertex lacks x/y/z", pos);
  std::vector<Vec3> pts;
  pts.reserve(static_cast<std::size_t>(count));
  const char* base = buf.c_str();
  std::vector<double> vals(props.size());
  for (long long i = 0; i < count; ++i) {
    for (double& x : vals) {
      while (pos < buf.size() && std::isspace(static_cast<unsigned char>(buf[pos]))) ++pos;
      if (pos >= buf.size()) throw ParseError("PLY: unexpected end of body", pos);
      char* end = nullptr;
      x = std::strtod(base + pos, &end);
      if (end == base + pos) throw ParseError("PLY: malformed number", pos);
      pos = static_cast<std::size_t>(end - base);
    }
    pts.emplace_back(vals[static_cast<std::size_t>(ix)], vals[static_cast<std::size_t>(iy)],
                     vals[static_cast<std::size_t>(iz)]);
  }
  return pts;
}

}  // namespace detail

/// Parses an in-memory map file (APC1 or ascii PLY).
inline std::vector<Vec3> parse_map_points(const std::string& buf) {
  if (buf.empty()) throw EmptyMapError("map file is empty");
  std::vector<Vec3> pts;
  if (buf.rfind("ply", 0) == 0)
    pts = detail::parse_ply_ascii(buf);
  else
    pts = detail::parse_apc1(buf);
  if (pts.empty()) throw EmptyMapError("map file contains no points");
  return pts;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline PointMap load_map(const std::string& path, double voxel_size, double planarity_min = 0.3) {
  return PointMap::from_points(parse_map_points(read_file(path)), voxel_size, planarity_min);
}

inline std::string encode_apc1(const std::vector<Vec3>& pts, bool binary) {
  std::string out = "APC1 " + std::to_string(pts.size()) + (binary ? " binary\n" : " ascii\n");
  if (binary) {
    out.reserve(out.size() + pts.size() * 12);
    for (const auto& p : pts)
      for (int c = 0; c < 3; ++c) {
        const auto u = std::bit_cast<uint32_t>(static_cast<float>(p(c)));
        for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((u >> (8 * b)) & 0xff));
      }
  } else {
    char line[96];
    for (const auto& p : pts) {
      std::snprintf(line, sizeof line, "%.6f %.6f %.6f\n", p.x(), p.y(), p.z());
      out += line;
    }
  }
  return out;
}

inline void save_map(const std::string& path, const std::vector<Vec3>& pts, bool binary) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << encode_apc1(pts, binary);
}

// ---------------------------------------------------------------------------
// Virtual LiDAR.

struct SensorModel {
  double azimuth_fov = 70.0 * kPi / 180.0;
  double elevation_fov = 70.0 * kPi / 180.0;
  int rays_az = 64;
  int rays_el = 32;
  double max_range = 40.0;
  double rate_hz = 10.0;

  void validate() const {
    if (rays_az < 1 || rays_el < 1 || !(max_range > 0) || !(rate_hz > 0) || !(azimuth_fov > 0) ||
        !(elevation_fov > 0))
      throw ConfigError("invalid sensor model");
  }

  /// Body-frame unit ray directions, elevation-major (top row first).
  std::vector<Vec3> ray_directions() const {
    std::vector<Vec3> dirs;
    dirs.reserve(static_cast<std::size_t>(rays_az * rays_el));
    for (int j = 0; j < rays_el; ++j) {
      const double el = elevation_fov / 2 - (j + 0.5) * elevation_fov / rays_el;
      for (int i = 0; i < rays_az; ++i) {
        const double az = -azimuth_fov / 2 + (i + 0.5) * azimuth_fov / rays_az;
        dirs.emplace_back(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
      }
    }
    return dirs;
  }
};

/// Level-flight sensor pose.
struct BodyPose {
  Vec3 position = Vec3::Zero();
  double yaw = 0.0;

  BodyPose() = default;
  BodyPose(const Vec3& p, double y) : position(p), yaw(wrap_angle(y)) {}
  Rigid transform() const { return Rigid::from_yaw(position, yaw); }
};

struct Scan {
  std::vector<Vec3> points;  // body frame
  double stamp = 0.0;
};

/// Casts the sensor's ray grid through the voxel map. The first occupied
/// voxel with a plane feature yields a hit on that plane, clamped to the
/// voxel's extent along the ray.
inline Scan raycast(const PointMap& map, const BodyPose& pose, const SensorModel& sensor,
                    const std::vector<Vec3>* cached_dirs = nullptr, std::vector<Vec3>* world_hits = nullptr) {
  Scan scan;
  if (map.empty() || !map.bounds().contains(pose.position)) return scan;
  const double vs = map.voxel_size();
  const Mat3 R = rot_z(pose.yaw);
  const Vec3 o = pose.position;
  const auto [klo, khi] = map.key_range();
  std::vector<Vec3> local_dirs;
  if (!cached_dirs) local_dirs = sensor.ray_directions();
  const std::vector<Vec3>& dirs = cached_dirs ? *cached_dirs : local_dirs;
  scan.points.reserve(dirs.size());
  const Vec3 og = o / vs;  // origin in voxel units
  for (const Vec3& db : dirs) {
    const Vec3 d = R * db;
    int32_t k[3] = {static_cast<int32_t>(std::floor(og.x())), static_cast<int32_t>(std::floor(og.y())),
                    static_cast<int32_t>(std::floor(og.z()))};
    int step[3];
    double tmax[3], tdelta[3];
    for (int a = 0; a < 3; ++a) {
      if (d(a) > 0) {
        step[a] = 1;
        tmax[a] = ((k[a] + 1) - og(a)) * vs / d(a);
        tdelta[a] = vs / d(a);
      } else if (d(a) < 0) {
        step[a] = -1;
        tmax[a] = (k[a] - og(a)) * vs / d(a);
        tdelta[a] = -vs / d(a);
      } else {
        step[a] = 0;
        tmax[a] = std::numeric_limits<double>::infinity();
        tdelta[a] = std::numeric_limits<double>::infinity();
      }
    }
    const int32_t lo[3] = {klo.x, klo.y, klo.z}, hi[3] = {khi.x, khi.y, khi.z};
    double t_enter = 0.0;
    while (t_enter <= sensor.max_range) {
      bool outside = false;
      for (int a = 0; a < 3; ++a)
        if ((step[a] > 0 && k[a] > hi[a]) || (step[a] < 0 && k[a] < lo[a]) ||
            (step[a] == 0 && (k[a] < lo[a] || k[a] > hi[a])))
          outside = true;
      if (outside) break;
      const double t_exit = std::min({tmax[0], tmax[1], tmax[2]});
      const VoxelRecord* rec = map.find({k[0], k[1], k[2]});
      if (rec && rec->normal) {
        const Vec3& n = *rec->normal;
        const double nd = n.dot(d);
        double t = 0.5 * (t_enter + t_exit);
        if (std::abs(nd) > 1e-9) t = n.dot(rec->centroid - o) / nd;
        t = std::clamp(t, t_enter, t_exit);
        if (t <= sensor.max_range) {
          scan.points.push_back(R.transpose() * (d * t));
          if (world_hits) world_hits->push_back(o + d * t);
        }
        break;
      }
      int a = 0;
      if (tmax[1] < tmax[a]) a = 1;
      if (tmax[2] < tmax[a]) a = 2;
      t_enter = tmax[a];
      k[a] += step[a];
      tmax[a] += tdelta[a];
    }
  }
  return scan;
}

}  // namespace aware
