#pragma once

// Sliding-window scan aggregation and the equirectangular minimum-depth
// panorama shared by observability analysis and the policy input.

#include <algorithm>
#include <bit>
#include <cstring>
#include <unordered_map>
#include <utility>
#include <vector>

#include "aware/common.hpp"
#include "aware/worldmap.hpp"

namespace aware {

struct ScanBlock {
  std::vector<Vec3> points;  // current body frame
  int window = 5;
  double leaf = 0.2;
};

/// A scan together with the rigid transform taking it into the current body frame.
struct TimedScan {
  Scan scan;
  Rigid to_current;
};

/// Transforms the newest `window` scans of `history` (ordered oldest first)
/// into the current frame and keeps, per leaf voxel, the point nearest the
/// voxel's centroid.
inline ScanBlock aggregate(const std::vector<TimedScan>& history, int window, double leaf) {
  if (window < 1) throw ConfigError("aggregate: window must be >= 1");
  if (!(leaf > 0)) throw ConfigError("aggregate: leaf must be positive");
  ScanBlock block;
  block.window = window;
  block.leaf = leaf;
  if (history.empty()) return block;
  const std::size_t first = history.size() > static_cast<std::size_t>(window)
                                ? history.size() - static_cast<std::size_t>(window)
                                : 0;
  std::vector<Vec3> all;
  for (std::size_t i = first; i < history.size(); ++i) {
    const auto& h = history[i];
    for (const auto& p : h.scan.points) all.push_back(h.to_current * p);
  }
  struct Cell {
    Vec3 sum = Vec3::Zero();
    int n = 0;
    int best = -1;
    double best_d2 = 0.0;
  };
  std::unordered_map<VoxelKey, int, VoxelKeyHash> slot;
  std::vector<Cell> cells;
  std::vector<int> point_cell(all.size());
  slot.reserve(all.size());
  for (std::size_t i = 0; i < all.size(); ++i) {
    auto [it, fresh] = slot.try_emplace(voxel_key(all[i], leaf), static_cast<int>(cells.size()));
    if (fresh) cells.emplace_back();
    auto& c = cells[static_cast<std::size_t>(it->second)];
    c.sum += all[i];
    c.n += 1;
    point_cell[i] = it->second;
  }
  for (std::size_t i = 0; i < all.size(); ++i) {
    auto& c = cells[static_cast<std::size_t>(point_cell[i])];
    const double d2 = (all[i] - c.sum / c.n).squaredNorm();
    if (c.best < 0 || d2 < c.best_d2) {
      c.best = static_cast<int>(i);
      c.best_d2 = d2;
    }
  }
  block.points.reserve(cells.size());
  for (const auto& c : cells) block.points.push_back(all[static_cast<std::size_t>(c.best)]);
  return block;
}

struct PixelCoord {
  int u = 0;  // column (azimuth)
  int v = 0;  // row (elevation, top = zenith)
  bool operator==(const PixelCoord&) const = default;
};

/// Normalized equirectangular projection of a body-frame point.
inline PixelCoord project(const Vec3& p, int H, int W) {
  const double r = p.norm();
  if (!(r > 0)) throw Error("project: zero-norm point");
  const double phi = std::atan2(p.y(), p.x());
  const double theta = std::asin(std::clamp(p.z() / r, -1.0, 1.0));
  const int u = std::clamp(static_cast<int>(std::floor((phi + kPi) / kTwoPi * W)), 0, W - 1);
  const int v = std::clamp(static_cast<int>(std::floor((kPi / 2 - theta) / kPi * H)), 0, H - 1);
  return {u, v};
}

/// Azimuth of column center u.
inline double column_azimuth(int u, int W) { return (u + 0.5) / W * kTwoPi - kPi; }
/// Elevation of row center v.
inline double row_elevation(int v, int H) { return kPi / 2 - (v + 0.5) / H * kPi; }

inline Vec3 pixel_direction(int u, int v, int H, int W) {
  const double az = column_azimuth(u, W), el = row_elevation(v, H);
  return {std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el)};
}

struct PanoramicDepthMap {
  int H = 0;
  int W = 0;
  std::vector<float> depth;    // row-major H x W, meters
  std::vector<uint8_t> valid;  // row-major H x W

  PanoramicDepthMap() = default;
  PanoramicDepthMap(int h, int w)
      : H(h), W(w), depth(static_cast<std::size_t>(h * w), 0.0f), valid(static_cast<std::size_t>(h * w), 0) {}

  std::size_t idx(int u, int v) const { return static_cast<std::size_t>(v) * static_cast<std::size_t>(W) + static_cast<std::size_t>(u); }
  bool is_valid(int u, int v) const { return valid[idx(u, v)] != 0; }
  float at(int u, int v) const { return depth[idx(u, v)]; }
  std::size_t valid_count() const { return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), 1)); }
  bool operator==(const PanoramicDepthMap&) const = default;
};

/// Per-pixel minimum range of the projected block.
inline PanoramicDepthMap build_depth_map(const ScanBlock& block, int H, int W) {
  if (H < 1 || W < 1) throw ConfigError("build_depth_map: H and W must be >= 1");
  PanoramicDepthMap m(H, W);
  for (const auto& p : block.points) {
    const double r = p.norm();
    if (!(r > 0)) continue;
    const auto [u, v] = project(p, H, W);
    const std::size_t i = m.idx(u, v);
    const float rf = static_cast<float>(r);
    if (!m.valid[i] || rf < m.depth[i]) {
      m.depth[i] = rf;
      m.valid[i] = 1;
    }
  }
  return m;
}

/// Min-pools over integer blocks, ignoring invalid pixels.
inline PanoramicDepthMap downsample_map(const PanoramicDepthMap& map, int H2, int W2) {
  if (H2 < 1 || W2 < 1 || H2 > map.H || W2 > map.W || map.H % H2 != 0 || map.W % W2 != 0)
    throw ConfigError("downsample_map: target size must divide the source size");
  const int bh = map.H / H2, bw = map.W / W2;
  PanoramicDepthMap out(H2, W2);
  for (int v = 0; v < map.H; ++v)
    for (int u = 0; u < map.W; ++u) {
      if (!map.is_valid(u, v)) continue;
      const std::size_t o = out.idx(u / bw, v / bh);
      const float d = map.at(u, v);
      if (!out.valid[o] || d < out.depth[o]) {
        out.depth[o] = d;
        out.valid[o] = 1;
      }
    }
  return out;
}

/// Row-major vector of depth/max_range in [0,1]; invalid pixels read as 1.
inline std::vector<float> flatten(const PanoramicDepthMap& map, double max_range, std::size_t expected = 3200) {
  const std::size_t n = static_cast<std::size_t>(map.H) * static_cast<std::size_t>(map.W);
  if (n != expected) throw ConfigError("flatten: map has " + std::to_string(n) + " pixels, expected " + std::to_string(expected));
  std::vector<float> out(n, 1.0f);
  for (std::size_t i = 0; i < n; ++i)
    if (map.valid[i]) out[i] = static_cast<float>(std::clamp(map.depth[i] / max_range, 0.0, 1.0));
  return out;
}

/// Binary record: H(u32) W(u32) depths(f32 LE) valid(u8).
inline std::string serialize_depth_map(const PanoramicDepthMap& m) {
  std::string out;
  const std::size_t n = m.depth.size();
  out.reserve(8 + n * 5);
  auto put32 = [&](uint32_t u) {
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((u >> (8 * b)) & 0xff));
  };
  put32(static_cast<uint32_t>(m.H));
  put32(static_cast<uint32_t>(m.W));
  for (float d : m.depth) put32(std::bit_cast<uint32_t>(d));
  for (uint8_t v : m.valid) out.push_back(static_cast<char>(v));
  return out;
}

inline PanoramicDepthMap deserialize_depth_map(const std::string& buf) {
  auto get32 = [&](std::size_t off) {
    uint32_t u = 0;
    for (int b = 0; b < 4; ++b) u |= static_cast<uint32_t>(static_cast<unsigned char>(buf[off + static_cast<std::size_t>(b)])) << (8 * b);
    return u;
  };
  if (buf.size() < 8) throw ParseError("depth record too short", buf.size());
  const uint32_t H = get32(0), W = get32(4);
  const std::size_t n = static_cast<std::size_t>(H) * W;
  if (buf.size() != 8 + n * 5) throw ParseError("depth record size mismatch", buf.size());
  PanoramicDepthMap m(static_cast<int>(H), static_cast<int>(W));
  for (std::size_t i = 0; i < n; ++i) m.depth[i] = std::bit_cast<float>(get32(8 + 4 * i));
  for (std::size_t i = 0; i < n; ++i) m.valid[i] = static_cast<uint8_t>(buf[8 + 4 * n + i]);
  return m;
}

}  // namespace aware
