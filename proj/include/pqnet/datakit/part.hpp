#pragma once

#include <array>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "pqnet/datakit/voxel_grid.hpp"

namespace pqnet::datakit {

/// Axis-aligned part box in normalized shape coordinates: center + full extents.
struct BoundingBox {
  Vec3 position = Vec3::Constant(0.5);
  Vec3 size = Vec3::Ones();

  Vec3 min_corner() const { return position - 0.5 * size; }
  Vec3 max_corner() const { return position + 0.5 * size; }

  /// b = [x, y, z, l, m, n].
  std::array<double, 6> as_array() const {
    return {position.x(), position.y(), position.z(), size.x(), size.y(), size.z()};
  }
  static BoundingBox from_array(const std::array<double, 6>& b) {
    return {Vec3(b[0], b[1], b[2]), Vec3(b[3], b[4], b[5])};
  }

  /// Holds the unit-cube containment invariant with slack `eps`.
  bool valid(double eps) const {
    return (size.array() > 0.0).all() && (min_corner().array() >= -eps).all() &&
           (max_corner().array() <= 1.0 + eps).all();
  }

  /// Clamps into the unit cube keeping every extent at least `min_extent`.
  BoundingBox clamped(double min_extent) const {
    Vec3 lo = min_corner().cwiseMax(0.0).cwiseMin(1.0);
    Vec3 hi = max_corner().cwiseMax(0.0).cwiseMin(1.0);
    for (int a = 0; a < 3; ++a) {
      if (hi[a] - lo[a] < min_extent) {
        const double c = std::clamp(0.5 * (lo[a] + hi[a]), 0.5 * min_extent, 1.0 - 0.5 * min_extent);
        lo[a] = c - 0.5 * min_extent;
        hi[a] = c + 0.5 * min_extent;
      }
    }
    return {0.5 * (lo + hi), hi - lo};
  }

  bool operator==(const BoundingBox&) const = default;
};

/// Implicit-field supervision points in part-local [0,1]³ coordinates.
struct FieldSamples {
  int resolution_tag = 0;
  std::vector<Vec3f> points;
  std::vector<float> values;

  bool operator==(const FieldSamples&) const = default;
};

/// Number of supervision points drawn for each part-volume resolution.
inline int sample_count_for(int resolution_tag) {
  switch (resolution_tag) {
    case 16: return 4096;
    case 32: return 8192;
    case 64: return 32768;
    default:
      throw InvalidInput("sample_count_for: resolution tag must be 16, 32 or 64, got " +
                         std::to_string(resolution_tag));
  }
}

struct PartRecord {
  VoxelGrid volume64;
  BoundingBox box;
  std::map<int, FieldSamples> samples;  // keyed by resolution tag

  bool operator==(const PartRecord&) const = default;
};

struct ShapeRecord {
  std::string shape_id;
  std::string category;
  std::string split;
  std::vector<PartRecord> parts;
  VoxelGrid shape_voxels;

  bool operator==(const ShapeRecord&) const = default;
};

/// Tight box of `part_mask` plus its nearest-neighbour rescale to 64³.
inline PartRecord extract_part(const VoxelGrid& shape_voxels, const VoxelGrid& part_mask) {
  const int n = part_mask.resolution();
  require(shape_voxels.resolution() == n, "extract_part: shape/part resolution mismatch");
  require(!part_mask.empty(), "extract_part: part mask is empty");
  for (std::size_t i = 0; i < part_mask.size(); ++i)
    require(!part_mask[i] || shape_voxels[i], "extract_part: part mask exceeds shape occupancy");

  const CellBounds b = occupied_bounds(part_mask);
  PartRecord rec;
  for (int a = 0; a < 3; ++a) {
    rec.box.position[a] = 0.5 * (b.lo[a] + b.hi[a] + 1) / n;
    rec.box.size[a] = static_cast<double>(b.extent(a)) / n;
  }
  constexpr int kOut = 64;
  rec.volume64 = VoxelGrid(kOut);
  std::array<std::array<int, kOut>, 3> src{};
  for (int a = 0; a < 3; ++a)
    for (int i = 0; i < kOut; ++i)
      src[a][i] = b.lo[a] + static_cast<int>((i + 0.5) * b.extent(a) / kOut);
  for (int z = 0; z < kOut; ++z)
    for (int y = 0; y < kOut; ++y)
      for (int x = 0; x < kOut; ++x)
        if (part_mask.at(src[0][x], src[1][y], src[2][z])) rec.volume64.set(x, y, z);
  return rec;
}

/// Inverse of extract_part: writes `volume` back into a grid of `resolution`
/// through its box (nearest neighbour).
inline VoxelGrid place_part(const VoxelGrid& volume, const BoundingBox& box, int resolution) {
  VoxelGrid out(resolution);
  const int m = volume.resolution();
  std::array<int, 3> lo{}, ext{};
  for (int a = 0; a < 3; ++a) {
    lo[a] = static_cast<int>(std::lround(box.min_corner()[a] * resolution));
    ext[a] = std::max(1, static_cast<int>(std::lround(box.size[a] * resolution)));
  }
  for (int z = 0; z < ext[2]; ++z)
    for (int y = 0; y < ext[1]; ++y)
      for (int x = 0; x < ext[0]; ++x) {
        const int gx = lo[0] + x, gy = lo[1] + y, gz = lo[2] + z;
        if (!out.in_bounds(gx, gy, gz)) continue;
        const int lx = static_cast<int>((x + 0.5) * m / ext[0]);
        const int ly = static_cast<int>((y + 0.5) * m / ext[1]);
        const int lz = static_cast<int>((z + 0.5) * m / ext[2]);
        if (volume.at(lx, ly, lz)) out.set(gx, gy, gz);
      }
  return out;
}

namespace detail {

// Cells within Chebyshev distance `radius` of an occupancy transition.
inline std::vector<std::uint8_t> near_boundary(const VoxelGrid& v, int radius) {
  const int n = v.resolution();
  std::vector<std::uint8_t> boundary(v.size(), 0);
  static constexpr int kNbr[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0},
                                     {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  for (int z = 0; z < n; ++z)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x)
        for (const auto& d : kNbr) {
          const int a = x + d[0], b = y + d[1], c = z + d[2];
          if (v.in_bounds(a, b, c) && v.at(a, b, c) != v.at(x, y, z)) {
            boundary[v.index(x, y, z)] = 1;
            break;
          }
        }
  // Separable Chebyshev dilation.
  std::vector<std::uint8_t> cur = boundary, next(v.size());
  for (int axis = 0; axis < 3; ++axis) {
    std::fill(next.begin(), next.end(), 0);
    for (int z = 0; z < n; ++z)
      for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
          if (!cur[v.index(x, y, z)]) continue;
          for (int o = -radius; o <= radius; ++o) {
            int c[3] = {x, y, z};
            c[axis] += o;
            if (v.in_bounds(c[0], c[1], c[2])) next[v.index(c[0], c[1], c[2])] = 1;
          }
        }
    cur.swap(next);
  }
  return cur;
}

}  // namespace detail

/// Draws the supervision point set for one part volume: 80% of points from
/// cells within two cells of the occupancy boundary, 20% from anywhere, with
/// exactly half of the points inside. Values are the containing cell's
/// occupancy.
inline FieldSamples sample_field_points(const VoxelGrid& volume, int resolution_tag,
                                        std::uint64_t seed) {
  const int count = sample_count_for(resolution_tag);
  const int n = volume.resolution();
  require(n == resolution_tag, "sample_field_points: volume resolution " + std::to_string(n) +
                                   " does not match tag " + std::to_string(resolution_tag));
  require(!volume.empty() && !volume.full(),
          "sample_field_points: volume has no occupancy boundary");

  const auto near = detail::near_boundary(volume, 2);
  std::vector<std::uint32_t> pool[2][2];  // [inside][near]
  for (std::size_t i = 0; i < volume.size(); ++i) {
    const int in = volume[i] ? 1 : 0;
    pool[in][0].push_back(static_cast<std::uint32_t>(i));
    if (near[i]) pool[in][1].push_back(static_cast<std::uint32_t>(i));
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  FieldSamples out;
  out.resolution_tag = resolution_tag;
  out.points.reserve(count);
  out.values.reserve(count);
  const float inv = 1.0f / static_cast<float>(n);
  for (int k = 0; k < count; ++k) {
    const int in = k % 2 == 0 ? 1 : 0;
    const auto& cells = (unit(rng) < 0.8 && !pool[in][1].empty()) ? pool[in][1] : pool[in][0];
    const std::uint32_t cell = cells[static_cast<std::size_t>(unit(rng) * cells.size()) % cells.size()];
    const int c[3] = {static_cast<int>(cell % n), static_cast<int>((cell / n) % n),
                      static_cast<int>(cell / (static_cast<std::uint32_t>(n) * n))};
    Vec3f p;
    for (int a = 0; a < 3; ++a) {
      float v = (static_cast<float>(c[a]) + static_cast<float>(unit(rng))) * inv;
      // Keep the float coordinate inside its cell after rounding.
      while (static_cast<int>(v * n) > c[a]) v = std::nextafter(v, 0.0f);
      while (static_cast<int>(v * n) < c[a]) v = std::nextafter(v, 1.0f);
      p[a] = v;
    }
    out.points.push_back(p);
    out.values.push_back(static_cast<float>(in));
  }
  return out;
}

}  // namespace pqnet::datakit
