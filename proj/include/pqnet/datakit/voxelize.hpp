#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>

#include "pqnet/datakit/voxel_grid.hpp"
#include "pqnet/mesh.hpp"

namespace pqnet::datakit {

namespace detail {

// Separating-axis test between a triangle and an axis-aligned box (closed
// sets: touching counts as overlap).
inline bool triangle_box_overlap(const Vec3& center, const Vec3& half,
                                 const std::array<Vec3, 3>& tri) {
  const Vec3 v0 = tri[0] - center, v1 = tri[1] - center, v2 = tri[2] - center;
  const Vec3 e[3] = {v1 - v0, v2 - v1, v0 - v2};
  const Vec3 axes[3] = {Vec3::UnitX(), Vec3::UnitY(), Vec3::UnitZ()};

  auto separated = [&](const Vec3& axis) {
    const double p0 = v0.dot(axis), p1 = v1.dot(axis), p2 = v2.dot(axis);
    const double r = half.x() * std::abs(axis.x()) + half.y() * std::abs(axis.y()) +
                     half.z() * std::abs(axis.z());
    return std::min({p0, p1, p2}) > r || std::max({p0, p1, p2}) < -r;
  };

  for (const auto& a : axes)
    for (const auto& ed : e) {
      const Vec3 axis = a.cross(ed);
      if (axis.squaredNorm() < 1e-30) continue;
      if (separated(axis)) return false;
    }
  for (const auto& a : axes)
    if (separated(a)) return false;
  const Vec3 normal = e[0].cross(e[1]);
  if (normal.squaredNorm() < 1e-30) return true;  // degenerate: AABB tests decide
  return !separated(normal);
}

}  // namespace detail

/// Surface voxelization: a cell is occupied iff some triangle intersects it.
/// Vertices must lie in [0,1]³.
inline VoxelGrid voxelize_mesh(const Mesh& mesh, int resolution) {
  require(!mesh.triangles.empty(), "voxelize_mesh: mesh has no triangles");
  constexpr double kEps = 1e-6;
  for (const auto& v : mesh.vertices)
    require((v.array() >= -kEps).all() && (v.array() <= 1.0 + kEps).all(),
            "voxelize_mesh: vertex outside the unit cube");

  VoxelGrid grid(resolution);
  const double h = 1.0 / resolution;
  const Vec3 half = Vec3::Constant(0.5 * h);
  for (const auto& f : mesh.triangles) {
    const std::array<Vec3, 3> tri{mesh.vertices[f[0]], mesh.vertices[f[1]], mesh.vertices[f[2]]};
    std::array<int, 3> lo{}, hi{};
    for (int a = 0; a < 3; ++a) {
      const double mn = std::min({tri[0][a], tri[1][a], tri[2][a]});
      const double mx = std::max({tri[0][a], tri[1][a], tri[2][a]});
      // Include neighbours whose closed cell touches the triangle's extent.
      lo[a] = std::clamp(static_cast<int>(std::ceil(mn * resolution)) - 1, 0, resolution - 1);
      hi[a] = std::clamp(static_cast<int>(std::floor(mx * resolution)), 0, resolution - 1);
    }
    for (int z = lo[2]; z <= hi[2]; ++z)
      for (int y = lo[1]; y <= hi[1]; ++y)
        for (int x = lo[0]; x <= hi[0]; ++x) {
          if (grid.at(x, y, z)) continue;
          const Vec3 c((x + 0.5) * h, (y + 0.5) * h, (z + 0.5) * h);
          if (detail::triangle_box_overlap(c, half, tri)) grid.set(x, y, z);
        }
  }
  return grid;
}

/// Marks every empty cell that cannot reach the grid boundary through
/// 6-connected empty cells as occupied.
inline VoxelGrid flood_fill_interior(const VoxelGrid& grid) {
  const int n = grid.resolution();
  std::vector<std::uint8_t> outside(grid.size(), 0);
  std::deque<std::array<int, 3>> queue;
  auto seed = [&](int x, int y, int z) {
    const auto i = grid.index(x, y, z);
    if (!grid[i] && !outside[i]) {
      outside[i] = 1;
      queue.push_back({x, y, z});
    }
  };
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      seed(0, a, b), seed(n - 1, a, b);
      seed(a, 0, b), seed(a, n - 1, b);
      seed(a, b, 0), seed(a, b, n - 1);
    }
  static constexpr int kNbr[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0},
                                     {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  while (!queue.empty()) {
    const auto [x, y, z] = queue.front();
    queue.pop_front();
    for (const auto& d : kNbr) {
      const int nx = x + d[0], ny = y + d[1], nz = z + d[2];
      if (grid.in_bounds(nx, ny, nz)) seed(nx, ny, nz);
    }
  }
  VoxelGrid out = grid;
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (!outside[i]) out.set_flat(i, true);
  return out;
}

}  // namespace pqnet::datakit
