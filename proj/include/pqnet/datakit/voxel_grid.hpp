#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "pqnet/common.hpp"

namespace pqnet::datakit {

/// Dense binary occupancy cube. Cells are stored x-fastest:
/// index = x + n * (y + n * z).
class VoxelGrid {
 public:
  VoxelGrid() = default;

  explicit VoxelGrid(int resolution, bool fill = false) : n_(resolution) {
    require(resolution >= 8 && (resolution & (resolution - 1)) == 0,
            "VoxelGrid resolution must be a power of two >= 8, got " +
                std::to_string(resolution));
    cells_.assign(static_cast<std::size_t>(n_) * n_ * n_, fill ? 1 : 0);
  }

  /// Grids below 8³ are only needed by small flood-fill fixtures.
  static VoxelGrid unchecked(int resolution) {
    VoxelGrid g;
    g.n_ = resolution;
    g.cells_.assign(static_cast<std::size_t>(resolution) * resolution * resolution, 0);
    return g;
  }

  int resolution() const noexcept { return n_; }
  std::size_t size() const noexcept { return cells_.size(); }

  std::size_t index(int x, int y, int z) const noexcept {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(n_) * (static_cast<std::size_t>(y) +
                                            static_cast<std::size_t>(n_) * z);
  }
  bool in_bounds(int x, int y, int z) const noexcept {
    return x >= 0 && y >= 0 && z >= 0 && x < n_ && y < n_ && z < n_;
  }

  bool at(int x, int y, int z) const noexcept { return cells_[index(x, y, z)] != 0; }
  void set(int x, int y, int z, bool v = true) noexcept { cells_[index(x, y, z)] = v ? 1 : 0; }

  bool operator[](std::size_t i) const noexcept { return cells_[i] != 0; }
  void set_flat(std::size_t i, bool v) noexcept { cells_[i] = v ? 1 : 0; }

  std::size_t count() const noexcept {
    return static_cast<std::size_t>(std::count(cells_.begin(), cells_.end(), std::uint8_t{1}));
  }
  bool empty() const noexcept { return count() == 0; }
  bool full() const noexcept { return count() == cells_.size(); }

  const std::vector<std::uint8_t>& raw() const noexcept { return cells_; }

  bool operator==(const VoxelGrid& o) const = default;

 private:
  int n_ = 0;
  std::vector<std::uint8_t> cells_;
};

/// Inclusive integer cell bounds of the occupied region.
struct CellBounds {
  std::array<int, 3> lo{};
  std::array<int, 3> hi{};
  int extent(int axis) const { return hi[axis] - lo[axis] + 1; }
};

inline CellBounds occupied_bounds(const VoxelGrid& g) {
  const int n = g.resolution();
  CellBounds b{{n, n, n}, {-1, -1, -1}};
  for (int z = 0; z < n; ++z)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        if (!g.at(x, y, z)) continue;
        const int c[3] = {x, y, z};
        for (int a = 0; a < 3; ++a) {
          b.lo[a] = std::min(b.lo[a], c[a]);
          b.hi[a] = std::max(b.hi[a], c[a]);
        }
      }
  require(b.hi[0] >= 0, "occupied_bounds: grid is empty");
  return b;
}

/// Max-pools `grid` down to `target` cells per axis.
inline VoxelGrid downsample(const VoxelGrid& grid, int target) {
  const int n = grid.resolution();
  require(target > 0 && target <= n && n % target == 0,
          "downsample: target " + std::to_string(target) + " does not divide " +
              std::to_string(n));
  const int f = n / target;
  VoxelGrid out = target >= 8 ? VoxelGrid(target) : VoxelGrid::unchecked(target);
  for (int z = 0; z < n; ++z)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x)
        if (grid.at(x, y, z)) out.set(x / f, y / f, z / f);
  return out;
}

/// Nearest-neighbour upsampling by an integer factor.
inline VoxelGrid upsample(const VoxelGrid& grid, int target) {
  const int n = grid.resolution();
  require(target >= n && target % n == 0,
          "upsample: target " + std::to_string(target) + " is not a multiple of " +
              std::to_string(n));
  const int f = target / n;
  VoxelGrid out(target);
  for (int z = 0; z < target; ++z)
    for (int y = 0; y < target; ++y)
      for (int x = 0; x < target; ++x)
        if (grid.at(x / f, y / f, z / f)) out.set(x, y, z);
  return out;
}

}  // namespace pqnet::datakit
