#pragma once

#include <cstdint>
#include <functional>
#include <unordered_map>
#include <vector>

#include "pqnet/mesh.hpp"
#include "pqnet/partae/mc_tables.hpp"

namespace pqnet::partae {

/// Batched scalar field over points in [0,1]³ (one point per column).
using FieldFn = std::function<Eigen::VectorXd(const Eigen::Matrix3Xd&)>;

/// Scalar samples on a regular lattice, x-fastest.
struct Lattice {
  int nx = 0, ny = 0, nz = 0;
  Vec3 origin = Vec3::Zero();
  double spacing = 1.0;
  std::vector<double> values;

  double at(int x, int y, int z) const {
    return values[static_cast<std::size_t>(x) + static_cast<std::size_t>(nx) * (y + static_cast<std::size_t>(ny) * z)];
  }
  Vec3 point(int x, int y, int z) const { return origin + spacing * Vec3(x, y, z); }
};

/// Extracts the `iso` level set with the classic 256-case table. Values above
/// `iso` are inside; vertices are linearly interpolated along lattice edges
/// and shared between neighbouring cells. Triangles face outwards.
inline Mesh marching_cubes(const Lattice& lat, double iso) {
  Mesh mesh;
  std::unordered_map<std::uint64_t, int> edge_vertex;
  auto lattice_id = [&](int x, int y, int z) {
    return static_cast<std::uint64_t>(x) +
           static_cast<std::uint64_t>(lat.nx) * (y + static_cast<std::uint64_t>(lat.ny) * z);
  };
  auto vertex_on_edge = [&](const std::array<int, 3>& a, const std::array<int, 3>& b) {
    std::uint64_t ia = lattice_id(a[0], a[1], a[2]), ib = lattice_id(b[0], b[1], b[2]);
    if (ia > ib) std::swap(ia, ib);
    const std::uint64_t key = ia * 3 + (ib - ia == 1 ? 0 : (ib - ia == static_cast<std::uint64_t>(lat.nx) ? 1 : 2));
    auto it = edge_vertex.find(key);
    if (it != edge_vertex.end()) return it->second;
    const double va = lat.at(a[0], a[1], a[2]), vb = lat.at(b[0], b[1], b[2]);
    const double t = std::abs(vb - va) < 1e-12 ? 0.5 : (iso - va) / (vb - va);
    const Vec3 p = lat.point(a[0], a[1], a[2]) +
                   t * (lat.point(b[0], b[1], b[2]) - lat.point(a[0], a[1], a[2]));
    const int id = static_cast<int>(mesh.vertices.size());
    mesh.vertices.push_back(p);
    edge_vertex.emplace(key, id);
    return id;
  };

  for (int z = 0; z + 1 < lat.nz; ++z)
    for (int y = 0; y + 1 < lat.ny; ++y)
      for (int x = 0; x + 1 < lat.nx; ++x) {
        int cube = 0;
        std::array<std::array<int, 3>, 8> corner{};
        for (int i = 0; i < 8; ++i) {
          const auto& o = detail::kCornerOffset[i];
          corner[i] = {x + o[0], y + o[1], z + o[2]};
          if (lat.at(corner[i][0], corner[i][1], corner[i][2]) <= iso) cube |= 1 << i;
        }
        const auto edges = detail::kEdgeTable[cube];
        if (edges == 0) continue;
        int vid[12];
        for (int e = 0; e < 12; ++e)
          if (edges & (1 << e))
            vid[e] = vertex_on_edge(corner[detail::kEdgeCorners[e][0]],
                                    corner[detail::kEdgeCorners[e][1]]);
        const auto& tri = detail::kTriTable[cube];
        for (int i = 0; tri[i] != -1; i += 3) {
          const std::array<int, 3> f{vid[tri[i]], vid[tri[i + 1]], vid[tri[i + 2]]};
          if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) continue;
          mesh.triangles.push_back(f);
          if (mesh.triangle_area(mesh.triangles.size() - 1) < 1e-14) mesh.triangles.pop_back();
        }
      }
  // Drop vertices no triangle references.
  std::vector<int> remap(mesh.vertices.size(), -1);
  std::vector<Vec3> kept;
  for (auto& f : mesh.triangles)
    for (int& i : f) {
      if (remap[i] < 0) {
        remap[i] = static_cast<int>(kept.size());
        kept.push_back(mesh.vertices[i]);
      }
      i = remap[i];
    }
  mesh.vertices = std::move(kept);
  return mesh;
}

/// Samples `field` at the centres of a resolution³ grid over [0,1]³,
/// surrounded by a one-cell border of `outside` so surfaces close.
inline Lattice sample_lattice(const FieldFn& field, int resolution, double outside = 0.0) {
  Lattice lat;
  lat.nx = lat.ny = lat.nz = resolution + 2;
  lat.spacing = 1.0 / resolution;
  lat.origin = Vec3::Constant(-0.5 / resolution);
  lat.values.assign(static_cast<std::size_t>(lat.nx) * lat.ny * lat.nz, outside);
  const std::size_t slab = static_cast<std::size_t>(resolution) * resolution;
  Eigen::Matrix3Xd pts(3, static_cast<Eigen::Index>(slab));
  for (int z = 0; z < resolution; ++z) {
    for (int y = 0; y < resolution; ++y)
      for (int x = 0; x < resolution; ++x)
        pts.col(x + static_cast<Eigen::Index>(resolution) * y) =
            Vec3((x + 0.5) / resolution, (y + 0.5) / resolution, (z + 0.5) / resolution);
    const Eigen::VectorXd v = field(pts);
    for (int y = 0; y < resolution; ++y)
      for (int x = 0; x < resolution; ++x)
        lat.values[static_cast<std::size_t>(x + 1) +
                   static_cast<std::size_t>(lat.nx) * ((y + 1) + static_cast<std::size_t>(lat.ny) * (z + 1))] =
            v[x + static_cast<Eigen::Index>(resolution) * y];
  }
  return lat;
}

/// Level-set mesh of a part field evaluated on a resolution³ lattice. A field
/// that never crosses iso inside the cube gives an empty mesh, even though the
/// closing border would otherwise wrap a fully-inside field in a cube.
inline Mesh extract_field_mesh(const FieldFn& field, int resolution, double iso = 0.5) {
  require(resolution >= 2, "extract_field_mesh: resolution must be >= 2");
  require(iso > 0.0 && iso < 1.0, "extract_field_mesh: iso must lie in (0,1)");
  const Lattice lat = sample_lattice(field, resolution);
  bool above = false, below = false;
  for (int z = 1; z <= resolution; ++z)
    for (int y = 1; y <= resolution; ++y)
      for (int x = 1; x <= resolution; ++x) (lat.at(x, y, z) > iso ? above : below) = true;
  if (!above || !below) return {};
  return marching_cubes(lat, iso);
}

}  // namespace pqnet::partae
