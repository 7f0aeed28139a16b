#pragma once

#include <tuple>
#include <vector>

#include "pqnet/datakit/part.hpp"
#include "pqnet/partae/model.hpp"
#include "pqnet/seq2seq/step.hpp"

namespace pqnet::tasks {

using datakit::BoundingBox;
using datakit::VoxelGrid;

struct AssembledPart {
  Eigen::VectorXd code;
  BoundingBox box;  // clamped
  double stop_prob = 0.0;
  Mesh mesh;        // this part's surface in the global frame
};

struct AssembledShape {
  std::vector<AssembledPart> parts;
  Mesh mesh;                     // surface of the composite field
  VoxelGrid composite_grid;      // composite > 0.5 at cell centres
  std::vector<double> composite; // composite field at cell centres, x-fastest
  bool empty_mesh = true;
};

inline bool valid_assembly_resolution(int r) { return r == 32 || r == 64 || r == 128 || r == 256; }

/// Cell index range [lo, hi] whose centres lie in [min, max] along one axis.
inline std::pair<int, int> covered_cells(double mn, double mx, int res) {
  const int lo = std::max(0, static_cast<int>(std::ceil(mn * res - 0.5)));
  const int hi = std::min(res - 1, static_cast<int>(std::floor(mx * res - 0.5)));
  return {lo, hi};
}

/// Part field placed in the global grid: cells outside the box are 0, cells
/// inside evaluate the field at (p − min) / size.
inline std::vector<double> place_field(const partae::FieldFn& field, const BoundingBox& box, int res) {
  std::vector<double> out(static_cast<std::size_t>(res) * res * res, 0.0);
  const Vec3 mn = box.min_corner(), mx = box.max_corner();
  int lo[3], hi[3];
  for (int a = 0; a < 3; ++a) std::tie(lo[a], hi[a]) = covered_cells(mn[a], mx[a], res);
  if (hi[0] < lo[0] || hi[1] < lo[1] || hi[2] < lo[2]) return out;
  const Eigen::Index nx = hi[0] - lo[0] + 1, ny = hi[1] - lo[1] + 1;
  Eigen::Matrix3Xd pts(3, nx * ny);
  for (int z = lo[2]; z <= hi[2]; ++z) {
    for (int y = lo[1]; y <= hi[1]; ++y)
      for (int x = lo[0]; x <= hi[0]; ++x) {
        const Vec3 p((x + 0.5) / res, (y + 0.5) / res, (z + 0.5) / res);
        pts.col((x - lo[0]) + nx * (y - lo[1])) = ((p - mn).array() / box.size.array()).cwiseMax(0.0).cwiseMin(1.0);
      }
    const Eigen::VectorXd v = field(pts);
    for (int y = lo[1]; y <= hi[1]; ++y)
      for (int x = lo[0]; x <= hi[0]; ++x)
        out[static_cast<std::size_t>(x) + static_cast<std::size_t>(res) * (y + static_cast<std::size_t>(res) * z)] =
            v[(x - lo[0]) + nx * (y - lo[1])];
  }
  return out;
}

inline partae::Lattice lattice_from_cells(const std::vector<double>& cells, int res) {
  partae::Lattice lat;
  lat.nx = lat.ny = lat.nz = res + 2;
  lat.spacing = 1.0 / res;
  lat.origin = Vec3::Constant(-0.5 / res);
  lat.values.assign(static_cast<std::size_t>(lat.nx) * lat.ny * lat.nz, 0.0);
  for (int z = 0; z < res; ++z)
    for (int y = 0; y < res; ++y)
      for (int x = 0; x < res; ++x)
        lat.values[static_cast<std::size_t>(x + 1) + static_cast<std::size_t>(lat.nx) * ((y + 1) + static_cast<std::size_t>(lat.ny) * (z + 1))] =
            cells[static_cast<std::size_t>(x) + static_cast<std::size_t>(res) * (y + static_cast<std::size_t>(res) * z)];
  return lat;
}

inline Mesh mesh_cells(const std::vector<double>& cells, int res, double iso = 0.5) {
  bool above = false;
  for (double v : cells) above = above || v > iso;
  if (!above) return {};
  return partae::marching_cubes(lattice_from_cells(cells, res), iso);
}

/// Composite of placed part fields (per-cell maximum) with meshes.
inline AssembledShape assemble_fields(const std::vector<partae::FieldFn>& fields,
                                      const std::vector<BoundingBox>& boxes, int res) {
  require(!fields.empty(), "assemble_shape: no parts");
  require(fields.size() == boxes.size(), "assemble_shape: one box per part");
  require(valid_assembly_resolution(res), "assemble_shape: resolution must be 32, 64, 128 or 256");
  AssembledShape shape;
  shape.composite.assign(static_cast<std::size_t>(res) * res * res, 0.0);
  for (std::size_t i = 0; i < fields.size(); ++i) {
    AssembledPart part;
    part.box = boxes[i].clamped(1.0 / res);
    const auto placed = place_field(fields[i], part.box, res);
    for (std::size_t c = 0; c < placed.size(); ++c) shape.composite[c] = std::max(shape.composite[c], placed[c]);
    part.mesh = mesh_cells(placed, res);
    shape.parts.push_back(std::move(part));
  }
  shape.composite_grid = VoxelGrid(res);
  for (std::size_t c = 0; c < shape.composite.size(); ++c) shape.composite_grid.set_flat(c, shape.composite[c] > 0.5);
  shape.mesh = mesh_cells(shape.composite, res);
  shape.empty_mesh = shape.mesh.triangles.empty();
  return shape;
}

/// Places every decoded part with its (clamped) box and meshes the result.
template <class S>
AssembledShape assemble_shape(const std::vector<seq2seq::DecodedStep>& steps,
                              const partae::PartAutoencoder<S>& partae, int res) {
  require(!steps.empty(), "assemble_shape: zero steps");
  std::vector<partae::FieldFn> fields;
  std::vector<BoundingBox> boxes;
  for (const auto& st : steps) {
    fields.push_back(partae.field(st.g.cast<S>()));
    boxes.push_back(BoundingBox::from_array(st.b));
  }
  AssembledShape shape = assemble_fields(fields, boxes, res);
  for (std::size_t i = 0; i < steps.size(); ++i) {
    shape.parts[i].code = steps[i].g;
    shape.parts[i].stop_prob = steps[i].s;
  }
  return shape;
}

/// Boxes of an assembled shape, in part order.
inline std::vector<BoundingBox> boxes_of(const AssembledShape& s) {
  std::vector<BoundingBox> out;
  for (const auto& p : s.parts) out.push_back(p.box);
  return out;
}

}  // namespace pqnet::tasks
