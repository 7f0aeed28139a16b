#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "pqnet/common.hpp"
#include "pqnet/datakit/part.hpp"
#include "pqnet/datakit/voxel_grid.hpp"
#include "pqnet/mesh.hpp"

namespace pqnet::metrics {

using datakit::BoundingBox;
using datakit::VoxelGrid;

/// Points as columns.
using PointCloud = Eigen::Matrix3Xd;

/// Rows index generated shapes, columns index reference shapes.
using DistanceMatrix = Eigen::MatrixXd;

inline double iou(const VoxelGrid& a, const VoxelGrid& b) {
  if (a.resolution() != b.resolution())
    throw InvalidInput("iou: resolution mismatch " + std::to_string(a.resolution()) + " vs " +
                       std::to_string(b.resolution()));
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    inter += a[i] && b[i];
    uni += a[i] || b[i];
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

/// Mean squared distance from each point of `a` to its nearest point in `b`.
inline double mean_nearest_sq(const PointCloud& a, const PointCloud& b) {
  constexpr Eigen::Index kTile = 256;
  const Eigen::RowVectorXd bn = b.colwise().squaredNorm();
  double sum = 0.0;
  for (Eigen::Index s = 0; s < a.cols(); s += kTile) {
    const Eigen::Index n = std::min(kTile, a.cols() - s);
    const auto blk = a.middleCols(s, n);
    // |x − y|² = |x|² − 2x·y + |y|², rows = a points
    Eigen::MatrixXd d = -2.0 * blk.transpose() * b;
    d.rowwise() += bn;
    d.colwise() += blk.colwise().squaredNorm().transpose();
    for (Eigen::Index i = 0; i < n; ++i) {
      // Re-evaluate the winner exactly so results match a direct sweep.
      Eigen::Index j;
      d.row(i).minCoeff(&j);
      double best = (a.col(s + i) - b.col(j)).squaredNorm();
      for (Eigen::Index k = 0; k < b.cols(); ++k)
        if (d(i, k) <= d(i, j) + 1e-9) best = std::min(best, (a.col(s + i) - b.col(k)).squaredNorm());
      sum += best;
    }
  }
  return sum / static_cast<double>(a.cols());
}

inline double chamfer(const PointCloud& a, const PointCloud& b) {
  require(a.cols() > 0 && b.cols() > 0, "chamfer: empty point cloud");
  return mean_nearest_sq(a, b) + mean_nearest_sq(b, a);
}

/// Area-weighted uniform samples on the mesh surface.
inline PointCloud sample_surface(const Mesh& mesh, int count, std::uint64_t seed) {
  require(!mesh.empty(), "sample_surface: empty mesh");
  require(count >= 1, "sample_surface: count must be >= 1");
  std::vector<double> areas(mesh.triangles.size());
  for (std::size_t t = 0; t < areas.size(); ++t) areas[t] = mesh.triangle_area(t);
  double total = 0.0;
  for (double a : areas) total += a;
  require(total > 0.0, "sample_surface: mesh has zero area");
  std::mt19937_64 rng(seed);
  std::discrete_distribution<std::size_t> pick(areas.begin(), areas.end());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PointCloud out(3, count);
  for (int i = 0; i < count; ++i) {
    const auto& tri = mesh.triangles[pick(rng)];
    double r1 = u(rng), r2 = u(rng);
    if (r1 + r2 > 1.0) r1 = 1.0 - r1, r2 = 1.0 - r2;
    const Vec3& a = mesh.vertices[tri[0]];
    out.col(i) = a + r1 * (mesh.vertices[tri[1]] - a) + r2 * (mesh.vertices[tri[2]] - a);
  }
  return out;
}

template <class T>
DistanceMatrix pairwise(const std::vector<T>& gen, const std::vector<T>& ref,
                        const std::function<double(const T&, const T&)>& dist) {
  DistanceMatrix d(gen.size(), ref.size());
  for (std::size_t i = 0; i < gen.size(); ++i)
    for (std::size_t j = 0; j < ref.size(); ++j) d(i, j) = dist(gen[i], ref[j]);
  return d;
}

inline void require_sets(const DistanceMatrix& d, const char* what) {
  require(d.rows() > 0 && d.cols() > 0, std::string(what) + ": empty set");
}

/// Fraction of reference shapes that are the nearest match of some generated
/// shape; ties go to the lowest reference index.
inline double coverage(const DistanceMatrix& d) {
  require_sets(d, "coverage");
  std::vector<char> marked(d.cols(), 0);
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < d.cols(); ++j)
      if (d(i, j) < d(i, best)) best = j;
    marked[best] = 1;
  }
  double n = 0;
  for (char m : marked) n += m;
  return n / static_cast<double>(d.cols());
}

/// Mean over reference shapes of the distance to the closest generated shape.
inline double mmd(const DistanceMatrix& d) {
  require_sets(d, "mmd");
  double sum = 0.0;
  for (Eigen::Index j = 0; j < d.cols(); ++j) sum += d.col(j).minCoeff();
  return sum / static_cast<double>(d.cols());
}

inline constexpr int kJsdGrid = 28;

/// Point counts per cell of a grid³ over [0,1]³; points outside are clamped.
inline std::vector<double> occupancy_histogram(const std::vector<PointCloud>& clouds, int grid) {
  std::vector<double> h(static_cast<std::size_t>(grid) * grid * grid, 0.0);
  for (const auto& c : clouds)
    for (Eigen::Index i = 0; i < c.cols(); ++i) {
      int idx[3];
      for (int a = 0; a < 3; ++a) idx[a] = std::clamp(static_cast<int>(std::floor(c(a, i) * grid)), 0, grid - 1);
      h[idx[0] + static_cast<std::size_t>(grid) * (idx[1] + static_cast<std::size_t>(grid) * idx[2])] += 1.0;
    }
  return h;
}

/// Jensen–Shannon divergence (natural log) of two count vectors.
inline double js_divergence(std::vector<double> p, std::vector<double> q) {
  require(p.size() == q.size(), "jsd: histogram sizes differ");
  double sp = 0.0, sq = 0.0;
  for (double v : p) sp += v;
  for (double v : q) sq += v;
  require(sp > 0.0 && sq > 0.0, "jsd: empty histogram");
  double kl_p = 0.0, kl_q = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double a = p[i] / sp, b = q[i] / sq, m = 0.5 * (a + b);
    if (a > 0.0) kl_p += a * std::log(a / m);
    if (b > 0.0) kl_q += b * std::log(b / m);
  }
  return std::max(0.0, 0.5 * (kl_p + kl_q));
}

inline double jsd(const std::vector<PointCloud>& gen, const std::vector<PointCloud>& ref, int grid = kJsdGrid) {
  require(!gen.empty() && !ref.empty(), "jsd: empty set");
  require(grid >= 1, "jsd: grid must be >= 1");
  return js_divergence(occupancy_histogram(gen, grid), occupancy_histogram(ref, grid));
}

/// Union of solid boxes; a cell is filled when its centre lies in a box.
inline VoxelGrid rasterize_boxes(const std::vector<BoundingBox>& boxes, int res) {
  VoxelGrid g(res);
  for (const auto& b : boxes) {
    const Vec3 mn = b.min_corner(), mx = b.max_corner();
    int lo[3], hi[3];
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::max(0, static_cast<int>(std::ceil(mn[a] * res - 0.5)));
      hi[a] = std::min(res - 1, static_cast<int>(std::floor(mx[a] * res - 0.5)));
    }
    for (int z = lo[2]; z <= hi[2]; ++z)
      for (int y = lo[1]; y <= hi[1]; ++y)
        for (int x = lo[0]; x <= hi[0]; ++x) g.set(x, y, z);
  }
  return g;
}

inline double box_fill_iou(const std::vector<BoundingBox>& a, const std::vector<BoundingBox>& b, int res) {
  require(!a.empty() && !b.empty(), "box_fill_iou: empty box list");
  return iou(rasterize_boxes(a, res), rasterize_boxes(b, res));
}

enum class DistanceKind { kChamfer, kOneMinusIou };

inline std::string to_string(DistanceKind k) { return k == DistanceKind::kChamfer ? "chamfer" : "one-minus-iou"; }

inline DistanceKind parse_distance_kind(const std::string& s) {
  if (s == "chamfer") return DistanceKind::kChamfer;
  if (s == "one-minus-iou" || s == "iou") return DistanceKind::kOneMinusIou;
  throw InvalidInput("unknown distance kind '" + s + "'");
}

struct SetEvalReport {
  double cov = 0.0, mmd = 0.0, jsd = 0.0;
  DistanceKind distance_kind = DistanceKind::kChamfer;
  std::size_t gen_count = 0, ref_count = 0;
  std::uint64_t seed = 0;
};

/// A shape as seen by the set metrics.
struct EvalShape {
  PointCloud points;
  VoxelGrid voxels;
};

inline SetEvalReport evaluate_sets(const std::vector<EvalShape>& gen, const std::vector<EvalShape>& ref,
                                   DistanceKind kind, int jsd_grid = kJsdGrid, std::uint64_t seed = 0) {
  require(!gen.empty() && !ref.empty(), "evaluate_sets: empty set");
  std::function<double(const EvalShape&, const EvalShape&)> dist;
  if (kind == DistanceKind::kChamfer)
    dist = [](const EvalShape& a, const EvalShape& b) { return chamfer(a.points, b.points); };
  else
    dist = [](const EvalShape& a, const EvalShape& b) { return 1.0 - iou(a.voxels, b.voxels); };
  const DistanceMatrix d = pairwise(gen, ref, dist);
  std::vector<PointCloud> gp, rp;
  for (const auto& s : gen) gp.push_back(s.points);
  for (const auto& s : ref) rp.push_back(s.points);
  SetEvalReport r;
  r.cov = coverage(d);
  r.mmd = mmd(d);
  r.jsd = jsd(gp, rp, jsd_grid);
  r.distance_kind = kind;
  r.gen_count = gen.size();
  r.ref_count = ref.size();
  r.seed = seed;
  return r;
}

inline std::string csv_header() { return "distance_kind,gen_count,ref_count,seed,cov,mmd,jsd"; }

inline std::string csv_row(const SetEvalReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s,%zu,%zu,%llu,%.17g,%.17g,%.17g", to_string(r.distance_kind).c_str(),
                r.gen_count, r.ref_count, static_cast<unsigned long long>(r.seed), r.cov, r.mmd, r.jsd);
  return buf;
}

}  // namespace pqnet::metrics
