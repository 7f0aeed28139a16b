#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "pqnet/datakit/voxel_grid.hpp"

namespace pqnet::datakit {

/// Orthographic camera looking at the cube centre.
struct ViewSpec {
  double azimuth_deg = 0.0;    // around the vertical (y) axis; 0 = camera on +z
  double elevation_deg = 30.0;
  double half_extent = std::sqrt(3.0) / 2.0;  // half-width of the image plane
};

inline constexpr int kNumViews = 5;
inline constexpr int kImageSize = 64;
/// Distance from the cube centre to the near plane; depths are normalized by 2x this.
inline constexpr double kNearDistance = 0.8660254037844386;  // sqrt(3)/2

inline ViewSpec canonical_view(int view_index) {
  require(view_index >= 0 && view_index < kNumViews,
          "view index must be in 0..4, got " + std::to_string(view_index));
  return {72.0 * view_index, 30.0, kNearDistance};
}

struct Ray {
  Vec3 origin;
  Vec3 dir;
};

/// Ray through pixel (row, col); row 0 is the top of the image.
inline Ray pixel_ray(const ViewSpec& v, int row, int col, int size = kImageSize) {
  const double az = v.azimuth_deg * std::numbers::pi / 180.0;
  const double el = v.elevation_deg * std::numbers::pi / 180.0;
  const Vec3 cam(std::cos(el) * std::sin(az), std::sin(el), std::cos(el) * std::cos(az));
  const Vec3 right(std::cos(az), 0.0, -std::sin(az));
  const Vec3 up = cam.cross(right);
  const double u = ((col + 0.5) / size * 2.0 - 1.0) * v.half_extent;
  const double w = (1.0 - (row + 0.5) / size * 2.0) * v.half_extent;
  const Vec3 center = Vec3::Constant(0.5);
  return {center + cam * kNearDistance + right * u + up * w, -cam};
}

/// Slab test against [lo, hi]; returns the entry parameter (clamped at 0).
inline std::optional<double> ray_box_entry(const Ray& r, const Vec3& lo, const Vec3& hi) {
  double t0 = 0.0, t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (std::abs(r.dir[a]) < 1e-15) {
      if (r.origin[a] < lo[a] || r.origin[a] > hi[a]) return std::nullopt;
      continue;
    }
    double ta = (lo[a] - r.origin[a]) / r.dir[a];
    double tb = (hi[a] - r.origin[a]) / r.dir[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return std::nullopt;
  }
  return t0;
}

struct RayHit {
  double t;
  int axis;  // axis of the face through which the ray entered the hit cell
};

/// First occupied cell along the ray (voxel traversal).
inline std::optional<RayHit> cast_ray(const VoxelGrid& grid, const Ray& r) {
  const int n = grid.resolution();
  const auto entry = ray_box_entry(r, Vec3::Zero(), Vec3::Ones());
  if (!entry) return std::nullopt;
  const double t_enter = *entry;
  const Vec3 p = r.origin + r.dir * t_enter;

  int cell[3], step[3];
  double t_max[3], t_delta[3];
  int entry_axis = 0;
  {
    // Axis whose slab bound produced the entry parameter.
    double best = -1.0;
    for (int a = 0; a < 3; ++a) {
      if (std::abs(r.dir[a]) < 1e-15) continue;
      const double bound = r.dir[a] > 0 ? 0.0 : 1.0;
      const double ta = (bound - r.origin[a]) / r.dir[a];
      if (ta > best) best = ta, entry_axis = a;
    }
  }
  for (int a = 0; a < 3; ++a) {
    cell[a] = std::clamp(static_cast<int>(std::floor(p[a] * n)), 0, n - 1);
    if (r.dir[a] > 1e-15) {
      step[a] = 1;
      t_delta[a] = 1.0 / (n * r.dir[a]);
      t_max[a] = ((cell[a] + 1.0) / n - r.origin[a]) / r.dir[a];
    } else if (r.dir[a] < -1e-15) {
      step[a] = -1;
      t_delta[a] = -1.0 / (n * r.dir[a]);
      t_max[a] = (static_cast<double>(cell[a]) / n - r.origin[a]) / r.dir[a];
    } else {
      step[a] = 0;
      t_delta[a] = t_max[a] = std::numeric_limits<double>::infinity();
    }
  }
  double t = t_enter;
  int axis = entry_axis;
  while (true) {
    if (grid.at(cell[0], cell[1], cell[2])) return RayHit{t, axis};
    axis = 0;
    if (t_max[1] < t_max[axis]) axis = 1;
    if (t_max[2] < t_max[axis]) axis = 2;
    t = t_max[axis];
    cell[axis] += step[axis];
    if (cell[axis] < 0 || cell[axis] >= n) return std::nullopt;
    t_max[axis] += t_delta[axis];
  }
}

/// Normalized depth map; 1 marks rays that miss the shape.
struct DepthImage {
  int size = kImageSize;
  int view_index = 0;
  std::vector<double> values;  // row-major, row 0 at the top

  double at(int row, int col) const { return values[static_cast<std::size_t>(row) * size + col]; }
};

inline DepthImage render_depth(const VoxelGrid& grid, const ViewSpec& view, int view_index = 0) {
  DepthImage img;
  img.view_index = view_index;
  img.values.assign(static_cast<std::size_t>(img.size) * img.size, 1.0);
  for (int r = 0; r < img.size; ++r)
    for (int c = 0; c < img.size; ++c)
      if (auto hit = cast_ray(grid, pixel_ray(view, r, c, img.size)))
        img.values[static_cast<std::size_t>(r) * img.size + c] =
            std::clamp(hit->t / (2.0 * kNearDistance), 0.0, 1.0);
  return img;
}

inline DepthImage render_depth(const VoxelGrid& grid, int view_index) {
  return render_depth(grid, canonical_view(view_index), view_index);
}

/// Flat-shaded orthographic RGB render, channel-planar, values in [0,1],
/// white background.
struct RgbImage {
  int size = kImageSize;
  std::vector<float> values;  // 3 planes of size*size

  float at(int ch, int row, int col) const {
    return values[(static_cast<std::size_t>(ch) * size + row) * size + col];
  }
};

inline RgbImage render_rgb(const VoxelGrid& grid, int view_index) {
  const ViewSpec view = canonical_view(view_index);
  RgbImage img;
  const std::size_t plane = static_cast<std::size_t>(img.size) * img.size;
  img.values.assign(3 * plane, 1.0f);
  const Vec3 light = Vec3(0.3, 1.0, 0.5).normalized();
  const float base[3] = {0.75f, 0.55f, 0.35f};
  for (int r = 0; r < img.size; ++r)
    for (int c = 0; c < img.size; ++c) {
      const Ray ray = pixel_ray(view, r, c, img.size);
      auto hit = cast_ray(grid, ray);
      if (!hit) continue;
      Vec3 normal = Vec3::Zero();
      normal[hit->axis] = ray.dir[hit->axis] > 0 ? -1.0 : 1.0;
      const double shade = 0.3 + 0.7 * std::max(0.0, normal.dot(light));
      for (int ch = 0; ch < 3; ++ch)
        img.values[ch * plane + static_cast<std::size_t>(r) * img.size + c] =
            static_cast<float>(base[ch] * shade);
    }
  return img;
}

/// 16-bit binary PGM; depth scaled by 65535.
inline void write_depth_pgm(const std::string& path, const DepthImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "P5\n" << img.size << " " << img.size << "\n65535\n";
  for (double d : img.values) {
    const auto q = static_cast<std::uint16_t>(std::lround(std::clamp(d, 0.0, 1.0) * 65535.0));
    const char be[2] = {static_cast<char>(q >> 8), static_cast<char>(q & 0xff)};
    out.write(be, 2);
  }
}

namespace detail {
inline int read_pnm_int(std::istream& in) {
  int c = in.peek();
  while (std::isspace(c) || c == '#') {
    if (c == '#') {
      std::string skip;
      std::getline(in, skip);
    } else {
      in.get();
    }
    c = in.peek();
  }
  int v = -1;
  in >> v;
  return v;
}
}  // namespace detail

inline DepthImage read_depth_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open depth image: " + path);
  std::string magic;
  in >> magic;
  const int w = detail::read_pnm_int(in), h = detail::read_pnm_int(in),
            maxv = detail::read_pnm_int(in);
  if (magic != "P5" || w != h || w <= 0 || maxv <= 0 || maxv > 65535)
    throw InvalidInput("malformed 16-bit PGM: " + path);
  in.get();
  DepthImage img;
  img.size = w;
  img.values.resize(static_cast<std::size_t>(w) * h);
  for (auto& v : img.values) {
    unsigned char be[2] = {0, 0};
    if (maxv > 255) {
      in.read(reinterpret_cast<char*>(be), 2);
    } else {
      in.read(reinterpret_cast<char*>(be + 1), 1);
    }
    if (!in) throw InvalidInput("truncated PGM: " + path);
    v = static_cast<double>((be[0] << 8) | be[1]) / maxv;
  }
  return img;
}

inline void write_rgb_ppm(const std::string& path, const RgbImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "P6\n" << img.size << " " << img.size << "\n255\n";
  for (int r = 0; r < img.size; ++r)
    for (int c = 0; c < img.size; ++c)
      for (int ch = 0; ch < 3; ++ch)
        out.put(static_cast<char>(std::lround(std::clamp(img.at(ch, r, c), 0.0f, 1.0f) * 255.0f)));
}

inline RgbImage read_rgb_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open RGB image: " + path);
  std::string magic;
  in >> magic;
  const int w = detail::read_pnm_int(in), h = detail::read_pnm_int(in),
            maxv = detail::read_pnm_int(in);
  if (magic != "P6" || w != h || w <= 0 || maxv != 255)
    throw InvalidInput("malformed 8-bit PPM: " + path);
  in.get();
  RgbImage img;
  img.size = w;
  const std::size_t plane = static_cast<std::size_t>(w) * h;
  img.values.resize(3 * plane);
  for (std::size_t p = 0; p < plane; ++p)
    for (int ch = 0; ch < 3; ++ch) {
      const int v = in.get();
      if (v == EOF) throw InvalidInput("truncated PPM: " + path);
      img.values[ch * plane + p] = static_cast<float>(v) / 255.0f;
    }
  return img;
}

}  // namespace pqnet::datakit
