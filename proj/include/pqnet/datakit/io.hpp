#pragma once

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pqnet/datakit/part.hpp"

namespace pqnet::datakit {

namespace fs = std::filesystem;

namespace detail {

template <class T>
void put_le(std::ostream& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T get_le(std::istream& in, const std::string& what) {
  unsigned char bytes[sizeof(T)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(T));
  if (!in) throw InvalidInput("truncated file: " + what);
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T v;
  std::memcpy(&v, bytes, sizeof(T));
  return v;
}

}  // namespace detail

/// `.vox`: "PQVX", uint32 resolution, occupancy bit-packed LSB-first in
/// x-fastest cell order.
inline void write_vox(const fs::path& path, const VoxelGrid& g) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write("PQVX", 4);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(g.resolution()));
  std::vector<unsigned char> packed((g.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < g.size(); ++i)
    if (g[i]) packed[i / 8] |= static_cast<unsigned char>(1u << (i % 8));
  out.write(reinterpret_cast<const char*>(packed.data()), static_cast<std::streamsize>(packed.size()));
}

inline VoxelGrid read_vox(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "PQVX", 4) != 0) throw InvalidInput("bad .vox magic: " + path.string());
  const auto n = detail::get_le<std::uint32_t>(in, path.string());
  if (n > 1024) throw InvalidInput("implausible .vox resolution in " + path.string());
  VoxelGrid g(static_cast<int>(n));
  std::vector<unsigned char> packed((g.size() + 7) / 8);
  in.read(reinterpret_cast<char*>(packed.data()), static_cast<std::streamsize>(packed.size()));
  if (!in) throw InvalidInput("truncated .vox: " + path.string());
  for (std::size_t i = 0; i < g.size(); ++i) g.set_flat(i, (packed[i / 8] >> (i % 8)) & 1u);
  return g;
}

/// `.box`: six little-endian float64 values x y z l m n.
inline void write_box(const fs::path& path, const BoundingBox& b) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (double v : b.as_array()) detail::put_le<double>(out, v);
}

inline BoundingBox read_box(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open " + path.string());
  std::array<double, 6> v{};
  for (auto& x : v) x = detail::get_le<double>(in, path.string());
  return BoundingBox::from_array(v);
}

/// `samples_<k>_<res>.bin`: uint32 count, then count x (3 float32 coords,
/// 1 float32 value).
inline void write_samples(const fs::path& path, const FieldSamples& s) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.points.size()));
  for (std::size_t i = 0; i < s.points.size(); ++i) {
    for (int a = 0; a < 3; ++a) detail::put_le<float>(out, s.points[i][a]);
    detail::put_le<float>(out, s.values[i]);
  }
}

inline FieldSamples read_samples(const fs::path& path, int resolution_tag) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open " + path.string());
  FieldSamples s;
  s.resolution_tag = resolution_tag;
  const auto count = detail::get_le<std::uint32_t>(in, path.string());
  if (count != static_cast<std::uint32_t>(sample_count_for(resolution_tag)))
    throw InvalidInput("unexpected sample count in " + path.string());
  s.points.resize(count);
  s.values.resize(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    for (int a = 0; a < 3; ++a) s.points[i][a] = detail::get_le<float>(in, path.string());
    s.values[i] = detail::get_le<float>(in, path.string());
  }
  return s;
}

inline fs::path shape_dir(const fs::path& root, const ShapeRecord& rec) {
  return root / rec.category / rec.split / rec.shape_id;
}

/// Writes one shape in the dataset layout
/// `<root>/<category>/<split>/<shape_id>/`.
inline void write_shape_record(const fs::path& root, const ShapeRecord& rec) {
  const fs::path dir = shape_dir(root, rec);
  fs::create_directories(dir);
  write_vox(dir / "shape.vox", rec.shape_voxels);
  nlohmann::json order = nlohmann::json::array();
  for (std::size_t k = 0; k < rec.parts.size(); ++k) {
    const auto& p = rec.parts[k];
    const std::string ks = std::to_string(k);
    write_vox(dir / ("part_" + ks + ".vox"), p.volume64);
    write_box(dir / ("part_" + ks + ".box"), p.box);
    for (const auto& [tag, s] : p.samples)
      write_samples(dir / ("samples_" + ks + "_" + std::to_string(tag) + ".bin"), s);
    order.push_back(k);
  }
  nlohmann::json manifest{{"shape_id", rec.shape_id},
                          {"category", rec.category},
                          {"split", rec.split},
                          {"part_count", rec.parts.size()},
                          {"order", order}};
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << "\n";
}

}  // namespace pqnet::datakit
