#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pqnet/datakit/io.hpp"

namespace pqnet::datakit {

struct IngestResult {
  std::vector<ShapeRecord> records;
  std::vector<std::string> warnings;
  int dropped_part_count = 0;
  int skipped_malformed = 0;
};

namespace detail {

inline ShapeRecord read_shape_dir(const fs::path& dir, const std::string& category,
                                  const std::string& split) {
  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw InvalidInput("missing manifest.json in " + dir.string());
  nlohmann::json manifest;
  try {
    mf >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput("unparsable manifest in " + dir.string() + ": " + e.what());
  }
  ShapeRecord rec;
  rec.shape_id = manifest.value("shape_id", dir.filename().string());
  rec.category = manifest.value("category", category);
  rec.split = manifest.value("split", split);
  std::vector<int> order;
  if (manifest.contains("order")) order = manifest["order"].get<std::vector<int>>();
  else
    for (int k = 0; k < manifest.at("part_count").get<int>(); ++k) order.push_back(k);
  if (manifest.contains("part_count") &&
      manifest["part_count"].get<std::size_t>() != order.size())
    throw std::runtime_error("part_count disagrees with order list");
  rec.shape_voxels = read_vox(dir / "shape.vox");
  for (int k : order) {
    const std::string ks = std::to_string(k);
    PartRecord p;
    p.volume64 = read_vox(dir / ("part_" + ks + ".vox"));
    if (p.volume64.resolution() != 64 || p.volume64.empty())
      throw std::runtime_error("part_" + ks + ".vox is not a non-empty 64^3 volume");
    p.box = read_box(dir / ("part_" + ks + ".box"));
    if (!p.box.valid(1.0 / rec.shape_voxels.resolution()))
      throw std::runtime_error("part_" + ks + ".box violates the unit-cube invariant");
    for (int tag : {16, 32, 64}) {
      const fs::path sp = dir / ("samples_" + ks + "_" + std::to_string(tag) + ".bin");
      if (fs::exists(sp)) p.samples[tag] = read_samples(sp, tag);
    }
    rec.parts.push_back(std::move(p));
  }
  return rec;
}

}  // namespace detail

/// Loads `<root>/<category>/<split>/<shape_id>/` directories. Shapes with more
/// than `k_max` (or fewer than 2) parts are dropped; malformed shapes are
/// skipped with a warning. Part order follows each manifest's order list.
inline IngestResult ingest_partnet(const fs::path& root, const std::string& category, int k_max) {
  const fs::path cat_dir = root / category;
  require(fs::is_directory(cat_dir), "ingest_partnet: no directory " + cat_dir.string());
  IngestResult result;
  std::vector<fs::path> split_dirs;
  for (const auto& e : fs::directory_iterator(cat_dir))
    if (e.is_directory()) split_dirs.push_back(e.path());
  std::sort(split_dirs.begin(), split_dirs.end());
  std::size_t seen = 0;
  for (const auto& sd : split_dirs) {
    std::vector<fs::path> shapes;
    for (const auto& e : fs::directory_iterator(sd))
      if (e.is_directory()) shapes.push_back(e.path());
    std::sort(shapes.begin(), shapes.end());
    for (const auto& dir : shapes) {
      ++seen;
      if (!fs::exists(dir / "manifest.json"))
        throw InvalidInput("ingest_partnet: missing manifest.json in " + dir.string());
      ShapeRecord rec;
      try {
        rec = detail::read_shape_dir(dir, category, sd.filename().string());
      } catch (const std::exception& e) {
        result.warnings.push_back("skipped " + dir.string() + ": " + e.what());
        ++result.skipped_malformed;
        continue;
      }
      if (static_cast<int>(rec.parts.size()) > k_max || rec.parts.size() < 2) {
        result.warnings.push_back("dropped " + rec.shape_id + ": " +
                                  std::to_string(rec.parts.size()) + " parts");
        ++result.dropped_part_count;
        continue;
      }
      result.records.push_back(std::move(rec));
    }
  }
  require(seen > 0, "ingest_partnet: no shape directories under " + cat_dir.string());
  return result;
}

}  // namespace pqnet::datakit
