#include <filesystem>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "pqnet/datakit/ingest.hpp"
#include "pqnet/datakit/io.hpp"
#include "pqnet/datakit/render.hpp"
#include "pqnet/datakit/synth.hpp"
#include "pqnet/datakit/voxelize.hpp"

using namespace pqnet;
using namespace pqnet::datakit;
namespace fs = std::filesystem;

namespace {

Mesh unit_cube_mesh() {
  Mesh m;
  for (int i = 0; i < 8; ++i) m.vertices.emplace_back(i & 1, (i >> 1) & 1, (i >> 2) & 1);
  const int quads[6][4] = {{0, 2, 3, 1}, {4, 5, 7, 6}, {0, 1, 5, 4},
                           {2, 6, 7, 3}, {0, 4, 6, 2}, {1, 3, 7, 5}};
  for (const auto& q : quads) {
    m.triangles.push_back({q[0], q[1], q[2]});
    m.triangles.push_back({q[0], q[2], q[3]});
  }
  return m;
}

VoxelGrid random_grid(int n, double p, std::mt19937_64& rng) {
  VoxelGrid g = n >= 8 && (n & (n - 1)) == 0 ? VoxelGrid(n) : VoxelGrid::unchecked(n);
  std::bernoulli_distribution occ(p);
  for (std::size_t i = 0; i < g.size(); ++i) g.set_flat(i, occ(rng));
  return g;
}

}  // namespace

TEST(Voxelize, UnitCubeShellAtResolution8) {
  const Mesh cube = unit_cube_mesh();
  const VoxelGrid g = voxelize_mesh(cube, 8);
  EXPECT_EQ(g.count(), 8u * 8 * 8 - 6 * 6 * 6);
  EXPECT_EQ(g, oracle::voxelize_by_clipping(cube, 8));
}

TEST(Voxelize, TriangleInsideOneCell) {
  Mesh m;
  m.vertices = {Vec3(0.31, 0.32, 0.33), Vec3(0.36, 0.33, 0.34), Vec3(0.33, 0.36, 0.35)};
  m.triangles = {{0, 1, 2}};
  const VoxelGrid g = voxelize_mesh(m, 8);
  EXPECT_EQ(g.count(), 1u);
  EXPECT_TRUE(g.at(2, 2, 2));
}

TEST(Voxelize, SphereMatchesClippingOracleAndAnalyticShell) {
  const Vec3 c(0.5, 0.5, 0.5);
  const Mesh sphere = oracle::icosphere(c, 0.4, 4);
  const VoxelGrid g = voxelize_mesh(sphere, 64);
  EXPECT_EQ(g, oracle::voxelize_by_clipping(sphere, 64));
  // Every occupied cell must touch the polyhedral sphere's radial band.
  double inner = 1.0;
  for (const auto& f : sphere.triangles) {
    const Vec3 centroid = (sphere.vertices[f[0]] + sphere.vertices[f[1]] + sphere.vertices[f[2]]) / 3.0;
    inner = std::min(inner, (centroid - c).norm());
  }
  const double h = 1.0 / 64;
  std::size_t analytic = 0;
  for (int z = 0; z < 64; ++z)
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) {
        const auto [dmin, dmax] = oracle::cell_distance_range(c, x, y, z, h);
        const bool band = dmin <= 0.4 && dmax >= inner;
        if (g.at(x, y, z)) {
          EXPECT_TRUE(band) << x << "," << y << "," << z;
        }
        if (dmin < 0.4 && dmax > 0.4) ++analytic;
      }
  EXPECT_NEAR(static_cast<double>(g.count()), static_cast<double>(analytic), 0.05 * analytic);
}

TEST(Voxelize, RejectsBadInput) {
  EXPECT_THROW(voxelize_mesh(Mesh{}, 8), InvalidInput);
  Mesh m = unit_cube_mesh();
  m.vertices[0] = Vec3(-0.1, 0, 0);
  EXPECT_THROW(voxelize_mesh(m, 8), InvalidInput);
}

TEST(FloodFill, HollowShellCenterBecomesSolid) {
  VoxelGrid g = VoxelGrid::unchecked(5);
  for (int z = 1; z <= 3; ++z)
    for (int y = 1; y <= 3; ++y)
      for (int x = 1; x <= 3; ++x)
        if (!(x == 2 && y == 2 && z == 2)) g.set(x, y, z);
  const VoxelGrid f = flood_fill_interior(g);
  EXPECT_TRUE(f.at(2, 2, 2));
  EXPECT_EQ(f.count(), 27u);
  EXPECT_EQ(f, oracle::flood_fill_relaxation(g));
}

TEST(FloodFill, SolidGridUnchanged) {
  VoxelGrid g(8, true);
  EXPECT_EQ(flood_fill_interior(g), g);
}

TEST(FloodFill, OpenBoxInteriorStaysEmpty) {
  VoxelGrid g(8);
  for (int z = 1; z <= 6; ++z)
    for (int y = 1; y <= 6; ++y)
      for (int x = 1; x <= 6; ++x) {
        const bool wall = x == 1 || x == 6 || y == 1 || y == 6 || z == 1;  // no top face
        if (wall) g.set(x, y, z);
      }
  const VoxelGrid f = flood_fill_interior(g);
  EXPECT_EQ(f, g);
  EXPECT_FALSE(f.at(3, 3, 3));
  EXPECT_EQ(f, oracle::flood_fill_relaxation(g));
}

TEST(FloodFill, IdempotentAndMatchesOracleOnRandomGrids) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 60; ++trial) {
    const int n = 3 + trial % 14;
    const VoxelGrid g = random_grid(n, 0.35 + 0.3 * (trial % 3) / 2.0, rng);
    const VoxelGrid f = flood_fill_interior(g);
    EXPECT_EQ(f, oracle::flood_fill_relaxation(g)) << "trial " << trial;
    EXPECT_EQ(flood_fill_interior(f), f);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (g[i]) {
        EXPECT_TRUE(f[i]);
      }
  }
}

TEST(ExtractPart, FullGridIsIdentityBox) {
  VoxelGrid full(64, true);
  const PartRecord p = extract_part(full, full);
  EXPECT_EQ(p.box.position, Vec3(0.5, 0.5, 0.5));
  EXPECT_EQ(p.box.size, Vec3(1, 1, 1));
  EXPECT_TRUE(p.volume64.full());
}

TEST(ExtractPart, HalfSlabBox) {
  VoxelGrid mask(64);
  for (int z = 0; z < 64; ++z)
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 32; ++x) mask.set(x, y, z);
  const PartRecord p = extract_part(mask, mask);
  EXPECT_DOUBLE_EQ(p.box.position.x(), 0.25);
  EXPECT_DOUBLE_EQ(p.box.position.y(), 0.5);
  EXPECT_DOUBLE_EQ(p.box.position.z(), 0.5);
  EXPECT_DOUBLE_EQ(p.box.size.x(), 0.5);
  EXPECT_DOUBLE_EQ(p.box.size.y(), 1.0);
  EXPECT_DOUBLE_EQ(p.box.size.z(), 1.0);
}

TEST(ExtractPart, RandomPartsMatchNearestNeighbourOracle) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> cell(0, 15);
  for (int trial = 0; trial < 50; ++trial) {
    VoxelGrid mask(16);
    while (mask.count() < 5) mask.set(cell(rng), cell(rng), cell(rng));
    const PartRecord p = extract_part(mask, mask);
    EXPECT_EQ(p.volume64, oracle::nearest_rescale(mask, 64)) << "trial " << trial;
    EXPECT_TRUE(p.box.valid(1.0 / 16));
  }
}

TEST(ExtractPart, ReplacingReproducesMask) {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> lo(0, 40), ext(4, 23);
  for (int trial = 0; trial < 30; ++trial) {
    VoxelGrid mask(64);
    const int x0 = lo(rng), y0 = lo(rng), z0 = lo(rng);
    const int ex = ext(rng), ey = ext(rng), ez = ext(rng);
    std::bernoulli_distribution occ(0.6);
    for (int z = z0; z < z0 + ez; ++z)
      for (int y = y0; y < y0 + ey; ++y)
        for (int x = x0; x < x0 + ex; ++x)
          if (occ(rng)) mask.set(x, y, z);
    const PartRecord p = extract_part(mask, mask);
    const VoxelGrid back = place_part(p.volume64, p.box, 64);
    EXPECT_GE(oracle::iou(back, mask), 0.8);
  }
  // Power-of-two extents reproduce exactly.
  VoxelGrid mask(64);
  for (int z = 8; z < 24; ++z)
    for (int y = 0; y < 32; ++y)
      for (int x = 32; x < 40; ++x)
        if ((x + y + z) % 3) mask.set(x, y, z);
  const PartRecord p = extract_part(mask, mask);
  EXPECT_EQ(place_part(p.volume64, p.box, 64), mask);
}

TEST(ExtractPart, Errors) {
  VoxelGrid shape(16), mask(16);
  EXPECT_THROW(extract_part(shape, mask), InvalidInput);
  mask.set(1, 1, 1);
  EXPECT_THROW(extract_part(shape, mask), InvalidInput);
}

TEST(Downsample, Examples) {
  EXPECT_TRUE(downsample(VoxelGrid(64, true), 16).full());
  VoxelGrid one(64);
  one.set(0, 0, 0);
  const VoxelGrid d = downsample(one, 16);
  EXPECT_EQ(d.count(), 1u);
  EXPECT_TRUE(d.at(0, 0, 0));
  EXPECT_THROW(downsample(one, 24), InvalidInput);
}

TEST(Downsample, MatchesPoolingOracle) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const VoxelGrid g = random_grid(32, 0.02 + 0.01 * trial, rng);
    EXPECT_EQ(downsample(g, 16), oracle::max_pool(g, 2));
  }
}

TEST(SampleFieldPoints, CountsPerTag) {
  VoxelGrid slab16(16), slab64(64);
  for (int z = 0; z < 16; ++z)
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 16; ++x) slab16.set(x, y, z);
  for (int z = 0; z < 64; ++z)
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 64; ++x) slab64.set(x, y, z);
  EXPECT_EQ(sample_field_points(slab16, 16, 1).points.size(), 4096u);
  EXPECT_EQ(sample_field_points(downsample(slab64, 32), 32, 1).points.size(), 8192u);
  EXPECT_EQ(sample_field_points(slab64, 64, 1).points.size(), 32768u);
}

TEST(SampleFieldPoints, ValuesMatchContainingCellAndAreBalanced) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    VoxelGrid v(16);
    if (trial == 0) {
      for (int z = 0; z < 16; ++z)
        for (int y = 0; y < 8; ++y)
          for (int x = 0; x < 16; ++x) v.set(x, y, z);
    } else {
      v = random_grid(16, 0.1 + 0.8 * (trial % 10) / 10.0, rng);
      if (v.empty()) v.set(0, 0, 0);
      if (v.full()) v.set(0, 0, 0, false);
    }
    const FieldSamples s = sample_field_points(v, 16, trial);
    ASSERT_EQ(s.points.size(), s.values.size());
    std::size_t inside = 0;
    for (std::size_t i = 0; i < s.points.size(); ++i) {
      const auto& p = s.points[i];
      const int x = static_cast<int>(p.x() * 16), y = static_cast<int>(p.y() * 16),
                z = static_cast<int>(p.z() * 16);
      ASSERT_TRUE(v.in_bounds(x, y, z));
      EXPECT_EQ(s.values[i], v.at(x, y, z) ? 1.0f : 0.0f);
      inside += s.values[i] > 0.5f;
    }
    const double frac = static_cast<double>(inside) / s.points.size();
    EXPECT_GE(frac, 0.4);
    EXPECT_LE(frac, 0.6);
  }
}

TEST(SampleFieldPoints, ConcentratesNearBoundary) {
  VoxelGrid v(64);
  for (int z = 0; z < 64; ++z)
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 64; ++x) v.set(x, y, z);
  const FieldSamples s = sample_field_points(v, 64, 4);
  std::size_t near = 0;
  for (const auto& p : s.points) near += std::abs(p.y() * 64 - 32) <= 3.0;
  EXPECT_GT(static_cast<double>(near) / s.points.size(), 0.75);
}

TEST(SampleFieldPoints, DeterministicAndErrors) {
  VoxelGrid v(16);
  v.set(3, 4, 5);
  EXPECT_EQ(sample_field_points(v, 16, 42), sample_field_points(v, 16, 42));
  EXPECT_NE(sample_field_points(v, 16, 42).points, sample_field_points(v, 16, 43).points);
  EXPECT_THROW(sample_field_points(VoxelGrid(16), 16, 0), InvalidInput);
  EXPECT_THROW(sample_field_points(VoxelGrid(16, true), 16, 0), InvalidInput);
  EXPECT_THROW(sample_field_points(v, 32, 0), InvalidInput);
  EXPECT_THROW(sample_field_points(VoxelGrid(8), 8, 0), InvalidInput);
}

TEST(RenderDepth, EmptyGridIsAllMisses) {
  for (int view = 0; view < kNumViews; ++view) {
    const DepthImage img = render_depth(VoxelGrid(64), view);
    for (double d : img.values) EXPECT_EQ(d, 1.0);
  }
  EXPECT_THROW(render_depth(VoxelGrid(64), 5), InvalidInput);
}

TEST(RenderDepth, SolidFrontViewIsConstant) {
  const ViewSpec front{0.0, 0.0, 0.5};
  const DepthImage img = render_depth(VoxelGrid(64, true), front);
  const double expected = (kNearDistance - 0.5) / (2 * kNearDistance);
  for (double d : img.values) EXPECT_NEAR(d, expected, 1e-12);
}

TEST(RenderDepth, SingleColumnMatchesRayOracle) {
  VoxelGrid g(64);
  for (int y = 0; y < 64; ++y)
    for (int x = 28; x < 32; ++x)
      for (int z = 31; z < 35; ++z) g.set(x, y, z);
  for (int view = 0; view < kNumViews; ++view) {
    const DepthImage img = render_depth(g, view);
    int hits = 0;
    for (int r = 0; r < 64; ++r)
      for (int c = 0; c < 64; ++c) {
        const auto t = oracle::first_hit_brute_force(g, pixel_ray(canonical_view(view), r, c));
        if (t) {
          ++hits;
          EXPECT_NEAR(img.at(r, c), *t / (2 * kNearDistance), 1e-9);
        } else {
          EXPECT_EQ(img.at(r, c), 1.0);
        }
      }
    EXPECT_GT(hits, 0);
  }
}

TEST(RenderDepth, PgmRoundTrip) {
  const ShapeRecord s = synth_shape("chair", 3, false);
  const DepthImage img = render_depth(s.shape_voxels, 1);
  const auto path = fs::temp_directory_path() / "pqnet_depth_test.pgm";
  write_depth_pgm(path.string(), img);
  const DepthImage back = read_depth_pgm(path.string());
  ASSERT_EQ(back.values.size(), img.values.size());
  for (std::size_t i = 0; i < img.values.size(); ++i) EXPECT_NEAR(back.values[i], img.values[i], 1.0 / 65535);
  fs::remove(path);
}

TEST(SynthCorpus, Deterministic) {
  const SynthSpec spec{{{"chair", 1}}, 7};
  EXPECT_EQ(synth_corpus(spec), synth_corpus(spec));
}

TEST(SynthCorpus, LampPartCounts) {
  for (const auto& s : synth_corpus({{{"lamp", 100}}, 1, false})) {
    EXPECT_GE(s.parts.size(), 2u);
    EXPECT_LE(s.parts.size(), 7u);
  }
}

TEST(SynthCorpus, TableBoxesSatisfyInvariant) {
  double mean = 0.0;
  const auto shapes = synth_corpus({{{"table", 100}}, 2, false});
  for (const auto& s : shapes) {
    mean += static_cast<double>(s.parts.size());
    for (const auto& p : s.parts) {
      EXPECT_TRUE(p.box.valid(1.0 / 64));
      EXPECT_FALSE(p.volume64.empty());
      EXPECT_FALSE(p.volume64.full());
    }
  }
  mean /= static_cast<double>(shapes.size());
  EXPECT_GE(mean, 2.0);
  EXPECT_LE(mean, 10.0);
}

TEST(SynthCorpus, ChairsPopulateEverything) {
  for (const auto& s : synth_corpus({{{"chair", 5}}, 3})) {
    EXPECT_GE(s.parts.size(), 4u);
    EXPECT_LE(s.parts.size(), 6u);
    for (const auto& p : s.parts) {
      for (int tag : {16, 32, 64}) {
        ASSERT_EQ(p.samples.count(tag), 1u);
        EXPECT_EQ(p.samples.at(tag).points.size(), static_cast<std::size_t>(sample_count_for(tag)));
      }
    }
  }
  EXPECT_THROW(synth_corpus({{{"sofa", 1}}, 0}), InvalidInput);
}

class IngestTest : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() / ("pqnet_ingest_" + std::to_string(::getpid()));
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  void TearDown() override { fs::remove_all(root_); }
  fs::path root_;
};

TEST_F(IngestTest, ThreeShapeFixtureKeepsFileOrder) {
  auto shapes = synth_corpus({{{"chair", 3}}, 21, false});
  // Reverse one shape's order through its manifest.
  for (auto& s : shapes) {
    s.split = "train";
    write_shape_record(root_, s);
  }
  const fs::path m = root_ / "chair" / "train" / shapes[1].shape_id / "manifest.json";
  auto j = nlohmann::json::parse(std::ifstream(m));
  std::vector<int> order = j["order"].get<std::vector<int>>();
  std::reverse(order.begin(), order.end());
  j["order"] = order;
  std::ofstream(m) << j.dump();

  const IngestResult r = ingest_partnet(root_, "chair", 10);
  ASSERT_EQ(r.records.size(), 3u);
  for (int i : {0, 2}) {
    ASSERT_EQ(r.records[i].parts.size(), shapes[i].parts.size());
    for (std::size_t k = 0; k < shapes[i].parts.size(); ++k)
      EXPECT_EQ(r.records[i].parts[k].box, shapes[i].parts[k].box);
  }
  const auto& rev = r.records[1];
  for (std::size_t k = 0; k < order.size(); ++k)
    EXPECT_EQ(rev.parts[k].box, shapes[1].parts[order[k]].box);
}

TEST_F(IngestTest, DropsShapesAboveKMax) {
  auto shapes = synth_corpus({{{"table", 2}}, 4, false});
  for (auto& s : shapes) s.split = "test";
  while (shapes[0].parts.size() < 11) shapes[0].parts.push_back(shapes[0].parts.back());
  for (const auto& s : shapes) write_shape_record(root_, s);
  const IngestResult r = ingest_partnet(root_, "table", 10);
  ASSERT_EQ(r.records.size(), 1u);
  EXPECT_EQ(r.records[0].shape_id, shapes[1].shape_id);
  EXPECT_EQ(r.dropped_part_count, 1);
  EXPECT_EQ(r.records[0].split, "test");
}

TEST_F(IngestTest, EmptyOrMissingManifest) {
  fs::create_directories(root_ / "lamp");
  EXPECT_THROW(ingest_partnet(root_, "lamp", 10), InvalidInput);
  fs::create_directories(root_ / "lamp" / "train" / "x0");
  EXPECT_THROW(ingest_partnet(root_, "lamp", 10), InvalidInput);
}

TEST_F(IngestTest, MalformedPartIsSkippedWithWarning) {
  auto shapes = synth_corpus({{{"lamp", 2}}, 8, false});
  for (auto& s : shapes) {
    s.split = "val";
    write_shape_record(root_, s);
  }
  std::ofstream(root_ / "lamp" / "val" / shapes[0].shape_id / "part_1.box") << "bad";
  const IngestResult r = ingest_partnet(root_, "lamp", 10);
  EXPECT_EQ(r.records.size(), 1u);
  EXPECT_EQ(r.skipped_malformed, 1);
  EXPECT_EQ(r.warnings.size(), 1u);
}

TEST(DatasetIo, RoundTripPreservesRecords) {
  const auto dir = fs::temp_directory_path() / ("pqnet_io_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  const auto shapes = synth_corpus({{{"lamp", 1}, {"table", 1}}, 99});
  for (auto s : shapes) {
    s.split = "train";
    write_shape_record(dir, s);
    const auto r = ingest_partnet(dir, s.category, 10);
    ASSERT_EQ(r.records.size(), 1u);
    EXPECT_EQ(r.records[0], s);
  }
  fs::remove_all(dir);
}
