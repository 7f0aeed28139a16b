#pragma once

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "pqnet/datakit/part.hpp"

namespace pqnet::datakit {

struct SynthSpec {
  std::vector<std::pair<std::string, int>> categories;  // (category, count)
  std::uint64_t seed = 0;
  bool with_samples = true;
};

inline const std::vector<std::string>& synth_categories() {
  static const std::vector<std::string> kCats{"chair", "table", "lamp"};
  return kCats;
}

namespace detail {

using CellPredicate = std::function<bool(double, double, double)>;

// Primitives evaluated at cell centres in voxel units.
inline CellPredicate cylinder_y(double cx, double cz, double r, double y0, double y1) {
  return [=](double x, double y, double z) {
    return y >= y0 && y <= y1 && (x - cx) * (x - cx) + (z - cz) * (z - cz) <= r * r;
  };
}

inline CellPredicate rounded_box(Vec3 lo, Vec3 hi, int round_axis_a, int round_axis_b,
                                 double radius) {
  return [=](double x, double y, double z) {
    const double p[3] = {x, y, z};
    for (int a = 0; a < 3; ++a)
      if (p[a] < lo[a] || p[a] > hi[a]) return false;
    double d2 = 0.0;
    for (int a : {round_axis_a, round_axis_b}) {
      const double inner_lo = lo[a] + radius, inner_hi = hi[a] - radius;
      const double d = p[a] < inner_lo ? inner_lo - p[a] : (p[a] > inner_hi ? p[a] - inner_hi : 0.0);
      d2 += d * d;
    }
    return d2 <= radius * radius;
  };
}

inline CellPredicate ellipsoid(Vec3 c, Vec3 r) {
  return [=](double x, double y, double z) {
    const double dx = (x - c.x()) / r.x(), dy = (y - c.y()) / r.y(), dz = (z - c.z()) / r.z();
    return dx * dx + dy * dy + dz * dz <= 1.0;
  };
}

// Cone opening downwards: apex at top, base disc of radius r at y0.
inline CellPredicate cone_down(double cx, double cz, double r, double y0, double y1) {
  return [=](double x, double y, double z) {
    if (y < y0 || y > y1) return false;
    const double rr = r * (y1 - y) / (y1 - y0);
    return (x - cx) * (x - cx) + (z - cz) * (z - cz) <= rr * rr;
  };
}

struct ShapeBlueprint {
  std::vector<CellPredicate> parts;
};

inline ShapeBlueprint table_blueprint(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  const double n = 64.0;
  const double w = 36 + 20 * U(rng), d = 28 + 20 * U(rng);
  const double top = 44 + 12 * U(rng), thick = 4 + 3 * U(rng);
  const double x0 = (n - w) / 2, x1 = x0 + w, z0 = (n - d) / 2, z1 = z0 + d;
  ShapeBlueprint bp;
  bp.parts.push_back(rounded_box(Vec3(x0, top - thick, z0), Vec3(x1, top, z1), 0, 2,
                                 0.25 * std::min(w, d)));
  const int legs = 1 + static_cast<int>(U(rng) * 4) % 4;
  const double r = 2.0 + std::floor(2.0 * U(rng));
  const double leg_top = top - thick, inset = r + 3 + std::floor(3 * U(rng));
  const double fx0 = std::round(x0 + inset), fx1 = std::round(x1 - inset);
  const double fz0 = std::round(z0 + inset), fz1 = std::round(z1 - inset);
  const double mx = std::round(n / 2), mz = std::round(n / 2);
  switch (legs) {
    case 1:
      bp.parts.push_back(cylinder_y(mx, mz, r + 3, 0, leg_top));
      break;
    case 2:
      bp.parts.push_back(cylinder_y(fx0, mz, r, 0, leg_top));
      bp.parts.push_back(cylinder_y(fx1, mz, r, 0, leg_top));
      break;
    case 3:
      bp.parts.push_back(cylinder_y(fx0, fz1, r, 0, leg_top));
      bp.parts.push_back(cylinder_y(fx1, fz1, r, 0, leg_top));
      bp.parts.push_back(cylinder_y(mx, fz0, r, 0, leg_top));
      break;
    default:
      bp.parts.push_back(cylinder_y(fx0, fz1, r, 0, leg_top));
      bp.parts.push_back(cylinder_y(fx1, fz1, r, 0, leg_top));
      bp.parts.push_back(cylinder_y(fx0, fz0, r, 0, leg_top));
      bp.parts.push_back(cylinder_y(fx1, fz0, r, 0, leg_top));
      break;
  }
  return bp;
}

inline ShapeBlueprint chair_blueprint(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  const double n = 64.0;
  const double w = 28 + 14 * U(rng), d = 26 + 12 * U(rng);
  const double seat = 24 + 8 * U(rng), thick = 4 + 2 * U(rng);
  const double back_h = 18 + 12 * U(rng), back_t = 4 + 2 * U(rng);
  const double x0 = (n - w) / 2, x1 = x0 + w, z0 = (n - d) / 2, z1 = z0 + d;
  ShapeBlueprint bp;
  // back: rests on the rear edge of the seat, rounded in the x/y plane
  bp.parts.push_back(rounded_box(Vec3(x0, seat, z0), Vec3(x1, seat + back_h, z0 + back_t), 0, 1,
                                 0.25 * std::min(w, back_h)));
  bp.parts.push_back(rounded_box(Vec3(x0, seat - thick, z0), Vec3(x1, seat, z1), 0, 2,
                                 0.25 * std::min(w, d)));
  const int legs = 2 + static_cast<int>(U(rng) * 3) % 3;
  const double r = 2.0;
  const double leg_top = seat - thick, inset = r + 2 + std::floor(2 * U(rng));
  const double fx0 = std::round(x0 + inset), fx1 = std::round(x1 - inset);
  const double fz0 = std::round(z0 + inset), fz1 = std::round(z1 - inset);
  const double mx = std::round(n / 2);
  if (legs == 2) {
    bp.parts.push_back(cylinder_y(fx0, std::round(n / 2), r + 1, 0, leg_top));
    bp.parts.push_back(cylinder_y(fx1, std::round(n / 2), r + 1, 0, leg_top));
  } else if (legs == 3) {
    bp.parts.push_back(cylinder_y(fx0, fz1, r, 0, leg_top));
    bp.parts.push_back(cylinder_y(fx1, fz1, r, 0, leg_top));
    bp.parts.push_back(cylinder_y(mx, fz0, r, 0, leg_top));
  } else {
    bp.parts.push_back(cylinder_y(fx0, fz1, r, 0, leg_top));
    bp.parts.push_back(cylinder_y(fx1, fz1, r, 0, leg_top));
    bp.parts.push_back(cylinder_y(fx0, fz0, r, 0, leg_top));
    bp.parts.push_back(cylinder_y(fx1, fz0, r, 0, leg_top));
  }
  return bp;
}

inline ShapeBlueprint lamp_blueprint(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  const double c = 32.0;
  const double base_r = 10 + 8 * U(rng), base_h = 3 + 3 * U(rng);
  const double pole_r = 2.0 + std::floor(2 * U(rng)), pole_top = 34 + 14 * U(rng);
  const double head_r = 8 + 8 * U(rng), head_h = 8 + 8 * U(rng);
  ShapeBlueprint bp;
  bp.parts.push_back(cylinder_y(c, c, base_r, 0, base_h));
  bp.parts.push_back(cylinder_y(c, c, pole_r, base_h, pole_top));
  if (U(rng) < 0.5)
    bp.parts.push_back(cone_down(c, c, head_r, pole_top, std::min(63.0, pole_top + head_h)));
  else
    bp.parts.push_back(ellipsoid(Vec3(c, std::min(63.0 - head_h / 2, pole_top + head_h / 2), c),
                                 Vec3(head_r, head_h / 2, head_r)));
  return bp;
}

}  // namespace detail

/// Procedurally builds one part-assembled shape. Part order is the canonical
/// order of the category (table: top, legs; chair: back, seat, legs; lamp:
/// base, pole, head).
inline ShapeRecord synth_shape(const std::string& category, std::uint64_t seed,
                               bool with_samples = true) {
  std::mt19937_64 rng(seed);
  for (int attempt = 0; attempt < 64; ++attempt) {
    detail::ShapeBlueprint bp;
    if (category == "table") bp = detail::table_blueprint(rng);
    else if (category == "chair") bp = detail::chair_blueprint(rng);
    else if (category == "lamp") bp = detail::lamp_blueprint(rng);
    else throw InvalidInput("synth_corpus: unknown category '" + category + "'");

    constexpr int n = 64;
    VoxelGrid shape(n);
    std::vector<VoxelGrid> masks(bp.parts.size(), VoxelGrid(n));
    for (int z = 0; z < n; ++z)
      for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x)
          for (std::size_t p = 0; p < bp.parts.size(); ++p)
            if (bp.parts[p](x + 0.5, y + 0.5, z + 0.5)) {
              masks[p].set(x, y, z);
              shape.set(x, y, z);
              break;  // earlier parts claim shared cells
            }

    ShapeRecord rec;
    rec.category = category;
    rec.shape_voxels = shape;
    bool ok = true;
    for (std::size_t p = 0; p < masks.size() && ok; ++p) {
      if (masks[p].empty()) {
        ok = false;
        break;
      }
      PartRecord part = extract_part(shape, masks[p]);
      for (int tag : {16, 32, 64}) {
        const VoxelGrid v = tag == 64 ? part.volume64 : downsample(part.volume64, tag);
        if (v.empty() || v.full()) ok = false;
        else if (with_samples)
          part.samples[tag] = sample_field_points(v, tag, derive_seed(seed, "samples" + std::to_string(p * 100 + tag)));
      }
      rec.parts.push_back(std::move(part));
    }
    if (ok) return rec;
  }
  throw std::runtime_error("synth_shape: could not build a valid " + category + " shape");
}

inline std::string synth_shape_id(const std::string& category, int index) {
  char id[32];
  std::snprintf(id, sizeof(id), "%s_%05d", category.c_str(), index);
  return id;
}

/// Splits are 80/10/10 by index.
inline std::string synth_split(int index) {
  const int bucket = index % 10;
  return bucket < 8 ? "train" : (bucket == 8 ? "val" : "test");
}

/// The `index`-th shape of a category in a synthetic corpus.
inline ShapeRecord synth_entry(const SynthSpec& spec, const std::string& category, int index) {
  ShapeRecord rec =
      synth_shape(category, derive_seed(spec.seed, category + "/" + std::to_string(index)), spec.with_samples);
  rec.shape_id = synth_shape_id(category, index);
  rec.split = synth_split(index);
  return rec;
}

inline void validate_synth_spec(const SynthSpec& spec) {
  const auto& cats = synth_categories();
  for (const auto& [category, count] : spec.categories) {
    require(count >= 1, "synth_corpus: count must be >= 1");
    require(std::find(cats.begin(), cats.end(), category) != cats.end(),
            "synth_corpus: unknown category '" + category + "'");
  }
}

/// Deterministic synthetic corpus.
inline std::vector<ShapeRecord> synth_corpus(const SynthSpec& spec) {
  validate_synth_spec(spec);
  std::vector<ShapeRecord> out;
  for (const auto& [category, count] : spec.categories)
    for (int i = 0; i < count; ++i) out.push_back(synth_entry(spec, category, i));
  return out;
}

}  // namespace pqnet::datakit
