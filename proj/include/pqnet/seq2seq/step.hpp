#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "pqnet/datakit/io.hpp"
#include "pqnet/datakit/part.hpp"

namespace pqnet::seq2seq {

inline constexpr int kDefaultKMax = 10;
inline constexpr int kBoxDim = 6;

/// One sequence element: [g; b; t] with t the one-hot total part count.
using StepVector = Eigen::VectorXd;

struct StepParts {
  Eigen::VectorXd g;
  std::array<double, 6> b{};
  int part_count = 0;
};

inline StepVector pack_step(const Eigen::VectorXd& g, const std::array<double, 6>& b, int part_count,
                            int k_max) {
  require(part_count >= 1 && part_count <= k_max,
          "pack_step: part count " + std::to_string(part_count) + " outside 1.." + std::to_string(k_max));
  StepVector s = StepVector::Zero(g.size() + kBoxDim + k_max);
  s.head(g.size()) = g;
  for (int i = 0; i < kBoxDim; ++i) s[g.size() + i] = b[i];
  s[g.size() + kBoxDim + part_count - 1] = 1.0;
  return s;
}

inline StepParts unpack_step(const StepVector& s, int code_dim, int k_max) {
  require(s.size() == code_dim + kBoxDim + k_max, "unpack_step: wrong step length");
  StepParts p;
  p.g = s.head(code_dim);
  for (int i = 0; i < kBoxDim; ++i) p.b[i] = s[code_dim + i];
  const auto t = s.tail(k_max);
  int hot = -1;
  for (int i = 0; i < k_max; ++i) {
    if (t[i] == 1.0 && hot < 0) hot = i;
    else require(t[i] == 0.0, "unpack_step: count vector is not one-hot");
  }
  require(hot >= 0, "unpack_step: count vector is not one-hot");
  p.part_count = hot + 1;
  return p;
}

/// Step vectors for a shape given one geometry code per part (in part order).
inline std::vector<StepVector> assemble_step_vectors(const datakit::ShapeRecord& shape,
                                                     const std::vector<Eigen::VectorXd>& codes, int k_max) {
  const int k = static_cast<int>(shape.parts.size());
  require(static_cast<int>(codes.size()) == k, "assemble_step_vectors: one code per part required");
  require(k >= 1, "assemble_step_vectors: shape has no parts");
  require(k <= k_max, "assemble_step_vectors: " + std::to_string(k) + " parts exceed K_max " +
                          std::to_string(k_max));
  std::vector<StepVector> out;
  for (int i = 0; i < k; ++i) out.push_back(pack_step(codes[i], shape.parts[i].box.as_array(), k, k_max));
  return out;
}

struct DecodedStep {
  Eigen::VectorXd g;
  std::array<double, 6> b{};
  double s = 0.0;
};

/// (1/k) Σ [β‖g'−g‖² + ‖b'−b‖²].
inline double loss_reconstruction(const std::vector<DecodedStep>& pred, const std::vector<StepVector>& truth,
                                  double beta = 1.0) {
  require(!pred.empty(), "loss_reconstruction: empty sequence");
  require(pred.size() == truth.size(), "loss_reconstruction: length mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto code_dim = pred[i].g.size();
    require(truth[i].size() >= code_dim + kBoxDim, "loss_reconstruction: step too short");
    sum += beta * (pred[i].g - truth[i].head(code_dim)).squaredNorm();
    for (int j = 0; j < kBoxDim; ++j) sum += std::pow(pred[i].b[j] - truth[i][code_dim + j], 2);
  }
  return sum / static_cast<double>(pred.size());
}

/// Binary cross entropy of the stop signs against labels 0,…,0,1.
inline double loss_stop(const std::vector<double>& signs, int k) {
  require(k >= 1 && static_cast<int>(signs.size()) == k, "loss_stop: expected k stop signs");
  double sum = 0.0;
  for (int i = 0; i < k; ++i) {
    const double s = signs[i];
    require(s > 0.0 && s < 1.0, "loss_stop: stop sign outside (0,1)");
    sum -= i == k - 1 ? std::log(s) : std::log1p(-s);
  }
  return sum / k;
}

inline double loss_total(double l_r, double l_stop, double alpha = 0.01) { return l_r + alpha * l_stop; }

/// Batch expectation of per-shape (L_r, L_stop) pairs.
inline double loss_total(const std::vector<std::pair<double, double>>& terms, double alpha = 0.01) {
  require(!terms.empty(), "loss_total: empty batch");
  double sum = 0.0;
  for (const auto& [r, s] : terms) sum += loss_total(r, s, alpha);
  return sum / static_cast<double>(terms.size());
}

// Latent table: "PQLT", uint32 count, uint32 dim, then per entry a uint32
// id length, the id bytes and dim float32 values.
using LatentTable = std::vector<std::pair<std::string, Eigen::VectorXf>>;

inline void write_latent_table(const std::filesystem::path& path, const LatentTable& rows) {
  const std::uint32_t dim = rows.empty() ? 0 : static_cast<std::uint32_t>(rows[0].second.size());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    require(static_cast<bool>(out), "cannot write " + path.string());
    out.write("PQLT", 4);
    datakit::detail::put_le(out, static_cast<std::uint32_t>(rows.size()));
    datakit::detail::put_le(out, dim);
    for (const auto& [id, v] : rows) {
      require(v.size() == dim, "write_latent_table: inconsistent latent sizes");
      datakit::detail::put_le(out, static_cast<std::uint32_t>(id.size()));
      out.write(id.data(), static_cast<std::streamsize>(id.size()));
      for (Eigen::Index i = 0; i < v.size(); ++i) datakit::detail::put_le(out, v[i]);
    }
  }
  std::filesystem::rename(tmp, path);
}

inline LatentTable read_latent_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != "PQLT") throw InvalidInput(path.string() + " is not a latent table");
  const auto n = datakit::detail::get_le<std::uint32_t>(in, path.string());
  const auto dim = datakit::detail::get_le<std::uint32_t>(in, path.string());
  LatentTable rows;
  for (std::uint32_t r = 0; r < n; ++r) {
    const auto len = datakit::detail::get_le<std::uint32_t>(in, path.string());
    if (len > 4096) throw InvalidInput("corrupt latent table " + path.string());
    std::string id(len, '\0');
    in.read(id.data(), len);
    Eigen::VectorXf v(dim);
    for (std::uint32_t i = 0; i < dim; ++i) v[i] = datakit::detail::get_le<float>(in, path.string());
    rows.emplace_back(std::move(id), std::move(v));
  }
  return rows;
}

}  // namespace pqnet::seq2seq
