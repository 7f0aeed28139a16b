#pragma once

#include <algorithm>
#include <functional>
#include <numeric>
#include <random>
#include <vector>

#include "pqnet/nn/adam.hpp"
#include "pqnet/partae/model.hpp"

namespace pqnet::partae {

/// Mean squared error between predicted and ground-truth field values.
inline double loss_part(const std::vector<double>& predicted, const std::vector<double>& target) {
  require(!predicted.empty(), "loss_part: empty input");
  require(predicted.size() == target.size(), "loss_part: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double d = predicted[i] - target[i];
    s += d * d;
  }
  return s / static_cast<double>(predicted.size());
}

struct PartAeTrainConfig {
  std::vector<int> stages{16, 32, 64};
  std::vector<int> epochs{100, 100, 100};  // per stage
  int batch_size = 40;
  double lr = 5e-4;
  int points_per_step = 0;  // 0 = every sample point of the stage
  Eigen::Index chunk = 16384;
  std::uint64_t seed = 0;
};

struct LossRecord {
  int epoch;
  int stage;
  double loss;
  bool operator==(const LossRecord&) const = default;
};

/// Encoder input for a progressive stage: the part volume max-pooled to the
/// stage resolution and nearest-neighbour upsampled back to 64³.
inline datakit::VoxelGrid stage_input(const datakit::PartRecord& part, int stage) {
  if (stage == kPartVolume) return part.volume64;
  return datakit::upsample(datakit::downsample(part.volume64, stage), kPartVolume);
}

/// One optimizer step on a batch of parts at a given stage; returns the loss.
template <class S>
double part_ae_step(PartAutoencoder<S>& model, nn::Adam<S>& opt,
                    const std::vector<const datakit::PartRecord*>& batch,
                    const std::vector<datakit::VoxelGrid>& inputs, int stage, int points_per_step,
                    Eigen::Index chunk, nn::Rng& rng) {
  const int code_dim = model.config().code_dim;
  std::vector<const datakit::VoxelGrid*> vols;
  for (const auto& v : inputs) vols.push_back(&v);
  opt.zero_grad();
  const Mat<S> codes = model.encoder().forward(vols, true);

  // Gather (part, point) pairs.
  std::vector<std::pair<int, int>> picks;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& s = batch[b]->samples.at(stage);
    const int n = static_cast<int>(s.points.size());
    if (points_per_step <= 0 || points_per_step >= n) {
      for (int i = 0; i < n; ++i) picks.emplace_back(static_cast<int>(b), i);
    } else {
      std::uniform_int_distribution<int> pick(0, n - 1);
      for (int i = 0; i < points_per_step; ++i) picks.emplace_back(static_cast<int>(b), pick(rng));
    }
  }
  const auto total = static_cast<Eigen::Index>(picks.size());
  Mat<S> dcodes = Mat<S>::Zero(code_dim, codes.cols());
  double loss = 0.0;
  for (Eigen::Index start = 0; start < total; start += chunk) {
    const Eigen::Index n = std::min(chunk, total - start);
    Mat<S> x(code_dim + 3, n);
    Mat<S> target(1, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto [b, i] = picks[static_cast<std::size_t>(start + j)];
      const auto& s = batch[b]->samples.at(stage);
      x.col(j).head(code_dim) = codes.col(b);
      x.col(j).tail(3) = s.points[i].template cast<S>();
      target(0, j) = static_cast<S>(s.values[i]);
    }
    const Mat<S> y = model.decoder().forward(x, true, model.rng());
    const Mat<S> diff = y - target;
    loss += static_cast<double>(diff.squaredNorm());
    const Mat<S> dx = model.decoder().backward(diff * (S(2) / static_cast<S>(total)));
    for (Eigen::Index j = 0; j < n; ++j)
      dcodes.col(picks[static_cast<std::size_t>(start + j)].first) += dx.col(j).head(code_dim);
  }
  model.encoder().backward(dcodes);
  opt.step();
  return loss / static_cast<double>(total);
}

/// Progressive training: each stage trains on supervision points of that
/// resolution. `on_stage_end(stage)` fires after each stage (for checkpoints).
template <class S>
std::vector<LossRecord> train_part_ae(PartAutoencoder<S>& model,
                                      const std::vector<const datakit::PartRecord*>& corpus,
                                      const PartAeTrainConfig& cfg,
                                      const std::function<void(int)>& on_stage_end = {}) {
  require(!corpus.empty(), "train_part_ae: corpus is empty");
  require(cfg.stages.size() == cfg.epochs.size(), "train_part_ae: stages/epochs length mismatch");
  require(cfg.batch_size >= 1, "train_part_ae: batch size must be >= 1");
  for (int stage : cfg.stages)
    for (const auto* p : corpus)
      require(p->samples.count(stage) == 1,
              "train_part_ae: part lacks samples for resolution " + std::to_string(stage));

  nn::Adam<S> opt(model.params(), {cfg.lr});
  nn::Rng rng(derive_seed(cfg.seed, "partae.batches"));
  std::vector<LossRecord> log;
  int epoch_counter = 0;
  for (std::size_t si = 0; si < cfg.stages.size(); ++si) {
    const int stage = cfg.stages[si];
    std::vector<datakit::VoxelGrid> inputs;
    for (const auto* p : corpus) inputs.push_back(stage_input(*p, stage));
    std::vector<int> order(corpus.size());
    for (int e = 0; e < cfg.epochs[si]; ++e) {
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
      double sum = 0.0;
      int batches = 0;
      for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
        const std::size_t end = std::min(order.size(), start + cfg.batch_size);
        std::vector<const datakit::PartRecord*> batch;
        std::vector<datakit::VoxelGrid> batch_inputs;
        for (std::size_t i = start; i < end; ++i) {
          batch.push_back(corpus[order[i]]);
          batch_inputs.push_back(inputs[order[i]]);
        }
        sum += part_ae_step(model, opt, batch, batch_inputs, stage, cfg.points_per_step, cfg.chunk, rng);
        ++batches;
      }
      log.push_back({++epoch_counter, stage, sum / batches});
    }
    if (on_stage_end) on_stage_end(stage);
  }
  return log;
}

/// Evaluation-mode loss over every supervision point of `stage`.
template <class S>
double evaluate_part_loss(PartAutoencoder<S>& model, const std::vector<const datakit::PartRecord*>& parts,
                          int stage) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto* p : parts) {
    const auto input = stage_input(*p, stage);
    const Vec<S> code = model.encode_part(input);
    const auto& s = p->samples.at(stage);
    Eigen::Matrix3Xd pts(3, static_cast<Eigen::Index>(s.points.size()));
    for (std::size_t i = 0; i < s.points.size(); ++i) pts.col(static_cast<Eigen::Index>(i)) = s.points[i].cast<double>();
    const Eigen::VectorXd v = model.decode_points(code, pts);
    for (std::size_t i = 0; i < s.points.size(); ++i) {
      const double d = v[static_cast<Eigen::Index>(i)] - s.values[i];
      sum += d * d;
    }
    n += s.points.size();
  }
  return sum / static_cast<double>(n);
}

/// Occupancy of the decoded field at the cell centres of a resolution³ grid.
template <class S>
datakit::VoxelGrid reconstruct_volume(const PartAutoencoder<S>& model, const Vec<S>& code,
                                      int resolution, double iso = 0.5) {
  datakit::VoxelGrid g(resolution);
  const Lattice lat = sample_lattice(model.field(code), resolution);
  for (int z = 0; z < resolution; ++z)
    for (int y = 0; y < resolution; ++y)
      for (int x = 0; x < resolution; ++x)
        if (lat.at(x + 1, y + 1, z + 1) > iso) g.set(x, y, z);
  return g;
}

}  // namespace pqnet::partae
