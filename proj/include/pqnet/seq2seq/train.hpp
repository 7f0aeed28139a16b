#pragma once

#include <algorithm>
#include <functional>
#include <numeric>
#include <random>

#include "pqnet/nn/adam.hpp"
#include "pqnet/partae/model.hpp"
#include "pqnet/seq2seq/model.hpp"

namespace pqnet::seq2seq {

/// A training sequence: one shape's step vectors.
struct ShapeSequence {
  std::string shape_id;
  std::vector<StepVector> steps;
};

/// Encodes every part with the (frozen) part autoencoder and packs the steps.
template <class S>
std::vector<ShapeSequence> build_sequences(partae::PartAutoencoder<S>& partae,
                                           const std::vector<datakit::ShapeRecord>& shapes, int k_max) {
  std::vector<ShapeSequence> out;
  for (const auto& shape : shapes) {
    require(static_cast<int>(shape.parts.size()) <= k_max,
            "shape " + shape.shape_id + " has more than K_max parts");
    std::vector<const datakit::VoxelGrid*> vols;
    for (const auto& p : shape.parts) vols.push_back(&p.volume64);
    const Mat<S> codes = partae.encode(vols);
    std::vector<Eigen::VectorXd> gs;
    for (Eigen::Index i = 0; i < codes.cols(); ++i) gs.push_back(codes.col(i).template cast<double>());
    out.push_back({shape.shape_id, assemble_step_vectors(shape, gs, k_max)});
  }
  return out;
}

struct LossTerms {
  double reconstruction = 0.0;
  double stop = 0.0;
};

struct Seq2SeqLossWeights {
  double alpha = 0.01;
  double beta = 1.0;
};

/// Forward pass over a padded batch. Returns per-shape loss terms and, when
/// `backprop` is set, accumulates gradients of the batch-mean total loss.
/// `input` is what the encoder sees (a corrupted copy for completion or
/// denoising); `batch` holds the decoder targets.
template <class S>
std::vector<LossTerms> seq2seq_forward(Seq2Seq<S>& model, const SeqBatch<S>& input, const SeqBatch<S>& batch,
                                       Seq2SeqLossWeights w, bool training, bool backprop) {
  const auto& cfg = model.config();
  const int B = batch.size(), C = cfg.code_dim;
  require(input.size() == B, "seq2seq_forward: input and target batches differ in size");
  const Mat<S> hz = model.encode_batch(input, training);
  const DecoderOutput<S> out = model.decode_teacher(hz, batch, training);
  std::vector<LossTerms> terms(B);
  Mat<S> dg = Mat<S>::Zero(out.g.rows(), out.g.cols());
  Mat<S> db = Mat<S>::Zero(out.b.rows(), out.b.cols());
  Mat<S> ds = Mat<S>::Zero(1, out.stop_logit.cols());
  for (int b = 0; b < B; ++b) {
    const int k = batch.lengths[b];
    const S scale = S(1) / static_cast<S>(k * B);
    for (int t = 0; t < k; ++t) {
      const auto col = static_cast<Eigen::Index>(t) * B + b;
      const auto truth = batch.steps[t].col(b);
      const Vec<S> eg = out.g.col(col) - truth.head(C);
      const Vec<S> eb = out.b.col(col) - truth.segment(C, kBoxDim);
      terms[b].reconstruction += w.beta * static_cast<double>(eg.squaredNorm()) + static_cast<double>(eb.squaredNorm());
      const double logit = static_cast<double>(out.stop_logit(0, col));
      const double label = t == k - 1 ? 1.0 : 0.0;
      // Cross entropy from the logit: softplus(l) - label * l.
      terms[b].stop += std::max(logit, 0.0) + std::log1p(std::exp(-std::abs(logit))) - label * logit;
      if (backprop) {
        dg.col(col) = eg * (S(2) * static_cast<S>(w.beta) * scale);
        db.col(col) = eb * (S(2) * scale);
        const double p = 1.0 / (1.0 + std::exp(-logit));
        ds(0, col) = static_cast<S>(w.alpha * (p - label)) * scale;
      }
    }
    terms[b].reconstruction /= k;
    terms[b].stop /= k;
  }
  if (backprop) model.encode_backward(model.decode_backward(dg, db, ds));
  return terms;
}

template <class S>
std::vector<LossTerms> seq2seq_forward(Seq2Seq<S>& model, const SeqBatch<S>& batch, Seq2SeqLossWeights w,
                                       bool training, bool backprop) {
  return seq2seq_forward(model, batch, batch, w, training, backprop);
}

/// Maps a target sequence to the encoder input (identity when unset).
using InputTransform = std::function<std::vector<StepVector>(const std::vector<StepVector>&, nn::Rng&)>;

inline double batch_loss(const std::vector<LossTerms>& terms, double alpha) {
  double sum = 0.0;
  for (const auto& t : terms) sum += loss_total(t.reconstruction, t.stop, alpha);
  return sum / static_cast<double>(terms.size());
}

struct Seq2SeqTrainConfig {
  int epochs = 1000;
  int batch_size = 64;
  double lr = 1e-3;
  Seq2SeqLossWeights weights{};
  std::uint64_t seed = 0;
};

struct Seq2SeqLossRecord {
  int epoch;
  double loss;
  double reconstruction;
  double stop;
  bool operator==(const Seq2SeqLossRecord&) const = default;
};

template <class S>
std::vector<Seq2SeqLossRecord> train_seq2seq(Seq2Seq<S>& model, const std::vector<ShapeSequence>& corpus,
                                             const Seq2SeqTrainConfig& cfg,
                                             const std::function<void(const Seq2SeqLossRecord&)>& on_epoch = {},
                                             const InputTransform& corrupt = {}) {
  require(!corpus.empty(), "train_seq2seq: corpus is empty");
  require(cfg.batch_size >= 1, "train_seq2seq: batch size must be >= 1");
  for (const auto& s : corpus) {
    require(!s.steps.empty(), "train_seq2seq: shape " + s.shape_id + " has no parts");
    require(static_cast<int>(s.steps.size()) <= model.config().k_max,
            "train_seq2seq: shape " + s.shape_id + " exceeds K_max parts");
  }
  nn::Adam<S> opt(model.params(), {cfg.lr});
  nn::Rng rng(derive_seed(cfg.seed, "seq2seq.batches"));
  std::vector<int> order(corpus.size());
  std::vector<Seq2SeqLossRecord> log;
  for (int e = 1; e <= cfg.epochs; ++e) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    Seq2SeqLossRecord rec{e, 0.0, 0.0, 0.0};
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<const std::vector<StepVector>*> seqs;
      for (std::size_t i = start; i < end; ++i) seqs.push_back(&corpus[order[i]].steps);
      const auto batch = make_batch<S>(seqs, model.config().step_dim());
      opt.zero_grad();
      std::vector<LossTerms> terms;
      if (corrupt) {
        std::vector<std::vector<StepVector>> inputs;
        for (const auto* s : seqs) inputs.push_back(corrupt(*s, rng));
        std::vector<const std::vector<StepVector>*> in_ptrs;
        for (const auto& s : inputs) in_ptrs.push_back(&s);
        terms = seq2seq_forward(model, make_batch<S>(in_ptrs, model.config().step_dim()), batch, cfg.weights,
                                true, true);
      } else {
        terms = seq2seq_forward(model, batch, cfg.weights, true, true);
      }
      opt.step();
      double r = 0, s = 0;
      for (const auto& t : terms) r += t.reconstruction, s += t.stop;
      rec.reconstruction += r / terms.size();
      rec.stop += s / terms.size();
      rec.loss += batch_loss(terms, cfg.weights.alpha);
      ++batches;
    }
    rec.loss /= batches;
    rec.reconstruction /= batches;
    rec.stop /= batches;
    log.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return log;
}

struct Seq2SeqEval {
  double step_count_accuracy = 0.0;  // fraction of shapes decoded with the right part count
  double box_mse = 0.0;              // over the overlapping steps, per box component
  double code_mse = 0.0;
};

/// Encode, then decode autoregressively (evaluation mode) and compare.
template <class S>
Seq2SeqEval evaluate_seq2seq(Seq2Seq<S>& model, const std::vector<ShapeSequence>& corpus) {
  Seq2SeqEval ev;
  std::size_t right = 0, box_terms = 0, code_terms = 0;
  const int C = model.config().code_dim;
  for (const auto& s : corpus) {
    const auto hz = model.encode_sequence(s.steps);
    const auto dec = model.decode_sequence(hz, model.config().k_max);
    right += dec.size() == s.steps.size();
    for (std::size_t t = 0; t < std::min(dec.size(), s.steps.size()); ++t) {
      for (int i = 0; i < kBoxDim; ++i) ev.box_mse += std::pow(dec[t].b[i] - s.steps[t][C + i], 2);
      ev.code_mse += (dec[t].g - s.steps[t].head(C)).squaredNorm();
      box_terms += kBoxDim;
      code_terms += C;
    }
  }
  ev.step_count_accuracy = static_cast<double>(right) / corpus.size();
  ev.box_mse /= std::max<std::size_t>(box_terms, 1);
  ev.code_mse /= std::max<std::size_t>(code_terms, 1);
  return ev;
}

}  // namespace pqnet::seq2seq
