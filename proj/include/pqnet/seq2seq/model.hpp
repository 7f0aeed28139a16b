#pragma once

#include <map>
#include <string>
#include <vector>

#include "pqnet/nn/checkpoint.hpp"
#include "pqnet/nn/gru.hpp"
#include "pqnet/nn/layers.hpp"
#include "pqnet/seq2seq/step.hpp"

namespace pqnet::seq2seq {

using nn::Mat;
using nn::RowVec;
using nn::Vec;

struct Seq2SeqConfig {
  int code_dim = 128;
  int k_max = kDefaultKMax;
  int enc_hidden = 256;  // decoder layers are twice as wide
  int geo_hidden = 256;
  int box_hidden = 128;
  int stop_hidden = 128;
  double dropout = 0.2;
  double leaky_slope = 0.01;

  int step_dim() const { return code_dim + kBoxDim + k_max; }
  int dec_input() const { return code_dim + kBoxDim; }
  int dec_hidden() const { return 2 * enc_hidden; }
  int latent_dim() const { return 4 * enc_hidden; }

  void to_meta(std::map<std::string, std::string>& m) const {
    m["seq2seq.code_dim"] = std::to_string(code_dim);
    m["seq2seq.k_max"] = std::to_string(k_max);
    m["seq2seq.enc_hidden"] = std::to_string(enc_hidden);
    m["seq2seq.geo_hidden"] = std::to_string(geo_hidden);
    m["seq2seq.box_hidden"] = std::to_string(box_hidden);
    m["seq2seq.stop_hidden"] = std::to_string(stop_hidden);
    m["seq2seq.dropout"] = std::to_string(dropout);
    m["seq2seq.leaky_slope"] = std::to_string(leaky_slope);
  }
  static Seq2SeqConfig from_meta(const nn::Checkpoint& ck) {
    Seq2SeqConfig c;
    c.code_dim = ck.get_int("seq2seq.code_dim");
    c.k_max = ck.get_int("seq2seq.k_max");
    c.enc_hidden = ck.get_int("seq2seq.enc_hidden");
    c.geo_hidden = ck.get_int("seq2seq.geo_hidden");
    c.box_hidden = ck.get_int("seq2seq.box_hidden");
    c.stop_hidden = ck.get_int("seq2seq.stop_hidden");
    c.dropout = ck.get_double("seq2seq.dropout");
    c.leaky_slope = ck.get_double("seq2seq.leaky_slope");
    return c;
  }
};

/// Padded batch of step-vector sequences; column b of every matrix is shape b.
template <class S>
struct SeqBatch {
  std::vector<Mat<S>> steps;         // T entries of step_dim x B
  std::vector<RowVec<S>> masks;      // 1 where t < length
  std::vector<int> lengths;

  int size() const { return static_cast<int>(lengths.size()); }
  int max_len() const { return static_cast<int>(steps.size()); }
};

template <class S>
SeqBatch<S> make_batch(const std::vector<const std::vector<StepVector>*>& seqs, int step_dim) {
  require(!seqs.empty(), "make_batch: empty batch");
  SeqBatch<S> batch;
  int T = 0;
  for (const auto* s : seqs) {
    require(!s->empty(), "encode_sequence: empty sequence");
    T = std::max(T, static_cast<int>(s->size()));
    batch.lengths.push_back(static_cast<int>(s->size()));
  }
  const auto B = static_cast<Eigen::Index>(seqs.size());
  batch.steps.assign(T, Mat<S>::Zero(step_dim, B));
  batch.masks.assign(T, RowVec<S>::Zero(B));
  for (Eigen::Index b = 0; b < B; ++b)
    for (int t = 0; t < batch.lengths[b]; ++t) {
      const auto& v = (*seqs[b])[t];
      require(v.size() == step_dim, "make_batch: step vector has the wrong length");
      batch.steps[t].col(b) = v.cast<S>();
      batch.masks[t](b) = S(1);
    }
  return batch;
}

/// Per-step head outputs of the decoder for a batch (columns t * B + b).
template <class S>
struct DecoderOutput {
  Mat<S> g, b, stop_logit;
};

template <class S>
Mat<S> hcat(const std::vector<Mat<S>>& ms) {
  Eigen::Index cols = 0;
  for (const auto& m : ms) cols += m.cols();
  Mat<S> out(ms.front().rows(), cols);
  Eigen::Index c = 0;
  for (const auto& m : ms) {
    out.middleCols(c, m.cols()) = m;
    c += m.cols();
  }
  return out;
}

template <class S>
std::vector<Mat<S>> hsplit(const Mat<S>& m, int parts) {
  const auto w = m.cols() / parts;
  std::vector<Mat<S>> out;
  for (int i = 0; i < parts; ++i) out.push_back(m.middleCols(i * w, w));
  return out;
}

/// Bidirectional 2-layer recurrent encoder, 2-layer recurrent decoder with
/// geometry / box / stop heads.
template <class S = float>
class Seq2Seq {
 public:
  Seq2Seq() = default;
  Seq2Seq(const Seq2SeqConfig& cfg, std::uint64_t seed) : cfg_(cfg), rng_(seed) {
    const int H = cfg.enc_hidden, D = cfg.dec_hidden();
    enc_f1_ = nn::GruLayer<S>("encoder.l0.fwd", cfg.step_dim(), H, rng_);
    enc_b1_ = nn::GruLayer<S>("encoder.l0.bwd", cfg.step_dim(), H, rng_);
    enc_f2_ = nn::GruLayer<S>("encoder.l1.fwd", 2 * H, H, rng_);
    enc_b2_ = nn::GruLayer<S>("encoder.l1.bwd", 2 * H, H, rng_);
    dec0_ = nn::GruLayer<S>("decoder.l0", cfg.dec_input(), D, rng_);
    dec1_ = nn::GruLayer<S>("decoder.l1", D, D, rng_);
    geo1_ = nn::Linear<S>("head.geo.fc0", D, cfg.geo_hidden, rng_);
    geo2_ = nn::Linear<S>("head.geo.fc1", cfg.geo_hidden, cfg.code_dim, rng_);
    box1_ = nn::Linear<S>("head.box.fc0", D, cfg.box_hidden, rng_);
    box2_ = nn::Linear<S>("head.box.fc1", cfg.box_hidden, kBoxDim, rng_);
    stop1_ = nn::Linear<S>("head.stop.fc0", D, cfg.stop_hidden, rng_);
    stop2_ = nn::Linear<S>("head.stop.fc1", cfg.stop_hidden, 1, rng_);
    geo_act_ = nn::LeakyRelu<S>(static_cast<S>(cfg.leaky_slope));
    box_act_ = nn::LeakyRelu<S>(S(0));
    stop_act_ = nn::LeakyRelu<S>(S(0));
  }

  const Seq2SeqConfig& config() const { return cfg_; }
  nn::Rng& rng() { return rng_; }
  nn::Linear<S>& stop_output() { return stop2_; }

  // ---- encoder ----

  /// h_z = [fwd_l0; bwd_l0; fwd_l1; bwd_l1] per column (latent_dim x B).
  Mat<S> encode_batch(const SeqBatch<S>& batch, bool training) {
    const int T = batch.max_len(), H = cfg_.enc_hidden;
    const Mat<S> zero = Mat<S>::Zero(H, batch.size());
    const auto f1 = enc_f1_.forward(batch.steps, zero, batch.masks, false);
    const auto b1 = enc_b1_.forward(batch.steps, zero, batch.masks, true);
    std::vector<Mat<S>> mid(T);
    enc_drop_masks_.assign(T, nn::Dropout<S>(static_cast<S>(cfg_.dropout)));
    for (int t = 0; t < T; ++t) mid[t] = enc_drop_masks_[t].forward(nn::vcat(f1[t], b1[t]), training, rng_);
    const auto f2 = enc_f2_.forward(mid, zero, batch.masks, false);
    const auto b2 = enc_b2_.forward(mid, zero, batch.masks, true);
    Mat<S> hz(4 * H, batch.size());
    hz << f1[T - 1], b1[0], f2[T - 1], b2[0];
    enc_T_ = T;
    return hz;
  }

  void encode_backward(const Mat<S>& dhz) {
    const int T = enc_T_, H = cfg_.enc_hidden;
    Mat<S> dh0;
    const auto dmid_f = enc_f2_.backward({}, dhz.middleRows(2 * H, H), dh0);
    const auto dmid_b = enc_b2_.backward({}, dhz.middleRows(3 * H, H), dh0);
    std::vector<Mat<S>> df1(T), db1(T);
    for (int t = 0; t < T; ++t) {
      const Mat<S> d = enc_drop_masks_[t].backward(dmid_f[t] + dmid_b[t]);
      df1[t] = d.topRows(H);
      db1[t] = d.bottomRows(H);
    }
    enc_f1_.backward(df1, dhz.topRows(H), dh0);
    enc_b1_.backward(db1, dhz.middleRows(H, H), dh0);
  }

  /// Evaluation-mode shape latent.
  Vec<S> encode_sequence(const std::vector<StepVector>& steps) {
    require(!steps.empty(), "encode_sequence: empty sequence");
    require(static_cast<int>(steps.size()) <= cfg_.k_max, "encode_sequence: sequence longer than K_max");
    return encode_batch(make_batch<S>({&steps}, cfg_.step_dim()), false).col(0);
  }

  // ---- decoder (teacher forcing) ----

  DecoderOutput<S> decode_teacher(const Mat<S>& hz, const SeqBatch<S>& batch, bool training) {
    const int T = batch.max_len(), D = cfg_.dec_hidden();
    const auto B = batch.size();
    std::vector<Mat<S>> xs(T);
    xs[0] = Mat<S>::Zero(cfg_.dec_input(), B);
    for (int t = 1; t < T; ++t) xs[t] = batch.steps[t - 1].topRows(cfg_.dec_input());
    const auto hs0 = dec0_.forward(xs, hz.topRows(D), batch.masks, false);
    std::vector<Mat<S>> mid(T);
    dec_drop_masks_.assign(T, nn::Dropout<S>(static_cast<S>(cfg_.dropout)));
    for (int t = 0; t < T; ++t) mid[t] = dec_drop_masks_[t].forward(hs0[t], training, rng_);
    const auto hs1 = dec1_.forward(mid, hz.bottomRows(D), batch.masks, false);
    dec_T_ = T;
    const Mat<S> HS = hcat(hs0), HG = hcat(hs1);
    DecoderOutput<S> out;
    out.g = geo2_.forward(geo_act_.forward(geo1_.forward(HG)));
    out.b = box2_.forward(box_act_.forward(box1_.forward(HS)));
    out.stop_logit = stop2_.forward(stop_act_.forward(stop1_.forward(HS)));
    return out;
  }

  /// Returns d h_z given gradients of the stacked head outputs.
  Mat<S> decode_backward(const Mat<S>& dg, const Mat<S>& db, const Mat<S>& dstop) {
    const int T = dec_T_, D = cfg_.dec_hidden();
    const Mat<S> dHG = geo1_.backward(geo_act_.backward(geo2_.backward(dg)));
    Mat<S> dHS = box1_.backward(box_act_.backward(box2_.backward(db)));
    dHS += stop1_.backward(stop_act_.backward(stop2_.backward(dstop)));
    Mat<S> dh1, dh0;
    const auto dmid = dec1_.backward(hsplit(dHG, T), Mat<S>::Zero(D, dg.cols() / T), dh1);
    auto dhs0 = hsplit(dHS, T);
    for (int t = 0; t < T; ++t) dhs0[t] += dec_drop_masks_[t].backward(dmid[t]);
    dec0_.backward(dhs0, Mat<S>::Zero(D, dg.cols() / T), dh0);
    return nn::vcat(dh0, dh1);
  }

  // ---- inference ----

  struct DecodeOptions {
    int max_steps = kDefaultKMax;
    int min_steps = 1;  // stop signs are ignored before this many steps
  };

  std::vector<DecodedStep> decode_sequence(const Vec<S>& hz, DecodeOptions opt) const {
    require(hz.size() == cfg_.latent_dim(), "decode_sequence: latent has the wrong dimension");
    require(opt.max_steps >= 1, "decode_sequence: max_steps must be >= 1");
    const int D = cfg_.dec_hidden();
    Mat<S> h0 = hz.head(D), h1 = hz.tail(D);
    Mat<S> x = Mat<S>::Zero(cfg_.dec_input(), 1);
    std::vector<DecodedStep> out;
    while (true) {
      h0 = dec0_.step(x, h0);
      h1 = dec1_.step(h0, h1);
      const Mat<S> g = geo2_.apply(geo_act_.apply(geo1_.apply(h1)));
      const Mat<S> b = box2_.apply(box_act_.apply(box1_.apply(h0)));
      const S logit = stop2_.apply(stop_act_.apply(stop1_.apply(h0)))(0, 0);
      DecodedStep st;
      st.g = g.col(0).template cast<double>();
      for (int i = 0; i < kBoxDim; ++i) st.b[i] = static_cast<double>(b(i, 0));
      st.s = 1.0 / (1.0 + std::exp(-static_cast<double>(logit)));
      out.push_back(st);
      const int n = static_cast<int>(out.size());
      if (n >= opt.max_steps || (n >= opt.min_steps && st.s > 0.5)) break;
      x = nn::vcat(g, b);
    }
    return out;
  }

  std::vector<DecodedStep> decode_sequence(const Vec<S>& hz, int max_steps) const {
    return decode_sequence(hz, DecodeOptions{max_steps, 1});
  }

  nn::ParamList<S> encoder_params() {
    nn::ParamList<S> ps;
    for (auto* g : {&enc_f1_, &enc_b1_, &enc_f2_, &enc_b2_}) nn::append(ps, g->params());
    return ps;
  }
  nn::ParamList<S> decoder_params() {
    nn::ParamList<S> ps;
    for (auto* g : {&dec0_, &dec1_}) nn::append(ps, g->params());
    for (auto* l : {&geo1_, &geo2_, &box1_, &box2_, &stop1_, &stop2_}) nn::append(ps, l->params());
    return ps;
  }
  nn::ParamList<S> stop_head_params() {
    nn::ParamList<S> ps = stop1_.params();
    nn::append(ps, stop2_.params());
    return ps;
  }
  nn::ParamList<S> params() {
    nn::ParamList<S> ps = encoder_params();
    nn::append(ps, decoder_params());
    return ps;
  }

  nn::Checkpoint to_checkpoint() {
    nn::Checkpoint ck;
    ck.meta["kind"] = "seq2seq";
    cfg_.to_meta(ck.meta);
    ck.store(params());
    return ck;
  }

  static Seq2Seq from_checkpoint(const nn::Checkpoint& ck) {
    if (ck.meta.count("kind") && ck.get("kind") != "seq2seq")
      throw InvalidInput("checkpoint is not a sequence model");
    Seq2Seq m(Seq2SeqConfig::from_meta(ck), 0);
    ck.restore(m.params());
    return m;
  }

 private:
  Seq2SeqConfig cfg_;
  nn::Rng rng_;
  nn::GruLayer<S> enc_f1_, enc_b1_, enc_f2_, enc_b2_, dec0_, dec1_;
  nn::Linear<S> geo1_, geo2_, box1_, box2_, stop1_, stop2_;
  nn::LeakyRelu<S> geo_act_{S(0.01)}, box_act_{S(0)}, stop_act_{S(0)};
  std::vector<nn::Dropout<S>> enc_drop_masks_, dec_drop_masks_;
  int enc_T_ = 0, dec_T_ = 0;
};

}  // namespace pqnet::seq2seq
