#pragma once

#include <memory>
#include <string>
#include <vector>

#include "pqnet/datakit/part.hpp"
#include "pqnet/nn/checkpoint.hpp"
#include "pqnet/nn/conv.hpp"
#include "pqnet/nn/layers.hpp"
#include "pqnet/partae/marching_cubes.hpp"

namespace pqnet::partae {

using nn::Mat;
using nn::Vec;

inline constexpr int kPartVolume = 64;

struct PartAeConfig {
  std::vector<int> encoder_channels{32, 64, 128, 256};
  int code_dim = 128;
  std::vector<int> decoder_hidden{2048, 1024, 512, 256, 128};
  double decoder_dropout = 0.4;
  double leaky_slope = 0.02;

  /// Dropout and input skips apply to every hidden layer but the last.
  int skip_layers() const { return static_cast<int>(decoder_hidden.size()) - 1; }

  void to_meta(std::map<std::string, std::string>& m) const {
    auto join = [](const std::vector<int>& v) {
      std::string s;
      for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
      return s;
    };
    m["partae.encoder_channels"] = join(encoder_channels);
    m["partae.code_dim"] = std::to_string(code_dim);
    m["partae.decoder_hidden"] = join(decoder_hidden);
    m["partae.decoder_dropout"] = std::to_string(decoder_dropout);
    m["partae.leaky_slope"] = std::to_string(leaky_slope);
  }
  static PartAeConfig from_meta(const nn::Checkpoint& ck) {
    auto split = [](const std::string& s) {
      std::vector<int> v;
      std::size_t pos = 0;
      while (pos < s.size()) {
        const auto next = s.find(',', pos);
        v.push_back(std::stoi(s.substr(pos, next - pos)));
        if (next == std::string::npos) break;
        pos = next + 1;
      }
      return v;
    };
    PartAeConfig c;
    c.encoder_channels = split(ck.get("partae.encoder_channels"));
    c.code_dim = ck.get_int("partae.code_dim");
    c.decoder_hidden = split(ck.get("partae.decoder_hidden"));
    c.decoder_dropout = ck.get_double("partae.decoder_dropout");
    c.leaky_slope = ck.get_double("partae.leaky_slope");
    return c;
  }
};

/// 3-D convolutional encoder: 64³ volume -> code in [0,1]^code_dim.
/// Four stride-2 stages (conv, batch norm, leaky rectifier) halve the volume
/// to 4³; a final 4³ convolution with a sigmoid yields the code.
template <class S>
class PartEncoder {
 public:
  PartEncoder() = default;
  PartEncoder(const PartAeConfig& cfg, nn::Rng& rng) : slope_(static_cast<S>(cfg.leaky_slope)) {
    int in = 1;
    for (std::size_t i = 0; i < cfg.encoder_channels.size(); ++i) {
      const std::string name = "encoder.conv" + std::to_string(i);
      convs_.emplace_back(name, nn::ConvGeometry::cubic(in, cfg.encoder_channels[i], 4, 2, 1), rng, false);
      norms_.emplace_back("encoder.bn" + std::to_string(i), cfg.encoder_channels[i]);
      in = cfg.encoder_channels[i];
    }
    const int spatial = kPartVolume >> cfg.encoder_channels.size();
    head_ = nn::Conv<S>("encoder.out", nn::ConvGeometry::cubic(in, cfg.code_dim, spatial, 1, 0), rng);
  }

  static nn::FeatureBatch<S> to_batch(const std::vector<const datakit::VoxelGrid*>& vols) {
    nn::FeatureBatch<S> x;
    x.extent = {kPartVolume, kPartVolume, kPartVolume};
    for (const auto* v : vols) {
      require(v->resolution() == kPartVolume,
              "encode_part: expected a 64^3 volume, got " + std::to_string(v->resolution()));
      Mat<S> m(1, x.extent.volume());
      for (std::size_t i = 0; i < v->size(); ++i) m(0, static_cast<Eigen::Index>(i)) = (*v)[i] ? S(1) : S(0);
      x.maps.push_back(std::move(m));
    }
    return x;
  }

  /// Codes as columns (code_dim x batch).
  Mat<S> forward(const std::vector<const datakit::VoxelGrid*>& vols, bool training) {
    nn::FeatureBatch<S> x = to_batch(vols);
    act_cache_.resize(convs_.size());
    for (std::size_t i = 0; i < convs_.size(); ++i) {
      x = training ? convs_[i].forward(x) : convs_[i].apply(x);
      x = norms_[i].forward(x, training);
      nn::LeakyRelu<S> act(slope_);
      if (training) {
        x = nn::map_forward(act, x, act_cache_[i]);
      } else {
        for (auto& m : x.maps) m = act.apply(m);
      }
    }
    x = training ? head_.forward(x) : head_.apply(x);
    Mat<S> codes = nn::flatten(x);
    return training ? out_act_.forward(codes) : out_act_.apply(codes);
  }

  void backward(const Mat<S>& dcodes) {
    Mat<S> d = out_act_.backward(dcodes);
    nn::FeatureBatch<S> g = nn::unflatten(d, static_cast<int>(d.rows()), nn::Extent3{1, 1, 1});
    g = head_.backward(g);
    for (int i = static_cast<int>(convs_.size()) - 1; i >= 0; --i) {
      g = nn::map_backward(g, act_cache_[i]);
      g = norms_[i].backward(g);
      g = convs_[i].backward(g, i > 0);
    }
  }

  nn::ParamList<S> params() {
    nn::ParamList<S> ps;
    for (std::size_t i = 0; i < convs_.size(); ++i) {
      nn::append(ps, convs_[i].params());
      nn::append(ps, norms_[i].params());
    }
    nn::append(ps, head_.params());
    return ps;
  }

 private:
  S slope_ = S(0.02);
  std::vector<nn::Conv<S>> convs_;
  std::vector<nn::BatchNorm<S>> norms_;
  nn::Conv<S> head_;
  nn::Sigmoid<S> out_act_;
  std::vector<std::vector<Mat<S>>> act_cache_;
};

/// Implicit decoder: (code, point) -> inside probability. Hidden layer l > 0
/// sees [h_{l-1}; code; point]; all hidden layers but the last use dropout.
template <class S>
class ImplicitDecoder {
 public:
  ImplicitDecoder() = default;
  ImplicitDecoder(const PartAeConfig& cfg, nn::Rng& rng)
      : in_dim_(cfg.code_dim + 3), skips_(cfg.skip_layers()) {
    int prev = 0;
    for (std::size_t l = 0; l < cfg.decoder_hidden.size(); ++l) {
      const int in = l == 0 ? in_dim_ : prev + (static_cast<int>(l) <= skips_ ? in_dim_ : 0);
      layers_.emplace_back("decoder.fc" + std::to_string(l), in, cfg.decoder_hidden[l], rng);
      acts_.emplace_back(static_cast<S>(cfg.leaky_slope));
      drops_.emplace_back(static_cast<int>(l) < skips_ ? static_cast<S>(cfg.decoder_dropout) : S(0));
      prev = cfg.decoder_hidden[l];
    }
    out_ = nn::Linear<S>("decoder.out", prev, 1, rng);
  }

  int input_dim() const { return in_dim_; }

  /// Inference path: x is (code_dim + 3) x N. Returns 1 x N probabilities.
  Mat<S> apply(const Mat<S>& x) const {
    Mat<S> h;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const Mat<S> in = l == 0 ? x : (static_cast<int>(l) <= skips_ ? nn::vcat(h, x) : h);
      h = acts_[l].apply(layers_[l].apply(in));
    }
    return out_act_.apply(out_.apply(h));
  }

  Mat<S> forward(const Mat<S>& x, bool training, nn::Rng& rng) {
    Mat<S> h;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const Mat<S> in = l == 0 ? x : (static_cast<int>(l) <= skips_ ? nn::vcat(h, x) : h);
      h = drops_[l].forward(acts_[l].forward(layers_[l].forward(in)), training, rng);
    }
    return out_act_.forward(out_.forward(h));
  }

  /// Returns the gradient with respect to the decoder input.
  Mat<S> backward(const Mat<S>& dy) {
    Mat<S> dh = out_.backward(out_act_.backward(dy));
    Mat<S> dx = Mat<S>::Zero(in_dim_, dy.cols());
    for (int l = static_cast<int>(layers_.size()) - 1; l >= 0; --l) {
      Mat<S> din = layers_[l].backward(acts_[l].backward(drops_[l].backward(dh)));
      if (l == 0) {
        dx += din;
      } else if (l <= skips_) {
        const auto prev = din.rows() - in_dim_;
        dx += din.bottomRows(in_dim_);
        dh = din.topRows(prev);
      } else {
        dh = std::move(din);
      }
    }
    return dx;
  }

  nn::ParamList<S> params() {
    nn::ParamList<S> ps;
    for (auto& l : layers_) nn::append(ps, l.params());
    nn::append(ps, out_.params());
    return ps;
  }

 private:
  int in_dim_ = 0;
  int skips_ = 0;
  std::vector<nn::Linear<S>> layers_;
  std::vector<nn::LeakyRelu<S>> acts_;
  std::vector<nn::Dropout<S>> drops_;
  nn::Linear<S> out_;
  nn::Sigmoid<S> out_act_;
};

/// Part geometry autoencoder (encoder + implicit decoder).
template <class S = float>
class PartAutoencoder {
 public:
  PartAutoencoder() = default;
  PartAutoencoder(const PartAeConfig& cfg, std::uint64_t seed) : cfg_(cfg), rng_(seed) {
    encoder_ = PartEncoder<S>(cfg, rng_);
    decoder_ = ImplicitDecoder<S>(cfg, rng_);
  }

  const PartAeConfig& config() const { return cfg_; }
  PartEncoder<S>& encoder() { return encoder_; }
  ImplicitDecoder<S>& decoder() { return decoder_; }
  const ImplicitDecoder<S>& decoder() const { return decoder_; }
  nn::Rng& rng() { return rng_; }

  /// Evaluation-mode codes for 64³ volumes (code_dim x batch).
  Mat<S> encode(const std::vector<const datakit::VoxelGrid*>& vols) {
    return encoder_.forward(vols, false);
  }

  Vec<S> encode_part(const datakit::VoxelGrid& vol) { return encode({&vol}).col(0); }

  /// Field values of `code` at points (3 x N, in [0,1]³).
  Eigen::VectorXd decode_points(const Vec<S>& code, const Eigen::Matrix3Xd& pts,
                                Eigen::Index chunk = 16384) const {
    require(code.size() == cfg_.code_dim, "decode: code has the wrong dimension");
    Eigen::VectorXd out(pts.cols());
    for (Eigen::Index start = 0; start < pts.cols(); start += chunk) {
      const Eigen::Index n = std::min(chunk, pts.cols() - start);
      Mat<S> x(cfg_.code_dim + 3, n);
      x.topRows(cfg_.code_dim) = code.replicate(1, n);
      x.bottomRows(3) = pts.middleCols(start, n).template cast<S>();
      out.segment(start, n) = decoder_.apply(x).row(0).transpose().template cast<double>();
    }
    return out;
  }

  double decode_point(const Vec<S>& code, const Vec3& p) const {
    require((p.array() >= 0.0).all() && (p.array() <= 1.0).all(),
            "decode_point: point outside the unit cube");
    return decode_points(code, p)(0);
  }

  FieldFn field(const Vec<S>& code) const {
    return [this, code](const Eigen::Matrix3Xd& pts) { return decode_points(code, pts); };
  }

  nn::ParamList<S> params() {
    nn::ParamList<S> ps = encoder_.params();
    nn::append(ps, decoder_.params());
    return ps;
  }

  nn::Checkpoint to_checkpoint() {
    nn::Checkpoint ck;
    ck.meta["kind"] = "partae";
    cfg_.to_meta(ck.meta);
    ck.store(params());
    return ck;
  }

  static PartAutoencoder from_checkpoint(const nn::Checkpoint& ck) {
    if (ck.meta.count("kind") && ck.get("kind") != "partae")
      throw InvalidInput("checkpoint is not a part autoencoder");
    PartAutoencoder m(PartAeConfig::from_meta(ck), 0);
    ck.restore(m.params());
    return m;
  }

 private:
  PartAeConfig cfg_;
  nn::Rng rng_;
  PartEncoder<S> encoder_;
  ImplicitDecoder<S> decoder_;
};

/// Marching-cubes mesh of a decoded part in its local unit cube.
template <class S>
Mesh extract_part_mesh(const PartAutoencoder<S>& model, const Vec<S>& code, int resolution,
                       double iso = 0.5) {
  require(resolution == 32 || resolution == 64 || resolution == 128 || resolution == 256,
          "extract_part_mesh: resolution must be 32, 64, 128 or 256");
  return extract_field_mesh(model.field(code), resolution, iso);
}

}  // namespace pqnet::partae
