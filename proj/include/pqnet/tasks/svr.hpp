#pragma once

#include <algorithm>
#include <memory>
#include <numeric>
#include <random>
#include <vector>

#include "pqnet/datakit/render.hpp"
#include "pqnet/metrics/metrics.hpp"
#include "pqnet/nn/adam.hpp"
#include "pqnet/nn/checkpoint.hpp"
#include "pqnet/nn/conv.hpp"
#include "pqnet/nn/layers.hpp"
#include "pqnet/seq2seq/model.hpp"

namespace pqnet::tasks {

using nn::FeatureBatch;
using nn::Mat;
using nn::Vec;

enum class SvrBranch { kDepth, kRgb };

inline std::string to_string(SvrBranch b) { return b == SvrBranch::kDepth ? "depth" : "rgb"; }
inline SvrBranch parse_branch(const std::string& s) {
  if (s == "depth") return SvrBranch::kDepth;
  if (s == "rgb") return SvrBranch::kRgb;
  throw InvalidInput("unknown image branch '" + s + "'");
}

struct SvrConfig {
  SvrBranch branch = SvrBranch::kDepth;
  int latent_dim = 1024;
  int image_size = datakit::kImageSize;
  std::vector<int> depth_channels{64, 128, 256, 512};
  int resnet_width = 64;

  void to_meta(std::map<std::string, std::string>& m) const {
    m["svr.branch"] = to_string(branch);
    m["svr.latent_dim"] = std::to_string(latent_dim);
    m["svr.image_size"] = std::to_string(image_size);
    std::string ch;
    for (std::size_t i = 0; i < depth_channels.size(); ++i) ch += (i ? "," : "") + std::to_string(depth_channels[i]);
    m["svr.depth_channels"] = ch;
    m["svr.resnet_width"] = std::to_string(resnet_width);
  }
  static SvrConfig from_meta(const nn::Checkpoint& ck) {
    SvrConfig c;
    c.branch = parse_branch(ck.get("svr.branch"));
    c.latent_dim = ck.get_int("svr.latent_dim");
    c.image_size = ck.get_int("svr.image_size");
    c.depth_channels.clear();
    const std::string s = ck.get("svr.depth_channels");
    for (std::size_t pos = 0; pos < s.size();) {
      const auto next = s.find(',', pos);
      c.depth_channels.push_back(std::stoi(s.substr(pos, next - pos)));
      if (next == std::string::npos) break;
      pos = next + 1;
    }
    c.resnet_width = ck.get_int("svr.resnet_width");
    return c;
  }
};

/// Convolution, batch norm and (optionally) a rectifier.
template <class S>
class ConvBn {
 public:
  ConvBn() = default;
  ConvBn(const std::string& name, const nn::ConvGeometry& g, nn::Rng& rng, bool relu = true)
      : conv_(name + ".conv", g, rng, false), norm_(name + ".bn", g.out_channels), relu_(relu) {}

  FeatureBatch<S> forward(const FeatureBatch<S>& x, bool training) {
    FeatureBatch<S> y = training ? conv_.forward(x) : conv_.apply(x);
    y = norm_.forward(y, training);
    if (!relu_) return y;
    nn::LeakyRelu<S> act(S(0));
    if (training) return nn::map_forward(act, y, cache_);
    for (auto& m : y.maps) m = act.apply(m);
    return y;
  }

  FeatureBatch<S> backward(const FeatureBatch<S>& dy, bool need_input_grad = true) {
    FeatureBatch<S> g = relu_ ? nn::map_backward(dy, cache_) : dy;
    return conv_.backward(norm_.backward(g), need_input_grad);
  }

  nn::ParamList<S> params() {
    nn::ParamList<S> ps = conv_.params();
    nn::append(ps, norm_.params());
    return ps;
  }

 private:
  nn::Conv<S> conv_;
  nn::BatchNorm<S> norm_;
  bool relu_ = true;
  std::vector<Mat<S>> cache_;
};

/// Image → latent regressor.
template <class S>
class ImageEncoder {
 public:
  virtual ~ImageEncoder() = default;
  /// Latents as columns.
  virtual Mat<S> forward(const FeatureBatch<S>& x, bool training) = 0;
  virtual void backward(const Mat<S>& dlatent) = 0;
  virtual nn::ParamList<S> params() = 0;
};

/// Four stride-2 convolutions (k4, p1) with batch norm and rectifiers, then a
/// linear map to the latent.
template <class S>
class DepthEncoder final : public ImageEncoder<S> {
 public:
  DepthEncoder(const SvrConfig& cfg, nn::Rng& rng) {
    int in = 1, size = cfg.image_size;
    for (std::size_t i = 0; i < cfg.depth_channels.size(); ++i) {
      blocks_.emplace_back("svr.depth" + std::to_string(i),
                           nn::ConvGeometry::planar(in, cfg.depth_channels[i], 4, 2, 1), rng);
      in = cfg.depth_channels[i];
      size /= 2;
    }
    channels_ = in;
    extent_ = {1, size, size};
    fc_ = nn::Linear<S>("svr.depth_fc", in * size * size, cfg.latent_dim, rng);
  }

  Mat<S> forward(const FeatureBatch<S>& x, bool training) override {
    FeatureBatch<S> h = x;
    for (auto& b : blocks_) h = b.forward(h, training);
    const Mat<S> f = nn::flatten(h);
    return training ? fc_.forward(f) : fc_.apply(f);
  }

  void backward(const Mat<S>& d) override {
    FeatureBatch<S> g = nn::unflatten(fc_.backward(d), channels_, extent_);
    for (int i = static_cast<int>(blocks_.size()) - 1; i >= 0; --i) g = blocks_[i].backward(g, i > 0);
  }

  nn::ParamList<S> params() override {
    nn::ParamList<S> ps;
    for (auto& b : blocks_) nn::append(ps, b.params());
    nn::append(ps, fc_.params());
    return ps;
  }

 private:
  std::vector<ConvBn<S>> blocks_;
  nn::Linear<S> fc_;
  int channels_ = 0;
  nn::Extent3 extent_;
};

/// Two 3x3 convolutions with an identity (or 1x1 projection) shortcut.
template <class S>
class BasicBlock {
 public:
  BasicBlock(const std::string& name, int in, int out, int stride, nn::Rng& rng)
      : a_(name + ".a", nn::ConvGeometry::planar(in, out, 3, stride, 1), rng),
        b_(name + ".b", nn::ConvGeometry::planar(out, out, 3, 1, 1), rng, false) {
    if (stride != 1 || in != out) {
      proj_ = std::make_unique<ConvBn<S>>(name + ".proj", nn::ConvGeometry::planar(in, out, 1, stride, 0), rng, false);
    }
  }

  FeatureBatch<S> forward(const FeatureBatch<S>& x, bool training) {
    FeatureBatch<S> y = b_.forward(a_.forward(x, training), training);
    y = nn::add(y, proj_ ? proj_->forward(x, training) : x);
    nn::LeakyRelu<S> act(S(0));
    if (training) return nn::map_forward(act, y, cache_);
    for (auto& m : y.maps) m = act.apply(m);
    return y;
  }

  FeatureBatch<S> backward(const FeatureBatch<S>& dy) {
    const FeatureBatch<S> g = nn::map_backward(dy, cache_);
    FeatureBatch<S> dx = a_.backward(b_.backward(g));
    return nn::add(dx, proj_ ? proj_->backward(g) : g);
  }

  nn::ParamList<S> params() {
    nn::ParamList<S> ps = a_.params();
    nn::append(ps, b_.params());
    if (proj_) nn::append(ps, proj_->params());
    return ps;
  }

 private:
  ConvBn<S> a_, b_;
  std::unique_ptr<ConvBn<S>> proj_;
  std::vector<Mat<S>> cache_;
};

/// 18-layer residual network: 7x7 stem, max pool, four stages of two basic
/// blocks, global average pool and a linear head.
template <class S>
class ResNet18 final : public ImageEncoder<S> {
 public:
  ResNet18(const SvrConfig& cfg, nn::Rng& rng)
      : stem_("svr.rgb.stem", nn::ConvGeometry::planar(3, cfg.resnet_width, 7, 2, 3), rng) {
    int in = cfg.resnet_width;
    for (int stage = 0; stage < 4; ++stage) {
      const int out = cfg.resnet_width << stage;
      for (int j = 0; j < 2; ++j) {
        const std::string name = "svr.rgb.layer" + std::to_string(stage + 1) + "." + std::to_string(j);
        blocks_.emplace_back(name, in, out, (stage > 0 && j == 0) ? 2 : 1, rng);
        in = out;
      }
    }
    fc_ = nn::Linear<S>("svr.rgb.fc", in, cfg.latent_dim, rng);
  }

  Mat<S> forward(const FeatureBatch<S>& x, bool training) override {
    FeatureBatch<S> h = pool_.forward(stem_.forward(x, training));
    for (auto& b : blocks_) h = b.forward(h, training);
    pooled_extent_ = h.extent;
    pooled_channels_ = h.channels();
    Mat<S> f(pooled_channels_, h.batch());
    for (int n = 0; n < h.batch(); ++n) f.col(n) = h.maps[n].rowwise().mean();
    return training ? fc_.forward(f) : fc_.apply(f);
  }

  void backward(const Mat<S>& d) override {
    const Mat<S> df = fc_.backward(d);
    FeatureBatch<S> g;
    g.extent = pooled_extent_;
    const S inv = S(1) / static_cast<S>(pooled_extent_.volume());
    for (Eigen::Index n = 0; n < df.cols(); ++n)
      g.maps.push_back((df.col(n) * inv).replicate(1, pooled_extent_.volume()));
    for (int i = static_cast<int>(blocks_.size()) - 1; i >= 0; --i) g = blocks_[i].backward(g);
    stem_.backward(pool_.backward(g), false);
  }

  nn::ParamList<S> params() override {
    nn::ParamList<S> ps = stem_.params();
    for (auto& b : blocks_) nn::append(ps, b.params());
    nn::append(ps, fc_.params());
    return ps;
  }

 private:
  ConvBn<S> stem_;
  nn::MaxPool2d<S> pool_{3, 2, 1};
  std::vector<BasicBlock<S>> blocks_;
  nn::Linear<S> fc_;
  nn::Extent3 pooled_extent_;
  int pooled_channels_ = 0;
};

/// Single-channel input map from a depth image.
template <class S>
Mat<S> depth_input(const datakit::DepthImage& img) {
  Mat<S> m(1, static_cast<Eigen::Index>(img.size) * img.size);
  for (std::size_t i = 0; i < img.values.size(); ++i) m(0, static_cast<Eigen::Index>(i)) = static_cast<S>(img.values[i]);
  return m;
}

/// Three-channel input map from a channel-planar RGB image.
template <class S>
Mat<S> rgb_input(const datakit::RgbImage& img) {
  const Eigen::Index plane = static_cast<Eigen::Index>(img.size) * img.size;
  Mat<S> m(3, plane);
  for (int c = 0; c < 3; ++c)
    for (Eigen::Index i = 0; i < plane; ++i) m(c, i) = static_cast<S>(img.values[c * plane + i]);
  return m;
}

template <class S>
class SvrModel {
 public:
  explicit SvrModel(const SvrConfig& cfg, std::uint64_t seed = 0) : cfg_(cfg), rng_(seed) {
    require(cfg.latent_dim >= 1, "svr: latent_dim must be >= 1");
    if (cfg.branch == SvrBranch::kDepth) {
      require(!cfg.depth_channels.empty() && (cfg.image_size >> cfg.depth_channels.size()) >= 1,
              "svr: image too small for the depth encoder");
      net_ = std::make_unique<DepthEncoder<S>>(cfg, rng_);
    } else {
      net_ = std::make_unique<ResNet18<S>>(cfg, rng_);
    }
  }

  const SvrConfig& config() const { return cfg_; }
  int input_channels() const { return cfg_.branch == SvrBranch::kDepth ? 1 : 3; }

  FeatureBatch<S> to_batch(const std::vector<const Mat<S>*>& images) const {
    FeatureBatch<S> x;
    x.extent = {1, cfg_.image_size, cfg_.image_size};
    for (const auto* m : images) {
      require(m->rows() == input_channels() && m->cols() == x.extent.volume(),
              "svr: image does not match the encoder input shape");
      x.maps.push_back(*m);
    }
    return x;
  }

  Mat<S> forward(const std::vector<const Mat<S>*>& images, bool training) {
    return net_->forward(to_batch(images), training);
  }
  void backward(const Mat<S>& d) { net_->backward(d); }
  nn::ParamList<S> params() { return net_->params(); }

  Vec<S> predict(const Mat<S>& image) { return forward({&image}, false).col(0); }

  nn::Checkpoint to_checkpoint() {
    nn::Checkpoint ck;
    ck.meta["kind"] = "svr";
    cfg_.to_meta(ck.meta);
    ck.store(params());
    return ck;
  }
  static SvrModel from_checkpoint(const nn::Checkpoint& ck) {
    if (ck.meta.count("kind") && ck.get("kind") != "svr") throw InvalidInput("checkpoint is not an image encoder");
    SvrModel m(SvrConfig::from_meta(ck));
    ck.restore(m.params());
    return m;
  }

 private:
  SvrConfig cfg_;
  nn::Rng rng_;
  std::unique_ptr<ImageEncoder<S>> net_;
};

/// One view of a shape with the sequence encoder's latent for that shape.
template <class S>
struct SvrSample {
  std::string shape_id;
  Mat<S> image;
  Eigen::VectorXf latent;
  std::vector<datakit::BoundingBox> boxes;  // ground-truth part boxes
};

struct SvrTrainConfig {
  int epochs = 200;
  int batch = 32;
  double lr = 1e-4;
  std::uint64_t seed = 0;
};

struct SvrLossRecord {
  int epoch = 0;
  double latent_mse = 0.0;
};

template <class S>
void validate_svr_samples(const std::vector<SvrSample<S>>& samples, int latent_dim) {
  require(!samples.empty(), "train_svr: empty corpus");
  for (const auto& s : samples) {
    if (s.latent.size() == 0) throw InvalidInput("train_svr: missing latent for shape " + s.shape_id);
    require(s.latent.size() == latent_dim, "train_svr: latent of " + s.shape_id + " has dimension " +
                                               std::to_string(s.latent.size()) + ", expected " +
                                               std::to_string(latent_dim));
  }
}

/// Regresses image → latent with mean squared error. The sequence decoder is
/// only consulted for its latent size and is never written.
template <class S>
std::vector<SvrLossRecord> train_svr(SvrModel<S>& model, const std::vector<SvrSample<S>>& samples,
                                     const seq2seq::Seq2Seq<S>& decoder, const SvrTrainConfig& cfg,
                                     const std::function<void(const SvrLossRecord&)>& on_epoch = {}) {
  require(model.config().latent_dim == decoder.config().latent_dim(),
          "train_svr: encoder latent size does not match the sequence decoder");
  validate_svr_samples(samples, model.config().latent_dim);
  require(cfg.epochs >= 1 && cfg.batch >= 1 && cfg.lr > 0.0, "train_svr: invalid training configuration");
  nn::Adam<S> opt(model.params(), {cfg.lr, 0.9, 0.999, 1e-8});
  nn::Rng rng(cfg.seed);
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  const int D = model.config().latent_dim;
  std::vector<SvrLossRecord> log;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t s = 0; s < order.size(); s += cfg.batch) {
      const std::size_t e = std::min(order.size(), s + cfg.batch);
      std::vector<const Mat<S>*> imgs;
      Mat<S> target(D, static_cast<Eigen::Index>(e - s));
      for (std::size_t i = s; i < e; ++i) {
        imgs.push_back(&samples[order[i]].image);
        target.col(static_cast<Eigen::Index>(i - s)) = samples[order[i]].latent.template cast<S>();
      }
      opt.zero_grad();
      const Mat<S> diff = model.forward(imgs, true) - target;
      const S norm = static_cast<S>(diff.size());
      total += static_cast<double>(diff.squaredNorm()) * static_cast<double>(e - s) / static_cast<double>(norm);
      model.backward(diff * (S(2) / norm));
      opt.step();
    }
    SvrLossRecord rec{epoch, total / static_cast<double>(samples.size())};
    log.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return log;
}

struct SvrEval {
  double latent_mse = 0.0;
  double box_iou = 0.0;  // mean box-fill IoU of decoded vs ground-truth boxes
};

template <class S>
SvrEval evaluate_svr(SvrModel<S>& model, const std::vector<SvrSample<S>>& samples,
                     const seq2seq::Seq2Seq<S>& decoder, int resolution = 64) {
  validate_svr_samples(samples, model.config().latent_dim);
  SvrEval ev;
  for (const auto& s : samples) {
    const Vec<S> z = model.predict(s.image);
    ev.latent_mse += static_cast<double>((z - s.latent.template cast<S>()).squaredNorm()) / static_cast<double>(z.size());
    if (s.boxes.empty()) continue;
    std::vector<datakit::BoundingBox> pred;
    for (const auto& st : decoder.decode_sequence(z, decoder.config().k_max))
      pred.push_back(datakit::BoundingBox::from_array(st.b).clamped(1.0 / resolution));
    ev.box_iou += metrics::box_fill_iou(pred, s.boxes, resolution);
  }
  ev.latent_mse /= static_cast<double>(samples.size());
  ev.box_iou /= static_cast<double>(samples.size());
  return ev;
}

}  // namespace pqnet::tasks
