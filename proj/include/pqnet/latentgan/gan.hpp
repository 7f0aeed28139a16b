#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "pqnet/nn/adam.hpp"
#include "pqnet/nn/checkpoint.hpp"
#include "pqnet/nn/layers.hpp"

namespace pqnet::latentgan {

using nn::Mat;
using nn::Vec;

/// Fully-connected net: hidden leaky-rectifier layers, linear output.
template <class S>
class Mlp {
 public:
  Mlp() = default;
  Mlp(const std::string& name, int in, const std::vector<int>& hidden, int out, S slope, nn::Rng& rng) {
    int prev = in;
    for (std::size_t l = 0; l < hidden.size(); ++l) {
      layers_.emplace_back(name + ".fc" + std::to_string(l), prev, hidden[l], rng);
      acts_.emplace_back(slope);
      prev = hidden[l];
    }
    layers_.emplace_back(name + ".out", prev, out, rng);
  }

  int in_dim() const { return layers_.front().in_features(); }
  int out_dim() const { return layers_.back().out_features(); }
  int hidden_layers() const { return static_cast<int>(acts_.size()); }

  Mat<S> apply(const Mat<S>& x) const {
    Mat<S> h = x;
    for (std::size_t l = 0; l < acts_.size(); ++l) h = acts_[l].apply(layers_[l].apply(h));
    return layers_.back().apply(h);
  }

  Mat<S> forward(const Mat<S>& x) {
    Mat<S> h = x;
    for (std::size_t l = 0; l < acts_.size(); ++l) h = acts_[l].forward(layers_[l].forward(h));
    return layers_.back().forward(h);
  }

  Mat<S> backward(const Mat<S>& dy) {
    Mat<S> d = layers_.back().backward(dy);
    for (int l = static_cast<int>(acts_.size()) - 1; l >= 0; --l) d = layers_[l].backward(acts_[l].backward(d));
    return d;
  }

  /// Gradient of the scalar output w.r.t. the input of the last forward()
  /// batch: g = W_1ᵀ(m_1 ⊙ W_2ᵀ(m_2 ⊙ … W_Lᵀ)), one column per sample.
  Mat<S> input_gradient(std::vector<Mat<S>>* us = nullptr) const {
    const auto B = acts_.empty() ? cached_batch_ : acts_.front().derivative().cols();
    Mat<S> v = layers_.back().weight().value.transpose().replicate(1, B);
    if (us) us->assign(acts_.size(), {});
    for (int l = static_cast<int>(acts_.size()) - 1; l >= 0; --l) {
      Mat<S> u = acts_[l].derivative().cwiseProduct(v);
      v = layers_[l].weight().value.transpose() * u;
      if (us) (*us)[l] = std::move(u);
    }
    return v;
  }

  /// Accumulates parameter gradients of Σ_b <delta_b, g_b>, where g is the
  /// input gradient above (leaky-rectifier masks held fixed).
  void input_gradient_backward(const Mat<S>& delta, const std::vector<Mat<S>>& us) {
    Mat<S> d = delta;  // gradient w.r.t. v_l
    for (std::size_t l = 0; l < acts_.size(); ++l) {
      layers_[l].weight().grad.noalias() += us[l] * d.transpose();
      const Mat<S> du = layers_[l].weight().value * d;
      d = acts_[l].derivative().cwiseProduct(du);
    }
    layers_.back().weight().grad += d.rowwise().sum().transpose();
  }

  void set_cached_batch(Eigen::Index b) { cached_batch_ = b; }

  nn::ParamList<S> params() {
    nn::ParamList<S> ps;
    for (auto& l : layers_) nn::append(ps, l.params());
    return ps;
  }
  std::vector<nn::Linear<S>>& layers() { return layers_; }

 private:
  std::vector<nn::Linear<S>> layers_;
  std::vector<nn::LeakyRelu<S>> acts_;
  Eigen::Index cached_batch_ = 0;
};

/// Per-sample interpolation weights u ~ U(0,1) drawn from `seed`.
inline std::vector<double> interpolation_weights(std::size_t n, std::uint64_t seed) {
  nn::Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> w(n);
  for (auto& v : w) v = u(rng);
  return w;
}

template <class S>
Mat<S> interpolate_batch(const Mat<S>& real, const Mat<S>& fake, const std::vector<double>& u) {
  Mat<S> x(real.rows(), real.cols());
  for (Eigen::Index b = 0; b < real.cols(); ++b)
    x.col(b) = static_cast<S>(u[b]) * real.col(b) + static_cast<S>(1.0 - u[b]) * fake.col(b);
  return x;
}

/// E[(‖∇D(x̂)‖ − 1)²] at interpolates x̂ = u·real + (1−u)·fake. When `weight`
/// is non-zero, weight·dGP/dθ is accumulated into the critic's gradients.
template <class S>
double gradient_penalty(Mlp<S>& critic, const Mat<S>& real, const Mat<S>& fake, const std::vector<double>& u,
                        double weight = 0.0) {
  require(real.rows() == fake.rows() && real.cols() == fake.cols(),
          "gradient_penalty: real and fake batches differ in shape");
  require(real.cols() >= 1, "gradient_penalty: empty batch");
  require(real.rows() == critic.in_dim(), "gradient_penalty: batch dimension does not match the critic");
  require(u.size() == static_cast<std::size_t>(real.cols()), "gradient_penalty: one weight per sample");
  const Mat<S> xhat = interpolate_batch(real, fake, u);
  critic.set_cached_batch(xhat.cols());
  critic.forward(xhat);
  std::vector<Mat<S>> us;
  const Mat<S> g = critic.input_gradient(&us);
  const auto B = static_cast<double>(g.cols());
  double gp = 0.0;
  Mat<S> delta(g.rows(), g.cols());
  for (Eigen::Index b = 0; b < g.cols(); ++b) {
    const double norm = static_cast<double>(g.col(b).norm());
    gp += (norm - 1.0) * (norm - 1.0);
    const double scale = norm > 0.0 ? weight * 2.0 * (norm - 1.0) / (B * norm) : 0.0;
    delta.col(b) = g.col(b) * static_cast<S>(scale);
  }
  if (weight != 0.0) critic.input_gradient_backward(delta, us);
  return gp / B;
}

template <class S>
double gradient_penalty(Mlp<S>& critic, const Mat<S>& real, const Mat<S>& fake, std::uint64_t seed) {
  return gradient_penalty(critic, real, fake, interpolation_weights(static_cast<std::size_t>(real.cols()), seed));
}

struct LatentGanConfig {
  int latent_dim = 1024;
  int z_dim = 128;
  std::vector<int> generator_hidden{1024, 1024, 1024};
  std::vector<int> critic_hidden{1024, 1024, 1024};
  double leaky_slope = 0.2;

  void to_meta(std::map<std::string, std::string>& m) const {
    auto join = [](const std::vector<int>& v) {
      std::string s;
      for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
      return s;
    };
    m["gan.latent_dim"] = std::to_string(latent_dim);
    m["gan.z_dim"] = std::to_string(z_dim);
    m["gan.generator_hidden"] = join(generator_hidden);
    m["gan.critic_hidden"] = join(critic_hidden);
    m["gan.leaky_slope"] = std::to_string(leaky_slope);
  }
  static LatentGanConfig from_meta(const nn::Checkpoint& ck) {
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
    LatentGanConfig c;
    c.latent_dim = ck.get_int("gan.latent_dim");
    c.z_dim = ck.get_int("gan.z_dim");
    c.generator_hidden = split(ck.get("gan.generator_hidden"));
    c.critic_hidden = split(ck.get("gan.critic_hidden"));
    c.leaky_slope = ck.get_double("gan.leaky_slope");
    return c;
  }
};

template <class S = float>
struct LatentGan {
  LatentGanConfig cfg;
  Mlp<S> generator;
  Mlp<S> critic;

  LatentGan() = default;
  LatentGan(const LatentGanConfig& c, std::uint64_t seed) : cfg(c) {
    nn::Rng rng(seed);
    generator = Mlp<S>("generator", c.z_dim, c.generator_hidden, c.latent_dim, static_cast<S>(c.leaky_slope), rng);
    critic = Mlp<S>("critic", c.latent_dim, c.critic_hidden, 1, static_cast<S>(c.leaky_slope), rng);
  }

  nn::ParamList<S> params() {
    nn::ParamList<S> ps = generator.params();
    nn::append(ps, critic.params());
    return ps;
  }

  nn::Checkpoint to_checkpoint() {
    nn::Checkpoint ck;
    ck.meta["kind"] = "latentgan";
    cfg.to_meta(ck.meta);
    ck.store(params());
    return ck;
  }

  static LatentGan from_checkpoint(const nn::Checkpoint& ck) {
    if (ck.meta.count("kind") && ck.get("kind") != "latentgan")
      throw InvalidInput("checkpoint is not a latent GAN");
    LatentGan g(LatentGanConfig::from_meta(ck), 0);
    ck.restore(g.params());
    return g;
  }
};

struct LatentGanTrainConfig {
  int iterations = 10000;  // generator updates
  int n_critic = 5;
  int batch_size = 64;
  double lambda = 10.0;
  double lr = 1e-4;
  double beta1 = 0.0;
  double beta2 = 0.9;
  std::uint64_t seed = 0;
};

struct GanLogRecord {
  int iteration;
  double wasserstein;  // mean D(real) − mean D(fake) on the last critic batch
  double critic_loss;
  double penalty;
  double generator_loss;
  bool operator==(const GanLogRecord&) const = default;
};

template <class S>
Mat<S> standard_normal(int rows, int cols, nn::Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Mat<S> z(rows, cols);
  for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = static_cast<S>(n(rng));
  return z;
}

/// One critic update: maximizes D(real) − D(fake) − λ·GP.
template <class S>
GanLogRecord critic_step(LatentGan<S>& gan, nn::Adam<S>& opt, const Mat<S>& real, const Mat<S>& fake,
                         double lambda, std::uint64_t gp_seed) {
  const auto B = static_cast<S>(real.cols());
  opt.zero_grad();
  const Mat<S> d_real = gan.critic.forward(real);
  gan.critic.backward(Mat<S>::Constant(1, real.cols(), S(-1) / B));
  const Mat<S> d_fake = gan.critic.forward(fake);
  gan.critic.backward(Mat<S>::Constant(1, fake.cols(), S(1) / B));
  const double gp = lambda == 0.0 ? 0.0
                                  : gradient_penalty(gan.critic, real, fake,
                                                     interpolation_weights(real.cols(), gp_seed), lambda);
  opt.step();
  GanLogRecord r{};
  r.wasserstein = static_cast<double>(d_real.mean() - d_fake.mean());
  r.penalty = gp;
  r.critic_loss = -r.wasserstein + lambda * gp;
  return r;
}

template <class S>
std::vector<GanLogRecord> train_latent_gan(LatentGan<S>& gan, const std::vector<Eigen::VectorXf>& latents,
                                           const LatentGanTrainConfig& cfg,
                                           const std::function<void(const GanLogRecord&)>& on_iteration = {}) {
  require(latents.size() >= 2, "train_latent_gan: need at least 2 latents");
  require(cfg.batch_size >= 1 && cfg.n_critic >= 1, "train_latent_gan: invalid batch size or n_critic");
  for (const auto& l : latents)
    require(l.size() == gan.cfg.latent_dim, "train_latent_gan: latent dimension mismatch");
  nn::AdamConfig ac{cfg.lr, cfg.beta1, cfg.beta2, 1e-8};
  nn::Adam<S> opt_d(gan.critic.params(), ac), opt_g(gan.generator.params(), ac);
  nn::Rng rng(derive_seed(cfg.seed, "latentgan.train"));
  std::uniform_int_distribution<std::size_t> pick(0, latents.size() - 1);
  const int B = cfg.batch_size;
  std::vector<GanLogRecord> log;
  for (int it = 1; it <= cfg.iterations; ++it) {
    GanLogRecord rec{};
    for (int c = 0; c < cfg.n_critic; ++c) {
      Mat<S> real(gan.cfg.latent_dim, B);
      for (int b = 0; b < B; ++b) real.col(b) = latents[pick(rng)].template cast<S>();
      const Mat<S> fake = gan.generator.apply(standard_normal<S>(gan.cfg.z_dim, B, rng));
      rec = critic_step(gan, opt_d, real, fake, cfg.lambda, rng());
    }
    // Generator update: minimize −D(G(z)).
    opt_g.zero_grad();
    const Mat<S> z = standard_normal<S>(gan.cfg.z_dim, B, rng);
    const Mat<S> fake = gan.generator.forward(z);
    const Mat<S> d = gan.critic.forward(fake);
    const Mat<S> dfake = gan.critic.backward(Mat<S>::Constant(1, B, S(-1) / static_cast<S>(B)));
    gan.generator.backward(dfake);
    opt_g.step();
    rec.iteration = it;
    rec.generator_loss = -static_cast<double>(d.mean());
    log.push_back(rec);
    if (on_iteration) on_iteration(rec);
  }
  return log;
}

/// `count` generator outputs for standard-normal noise drawn from `seed`.
template <class S>
std::vector<Eigen::VectorXf> sample_latents(const Mlp<S>& generator, int count, std::uint64_t seed) {
  require(count >= 1, "sample_latents: count must be >= 1");
  nn::Rng rng(seed);
  const Mat<S> z = standard_normal<S>(generator.in_dim(), count, rng);
  const Mat<S> x = generator.apply(z);
  std::vector<Eigen::VectorXf> out;
  for (Eigen::Index i = 0; i < x.cols(); ++i) out.push_back(x.col(i).template cast<float>());
  return out;
}

}  // namespace pqnet::latentgan
