#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "gradcheck.hpp"
#include "pqnet/nn/adam.hpp"
#include "pqnet/nn/checkpoint.hpp"
#include "pqnet/nn/conv.hpp"
#include "pqnet/nn/gru.hpp"
#include "pqnet/nn/layers.hpp"

using namespace pqnet;
using namespace pqnet::nn;
using gradcheck::Block;
using M = Mat<double>;

namespace {

FeatureBatch<double> random_batch(int n, int c, Extent3 e, std::mt19937_64& rng) {
  FeatureBatch<double> x;
  x.extent = e;
  for (int i = 0; i < n; ++i) {
    M m(c, e.volume());
    gradcheck::randomize(m, rng);
    x.maps.push_back(m);
  }
  return x;
}

double dot(const FeatureBatch<double>& a, const FeatureBatch<double>& b) {
  double s = 0;
  for (std::size_t n = 0; n < a.maps.size(); ++n) s += a.maps[n].cwiseProduct(b.maps[n]).sum();
  return s;
}

void add_input_blocks(std::vector<Block>& bs, FeatureBatch<double>& x, const FeatureBatch<double>& dx) {
  for (std::size_t n = 0; n < x.maps.size(); ++n)
    bs.push_back({"input" + std::to_string(n), x.maps[n].data(), dx.maps[n].data(),
                  static_cast<std::size_t>(x.maps[n].size())});
}

// Direct (loop) convolution used as a forward oracle.
FeatureBatch<double> naive_conv(const FeatureBatch<double>& x, const ConvGeometry& g, const M& w, const M& b) {
  FeatureBatch<double> y;
  y.extent = g.output(x.extent);
  const Extent3 e = x.extent, o = y.extent;
  for (const auto& map : x.maps) {
    M out = M::Zero(g.out_channels, o.volume());
    for (int oc = 0; oc < g.out_channels; ++oc)
      for (int od = 0; od < o.d; ++od)
        for (int oh = 0; oh < o.h; ++oh)
          for (int ow = 0; ow < o.w; ++ow) {
            double s = b(oc, 0);
            int col = 0;
            for (int ic = 0; ic < g.in_channels; ++ic)
              for (int kd = 0; kd < g.kernel[0]; ++kd)
                for (int kh = 0; kh < g.kernel[1]; ++kh)
                  for (int kw = 0; kw < g.kernel[2]; ++kw, ++col) {
                    const int d = od * g.stride[0] - g.padding[0] + kd;
                    const int h = oh * g.stride[1] - g.padding[1] + kh;
                    const int ww = ow * g.stride[2] - g.padding[2] + kw;
                    if (d < 0 || h < 0 || ww < 0 || d >= e.d || h >= e.h || ww >= e.w) continue;
                    s += w(oc, col) * map(ic, (d * e.h + h) * e.w + ww);
                  }
            out(oc, (od * o.h + oh) * o.w + ow) = s;
          }
    y.maps.push_back(out);
  }
  return y;
}

}  // namespace

TEST(Linear, MlpGradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(1);
  Linear<double> l1("l1", 5, 7, rng), l2("l2", 7, 3, rng);
  LeakyRelu<double> act(0.02);
  Sigmoid<double> sig;
  M x(5, 4), target(3, 4);
  gradcheck::randomize(x, rng);
  gradcheck::randomize(target, rng);
  auto loss = [&] { return (sig.apply(l2.apply(act.apply(l1.apply(x)))) - target).squaredNorm(); };
  ParamList<double> ps = l1.params();
  append(ps, l2.params());
  zero_grads(ps);
  const M y = sig.forward(l2.forward(act.forward(l1.forward(x))));
  const M dx = l1.backward(act.backward(l2.backward(sig.backward(2 * (y - target)))));
  auto bs = gradcheck::blocks(ps);
  bs.push_back({"x", x.data(), dx.data(), static_cast<std::size_t>(x.size())});
  EXPECT_LT(gradcheck::compare(bs, loss, rng).max_rel, 1e-6);
}

TEST(Conv, ForwardMatchesDirectConvolution) {
  std::mt19937_64 rng(2);
  for (const auto& g : {ConvGeometry::cubic(2, 3, 4, 2, 1), ConvGeometry::cubic(1, 2, 3, 1, 1),
                        ConvGeometry::planar(3, 4, 7, 2, 3), ConvGeometry::planar(2, 2, 1, 2, 0)}) {
    Conv<double> conv("c", g, rng, true);
    const Extent3 e = g.kernel[0] == 1 ? Extent3{1, 9, 8} : Extent3{6, 5, 7};
    const auto x = random_batch(2, g.in_channels, e, rng);
    const auto y = conv.apply(x);
    const auto ps = conv.params();
    const auto ref = naive_conv(x, g, ps[0]->value, ps[1]->value);
    ASSERT_EQ(y.extent, ref.extent);
    for (std::size_t n = 0; n < y.maps.size(); ++n) EXPECT_LT((y.maps[n] - ref.maps[n]).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Conv, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(3);
  for (const auto& g : {ConvGeometry::cubic(2, 3, 4, 2, 1), ConvGeometry::planar(2, 3, 3, 2, 1)}) {
    Conv<double> conv("c", g, rng, true);
    const Extent3 e = g.kernel[0] == 1 ? Extent3{1, 7, 6} : Extent3{6, 4, 6};
    auto x = random_batch(2, g.in_channels, e, rng);
    const auto r = random_batch(2, g.out_channels, g.output(e), rng);
    auto loss = [&] { return dot(conv.apply(x), r); };
    zero_grads(conv.params());
    conv.forward(x);
    const auto dx = conv.backward(r);
    auto bs = gradcheck::blocks(conv.params());
    add_input_blocks(bs, x, dx);
    EXPECT_LT(gradcheck::compare(bs, loss, rng).max_rel, 1e-6);
  }
}

TEST(BatchNorm, TrainingGradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(4);
  BatchNorm<double> bn("bn", 3);
  for (auto* p : bn.params())
    if (p->trainable) gradcheck::randomize(p->value, rng);
  auto x = random_batch(2, 3, {2, 2, 3}, rng);
  const auto r = random_batch(2, 3, {2, 2, 3}, rng);
  auto loss = [&] {
    BatchNorm<double> copy = bn;
    const auto y = copy.forward(x, true);
    double s = 0;
    for (std::size_t n = 0; n < y.maps.size(); ++n) s += y.maps[n].array().square().cwiseProduct(r.maps[n].array()).sum();
    return s;
  };
  zero_grads(bn.params());
  BatchNorm<double> work = bn;
  const auto y = work.forward(x, true);
  FeatureBatch<double> dy = y;
  for (std::size_t n = 0; n < y.maps.size(); ++n) dy.maps[n] = 2 * y.maps[n].cwiseProduct(r.maps[n]);
  const auto dx = work.backward(dy);
  // Copy analytic grads back so the probes perturb `bn` itself.
  const auto src = work.params();
  const auto dst = bn.params();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i]->grad = src[i]->grad;
  auto bs = gradcheck::blocks(bn.params());
  add_input_blocks(bs, x, dx);
  EXPECT_LT(gradcheck::compare(bs, loss, rng).max_rel, 1e-6);
}

TEST(BatchNorm, EvaluationUsesRunningStatistics) {
  std::mt19937_64 rng(5);
  BatchNorm<double> bn("bn", 2);
  auto x = random_batch(3, 2, {1, 4, 4}, rng);
  for (auto& m : x.maps) m.array() += 3.0;
  for (int i = 0; i < 200; ++i) bn.forward(x, true);
  const auto y = bn.forward(x, false);
  double mean = 0;
  for (const auto& m : y.maps) mean += m.sum();
  EXPECT_NEAR(mean / (3 * 2 * 16), 0.0, 1e-2);
}

TEST(MaxPool, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(6);
  MaxPool2d<double> pool(3, 2, 1);
  auto x = random_batch(2, 2, {1, 7, 6}, rng);
  const auto y0 = pool.forward(x);
  const auto r = random_batch(2, 2, y0.extent, rng);
  auto loss = [&] {
    MaxPool2d<double> p(3, 2, 1);
    return dot(p.forward(x), r);
  };
  const auto dx = pool.backward(r);
  std::vector<Block> bs;
  add_input_blocks(bs, x, dx);
  EXPECT_LT(gradcheck::compare(bs, loss, rng, 40).max_rel, 1e-6);
}

TEST(Gru, StepMatchesClosedForm) {
  std::mt19937_64 rng(7);
  GruLayer<double> gru("g", 2, 3, rng);
  M x(2, 1), h(3, 1);
  gradcheck::randomize(x, rng);
  gradcheck::randomize(h, rng);
  const M& wi = gru.weight_ih().value;
  const M& wh = gru.weight_hh().value;
  const M& bi = gru.bias_ih().value;
  const M& bh = gru.bias_hh().value;
  auto sig = [](double v) { return 1 / (1 + std::exp(-v)); };
  const M out = gru.step(x, h);
  for (int i = 0; i < 3; ++i) {
    const double r = sig((wi.row(i) * x)(0) + bi(i, 0) + (wh.row(i) * h)(0) + bh(i, 0));
    const double z = sig((wi.row(3 + i) * x)(0) + bi(3 + i, 0) + (wh.row(3 + i) * h)(0) + bh(3 + i, 0));
    const double n = std::tanh((wi.row(6 + i) * x)(0) + bi(6 + i, 0) + r * ((wh.row(6 + i) * h)(0) + bh(6 + i, 0)));
    EXPECT_NEAR(out(i, 0), (1 - z) * n + z * h(i, 0), 1e-14);
  }
}

class GruGradient : public ::testing::TestWithParam<bool> {};

TEST_P(GruGradient, MaskedSequenceMatchesFiniteDifferences) {
  const bool reverse = GetParam();
  std::mt19937_64 rng(8 + reverse);
  GruLayer<double> gru("g", 3, 4, rng);
  const int T = 4, B = 3;
  std::vector<M> xs(T), rs(T);
  std::vector<RowVec<double>> masks(T, RowVec<double>::Ones(B));
  masks[3](0) = 0;  // lengths 3, 4, 2
  masks[2](2) = masks[3](2) = 0;
  for (int t = 0; t < T; ++t) {
    xs[t].resize(3, B);
    rs[t].resize(4, B);
    gradcheck::randomize(xs[t], rng);
    gradcheck::randomize(rs[t], rng);
  }
  M h0(4, B), rl(4, B);
  gradcheck::randomize(h0, rng, 0.5);
  gradcheck::randomize(rl, rng);
  auto loss = [&] {
    GruLayer<double> g = gru;
    const auto hs = g.forward(xs, h0, masks, reverse);
    double s = 0;
    for (int t = 0; t < T; ++t) s += hs[t].cwiseProduct(rs[t]).sum();
    return s + hs[reverse ? 0 : T - 1].cwiseProduct(rl).sum();
  };
  zero_grads(gru.params());
  gru.forward(xs, h0, masks, reverse);
  M dh0;
  const auto dxs = gru.backward(rs, rl, dh0);
  auto bs = gradcheck::blocks(gru.params());
  for (int t = 0; t < T; ++t) bs.push_back({"x" + std::to_string(t), xs[t].data(), dxs[t].data(), 3 * B});
  bs.push_back({"h0", h0.data(), dh0.data(), 4 * B});
  EXPECT_LT(gradcheck::compare(bs, loss, rng).max_rel, 1e-6);
}

INSTANTIATE_TEST_SUITE_P(Directions, GruGradient, ::testing::Values(false, true));

TEST(Gru, MaskedStepsKeepState) {
  std::mt19937_64 rng(9);
  GruLayer<double> gru("g", 2, 3, rng);
  std::vector<M> xs(3, M::Ones(2, 2));
  std::vector<RowVec<double>> masks(3, RowVec<double>::Ones(2));
  masks[1](1) = masks[2](1) = 0;
  const M h0 = M::Zero(3, 2);
  const auto hs = gru.forward(xs, h0, masks, false);
  EXPECT_EQ(hs[2].col(1), hs[0].col(1));
  EXPECT_NE(hs[2].col(0), hs[0].col(0));
}

TEST(Dropout, InvertedScalingAndIdentityInEvaluation) {
  Rng rng(10);
  Dropout<double> d(0.4);
  const M x = M::Ones(200, 200);
  EXPECT_EQ(d.forward(x, false, rng), x);
  const M y = d.forward(x, true, rng);
  EXPECT_NEAR(y.mean(), 1.0, 0.02);
  for (Eigen::Index i = 0; i < y.size(); ++i) EXPECT_TRUE(y.data()[i] == 0.0 || std::abs(y.data()[i] - 1 / 0.6) < 1e-12);
}

TEST(Adam, FirstStepsMatchHandComputation) {
  Param<double> p;
  p.name = "p";
  p.resize(1, 2);
  p.value << 1.0, -2.0;
  Adam<double> opt({&p}, {0.1, 0.9, 0.999, 1e-8});
  double m[2] = {0, 0}, v[2] = {0, 0}, w[2] = {1.0, -2.0};
  for (int t = 1; t <= 3; ++t) {
    opt.zero_grad();
    p.grad << 2 * p.value(0), 0.5;
    const double g[2] = {2 * w[0], 0.5};
    for (int i = 0; i < 2; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * g[i];
      v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
      const double mh = m[i] / (1 - std::pow(0.9, t)), vh = v[i] / (1 - std::pow(0.999, t));
      w[i] -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
    }
    opt.step();
    EXPECT_NEAR(p.value(0), w[0], 1e-12);
    EXPECT_NEAR(p.value(1), w[1], 1e-12);
  }
  EXPECT_EQ(opt.steps(), 3);
}

TEST(Checkpoint, RoundTripAndCorruption) {
  namespace fs = std::filesystem;
  std::mt19937_64 rng(11);
  Linear<float> a("fc", 4, 3, rng), b("fc", 4, 3, rng);
  Checkpoint ck;
  ck.meta["kind"] = "test";
  ck.store(a.params());
  const fs::path path = fs::temp_directory_path() / "pqnet_ck_test.pqck";
  ck.save(path);
  const Checkpoint back = Checkpoint::load(path);
  EXPECT_EQ(back.get("kind"), "test");
  back.restore(b.params());
  EXPECT_EQ(a.weight().value, b.weight().value);
  EXPECT_EQ(checksum(a.params()), checksum(b.params()));

  Linear<float> wrong("fc", 5, 3, rng);
  EXPECT_THROW(back.restore(wrong.params()), InvalidInput);

  std::ofstream(path, std::ios::binary) << "PQCK\x07";
  EXPECT_THROW(Checkpoint::load(path), InvalidInput);
  fs::remove(path);
  EXPECT_THROW(Checkpoint::load(path), InvalidInput);
}
