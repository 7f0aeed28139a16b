#pragma once

#include <array>
#include <limits>
#include <string>
#include <vector>

#include "pqnet/nn/tensor.hpp"

namespace pqnet::nn {

/// Spatial extent of a feature map (depth, height, width). 2-D maps use d = 1.
struct Extent3 {
  int d = 1, h = 1, w = 1;
  int volume() const { return d * h * w; }
  bool operator==(const Extent3&) const = default;
};

/// A batch of feature maps; each entry is (channels x d*h*w) with the
/// spatial index w-fastest.
template <class S>
struct FeatureBatch {
  Extent3 extent;
  std::vector<Mat<S>> maps;

  int batch() const { return static_cast<int>(maps.size()); }
  int channels() const { return maps.empty() ? 0 : static_cast<int>(maps[0].rows()); }
};

struct ConvGeometry {
  int in_channels = 1, out_channels = 1;
  std::array<int, 3> kernel{1, 1, 1};  // (d, h, w)
  std::array<int, 3> stride{1, 1, 1};
  std::array<int, 3> padding{0, 0, 0};

  Extent3 output(const Extent3& in) const {
    const int d = (in.d + 2 * padding[0] - kernel[0]) / stride[0] + 1;
    const int h = (in.h + 2 * padding[1] - kernel[1]) / stride[1] + 1;
    const int w = (in.w + 2 * padding[2] - kernel[2]) / stride[2] + 1;
    return {d, h, w};
  }
  int patch() const { return in_channels * kernel[0] * kernel[1] * kernel[2]; }

  static ConvGeometry cubic(int in, int out, int k, int s, int p) {
    return {in, out, {k, k, k}, {s, s, s}, {p, p, p}};
  }
  static ConvGeometry planar(int in, int out, int k, int s, int p) {
    return {in, out, {1, k, k}, {1, s, s}, {0, p, p}};
  }
};

namespace detail {

// Patch matrix: row (c, kd, kh, kw) x column (output position).
template <class S>
void im2col(const Mat<S>& in, const Extent3& ie, const ConvGeometry& g, const Extent3& oe,
            Mat<S>& col) {
  const int kd = g.kernel[0], kh = g.kernel[1], kw = g.kernel[2];
  col.setZero(g.patch(), oe.volume());
  const int plane = ie.h * ie.w;
  for (int oz = 0; oz < oe.d; ++oz)
    for (int oy = 0; oy < oe.h; ++oy)
      for (int ox = 0; ox < oe.w; ++ox) {
        const int s = (oz * oe.h + oy) * oe.w + ox;
        S* dst = col.col(s).data();
        const int z0 = oz * g.stride[0] - g.padding[0];
        const int y0 = oy * g.stride[1] - g.padding[1];
        const int x0 = ox * g.stride[2] - g.padding[2];
        for (int c = 0; c < g.in_channels; ++c)
          for (int a = 0; a < kd; ++a) {
            const int z = z0 + a;
            if (z < 0 || z >= ie.d) continue;
            for (int b = 0; b < kh; ++b) {
              const int y = y0 + b;
              if (y < 0 || y >= ie.h) continue;
              const int row0 = ((c * kd + a) * kh + b) * kw;
              const int base = z * plane + y * ie.w;
              for (int e = 0; e < kw; ++e) {
                const int x = x0 + e;
                if (x < 0 || x >= ie.w) continue;
                dst[row0 + e] = in(c, base + x);
              }
            }
          }
      }
}

template <class S>
void col2im(const Mat<S>& col, const Extent3& ie, const ConvGeometry& g, const Extent3& oe,
            Mat<S>& din) {
  const int kd = g.kernel[0], kh = g.kernel[1], kw = g.kernel[2];
  const int plane = ie.h * ie.w;
  for (int oz = 0; oz < oe.d; ++oz)
    for (int oy = 0; oy < oe.h; ++oy)
      for (int ox = 0; ox < oe.w; ++ox) {
        const int s = (oz * oe.h + oy) * oe.w + ox;
        const S* src = col.col(s).data();
        const int z0 = oz * g.stride[0] - g.padding[0];
        const int y0 = oy * g.stride[1] - g.padding[1];
        const int x0 = ox * g.stride[2] - g.padding[2];
        for (int c = 0; c < g.in_channels; ++c)
          for (int a = 0; a < kd; ++a) {
            const int z = z0 + a;
            if (z < 0 || z >= ie.d) continue;
            for (int b = 0; b < kh; ++b) {
              const int y = y0 + b;
              if (y < 0 || y >= ie.h) continue;
              const int row0 = ((c * kd + a) * kh + b) * kw;
              const int base = z * plane + y * ie.w;
              for (int e = 0; e < kw; ++e) {
                const int x = x0 + e;
                if (x < 0 || x >= ie.w) continue;
                din(c, base + x) += src[row0 + e];
              }
            }
          }
      }
}

}  // namespace detail

/// Convolution over (d, h, w) maps via patch matrices; 2-D convolution is the
/// d = 1 special case.
template <class S>
class Conv {
 public:
  Conv() = default;
  Conv(std::string name, const ConvGeometry& g, Rng& rng, bool with_bias = true)
      : geom_(g), with_bias_(with_bias) {
    weight_.name = name + ".weight";
    bias_.name = name + ".bias";
    weight_.resize(g.out_channels, g.patch());
    bias_.resize(g.out_channels, 1);
    const S bound = S(1) / std::sqrt(static_cast<S>(g.patch()));
    uniform_init(weight_.value, bound, rng);
    if (with_bias_) uniform_init(bias_.value, bound, rng);
  }

  const ConvGeometry& geometry() const { return geom_; }

  FeatureBatch<S> apply(const FeatureBatch<S>& x) const {
    FeatureBatch<S> y;
    y.extent = geom_.output(x.extent);
    y.maps.resize(x.maps.size());
    Mat<S> col;
    for (std::size_t n = 0; n < x.maps.size(); ++n) {
      detail::im2col(x.maps[n], x.extent, geom_, y.extent, col);
      y.maps[n].noalias() = weight_.value * col;
      if (with_bias_) y.maps[n].colwise() += bias_.value.col(0);
    }
    return y;
  }

  FeatureBatch<S> forward(const FeatureBatch<S>& x) {
    input_ = x;
    return apply(x);
  }

  FeatureBatch<S> backward(const FeatureBatch<S>& dy, bool need_input_grad = true) {
    FeatureBatch<S> dx;
    dx.extent = input_.extent;
    Mat<S> col, dcol;
    for (std::size_t n = 0; n < dy.maps.size(); ++n) {
      detail::im2col(input_.maps[n], input_.extent, geom_, dy.extent, col);
      weight_.grad.noalias() += dy.maps[n] * col.transpose();
      if (with_bias_) bias_.grad += dy.maps[n].rowwise().sum();
      if (need_input_grad) {
        dcol.noalias() = weight_.value.transpose() * dy.maps[n];
        Mat<S> din = Mat<S>::Zero(geom_.in_channels, input_.extent.volume());
        detail::col2im(dcol, input_.extent, geom_, dy.extent, din);
        dx.maps.push_back(std::move(din));
      }
    }
    return dx;
  }

  ParamList<S> params() {
    if (with_bias_) return {&weight_, &bias_};
    return {&weight_};
  }

 private:
  ConvGeometry geom_;
  bool with_bias_ = true;
  Param<S> weight_, bias_;
  FeatureBatch<S> input_;
};

/// Per-channel batch normalization over batch and spatial positions.
template <class S>
class BatchNorm {
 public:
  BatchNorm() = default;
  BatchNorm(std::string name, int channels, S momentum = S(0.1), S eps = S(1e-5))
      : momentum_(momentum), eps_(eps) {
    gamma_.name = name + ".weight";
    beta_.name = name + ".bias";
    mean_.name = name + ".running_mean";
    var_.name = name + ".running_var";
    gamma_.resize(channels, 1);
    gamma_.value.setOnes();
    beta_.resize(channels, 1);
    mean_.resize(channels, 1);
    var_.resize(channels, 1);
    var_.value.setOnes();
    mean_.trainable = var_.trainable = false;
  }

  FeatureBatch<S> forward(const FeatureBatch<S>& x, bool training) {
    const int C = static_cast<int>(gamma_.value.rows());
    Vec<S> mean, invstd;
    if (training) {
      const S m = static_cast<S>(x.batch()) * static_cast<S>(x.extent.volume());
      mean = Vec<S>::Zero(C);
      for (const auto& map : x.maps) mean += map.rowwise().sum();
      mean /= m;
      Vec<S> var = Vec<S>::Zero(C);
      for (const auto& map : x.maps) var += (map.colwise() - mean).array().square().matrix().rowwise().sum();
      var /= m;
      invstd = (var.array() + eps_).rsqrt().matrix();
      const S unbias = m > S(1) ? m / (m - S(1)) : S(1);
      mean_.value.col(0) = (S(1) - momentum_) * mean_.value.col(0) + momentum_ * mean;
      var_.value.col(0) = (S(1) - momentum_) * var_.value.col(0) + momentum_ * unbias * var;
      xhat_.extent = x.extent;
      xhat_.maps.resize(x.maps.size());
      invstd_ = invstd;
    } else {
      mean = mean_.value.col(0);
      invstd = (var_.value.col(0).array() + eps_).rsqrt().matrix();
    }
    FeatureBatch<S> y;
    y.extent = x.extent;
    y.maps.resize(x.maps.size());
    for (std::size_t n = 0; n < x.maps.size(); ++n) {
      Mat<S> xh = (x.maps[n].colwise() - mean).array().colwise() * invstd.array();
      y.maps[n] = (xh.array().colwise() * gamma_.value.col(0).array()).colwise() +
                  beta_.value.col(0).array();
      if (training) xhat_.maps[n] = std::move(xh);
    }
    return y;
  }

  FeatureBatch<S> backward(const FeatureBatch<S>& dy) {
    const int C = static_cast<int>(gamma_.value.rows());
    const S m = static_cast<S>(dy.batch()) * static_cast<S>(dy.extent.volume());
    Vec<S> sum_dy = Vec<S>::Zero(C), sum_dy_xhat = Vec<S>::Zero(C);
    for (std::size_t n = 0; n < dy.maps.size(); ++n) {
      sum_dy += dy.maps[n].rowwise().sum();
      sum_dy_xhat += dy.maps[n].cwiseProduct(xhat_.maps[n]).rowwise().sum();
    }
    gamma_.grad.col(0) += sum_dy_xhat;
    beta_.grad.col(0) += sum_dy;
    const Vec<S> scale = gamma_.value.col(0).cwiseProduct(invstd_) / m;
    FeatureBatch<S> dx;
    dx.extent = dy.extent;
    dx.maps.resize(dy.maps.size());
    for (std::size_t n = 0; n < dy.maps.size(); ++n) {
      Mat<S> t = (dy.maps[n] * m).colwise() - sum_dy;
      t -= (xhat_.maps[n].array().colwise() * sum_dy_xhat.array()).matrix();
      dx.maps[n] = t.array().colwise() * scale.array();
    }
    return dx;
  }

  ParamList<S> params() { return {&gamma_, &beta_, &mean_, &var_}; }

 private:
  S momentum_ = S(0.1), eps_ = S(1e-5);
  Param<S> gamma_, beta_, mean_, var_;
  FeatureBatch<S> xhat_;
  Vec<S> invstd_;
};

/// Applies an element-wise activation layer to each map of a batch.
template <class S, class Act>
FeatureBatch<S> map_forward(Act& act, const FeatureBatch<S>& x, std::vector<Mat<S>>& cache) {
  FeatureBatch<S> y;
  y.extent = x.extent;
  y.maps.resize(x.maps.size());
  cache.resize(x.maps.size());
  for (std::size_t n = 0; n < x.maps.size(); ++n) {
    y.maps[n] = act.forward(x.maps[n]);
    cache[n] = act.derivative();
  }
  return y;
}

template <class S>
FeatureBatch<S> map_backward(const FeatureBatch<S>& dy, const std::vector<Mat<S>>& deriv) {
  FeatureBatch<S> dx;
  dx.extent = dy.extent;
  dx.maps.resize(dy.maps.size());
  for (std::size_t n = 0; n < dy.maps.size(); ++n) dx.maps[n] = dy.maps[n].cwiseProduct(deriv[n]);
  return dx;
}

/// 2-D max pooling on d = 1 maps.
template <class S>
class MaxPool2d {
 public:
  MaxPool2d(int kernel = 3, int stride = 2, int padding = 1)
      : k_(kernel), s_(stride), p_(padding) {}

  FeatureBatch<S> forward(const FeatureBatch<S>& x) {
    in_extent_ = x.extent;
    const int oh = (x.extent.h + 2 * p_ - k_) / s_ + 1, ow = (x.extent.w + 2 * p_ - k_) / s_ + 1;
    FeatureBatch<S> y;
    y.extent = {1, oh, ow};
    y.maps.resize(x.maps.size());
    argmax_.resize(x.maps.size());
    for (std::size_t n = 0; n < x.maps.size(); ++n) {
      const auto C = x.maps[n].rows();
      y.maps[n].resize(C, oh * ow);
      argmax_[n].assign(static_cast<std::size_t>(C) * oh * ow, 0);
      for (Eigen::Index c = 0; c < C; ++c)
        for (int oy = 0; oy < oh; ++oy)
          for (int ox = 0; ox < ow; ++ox) {
            S best = -std::numeric_limits<S>::infinity();
            int arg = 0;
            for (int a = 0; a < k_; ++a)
              for (int b = 0; b < k_; ++b) {
                const int yy = oy * s_ - p_ + a, xx = ox * s_ - p_ + b;
                if (yy < 0 || xx < 0 || yy >= x.extent.h || xx >= x.extent.w) continue;
                const int idx = yy * x.extent.w + xx;
                if (x.maps[n](c, idx) > best) best = x.maps[n](c, idx), arg = idx;
              }
            y.maps[n](c, oy * ow + ox) = best;
            argmax_[n][static_cast<std::size_t>(c) * oh * ow + oy * ow + ox] = arg;
          }
    }
    return y;
  }

  FeatureBatch<S> backward(const FeatureBatch<S>& dy) const {
    FeatureBatch<S> dx;
    dx.extent = in_extent_;
    dx.maps.resize(dy.maps.size());
    const int outs = dy.extent.volume();
    for (std::size_t n = 0; n < dy.maps.size(); ++n) {
      dx.maps[n] = Mat<S>::Zero(dy.maps[n].rows(), in_extent_.volume());
      for (Eigen::Index c = 0; c < dy.maps[n].rows(); ++c)
        for (int o = 0; o < outs; ++o)
          dx.maps[n](c, argmax_[n][static_cast<std::size_t>(c) * outs + o]) += dy.maps[n](c, o);
    }
    return dx;
  }

 private:
  int k_, s_, p_;
  Extent3 in_extent_;
  std::vector<std::vector<int>> argmax_;
};

/// Flattens each map (channel-fastest) into one column per batch entry.
template <class S>
Mat<S> flatten(const FeatureBatch<S>& x) {
  const auto rows = static_cast<Eigen::Index>(x.channels()) * x.extent.volume();
  Mat<S> out(rows, x.batch());
  for (int n = 0; n < x.batch(); ++n)
    out.col(n) = Eigen::Map<const Vec<S>>(x.maps[n].data(), rows);
  return out;
}

template <class S>
FeatureBatch<S> unflatten(const Mat<S>& x, int channels, const Extent3& e) {
  FeatureBatch<S> out;
  out.extent = e;
  for (Eigen::Index n = 0; n < x.cols(); ++n)
    out.maps.push_back(Eigen::Map<const Mat<S>>(x.col(n).data(), channels, e.volume()));
  return out;
}

template <class S>
FeatureBatch<S> add(const FeatureBatch<S>& a, const FeatureBatch<S>& b) {
  FeatureBatch<S> y = a;
  for (std::size_t n = 0; n < y.maps.size(); ++n) y.maps[n] += b.maps[n];
  return y;
}

}  // namespace pqnet::nn
