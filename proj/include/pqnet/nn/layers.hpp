#pragma once

#include <string>

#include "pqnet/nn/tensor.hpp"

namespace pqnet::nn {

/// y = W x + b over a batch stored column-wise.
template <class S>
class Linear {
 public:
  Linear() = default;
  Linear(std::string name, int in, int out, Rng& rng) {
    weight_.name = name + ".weight";
    bias_.name = name + ".bias";
    weight_.resize(out, in);
    bias_.resize(out, 1);
    const S bound = S(1) / std::sqrt(static_cast<S>(in));
    uniform_init(weight_.value, bound, rng);
    uniform_init(bias_.value, bound, rng);
  }

  int in_features() const { return static_cast<int>(weight_.value.cols()); }
  int out_features() const { return static_cast<int>(weight_.value.rows()); }

  Mat<S> apply(const Mat<S>& x) const {
    Mat<S> y = weight_.value * x;
    y.colwise() += bias_.value.col(0);
    return y;
  }

  Mat<S> forward(const Mat<S>& x) {
    input_ = x;
    return apply(x);
  }

  Mat<S> backward(const Mat<S>& dy) {
    weight_.grad.noalias() += dy * input_.transpose();
    bias_.grad += dy.rowwise().sum();
    return weight_.value.transpose() * dy;
  }

  ParamList<S> params() { return {&weight_, &bias_}; }
  Param<S>& weight() { return weight_; }
  Param<S>& bias() { return bias_; }
  const Param<S>& weight() const { return weight_; }
  const Param<S>& bias() const { return bias_; }

 private:
  Param<S> weight_, bias_;
  Mat<S> input_;
};

/// Leaky rectifier; slope 0 gives the plain rectifier.
template <class S>
class LeakyRelu {
 public:
  explicit LeakyRelu(S slope = S(0.02)) : slope_(slope) {}

  Mat<S> apply(const Mat<S>& x) const {
    return x.unaryExpr([s = slope_](S v) { return v > S(0) ? v : s * v; });
  }
  Mat<S> forward(const Mat<S>& x) {
    deriv_ = x.unaryExpr([s = slope_](S v) { return v > S(0) ? S(1) : s; });
    return apply(x);
  }
  Mat<S> backward(const Mat<S>& dy) const { return dy.cwiseProduct(deriv_); }
  const Mat<S>& derivative() const { return deriv_; }
  S slope() const { return slope_; }

 private:
  S slope_;
  Mat<S> deriv_;
};

template <class S>
class Sigmoid {
 public:
  Mat<S> apply(const Mat<S>& x) const { return sigmoid(x.array()).matrix(); }
  Mat<S> forward(const Mat<S>& x) {
    out_ = apply(x);
    return out_;
  }
  Mat<S> backward(const Mat<S>& dy) const {
    return (dy.array() * out_.array() * (S(1) - out_.array())).matrix();
  }

 private:
  Mat<S> out_;
};

/// Inverted dropout; identity when not training or rate == 0.
template <class S>
class Dropout {
 public:
  explicit Dropout(S rate = S(0)) : rate_(rate) {}

  Mat<S> forward(const Mat<S>& x, bool training, Rng& rng) {
    active_ = training && rate_ > S(0);
    if (!active_) return x;
    std::bernoulli_distribution keep(1.0 - static_cast<double>(rate_));
    const S scale = S(1) / (S(1) - rate_);
    mask_.resize(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < mask_.size(); ++i) mask_.data()[i] = keep(rng) ? scale : S(0);
    return x.cwiseProduct(mask_);
  }
  Mat<S> backward(const Mat<S>& dy) const { return active_ ? Mat<S>(dy.cwiseProduct(mask_)) : dy; }
  S rate() const { return rate_; }

 private:
  S rate_;
  bool active_ = false;
  Mat<S> mask_;
};

/// Vertical concatenation [a; b].
template <class S>
Mat<S> vcat(const Mat<S>& a, const Mat<S>& b) {
  Mat<S> out(a.rows() + b.rows(), a.cols());
  out.topRows(a.rows()) = a;
  out.bottomRows(b.rows()) = b;
  return out;
}

}  // namespace pqnet::nn
