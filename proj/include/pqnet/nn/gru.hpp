#pragma once

#include <string>
#include <vector>

#include "pqnet/nn/tensor.hpp"

namespace pqnet::nn {

/// One direction of one gated-recurrent-unit layer (gate order r, z, n):
///   r = s(W_ir x + b_ir + W_hr h + b_hr)
///   z = s(W_iz x + b_iz + W_hz h + b_hz)
///   n = tanh(W_in x + b_in + r * (W_hn h + b_hn))
///   h' = (1 - z) * n + z * h
/// Sequences carry a 0/1 mask per step and column; masked columns keep their
/// previous state, which implements variable-length batches.
template <class S>
class GruLayer {
 public:
  GruLayer() = default;
  GruLayer(std::string name, int input, int hidden, Rng& rng) : hidden_(hidden) {
    w_ih_.name = name + ".weight_ih";
    w_hh_.name = name + ".weight_hh";
    b_ih_.name = name + ".bias_ih";
    b_hh_.name = name + ".bias_hh";
    w_ih_.resize(3 * hidden, input);
    w_hh_.resize(3 * hidden, hidden);
    b_ih_.resize(3 * hidden, 1);
    b_hh_.resize(3 * hidden, 1);
    const S bound = S(1) / std::sqrt(static_cast<S>(hidden));
    for (auto* p : params()) uniform_init(p->value, bound, rng);
  }

  int hidden() const { return hidden_; }
  int input() const { return static_cast<int>(w_ih_.value.cols()); }

  /// Single recurrence step without caching.
  Mat<S> step(const Mat<S>& x, const Mat<S>& h) const {
    StepCache c;
    return step_impl(x, h, c);
  }

  /// Runs the whole sequence (reverse = process from the last step to the
  /// first). Returns the state after each step, indexed by original time.
  std::vector<Mat<S>> forward(const std::vector<Mat<S>>& xs, const Mat<S>& h0,
                              const std::vector<RowVec<S>>& masks, bool reverse) {
    const int T = static_cast<int>(xs.size());
    reverse_ = reverse;
    cache_.assign(T, {});
    std::vector<Mat<S>> hs(T);
    Mat<S> h = h0;
    for (int k = 0; k < T; ++k) {
      const int t = reverse ? T - 1 - k : k;
      auto& c = cache_[t];
      c.x = xs[t];
      c.h_prev = h;
      c.mask = masks[t];
      const Mat<S> hn = step_impl(xs[t], h, c);
      h = masked(hn, h, masks[t]);
      hs[t] = h;
    }
    return hs;
  }

  /// Backpropagates through the cached sequence. `dhs[t]` is the gradient
  /// w.r.t. the state emitted at step t (may be empty), `dh_last` the
  /// gradient w.r.t. the final state. Returns input gradients; `dh0`
  /// receives the gradient w.r.t. the initial state.
  std::vector<Mat<S>> backward(const std::vector<Mat<S>>& dhs, const Mat<S>& dh_last, Mat<S>& dh0) {
    const int T = static_cast<int>(cache_.size());
    const int H = hidden_;
    std::vector<Mat<S>> dxs(T);
    Mat<S> dh = dh_last;
    for (int k = T - 1; k >= 0; --k) {
      const int t = reverse_ ? T - 1 - k : k;
      const auto& c = cache_[t];
      if (t < static_cast<int>(dhs.size()) && dhs[t].size() > 0) dh += dhs[t];
      const auto m = c.mask.array();
      // Through the mask: h_out = m * h_new + (1 - m) * h_prev.
      Mat<S> dh_new = (dh.array().rowwise() * m).matrix();
      Mat<S> dh_prev = (dh.array().rowwise() * (S(1) - m)).matrix();

      const auto r = c.r.array(), z = c.z.array(), n = c.n.array();
      const Mat<S> dn = (dh_new.array() * (S(1) - z)).matrix();
      const Mat<S> dz = (dh_new.array() * (c.h_prev.array() - n)).matrix();
      dh_prev += (dh_new.array() * z).matrix();
      const Mat<S> dan = (dn.array() * (S(1) - n.square())).matrix();
      const Mat<S> dr = (dan.array() * c.ghn.array()).matrix();
      const Mat<S> dar = (dr.array() * r * (S(1) - r)).matrix();
      const Mat<S> daz = (dz.array() * z * (S(1) - z)).matrix();

      Mat<S> dgi(3 * H, dan.cols()), dgh(3 * H, dan.cols());
      dgi.topRows(H) = dar;
      dgi.middleRows(H, H) = daz;
      dgi.bottomRows(H) = dan;
      dgh.topRows(H) = dar;
      dgh.middleRows(H, H) = daz;
      dgh.bottomRows(H) = (dan.array() * r).matrix();

      w_ih_.grad.noalias() += dgi * c.x.transpose();
      b_ih_.grad += dgi.rowwise().sum();
      w_hh_.grad.noalias() += dgh * c.h_prev.transpose();
      b_hh_.grad += dgh.rowwise().sum();
      dxs[t] = w_ih_.value.transpose() * dgi;
      dh_prev.noalias() += w_hh_.value.transpose() * dgh;
      dh = std::move(dh_prev);
    }
    dh0 = dh;
    return dxs;
  }

  ParamList<S> params() { return {&w_ih_, &w_hh_, &b_ih_, &b_hh_}; }
  Param<S>& weight_ih() { return w_ih_; }
  Param<S>& weight_hh() { return w_hh_; }
  Param<S>& bias_ih() { return b_ih_; }
  Param<S>& bias_hh() { return b_hh_; }

 private:
  struct StepCache {
    Mat<S> x, h_prev, r, z, n, ghn;
    RowVec<S> mask;
  };

  static Mat<S> masked(const Mat<S>& hn, const Mat<S>& h, const RowVec<S>& m) {
    return (hn.array().rowwise() * m.array() + h.array().rowwise() * (S(1) - m.array())).matrix();
  }

  Mat<S> step_impl(const Mat<S>& x, const Mat<S>& h, StepCache& c) const {
    const int H = hidden_;
    Mat<S> gi = w_ih_.value * x;
    gi.colwise() += b_ih_.value.col(0);
    Mat<S> gh = w_hh_.value * h;
    gh.colwise() += b_hh_.value.col(0);
    c.r = sigmoid((gi.topRows(H) + gh.topRows(H)).array()).matrix();
    c.z = sigmoid((gi.middleRows(H, H) + gh.middleRows(H, H)).array()).matrix();
    c.ghn = gh.bottomRows(H);
    c.n = (gi.bottomRows(H).array() + c.r.array() * c.ghn.array()).tanh().matrix();
    return ((S(1) - c.z.array()) * c.n.array() + c.z.array() * h.array()).matrix();
  }

  int hidden_ = 0;
  bool reverse_ = false;
  Param<S> w_ih_, w_hh_, b_ih_, b_hh_;
  std::vector<StepCache> cache_;
};

}  // namespace pqnet::nn
