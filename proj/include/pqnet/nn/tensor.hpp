#pragma once

#include <cmath>
#include <cstring>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pqnet/common.hpp"

namespace pqnet::nn {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <class S>
using RowVec = Eigen::Matrix<S, 1, Eigen::Dynamic>;

using Rng = std::mt19937_64;

/// A named tensor with its accumulated gradient. Buffers (e.g. running
/// statistics) are stored the same way with `trainable == false`.
template <class S>
struct Param {
  std::string name;
  Mat<S> value;
  Mat<S> grad;
  bool trainable = true;

  void resize(Eigen::Index rows, Eigen::Index cols) {
    value = Mat<S>::Zero(rows, cols);
    grad = Mat<S>::Zero(rows, cols);
  }
  void zero_grad() { grad.setZero(); }
};

template <class S>
using ParamList = std::vector<Param<S>*>;

template <class S>
void uniform_init(Mat<S>& m, S bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-static_cast<double>(bound), static_cast<double>(bound));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(dist(rng));
}

template <class S>
void zero_grads(const ParamList<S>& ps) {
  for (auto* p : ps) p->zero_grad();
}

/// FNV-1a over the raw bytes of every trainable tensor, in order.
template <class S>
std::uint64_t checksum(const ParamList<S>& ps) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto* p : ps) {
    if (!p->trainable) continue;
    h = fnv1a(p->name, h);
    h = fnv1a(std::string_view(reinterpret_cast<const char*>(p->value.data()),
                               sizeof(S) * static_cast<std::size_t>(p->value.size())),
              h);
  }
  return h;
}

template <class S>
void append(ParamList<S>& dst, const ParamList<S>& src) {
  dst.insert(dst.end(), src.begin(), src.end());
}

/// Element-wise logistic function that stays finite for large |x|.
template <class Derived>
auto sigmoid(const Eigen::ArrayBase<Derived>& x) {
  using S = typename Derived::Scalar;
  return x.unaryExpr([](S v) {
    if (v >= S(0)) return S(1) / (S(1) + std::exp(-v));
    const S e = std::exp(v);
    return e / (S(1) + e);
  });
}

}  // namespace pqnet::nn
