#pragma once

#include <cmath>
#include <vector>

#include "pqnet/nn/tensor.hpp"

namespace pqnet::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adaptive-moment optimizer over the trainable entries of a parameter list.
template <class S>
class Adam {
 public:
  Adam(ParamList<S> params, AdamConfig cfg) : cfg_(cfg) {
    for (auto* p : params)
      if (p->trainable) params_.push_back(p);
    for (auto* p : params_) {
      m_.push_back(Mat<S>::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Mat<S>::Zero(p->value.rows(), p->value.cols()));
    }
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const S b1 = static_cast<S>(cfg_.beta1), b2 = static_cast<S>(cfg_.beta2);
    const S step = static_cast<S>(cfg_.lr / bc1);
    const S inv_bc2 = static_cast<S>(1.0 / bc2), eps = static_cast<S>(cfg_.eps);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& g = params_[i]->grad;
      m_[i] = b1 * m_[i] + (S(1) - b1) * g;
      v_[i] = b2 * v_[i] + (S(1) - b2) * g.cwiseAbs2();
      params_[i]->value.array() -=
          step * m_[i].array() / ((v_[i].array() * inv_bc2).sqrt() + eps);
    }
  }

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }

  void set_lr(double lr) { cfg_.lr = lr; }
  long steps() const { return t_; }

 private:
  AdamConfig cfg_;
  ParamList<S> params_;
  std::vector<Mat<S>> m_, v_;
  long t_ = 0;
};

}  // namespace pqnet::nn
