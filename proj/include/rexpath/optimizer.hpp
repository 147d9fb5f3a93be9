#pragma once

#include <cmath>
#include <vector>

#include "rexpath/params.hpp"

namespace rexpath {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// Adam with decoupled weight decay, applied only to parameters flagged
// `decay` (projection matrices).
template <typename S>
class AdamW {
 public:
  AdamW(const ParamStore<S>& store, AdamWConfig cfg) : cfg_(cfg) {
    for (const auto& p : store) {
      m_.push_back(Mat<S>::Zero(p.value.rows(), p.value.cols()));
      v_.push_back(Mat<S>::Zero(p.value.rows(), p.value.cols()));
    }
  }

  void step(ParamStore<S>& store) {
    ++t_;
    const S b1 = static_cast<S>(cfg_.beta1), b2 = static_cast<S>(cfg_.beta2);
    const S c1 = static_cast<S>(1.0 - std::pow(cfg_.beta1, t_));
    const S c2 = static_cast<S>(1.0 - std::pow(cfg_.beta2, t_));
    const S lr = static_cast<S>(cfg_.lr);
    const S eps = static_cast<S>(cfg_.eps);
    const S wd = static_cast<S>(cfg_.lr * cfg_.weight_decay);
    std::size_t i = 0;
    for (auto& p : store) {
      Mat<S>& m = m_[i];
      Mat<S>& v = v_[i];
      ++i;
      m = b1 * m + (S(1) - b1) * p.grad;
      v = b2 * v + (S(1) - b2) * p.grad.cwiseAbs2();
      if (p.decay && cfg_.weight_decay > 0.0) p.value -= wd * p.value;
      p.value.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
    }
  }

  void set_lr(double lr) { cfg_.lr = lr; }
  long steps() const { return t_; }

 private:
  AdamWConfig cfg_;
  std::vector<Mat<S>> m_, v_;
  long t_ = 0;
};

// Scales all gradients so their global L2 norm is at most max_norm.
// Returns the norm before clipping.
template <typename S>
double clip_grad_norm(ParamStore<S>& store, double max_norm) {
  const double norm = store.grad_norm();
  if (max_norm > 0.0 && norm > max_norm) {
    const S scale = static_cast<S>(max_norm / (norm + 1e-12));
    for (auto& p : store) p.grad *= scale;
  }
  return norm;
}

}  // namespace rexpath
