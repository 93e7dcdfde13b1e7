#pragma once

#include <cmath>
#include <vector>

#include "teawib/autograd.hpp"

namespace teawib {

struct AdamWOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// AdamW with decoupled weight decay. Parameters flagged non-trainable are
/// never touched, regardless of their accumulated gradient.
template <typename T>
class BasicAdamW {
 public:
  BasicAdamW(std::vector<BasicParameter<T>*> params, AdamWOptions options)
      : params_(std::move(params)), options_(options) {
    if (!(options_.lr > 0)) throw Error("AdamW: learning rate must be positive");
    for (auto* p : params_) {
      first_.emplace_back(p->value.shape());
      second_.emplace_back(p->value.shape());
    }
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
    const T decay = static_cast<T>(1.0 - options_.lr * options_.weight_decay);
    const T b1 = static_cast<T>(options_.beta1), b2 = static_cast<T>(options_.beta2);
    const T step_size = static_cast<T>(options_.lr / bc1);
    const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
    const T eps = static_cast<T>(options_.eps);
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& p = *params_[k];
      if (!p.trainable) continue;
      auto& m = first_[k];
      auto& v = second_[k];
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const T g = p.grad[i];
        m[i] = b1 * m[i] + (T(1) - b1) * g;
        v[i] = b2 * v[i] + (T(1) - b2) * g * g;
        p.value[i] *= decay;
        p.value[i] -= step_size * m[i] / (std::sqrt(v[i]) * inv_sqrt_bc2 + eps);
      }
    }
  }

  void zero_grad() {
    for (auto* p : params_) p->grad.fill(T(0));
  }

  void set_lr(double lr) {
    if (!(lr > 0)) throw Error("AdamW: learning rate must be positive");
    options_.lr = lr;
  }

  long steps_taken() const noexcept { return t_; }
  const AdamWOptions& options() const noexcept { return options_; }

 private:
  std::vector<BasicParameter<T>*> params_;
  AdamWOptions options_;
  std::vector<BasicTensor<T>> first_, second_;
  long t_ = 0;
};

using AdamW = BasicAdamW<float>;

}  // namespace teawib
