#pragma once

#include <cmath>
#include <vector>

#include "navistar/autodiff/tensor.hpp"

namespace navistar::ad {

// Global L2 norm of all gradients; rescales them in place when above max_norm.
inline double clip_grad_norm(std::vector<Tensor>& params, double max_norm) {
  double total = 0.0;
  for (auto& p : params)
    if (p.has_grad())
      for (double g : p.grad()) total += g * g;
  total = std::sqrt(total);
  if (total > max_norm && total > 0.0) {
    const double factor = max_norm / total;
    for (auto& p : params)
      if (p.has_grad())
        for (double& g : p.mutable_grad()) g *= factor;
  }
  return total;
}

class Adam {
 public:
  Adam(std::vector<Tensor> params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& p : params_) {
      m_.emplace_back(p.numel(), 0.0);
      v_.emplace_back(p.numel(), 0.0);
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& p = params_[k];
      if (!p.has_grad()) continue;
      auto w = p.mutable_data();
      auto g = p.grad();
      for (std::size_t i = 0; i < w.size(); ++i) {
        m_[k][i] = beta1_ * m_[k][i] + (1.0 - beta1_) * g[i];
        v_[k][i] = beta2_ * v_[k][i] + (1.0 - beta2_) * g[i] * g[i];
        w[i] -= lr_ * (m_[k][i] / c1) / (std::sqrt(v_[k][i] / c2) + eps_);
      }
    }
  }

  std::vector<Tensor>& params() { return params_; }
  double learning_rate() const { return lr_; }
  long steps() const { return t_; }

 private:
  std::vector<Tensor> params_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace navistar::ad
