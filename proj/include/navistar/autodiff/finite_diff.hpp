#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "navistar/autodiff/tensor.hpp"

namespace navistar::ad {

class NonDeterministicError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Compares reverse-mode gradients of a scalar function of several leaf
// tensors against central differences. Returns
//   max_i |analytic_i - numeric_i| / max(1, |numeric_i|).
inline double finite_diff_check(const std::function<Tensor()>& f, std::vector<Tensor> leaves, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("finite_diff_check: eps must be positive");
  double first = 0.0;
  double second = 0.0;
  {
    NoGradGuard guard;
    first = f().item();
    second = f().item();
  }
  if (first != second && !(std::isnan(first) && std::isnan(second)))
    throw NonDeterministicError("finite_diff_check: function is not deterministic");

  for (auto& leaf : leaves) {
    leaf.set_requires_grad(true);
    leaf.zero_grad();
  }
  backward(f());

  double worst = 0.0;
  for (auto& leaf : leaves) {
    std::vector<double> analytic(leaf.grad().begin(), leaf.grad().end());
    auto values = leaf.mutable_data();
    NoGradGuard guard;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double up = f().item();
      values[i] = saved - eps;
      const double down = f().item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric)));
    }
  }
  return worst;
}

// Single-input form: f maps the probe tensor to a scalar.
inline double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps) {
  Tensor probe = x;
  return finite_diff_check([&]() { return f(probe); }, {probe}, eps);
}

}  // namespace navistar::ad
