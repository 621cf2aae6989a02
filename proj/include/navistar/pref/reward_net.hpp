#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "navistar/autodiff/ops.hpp"
#include "navistar/autodiff/params.hpp"
#include "navistar/pref/segment.hpp"
#include "navistar/util/rng.hpp"

namespace navistar::pref {

using Features = std::vector<std::vector<double>>;  // one row of kFeatureDim per step

// Per-step learned reward: MLP over reward_features with a tanh output, so
// every value lies in [-1, 1].
struct RewardNet {
  ad::Mlp mlp;

  static RewardNet make(Rng& rng, std::size_t hidden = 64) {
    return {ad::Mlp::make({kFeatureDim, hidden, hidden, 1}, rng, ad::Mlp::Activation::relu)};
  }

  ad::ParamSet params(const std::string& prefix = "") const { return mlp.params(prefix); }

  // (n, kFeatureDim) -> (n, 1)
  ad::Tensor operator()(const ad::Tensor& features) const { return ad::tanh(mlp(features)); }

  double reward(std::span<const double> features) const {
    if (features.size() != kFeatureDim) throw std::invalid_argument("reward_net: expected " + std::to_string(kFeatureDim) + " features");
    ad::NoGradGuard guard;
    return (*this)(ad::Tensor::from({1, kFeatureDim}, {features.begin(), features.end()})).item();
  }
};

inline ad::Tensor features_tensor(const std::vector<const Features*>& segments) {
  if (segments.empty()) throw std::invalid_argument("no segments");
  const std::size_t len = segments.front()->size();
  std::vector<double> flat;
  flat.reserve(segments.size() * len * kFeatureDim);
  for (const Features* f : segments) {
    if (f->size() != len || len == 0) throw std::invalid_argument("segments must share one non-zero length");
    for (const auto& row : *f) {
      if (row.size() != kFeatureDim) throw std::invalid_argument("malformed feature row");
      flat.insert(flat.end(), row.begin(), row.end());
    }
  }
  return ad::Tensor::from({segments.size() * len, kFeatureDim}, std::move(flat));
}

// Summed learned reward of each segment, shape (k).
inline ad::Tensor segment_returns(const RewardNet& net, const std::vector<const Features*>& segments) {
  const std::size_t len = segments.empty() ? 0 : segments.front()->size();
  const ad::Tensor r = net(features_tensor(segments));
  return ad::sum_axis(ad::reshape(r, {segments.size(), len}), 1);
}

inline double segment_return(const RewardNet& net, const Features& features) {
  ad::NoGradGuard guard;
  return segment_returns(net, {&features})[0];
}

}  // namespace navistar::pref
