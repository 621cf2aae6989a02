#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "navistar/autodiff/optim.hpp"
#include "navistar/pref/preference.hpp"
#include "navistar/util/rng.hpp"

namespace navistar::pref {

// `size` examples drawn with replacement; the whole set when it is smaller.
inline std::vector<PreferenceExample> minibatch(const std::vector<PreferenceExample>& all, std::size_t size, Rng& rng) {
  if (all.empty()) throw std::invalid_argument("minibatch: no examples");
  if (size >= all.size()) return all;
  std::vector<PreferenceExample> out;
  out.reserve(size);
  for (std::size_t k = 0; k < size; ++k) out.push_back(all[rng.index(all.size())]);
  return out;
}

// Independently initialised reward nets trained on the same labels. The mean
// is the reward handed to the policy; the spread drives pair selection.
class RewardEnsemble {
 public:
  RewardEnsemble(std::size_t members, std::uint64_t seed, double lr = 3e-4, std::size_t hidden = 64) {
    if (members == 0) throw std::invalid_argument("ensemble needs at least one member");
    for (std::size_t k = 0; k < members; ++k) {
      Rng rng(mix_seed(seed, k));
      nets_.push_back(RewardNet::make(rng, hidden));
      optimizers_.push_back(std::make_unique<ad::Adam>(nets_.back().params().tensors(), lr));
    }
  }

  std::size_t size() const { return nets_.size(); }
  const RewardNet& member(std::size_t k) const { return nets_.at(k); }
  RewardNet& member(std::size_t k) { return nets_.at(k); }

  ad::ParamSet params() const {
    ad::ParamSet set;
    for (std::size_t k = 0; k < nets_.size(); ++k) set.add_all("reward" + std::to_string(k) + ".", nets_[k].params());
    return set;
  }

  // One Adam step per member on the batch; returns the mean member loss.
  double train_step(const std::vector<PreferenceExample>& batch) {
    double total = 0.0;
    for (std::size_t k = 0; k < nets_.size(); ++k) {
      optimizers_[k]->zero_grad();
      const ad::Tensor loss = pref_loss(batch, nets_[k]);
      ad::backward(loss);
      optimizers_[k]->step();
      total += loss.item();
    }
    return total / static_cast<double>(nets_.size());
  }

  double loss(const std::vector<PreferenceExample>& batch) const {
    ad::NoGradGuard guard;
    double total = 0.0;
    for (const auto& net : nets_) total += pref_loss(batch, net).item();
    return total / static_cast<double>(nets_.size());
  }

  double reward(std::span<const double> features) const {
    double total = 0.0;
    for (const auto& net : nets_) total += net.reward(features);
    return total / static_cast<double>(nets_.size());
  }

  // Rewards for many feature rows at once, shape (n).
  std::vector<double> rewards(const Features& rows) const {
    ad::NoGradGuard guard;
    std::vector<double> out(rows.size(), 0.0);
    if (rows.empty()) return out;
    const ad::Tensor x = features_tensor({&rows});
    for (const auto& net : nets_) {
      const ad::Tensor r = net(x);
      for (std::size_t i = 0; i < rows.size(); ++i) out[i] += r[i];
    }
    for (double& v : out) v /= static_cast<double>(nets_.size());
    return out;
  }

  // Variance of P1 across members, from pairwise differences so that members
  // in exact agreement score exactly 0.
  double disagreement(const Features& seg0, const Features& seg1) const {
    std::vector<double> p;
    for (const auto& net : nets_) p.push_back(preference_predictor(seg0, seg1, net));
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i)
      for (std::size_t j = i + 1; j < p.size(); ++j) sum += (p[i] - p[j]) * (p[i] - p[j]);
    const double n = static_cast<double>(p.size());
    return sum / (n * n);
  }

 private:
  std::vector<RewardNet> nets_;
  std::vector<std::unique_ptr<ad::Adam>> optimizers_;
};

}  // namespace navistar::pref
