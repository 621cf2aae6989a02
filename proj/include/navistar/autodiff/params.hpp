#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "navistar/autodiff/ops.hpp"
#include "navistar/autodiff/tensor.hpp"
#include "navistar/util/rng.hpp"

namespace navistar::ad {

// Learnable leaf initialised uniformly in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
inline Tensor uniform_param(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  std::vector<double> values(numel_of(shape));
  for (auto& v : values) v = rng.uniform(-bound, bound);
  return Tensor::from(std::move(shape), std::move(values), true);
}

// Ordered name -> tensor mapping used for checkpoints and optimizers.
class ParamSet {
 public:
  void add(const std::string& name, const Tensor& t) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    index_[name] = entries_.size();
    entries_.emplace_back(name, t);
  }

  void add_all(const std::string& prefix, const ParamSet& other) {
    for (const auto& [name, t] : other.entries_) add(prefix + name, t);
  }

  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  const Tensor& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
    return entries_[it->second].second;
  }

  std::vector<Tensor> tensors() const {
    std::vector<Tensor> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.second);
    return out;
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.second.numel();
    return n;
  }

  void zero_grad() {
    for (auto& e : entries_) e.second.node()->grad.assign(e.second.numel(), 0.0);
  }

  // Copies values (not identity) from another set with identical layout.
  void copy_values_from(const ParamSet& other) {
    check_layout(other);
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      auto dst = entries_[i].second.mutable_data();
      auto src = other.entries_[i].second.data();
      std::copy(src.begin(), src.end(), dst.begin());
    }
  }

  // this <- (1 - tau) * this + tau * other
  void polyak_from(const ParamSet& other, double tau) {
    check_layout(other);
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      auto dst = entries_[i].second.mutable_data();
      auto src = other.entries_[i].second.data();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = (1.0 - tau) * dst[k] + tau * src[k];
    }
  }

 private:
  void check_layout(const ParamSet& other) const {
    if (other.entries_.size() != entries_.size()) throw std::invalid_argument("parameter sets differ in size");
    for (std::size_t i = 0; i < entries_.size(); ++i)
      if (entries_[i].second.shape() != other.entries_[i].second.shape())
        throw ShapeError("parameter " + entries_[i].first + " shape mismatch");
  }

  std::vector<std::pair<std::string, Tensor>> entries_;
  std::map<std::string, std::size_t> index_;
};

// Affine map x W + b over the last axis of a rank-2 input.
struct Linear {
  Tensor weight;  // (in, out)
  Tensor bias;    // (out) or undefined

  static Linear make(std::size_t in, std::size_t out, Rng& rng, bool with_bias = true) {
    Linear l;
    l.weight = uniform_param({in, out}, in, rng);
    if (with_bias) l.bias = uniform_param({out}, in, rng);
    return l;
  }

  Tensor operator()(const Tensor& x) const {
    Tensor y = matmul(x, weight);
    return bias.defined() ? add_bias(y, bias) : y;
  }

  void register_in(ParamSet& set, const std::string& name) const {
    set.add(name + ".weight", weight);
    if (bias.defined()) set.add(name + ".bias", bias);
  }
};

// Fully connected network with a shared hidden activation.
struct Mlp {
  enum class Activation { relu, tanh };
  std::vector<Linear> layers;
  Activation activation = Activation::relu;

  static Mlp make(const std::vector<std::size_t>& sizes, Rng& rng, Activation act = Activation::relu) {
    Mlp m;
    m.activation = act;
    for (std::size_t i = 0; i + 1 < sizes.size(); ++i) m.layers.push_back(Linear::make(sizes[i], sizes[i + 1], rng));
    return m;
  }

  Tensor operator()(Tensor x) const {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      x = layers[i](x);
      if (i + 1 < layers.size()) x = activation == Activation::relu ? relu(x) : ad::tanh(x);
    }
    return x;
  }

  ParamSet params(const std::string& prefix = "") const {
    ParamSet set;
    for (std::size_t i = 0; i < layers.size(); ++i) layers[i].register_in(set, prefix + "layer" + std::to_string(i));
    return set;
  }
};

}  // namespace navistar::ad
