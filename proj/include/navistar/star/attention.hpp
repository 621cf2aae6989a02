#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "navistar/autodiff/ops.hpp"
#include "navistar/autodiff/params.hpp"
#include "navistar/star/config.hpp"

namespace navistar::star {

using ad::Tensor;

// Logit assigned to masked keys before the softmax.
inline constexpr double kMaskedLogit = -1e30;

struct AttentionParams {
  ad::Linear query;  // no bias
  ad::Linear key;    // no bias
  ad::Linear value;  // no bias
  ad::Linear out;    // f_fc over the concatenated heads

  static AttentionParams make(std::size_t d, Rng& rng) {
    return {ad::Linear::make(d, d, rng, false), ad::Linear::make(d, d, rng, false), ad::Linear::make(d, d, rng, false),
            ad::Linear::make(d, d, rng, true)};
  }

  void register_in(ad::ParamSet& set, const std::string& prefix) const {
    query.register_in(set, prefix + ".query");
    key.register_in(set, prefix + ".key");
    value.register_in(set, prefix + ".value");
    out.register_in(set, prefix + ".out");
  }
};

struct AttentionResult {
  Tensor output;                // (Lq, d)
  std::vector<double> weights;  // (h, Lq, Lk), row-stochastic over Lk
};

// Multi-head attention with queries from `query_src` and keys/values from
// `key_src`. `key_mask` (length Lk, empty = all valid) excludes keys.
inline AttentionResult attend(const AttentionParams& p, const Tensor& query_src, const Tensor& key_src,
                              std::span<const char> key_mask, std::size_t heads, ScoreScaling scaling) {
  const std::size_t lq = query_src.dim(0);
  const std::size_t lk = key_src.dim(0);
  const std::size_t d = query_src.dim(1);
  if (lq == 0 || lk == 0) throw std::invalid_argument("attention: empty sequence");
  if (heads == 0 || d % heads != 0) throw std::invalid_argument("attention: model dim not divisible by heads");
  const std::size_t dh = d / heads;

  Tensor mask_bias;
  if (!key_mask.empty()) {
    if (key_mask.size() != lk) throw std::invalid_argument("attention: key mask length mismatch");
    std::size_t valid = 0;
    for (char m : key_mask) valid += m ? 1 : 0;
    if (valid == 0) throw std::invalid_argument("attention: all key positions are masked");
    if (valid < lk) {
      std::vector<double> bias(lq * lk, 0.0);
      for (std::size_t i = 0; i < lq; ++i)
        for (std::size_t j = 0; j < lk; ++j)
          if (!key_mask[j]) bias[i * lk + j] = kMaskedLogit;
      mask_bias = Tensor::from({lq, lk}, std::move(bias));
    }
  }

  const Tensor q = p.query(query_src);
  const Tensor k = p.key(key_src);
  const Tensor v = p.value(key_src);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  AttentionResult result;
  result.weights.reserve(heads * lq * lk);
  std::vector<Tensor> head_outputs;
  head_outputs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const Tensor qh = heads == 1 ? q : ad::slice(q, 1, h * dh, (h + 1) * dh);
    const Tensor kh = heads == 1 ? k : ad::slice(k, 1, h * dh, (h + 1) * dh);
    const Tensor vh = heads == 1 ? v : ad::slice(v, 1, h * dh, (h + 1) * dh);
    Tensor scores = ad::matmul(qh, ad::transpose(kh));
    if (scaling == ScoreScaling::inside_softmax) scores = ad::scale(scores, inv_sqrt);
    if (mask_bias.defined()) scores = ad::add(scores, mask_bias);
    const Tensor weights = ad::softmax_rows(scores);
    result.weights.insert(result.weights.end(), weights.data().begin(), weights.data().end());
    Tensor head = ad::matmul(weights, vh);
    if (scaling == ScoreScaling::outside_softmax) head = ad::scale(head, inv_sqrt);
    head_outputs.push_back(head);
  }
  const Tensor merged = heads == 1 ? head_outputs.front() : ad::concat(head_outputs, 1);
  result.output = p.out(merged);
  return result;
}

inline AttentionResult multi_head_attention(const AttentionParams& p, const Tensor& x, std::span<const char> mask,
                                            std::size_t heads, ScoreScaling scaling) {
  return attend(p, x, x, mask, heads, scaling);
}

// Three-layer position-wise feedforward: ReLU(ReLU(x W1) W2) W3.
struct FeedForward {
  Tensor w1, w2, w3;

  static FeedForward make(std::size_t d, std::size_t hidden, Rng& rng) {
    return {ad::uniform_param({d, hidden}, d, rng), ad::uniform_param({hidden, hidden}, hidden, rng),
            ad::uniform_param({hidden, d}, hidden, rng)};
  }

  Tensor operator()(const Tensor& x) const {
    return ad::matmul(ad::relu(ad::matmul(ad::relu(ad::matmul(x, w1)), w2)), w3);
  }

  void register_in(ad::ParamSet& set, const std::string& prefix) const {
    set.add(prefix + ".w1", w1);
    set.add(prefix + ".w2", w2);
    set.add(prefix + ".w3", w3);
  }
};

}  // namespace navistar::star
