#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace navistar::star {

// How the 1/sqrt(d_h) factor enters scaled dot-product attention.
//  - outside_softmax: head = softmax(Q K^T) V / sqrt(d_h)   (spatial/temporal blocks)
//  - inside_softmax:  head = softmax(Q K^T / sqrt(d_h)) V   (cross-modal and self fusion)
enum class ScoreScaling { outside_softmax, inside_softmax };

struct StarConfig {
  std::size_t model_dim = 32;
  std::size_t heads = 4;
  std::size_t cheb_order = 2;   // K
  std::size_t window = 5;       // T
  std::size_t max_agents = 21;  // N_max, robot included
  std::size_t ffn_hidden = 64;
  double adjacency_sigma = 2.0;  // meters, Gaussian kernel width
  double log_std_min = -5.0;
  double log_std_max = 2.0;

  std::size_t head_dim() const { return model_dim / heads; }

  void validate() const {
    if (model_dim == 0 || heads == 0) throw std::invalid_argument("star: model_dim and heads must be positive");
    if (model_dim % heads != 0)
      throw std::invalid_argument("star: model_dim " + std::to_string(model_dim) + " not divisible by heads " +
                                  std::to_string(heads));
    if (window == 0) throw std::invalid_argument("star: window must be at least 1");
    if (max_agents == 0) throw std::invalid_argument("star: max_agents must be at least 1");
    if (ffn_hidden == 0) throw std::invalid_argument("star: ffn_hidden must be positive");
    if (!(adjacency_sigma > 0.0)) throw std::invalid_argument("star: adjacency_sigma must be positive");
  }
};

}  // namespace navistar::star
