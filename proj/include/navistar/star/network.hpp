#pragma once

#include <array>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "navistar/autodiff/ops.hpp"
#include "navistar/autodiff/params.hpp"
#include "navistar/sim/env_window.hpp"
#include "navistar/star/attention.hpp"
#include "navistar/star/config.hpp"
#include "navistar/star/graph.hpp"

namespace navistar::star {

using ad::Tensor;

struct SpatialParams {
  AttentionParams attention;
  FeedForward ffn;
  std::vector<Tensor> theta;  // K + 1 matrices (d, d)
  ad::Linear gate_from_attention;  // with bias
  ad::Linear gate_from_graph;      // no bias
};

struct TemporalParams {
  AttentionParams attention;
  FeedForward ffn;
};

// Transformer layer: residual attention followed by a residual feedforward.
struct TransformerParams {
  AttentionParams attention;
  FeedForward ffn;
};

struct StarParams {
  StarConfig config;
  ad::Linear embed;  // (kChannels, d) + bias
  SpatialParams spatial;
  TemporalParams temporal;
  TransformerParams cross_spatial;   // queries from the spatial modality
  TransformerParams cross_temporal;  // queries from the temporal modality
  TransformerParams fusion;          // self-attention over both crossed modalities
  ad::Linear value_head;             // (d, 1)
  ad::Linear mean_head;              // (d, 2)
  ad::Linear log_std_head;           // (d, 2)

  static StarParams make(const StarConfig& cfg, Rng& rng) {
    cfg.validate();
    const std::size_t d = cfg.model_dim;
    StarParams p;
    p.config = cfg;
    p.embed = ad::Linear::make(kChannels, d, rng);
    p.spatial.attention = AttentionParams::make(d, rng);
    p.spatial.ffn = FeedForward::make(d, cfg.ffn_hidden, rng);
    for (std::size_t k = 0; k <= cfg.cheb_order; ++k) p.spatial.theta.push_back(ad::uniform_param({d, d}, d, rng));
    p.spatial.gate_from_attention = ad::Linear::make(d, d, rng, true);
    p.spatial.gate_from_graph = ad::Linear::make(d, d, rng, false);
    p.temporal = {AttentionParams::make(d, rng), FeedForward::make(d, cfg.ffn_hidden, rng)};
    p.cross_spatial = {AttentionParams::make(d, rng), FeedForward::make(d, cfg.ffn_hidden, rng)};
    p.cross_temporal = {AttentionParams::make(d, rng), FeedForward::make(d, cfg.ffn_hidden, rng)};
    p.fusion = {AttentionParams::make(d, rng), FeedForward::make(d, cfg.ffn_hidden, rng)};
    p.value_head = ad::Linear::make(d, 1, rng);
    p.mean_head = ad::Linear::make(d, 2, rng);
    p.log_std_head = ad::Linear::make(d, 2, rng);
    return p;
  }

  ad::ParamSet params() const {
    ad::ParamSet set;
    embed.register_in(set, "embed");
    spatial.attention.register_in(set, "spatial.attention");
    spatial.ffn.register_in(set, "spatial.ffn");
    for (std::size_t k = 0; k < spatial.theta.size(); ++k) set.add("spatial.theta" + std::to_string(k), spatial.theta[k]);
    spatial.gate_from_attention.register_in(set, "spatial.gate_attention");
    spatial.gate_from_graph.register_in(set, "spatial.gate_graph");
    temporal.attention.register_in(set, "temporal.attention");
    temporal.ffn.register_in(set, "temporal.ffn");
    cross_spatial.attention.register_in(set, "cross_spatial.attention");
    cross_spatial.ffn.register_in(set, "cross_spatial.ffn");
    cross_temporal.attention.register_in(set, "cross_temporal.attention");
    cross_temporal.ffn.register_in(set, "cross_temporal.ffn");
    fusion.attention.register_in(set, "fusion.attention");
    fusion.ffn.register_in(set, "fusion.ffn");
    value_head.register_in(set, "head.value");
    mean_head.register_in(set, "head.mean");
    log_std_head.register_in(set, "head.log_std");
    return set;
  }
};

// Sinusoidal code for time index t: sin on even channels, cos on odd.
inline std::vector<double> positional_code(std::size_t t, std::size_t d) {
  std::vector<double> code(d);
  for (std::size_t c = 0; c < d; ++c) {
    const double exponent = static_cast<double>(c - c % 2) / static_cast<double>(d);
    const double angle = static_cast<double>(t) / std::pow(10000.0, exponent);
    code[c] = (c % 2 == 0) ? std::sin(angle) : std::cos(angle);
  }
  return code;
}

// Shifts every valid position so that the robot's latest position is the origin.
inline EnvWindow robot_centric(const EnvWindow& window) {
  EnvWindow out = window;
  const std::size_t last = window.steps - 1;
  const double ox = window.at(last, 0, kPx);
  const double oy = window.at(last, 0, kPy);
  for (std::size_t t = 0; t < window.steps; ++t)
    for (std::size_t i = 0; i < window.agents; ++i)
      if (window.valid(t, i)) {
        out.at(t, i, kPx) -= ox;
        out.at(t, i, kPy) -= oy;
      }
  return out;
}

struct Embeddings {
  Tensor spatial;   // (T*N, d), row t*N + i
  Tensor temporal;  // (N*T, d), row i*T + t
};

// Linear projection of the channels plus a time-only positional code.
inline Embeddings embed_inputs(const EnvWindow& window, const StarParams& p) {
  const std::size_t T = window.steps, N = window.agents, d = p.config.model_dim;
  std::vector<double> raw(window.values);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t i = 0; i < N; ++i)
      if (!window.valid(t, i))
        for (std::size_t c = 0; c < kChannels; ++c) raw[(t * N + i) * kChannels + c] = 0.0;
  std::vector<double> codes(T * N * d);
  for (std::size_t t = 0; t < T; ++t) {
    const auto code = positional_code(t, d);
    for (std::size_t i = 0; i < N; ++i) std::copy(code.begin(), code.end(), codes.begin() + (t * N + i) * d);
  }
  const Tensor input = Tensor::from({T * N, kChannels}, std::move(raw));
  const Tensor spatial = ad::add(p.embed(input), Tensor::from({T * N, d}, std::move(codes)));
  const Tensor temporal = ad::reshape(ad::permute(ad::reshape(spatial, {T, N, d}), {1, 0, 2}), {N * T, d});
  return {spatial, temporal};
}

struct BlockResult {
  Tensor features;             // (T*N, d) for spatial, (N*T, d) for temporal
  std::vector<double> maps;    // spatial (T, h, N, N) or temporal (N, h, T, T)
};

inline Tensor transformer_tail(const Tensor& attended, const Tensor& input, const FeedForward& ffn) {
  const Tensor residual = ad::add(attended, input);
  return ad::add(residual, ffn(residual));
}

// Gated mix d * a + (1 - d) * g.
inline Tensor gated_mix(const Tensor& gate, const Tensor& a, const Tensor& g) {
  return ad::add(ad::mul(gate, a), ad::mul(ad::add_scalar(ad::neg(gate), 1.0), g));
}

inline BlockResult spatial_block(const Tensor& embedded, const EnvWindow& window, const StarParams& p) {
  const std::size_t T = window.steps, N = window.agents, h = p.config.heads;
  BlockResult out;
  out.maps.assign(T * h * N * N, 0.0);
  std::vector<Tensor> per_step;
  per_step.reserve(T);
  for (std::size_t t = 0; t < T; ++t) {
    const Tensor x = T == 1 ? embedded : ad::slice(embedded, 0, t * N, (t + 1) * N);
    std::vector<char> mask(window.mask.begin() + t * N, window.mask.begin() + (t + 1) * N);
    auto att = multi_head_attention(p.spatial.attention, x, mask, h, ScoreScaling::outside_softmax);
    for (std::size_t head = 0; head < h; ++head)
      for (std::size_t i = 0; i < N; ++i) {
        if (!mask[i]) continue;
        for (std::size_t j = 0; j < N; ++j)
          out.maps[((t * h + head) * N + i) * N + j] = att.weights[(head * N + i) * N + j];
      }
    const Tensor attended = transformer_tail(att.output, x, p.spatial.ffn);

    std::vector<std::array<double, 2>> positions(N);
    for (std::size_t i = 0; i < N; ++i) positions[i] = {window.at(t, i, kPx), window.at(t, i, kPy)};
    const Tensor lap = scaled_laplacian(build_adjacency(positions, p.config.adjacency_sigma, mask));
    const Tensor graph = cheb_gcn(x, lap, p.spatial.theta);

    const Tensor gate =
        ad::sigmoid(ad::add(p.spatial.gate_from_attention(attended), p.spatial.gate_from_graph(graph)));
    per_step.push_back(gated_mix(gate, attended, graph));
  }
  out.features = T == 1 ? per_step.front() : ad::concat(per_step, 0);
  return out;
}

inline BlockResult temporal_block(const Tensor& embedded, const EnvWindow& window, const StarParams& p) {
  const std::size_t T = window.steps, N = window.agents, d = p.config.model_dim, h = p.config.heads;
  BlockResult out;
  out.maps.assign(N * h * T * T, 0.0);
  std::vector<Tensor> per_agent;
  per_agent.reserve(N);
  for (std::size_t i = 0; i < N; ++i) {
    std::vector<char> mask(T);
    bool any = false;
    for (std::size_t t = 0; t < T; ++t) {
      mask[t] = window.valid(t, i) ? 1 : 0;
      any = any || mask[t];
    }
    if (!any) {
      per_agent.push_back(Tensor::zeros({T, d}));
      continue;
    }
    const Tensor x = N == 1 ? embedded : ad::slice(embedded, 0, i * T, (i + 1) * T);
    auto att = multi_head_attention(p.temporal.attention, x, mask, h, ScoreScaling::outside_softmax);
    for (std::size_t head = 0; head < h; ++head)
      for (std::size_t a = 0; a < T; ++a) {
        if (!mask[a]) continue;
        for (std::size_t b = 0; b < T; ++b)
          out.maps[((i * h + head) * T + a) * T + b] = att.weights[(head * T + a) * T + b];
      }
    per_agent.push_back(transformer_tail(att.output, x, p.temporal.ffn));
  }
  out.features = N == 1 ? per_agent.front() : ad::concat(per_agent, 0);
  return out;
}

// Identifies one token of the fused sequence.
struct Token {
  std::size_t agent;
  std::size_t timestep;
};

struct FusionResult {
  Tensor fused;                          // Z_F, (L_F, d)
  Tensor crossed_spatial;                // Y_S, (L_S, d)
  Tensor crossed_temporal;               // Y_T, (L_T, d)
  std::vector<Token> spatial_tokens;     // time-major
  std::vector<Token> temporal_tokens;    // agent-major
  std::vector<double> cross_spatial;     // (h, L_S, L_F)
  std::vector<double> cross_temporal;    // (h, L_T, L_F)
  std::vector<double> self_fusion;       // (h, L_F, L_F)
};

inline Tensor cross_layer(const TransformerParams& p, const Tensor& unimodal, const Tensor& fused, std::size_t heads,
                          std::vector<double>& maps) {
  auto att = attend(p.attention, unimodal, fused, {}, heads, ScoreScaling::inside_softmax);
  maps = std::move(att.weights);
  return transformer_tail(att.output, unimodal, p.ffn);
}

inline FusionResult cross_modal_fuse(const Tensor& spatial_features, const Tensor& temporal_features,
                                     const EnvWindow& window, const StarParams& p) {
  const std::size_t T = window.steps, N = window.agents, d = p.config.model_dim, h = p.config.heads;
  FusionResult out;
  std::vector<std::size_t> s_rows, t_rows;
  std::vector<double> s_codes, t_codes;
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t i = 0; i < N; ++i)
      if (window.valid(t, i)) {
        s_rows.push_back(t * N + i);
        out.spatial_tokens.push_back({i, t});
        const auto code = positional_code(t, d);
        s_codes.insert(s_codes.end(), code.begin(), code.end());
      }
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t t = 0; t < T; ++t)
      if (window.valid(t, i)) {
        t_rows.push_back(i * T + t);
        out.temporal_tokens.push_back({i, t});
        const auto code = positional_code(t, d);
        t_codes.insert(t_codes.end(), code.begin(), code.end());
      }
  const Tensor xs = ad::add(ad::gather_rows(spatial_features, s_rows), Tensor::from({s_rows.size(), d}, std::move(s_codes)));
  const Tensor xt = ad::add(ad::gather_rows(temporal_features, t_rows), Tensor::from({t_rows.size(), d}, std::move(t_codes)));
  const Tensor xf = ad::concat({xs, xt}, 0);

  out.crossed_spatial = cross_layer(p.cross_spatial, xs, xf, h, out.cross_spatial);
  out.crossed_temporal = cross_layer(p.cross_temporal, xt, xf, h, out.cross_temporal);
  const Tensor joined = ad::concat({out.crossed_spatial, out.crossed_temporal}, 0);
  out.fused = cross_layer(p.fusion, joined, joined, h, out.self_fusion);
  return out;
}

struct PolicyHead {
  Tensor value;    // (1, 1)
  Tensor mean;     // (1, 2)
  Tensor log_std;  // (1, 2), clamped
};

// Mean-pools the rows of Z_F selected by `row_mask` (empty = all) and applies
// the value and policy heads.
inline PolicyHead decode(const Tensor& fused, const StarParams& p, std::span<const char> row_mask = {}) {
  Tensor rows = fused;
  if (!row_mask.empty()) {
    std::vector<std::size_t> keep;
    for (std::size_t r = 0; r < row_mask.size(); ++r)
      if (row_mask[r]) keep.push_back(r);
    rows = ad::gather_rows(fused, keep);
  }
  const Tensor pooled = ad::reshape(ad::mean_axis(rows, 0), {1, fused.dim(1)});
  return {p.value_head(pooled), p.mean_head(pooled),
          ad::clamp(p.log_std_head(pooled), p.config.log_std_min, p.config.log_std_max)};
}

struct AttentionBundle {
  std::size_t steps = 0, agents = 0, heads = 0;
  std::vector<double> spatial;   // (T, h, N, N)
  std::vector<double> temporal;  // (N, h, T, T)
  std::vector<Token> spatial_tokens;
  std::vector<Token> temporal_tokens;
  std::vector<double> cross_spatial;   // (h, L_S, L_F)
  std::vector<double> cross_temporal;  // (h, L_T, L_F)
  std::vector<double> self_fusion;     // (h, L_F, L_F)
  std::vector<std::vector<char>> mask;  // (T, N)

  std::size_t spatial_length() const { return spatial_tokens.size(); }
  std::size_t temporal_length() const { return temporal_tokens.size(); }
  std::size_t fused_length() const { return spatial_tokens.size() + temporal_tokens.size(); }
};

struct StarOutput {
  Tensor value;
  Tensor mean;
  Tensor log_std;
  Tensor pooled_input;  // Z_F, kept for auxiliary heads
  AttentionBundle attention;
};

// embed -> spatial block -> temporal block -> cross-modal fusion -> decoder.
// Positions are moved into the robot frame first.
inline StarOutput forward(const EnvWindow& world_window, const StarParams& p) {
  world_window.validate();
  if (world_window.agents > p.config.max_agents)
    throw std::invalid_argument("star: window has " + std::to_string(world_window.agents) + " agents, max is " +
                                std::to_string(p.config.max_agents));
  const EnvWindow window = robot_centric(world_window);
  const auto emb = embed_inputs(window, p);
  auto spatial = spatial_block(emb.spatial, window, p);
  auto temporal = temporal_block(emb.temporal, window, p);
  auto fusion = cross_modal_fuse(spatial.features, temporal.features, window, p);
  auto head = decode(fusion.fused, p);

  StarOutput out{head.value, head.mean, head.log_std, fusion.fused, {}};
  auto& b = out.attention;
  b.steps = window.steps;
  b.agents = window.agents;
  b.heads = p.config.heads;
  b.spatial = std::move(spatial.maps);
  b.temporal = std::move(temporal.maps);
  b.spatial_tokens = std::move(fusion.spatial_tokens);
  b.temporal_tokens = std::move(fusion.temporal_tokens);
  b.cross_spatial = std::move(fusion.cross_spatial);
  b.cross_temporal = std::move(fusion.cross_temporal);
  b.self_fusion = std::move(fusion.self_fusion);
  for (std::size_t t = 0; t < window.steps; ++t)
    b.mask.emplace_back(window.mask.begin() + t * window.agents, window.mask.begin() + (t + 1) * window.agents);
  return out;
}

}  // namespace navistar::star
