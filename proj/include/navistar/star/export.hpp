#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "navistar/star/network.hpp"

namespace navistar::star {

inline std::string agent_label(std::size_t slot) { return slot == 0 ? "robot" : "human" + std::to_string(slot); }

// "t-4" ... "t" for a window of 5, oldest first.
inline std::string timestep_label(std::size_t t, std::size_t steps) {
  const std::size_t back = steps - 1 - t;
  return back == 0 ? std::string("t") : "t-" + std::to_string(back);
}

namespace export_detail {

inline nlohmann::ordered_json map_json(const std::string& name, std::vector<std::size_t> shape,
                                       const std::vector<std::string>& axes, const std::vector<double>& data) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  if (n != data.size()) throw std::logic_error("attention map " + name + " does not match its shape");
  nlohmann::ordered_json j;
  j["name"] = name;
  j["shape"] = shape;
  j["axes"] = axes;
  nlohmann::ordered_json values = nlohmann::ordered_json::array();
  for (double v : data) values.push_back(std::isfinite(v) ? v : 0.0);
  j["data"] = std::move(values);
  return j;
}

inline nlohmann::ordered_json tokens_json(const std::vector<Token>& tokens) {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (const auto& t : tokens) out.push_back({{"agent", t.agent}, {"timestep", t.timestep}});
  return out;
}

}  // namespace export_detail

// Self-describing attention payload: every map carries its shape, axis names
// and a row-major array; rows are the attending query.
inline nlohmann::ordered_json attention_to_json(const AttentionBundle& b) {
  using export_detail::map_json;
  const std::size_t T = b.steps, N = b.agents, h = b.heads;
  const std::size_t ls = b.spatial_length(), lt = b.temporal_length(), lf = b.fused_length();
  nlohmann::ordered_json j;
  j["format"] = "navistar-attention/1";
  j["steps"] = T;
  j["agents"] = N;
  j["heads"] = h;
  std::vector<std::string> ids, labels;
  for (std::size_t i = 0; i < N; ++i) ids.push_back(agent_label(i));
  for (std::size_t t = 0; t < T; ++t) labels.push_back(timestep_label(t, T));
  j["agent_ids"] = ids;
  j["timestep_labels"] = labels;
  j["mask"] = b.mask;
  j["spatial_tokens"] = export_detail::tokens_json(b.spatial_tokens);
  j["temporal_tokens"] = export_detail::tokens_json(b.temporal_tokens);
  j["maps"] = nlohmann::ordered_json::array({
      map_json("spatial", {T, h, N, N}, {"timestep", "head", "query_agent", "key_agent"}, b.spatial),
      map_json("temporal", {N, h, T, T}, {"agent", "head", "query_timestep", "key_timestep"}, b.temporal),
      map_json("cross_spatial", {h, ls, lf}, {"head", "spatial_token", "fused_token"}, b.cross_spatial),
      map_json("cross_temporal", {h, lt, lf}, {"head", "temporal_token", "fused_token"}, b.cross_temporal),
      map_json("self_fusion", {h, lf, lf}, {"head", "fused_token", "fused_token"}, b.self_fusion),
  });
  return j;
}

inline const nlohmann::ordered_json& find_map(const nlohmann::ordered_json& payload, const std::string& name) {
  for (const auto& m : payload.at("maps"))
    if (m.at("name") == name) return m;
  throw std::out_of_range("attention payload has no map " + name);
}

inline void write_attention(const std::filesystem::path& path, const AttentionBundle& b) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write attention file " + path.string());
  out << attention_to_json(b).dump() << '\n';
  if (!out) throw std::runtime_error("failed writing attention file " + path.string());
}

}  // namespace navistar::star
