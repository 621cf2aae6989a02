#pragma once

// Checkpoint layout:
//
//   STARCKPT/1\n
//   params <count>\n
//   <name> <rank> <dim0> ... <dimN>\n      (one line per parameter)
//   \n
//   <payload>
//
// The payload is the concatenation, in manifest order, of every parameter's
// values as little-endian IEEE-754 binary64. Names contain no whitespace.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "navistar/autodiff/params.hpp"

namespace navistar::ad {

inline constexpr const char* kCheckpointMagic = "STARCKPT/1";

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {
inline std::uint64_t to_little_endian(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xFFu) << (8 * (7 - i));
    return r;
  }
}
}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path, const ParamSet& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot open checkpoint for writing: " + path.string());
  out << kCheckpointMagic << '\n' << "params " << params.size() << '\n';
  for (const auto& [name, t] : params.entries()) {
    if (name.find_first_of(" \t\n") != std::string::npos) throw CheckpointError("parameter name contains whitespace: " + name);
    out << name << ' ' << t.rank();
    for (auto d : t.shape()) out << ' ' << d;
    out << '\n';
  }
  out << '\n';
  for (const auto& entry : params.entries()) {
    for (double v : entry.second.data()) {
      std::uint64_t bits = detail::to_little_endian(std::bit_cast<std::uint64_t>(v));
      char bytes[8];
      std::memcpy(bytes, &bits, 8);
      out.write(bytes, 8);
    }
  }
  if (!out) throw CheckpointError("failed writing checkpoint: " + path.string());
}

inline std::vector<std::pair<std::string, Tensor>> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kCheckpointMagic) throw CheckpointError("bad checkpoint header in " + path.string());
  if (!std::getline(in, line)) throw CheckpointError("truncated checkpoint manifest");
  std::istringstream count_line(line);
  std::string tag;
  std::size_t count = 0;
  if (!(count_line >> tag >> count) || tag != "params") throw CheckpointError("bad checkpoint manifest line: " + line);
  std::vector<std::pair<std::string, Shape>> manifest;
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(in, line)) throw CheckpointError("truncated checkpoint manifest");
    std::istringstream ls(line);
    std::string name;
    std::size_t rank = 0;
    if (!(ls >> name >> rank) || rank == 0) throw CheckpointError("bad manifest entry: " + line);
    Shape shape(rank);
    for (auto& d : shape)
      if (!(ls >> d) || d == 0) throw CheckpointError("bad manifest entry: " + line);
    manifest.emplace_back(name, shape);
  }
  if (!std::getline(in, line) || !line.empty()) throw CheckpointError("missing manifest terminator");
  std::vector<std::pair<std::string, Tensor>> out;
  for (auto& [name, shape] : manifest) {
    std::vector<double> values(numel_of(shape));
    for (auto& v : values) {
      char bytes[8];
      if (!in.read(bytes, 8)) throw CheckpointError("truncated checkpoint payload at " + name);
      std::uint64_t bits = 0;
      std::memcpy(&bits, bytes, 8);
      v = std::bit_cast<double>(detail::to_little_endian(bits));
    }
    out.emplace_back(name, Tensor::from(shape, std::move(values), true));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw CheckpointError("trailing bytes after checkpoint payload");
  return out;
}

// Loads values into an existing parameter set; names and shapes must match.
inline void load_checkpoint(const std::filesystem::path& path, ParamSet& params) {
  auto stored = read_checkpoint(path);
  if (stored.size() != params.size())
    throw CheckpointError("checkpoint holds " + std::to_string(stored.size()) + " parameters, expected " +
                          std::to_string(params.size()));
  for (std::size_t i = 0; i < stored.size(); ++i) {
    const auto& [name, target] = params.entries()[i];
    if (stored[i].first != name) throw CheckpointError("checkpoint parameter " + stored[i].first + " where " + name + " expected");
    if (stored[i].second.shape() != target.shape())
      throw CheckpointError("checkpoint shape mismatch for " + name + ": " + shape_str(stored[i].second.shape()) + " vs " +
                            shape_str(target.shape()));
    Tensor dst = target;
    auto values = stored[i].second.data();
    std::copy(values.begin(), values.end(), dst.mutable_data().begin());
  }
}

}  // namespace navistar::ad
