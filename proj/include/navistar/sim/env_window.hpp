#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace navistar {

// Per-agent observation channels.
enum Channel : std::size_t { kPx = 0, kPy, kVx, kVy, kRadius, kGoalDx, kGoalDy, kChannels };

// Observation window E with shape (T, N, kChannels) plus a (T, N) validity
// mask. Slot 0 is the robot and is valid at every timestep; masked slots hold
// zeros. Timestep 0 is the oldest observation.
struct EnvWindow {
  std::size_t steps = 0;
  std::size_t agents = 0;
  std::vector<double> values;  // row-major (T, N, C)
  std::vector<char> mask;      // row-major (T, N)

  EnvWindow() = default;
  EnvWindow(std::size_t t, std::size_t n)
      : steps(t), agents(n), values(t * n * kChannels, 0.0), mask(t * n, 0) {}

  double& at(std::size_t t, std::size_t i, std::size_t c) { return values[(t * agents + i) * kChannels + c]; }
  double at(std::size_t t, std::size_t i, std::size_t c) const { return values[(t * agents + i) * kChannels + c]; }
  bool valid(std::size_t t, std::size_t i) const { return mask[t * agents + i] != 0; }
  void set_valid(std::size_t t, std::size_t i, bool v) { mask[t * agents + i] = v ? 1 : 0; }

  std::size_t valid_count(std::size_t t) const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < agents; ++i) n += valid(t, i) ? 1 : 0;
    return n;
  }

  void validate() const {
    if (steps == 0 || agents == 0) throw std::invalid_argument("EnvWindow: T and N must be at least 1");
    if (values.size() != steps * agents * kChannels || mask.size() != steps * agents)
      throw std::invalid_argument("EnvWindow: storage does not match (T, N)");
    for (std::size_t t = 0; t < steps; ++t)
      if (!valid(t, 0)) throw std::invalid_argument("EnvWindow: robot slot masked at timestep " + std::to_string(t));
  }

  // Reorders agent slots: new slot k takes old slot order[k].
  EnvWindow permuted(const std::vector<std::size_t>& order) const {
    EnvWindow out(steps, agents);
    for (std::size_t t = 0; t < steps; ++t)
      for (std::size_t k = 0; k < agents; ++k) {
        for (std::size_t c = 0; c < kChannels; ++c) out.at(t, k, c) = at(t, order[k], c);
        out.set_valid(t, k, valid(t, order[k]));
      }
    return out;
  }

  bool operator==(const EnvWindow&) const = default;
};

}  // namespace navistar
