#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "navistar/pref/ensemble.hpp"
#include "navistar/pref/segment.hpp"
#include "navistar/util/rng.hpp"

namespace navistar::pref {

enum class SampleStrategy { uniform, disagreement };

inline SampleStrategy parse_strategy(const std::string& s) {
  if (s == "uniform") return SampleStrategy::uniform;
  if (s == "disagreement") return SampleStrategy::disagreement;
  throw std::invalid_argument("unknown sampling strategy: " + s);
}

inline const char* strategy_name(SampleStrategy s) { return s == SampleStrategy::uniform ? "uniform" : "disagreement"; }

// Uniformly random ordered pair of distinct indices in [0, n).
inline std::pair<std::size_t, std::size_t> uniform_pair(std::size_t n, Rng& rng) {
  if (n < 2) throw std::invalid_argument("need at least 2 segments to sample a pair, have " + std::to_string(n));
  const std::size_t a = rng.index(n);
  std::size_t b = rng.index(n - 1);
  if (b >= a) ++b;
  return {a, b};
}

// Index pair into `segments`. The disagreement strategy draws `candidates`
// uniform pairs and keeps the one the ensemble disagrees on most, breaking
// ties uniformly.
template <class Segments>
std::pair<std::size_t, std::size_t> sample_pair(const Segments& segments, SampleStrategy strategy, Rng& rng,
                                                const RewardEnsemble* ensemble = nullptr, std::size_t candidates = 16) {
  if (strategy == SampleStrategy::uniform) return uniform_pair(segments.size(), rng);
  if (!ensemble) throw std::invalid_argument("disagreement sampling needs a reward ensemble");
  if (candidates == 0) throw std::invalid_argument("disagreement sampling needs at least one candidate");
  std::vector<std::pair<std::size_t, std::size_t>> pool;
  for (std::size_t c = 0; c < candidates; ++c) pool.push_back(uniform_pair(segments.size(), rng));
  double best = -1.0;
  std::vector<std::size_t> argmax;
  for (std::size_t c = 0; c < pool.size(); ++c) {
    const double d = ensemble->disagreement(segments[pool[c].first].features, segments[pool[c].second].features);
    if (d > best) {
      best = d;
      argmax = {c};
    } else if (d == best) {
      argmax.push_back(c);
    }
  }
  return pool[argmax[rng.index(argmax.size())]];
}

}  // namespace navistar::pref
