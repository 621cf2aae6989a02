#pragma once

#include <algorithm>

#include "navistar/pref/ensemble.hpp"
#include "navistar/rl/replay.hpp"

namespace navistar::rl {

// Recomputes every stored reward with the current learned reward; returns
// the number of transitions touched.
inline std::size_t relabel_rewards(ReplayBuffer& buffer, const pref::RewardEnsemble& reward, std::size_t chunk = 4096) {
  std::size_t done = 0;
  while (done < buffer.size()) {
    const std::size_t end = std::min(buffer.size(), done + chunk);
    pref::Features rows;
    rows.reserve(end - done);
    for (std::size_t i = done; i < end; ++i) rows.push_back(buffer.at(i).features);
    const auto r = reward.rewards(rows);
    for (std::size_t i = done; i < end; ++i) buffer.at(i).reward = r[i - done];
    done = end;
  }
  return done;
}

}  // namespace navistar::rl
