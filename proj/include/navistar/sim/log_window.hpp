#pragma once

#include <algorithm>
#include <stdexcept>
#include <vector>

#include "navistar/sim/env_window.hpp"
#include "navistar/sim/episode_log.hpp"

namespace navistar::sim {

// Observation window the robot saw when it chose the action at steps[index],
// rebuilt from logged states. Same layout as CrowdSim::observe(): the oldest
// state is repeated when fewer than `window` steps precede `index`.
inline EnvWindow window_from_records(const std::vector<StepRecord>& steps, std::size_t index, std::size_t window) {
  if (index >= steps.size()) throw std::out_of_range("window_from_records: step index out of range");
  if (window == 0) throw std::invalid_argument("window_from_records: window must be positive");
  const std::size_t n = 1 + steps[index].state.humans.size();
  EnvWindow w(window, n);
  for (std::size_t t = 0; t < window; ++t) {
    const std::size_t back = window - 1 - t;
    const auto& rec = steps[index >= back ? index - back : 0];
    if (rec.state.humans.size() + 1 != n) throw std::invalid_argument("window_from_records: human count changes");
    auto fill = [&](std::size_t slot, const AgentState& a, bool robot) {
      w.at(t, slot, kPx) = a.px;
      w.at(t, slot, kPy) = a.py;
      w.at(t, slot, kVx) = a.vx;
      w.at(t, slot, kVy) = a.vy;
      w.at(t, slot, kRadius) = a.radius;
      w.at(t, slot, kGoalDx) = robot ? a.gx - a.px : 0.0;
      w.at(t, slot, kGoalDy) = robot ? a.gy - a.py : 0.0;
      w.set_valid(t, slot, true);
    };
    fill(0, rec.state.robot, true);
    for (std::size_t i = 0; i < rec.state.humans.size(); ++i)
      if (i < rec.visible.size() && rec.visible[i]) fill(i + 1, rec.state.humans[i], false);
  }
  return w;
}

}  // namespace navistar::sim
