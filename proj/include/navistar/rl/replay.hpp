#pragma once

#include <stdexcept>
#include <vector>

#include "navistar/sim/agent.hpp"
#include "navistar/sim/env_window.hpp"
#include "navistar/util/rng.hpp"

namespace navistar::rl {

struct Transition {
  EnvWindow observation;
  sim::Vec2 action;
  double reward = 0.0;
  EnvWindow next_observation;
  bool done = false;  // terminal (collision or success); timeouts bootstrap
  double v_pref = 1.0;
  std::vector<double> features;  // reward-net input for (observation, action)
  double shaping = 0.0;          // progress term added on top of `reward`, kept apart so relabeling leaves it alone
};

// Fixed-capacity ring; once full the oldest transition is overwritten.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("replay capacity must be positive");
    items_.reserve(std::min<std::size_t>(capacity, 4096));
  }

  void push(Transition t) {
    if (items_.size() < capacity_) {
      items_.push_back(std::move(t));
    } else {
      items_[cursor_] = std::move(t);
    }
    cursor_ = (cursor_ + 1) % capacity_;
  }

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::size_t cursor() const { return cursor_; }
  bool empty() const { return items_.empty(); }

  const Transition& at(std::size_t i) const { return items_.at(i); }
  Transition& at(std::size_t i) { return items_.at(i); }

  // Uniform draw with replacement.
  std::vector<std::size_t> sample_indices(std::size_t batch, Rng& rng) const {
    if (items_.empty()) throw std::logic_error("sample from an empty replay buffer");
    std::vector<std::size_t> idx(batch);
    for (auto& i : idx) i = rng.index(items_.size());
    return idx;
  }

  std::vector<const Transition*> sample(std::size_t batch, Rng& rng) const {
    std::vector<const Transition*> out;
    for (std::size_t i : sample_indices(batch, rng)) out.push_back(&items_[i]);
    return out;
  }

 private:
  std::size_t capacity_;
  std::size_t cursor_ = 0;
  std::vector<Transition> items_;
};

}  // namespace navistar::rl
