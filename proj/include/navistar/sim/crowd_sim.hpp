#pragma once

#include <chrono>
#include <cmath>
#include <deque>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "navistar/sim/agent.hpp"
#include "navistar/sim/env_window.hpp"
#include "navistar/sim/episode_log.hpp"
#include "navistar/sim/orca.hpp"
#include "navistar/util/rng.hpp"

namespace navistar::sim {

class PlacementError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SimConfig {
  double circle_radius = 8.0;
  std::size_t n_humans = 5;
  double dt = 0.25;
  double time_limit = 30.0;
  double fov_deg = 360.0;
  bool robot_visible = false;
  std::uint64_t seed = 0;
  double discomfort_dist = 0.45;
  double goal_radius = 0.3;
  double human_radius = 0.3;
  double human_v_pref = 1.0;
  double robot_radius = 0.3;
  double robot_v_pref = 1.0;
  double placement_noise = 0.5;  // uniform jitter per axis around the circle point
  Vec2 robot_start{0.0, -9.0};
  Vec2 robot_goal{0.0, 9.0};
  std::size_t window = 5;  // observation history T
  std::size_t max_humans = 20;
  OrcaParams orca{};

  void validate() const {
    if (!(dt > 0.0)) throw std::invalid_argument("sim.dt must be positive");
    if (!(time_limit > dt)) throw std::invalid_argument("sim.time_limit must exceed sim.dt");
    if (fov_deg != 90.0 && fov_deg != 180.0 && fov_deg != 360.0)
      throw std::invalid_argument("sim.fov_deg must be one of 90, 180, 360");
    if (n_humans > max_humans)
      throw std::invalid_argument("sim.n_humans exceeds " + std::to_string(max_humans));
    if (!(circle_radius > 0.0)) throw std::invalid_argument("sim.circle_radius must be positive");
    if (!(human_radius > 0.0) || !(robot_radius > 0.0)) throw std::invalid_argument("sim radii must be positive");
    if (!(human_v_pref > 0.0) || !(robot_v_pref > 0.0)) throw std::invalid_argument("sim v_pref must be positive");
    if (window == 0) throw std::invalid_argument("sim.window must be at least 1");
    if (!(goal_radius > 0.0)) throw std::invalid_argument("sim.goal_radius must be positive");
    if (!(orca.time_horizon > 0.0)) throw std::invalid_argument("sim.orca.time_horizon must be positive");
  }
};

// Bearing of `target` relative to a heading, wrapped to [-pi, pi].
inline double relative_bearing(Vec2 from, double heading, Vec2 target) {
  const Vec2 d = target - from;
  double b = std::atan2(d.y, d.x) - heading;
  while (b > std::numbers::pi) b -= 2.0 * std::numbers::pi;
  while (b < -std::numbers::pi) b += 2.0 * std::numbers::pi;
  return b;
}

// Visible iff |bearing| <= fov / 2; the boundary itself is visible.
inline bool in_fov(Vec2 from, double heading, Vec2 target, double fov_deg) {
  if (fov_deg >= 360.0) return true;
  const double half = fov_deg * std::numbers::pi / 360.0;
  return std::abs(relative_bearing(from, heading, target)) <= half + 1e-12;
}

inline double handcrafted_reward(const JointState& /*prev_state*/, Vec2 /*action*/, const Events& events) {
  if (events.collision) return -0.25;
  if (events.success) return 1.0;
  const double d = events.min_clearance;
  if (d > 0.0 && d < 0.2) return -0.1 + d / 2.0;
  return 0.0;
}

struct StepResult {
  EnvWindow observation;
  Events events;
  double reward = 0.0;
  bool done = false;
};

// Circle-crossing crowd with ORCA humans and a holonomic robot.
class CrowdSim {
 public:
  explicit CrowdSim(SimConfig config) : config_(std::move(config)) { config_.validate(); }

  const SimConfig& config() const { return config_; }
  const JointState& state() const { return state_; }
  const EpisodeLog& log() const { return log_; }
  double time() const { return static_cast<double>(steps_) * config_.dt; }
  std::size_t steps_taken() const { return steps_; }
  bool done() const { return log_.done(); }

  EnvWindow reset(std::uint64_t seed) {
    Rng rng(seed);
    state_ = {};
    state_.robot.px = config_.robot_start.x;
    state_.robot.py = config_.robot_start.y;
    state_.robot.gx = config_.robot_goal.x;
    state_.robot.gy = config_.robot_goal.y;
    state_.robot.radius = config_.robot_radius;
    state_.robot.v_pref = config_.robot_v_pref;
    state_.robot.theta = std::atan2(config_.robot_goal.y - config_.robot_start.y,
                                    config_.robot_goal.x - config_.robot_start.x);
    for (std::size_t i = 0; i < config_.n_humans; ++i) state_.humans.push_back(place_human(rng));
    return start_episode(seed);
  }

  // Starts an episode from an explicit joint state (scripted scenarios).
  EnvWindow reset_to(const JointState& initial, std::uint64_t seed = 0) {
    if (initial.humans.size() != config_.n_humans)
      throw std::invalid_argument("reset_to: expected " + std::to_string(config_.n_humans) + " humans");
    initial.robot.validate();
    for (const auto& h : initial.humans) h.validate();
    state_ = initial;
    return start_episode(seed);
  }

  // Smallest human-human surface distance in the current state.
  double min_human_clearance() const {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < state_.humans.size(); ++i)
      for (std::size_t j = i + 1; j < state_.humans.size(); ++j)
        best = std::min(best, abs(state_.humans[i].position() - state_.humans[j].position()) -
                                  state_.humans[i].radius - state_.humans[j].radius);
    return best;
  }

 private:
  EnvWindow start_episode(std::uint64_t seed) {
    steps_ = 0;
    log_ = {};
    log_.seed = seed;
    started_ = std::chrono::steady_clock::now();
    history_.clear();
    push_observation();
    while (history_.size() < config_.window) history_.push_front(history_.front());
    return observe();
  }

 public:
  // Window of the last T observations (oldest first) under the configured FOV.
  EnvWindow observe() const {
    const std::size_t n = 1 + config_.n_humans;
    EnvWindow w(config_.window, n);
    for (std::size_t t = 0; t < history_.size(); ++t) {
      const auto& snap = history_[t];
      for (std::size_t i = 0; i < n; ++i) {
        w.set_valid(t, i, snap.mask[i]);
        if (!snap.mask[i]) continue;
        for (std::size_t c = 0; c < kChannels; ++c) w.at(t, i, c) = snap.values[i * kChannels + c];
      }
    }
    return w;
  }

  std::vector<char> visible_humans() const {
    std::vector<char> v(state_.humans.size());
    for (std::size_t i = 0; i < v.size(); ++i)
      v[i] = in_fov(state_.robot.position(), state_.robot.theta, state_.humans[i].position(), config_.fov_deg);
    return v;
  }

  StepResult step(Vec2 action) {
    if (history_.empty()) throw std::logic_error("step before reset");
    if (done()) throw std::logic_error("step after episode end");
    const double speed = abs(action);
    if (!std::isfinite(speed)) throw std::invalid_argument("robot action must be finite");
    if (speed > state_.robot.v_pref) action = action * (state_.robot.v_pref / speed);

    StepRecord record;
    record.step = steps_;
    record.time = time();
    record.state = state_;
    record.visible = visible_humans();
    record.action = action;

    std::vector<Vec2> human_vel(state_.humans.size());
    std::vector<AgentState> others;
    for (std::size_t i = 0; i < state_.humans.size(); ++i) {
      others.clear();
      for (std::size_t j = 0; j < state_.humans.size(); ++j)
        if (j != i) others.push_back(state_.humans[j]);
      if (config_.robot_visible) others.push_back(state_.robot);
      AgentState self = state_.humans[i];
      if (abs(self.goal() - self.position()) < config_.goal_radius) {
        self.gx = self.px;
        self.gy = self.py;
      }
      human_vel[i] = orca_velocity(self, others, config_.dt, config_.orca);
    }

    move(state_.robot, action);
    for (std::size_t i = 0; i < state_.humans.size(); ++i) move(state_.humans[i], human_vel[i]);
    ++steps_;

    Events ev = detect_events();
    record.events = ev;
    record.reward = handcrafted_reward(record.state, action, ev);
    log_.steps.push_back(record);
    if (ev.collision)
      log_.outcome = Outcome::collision;
    else if (ev.success)
      log_.outcome = Outcome::success;
    else if (ev.timeout)
      log_.outcome = Outcome::timeout;
    if (done())
      log_.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();

    push_observation();
    return {observe(), ev, record.reward, done()};
  }

 private:
  struct Snapshot {
    std::vector<double> values;  // (N, C)
    std::vector<char> mask;      // (N)
  };

  AgentState place_human(Rng& rng) {
    AgentState h;
    h.radius = config_.human_radius;
    h.v_pref = config_.human_v_pref;
    for (int attempt = 0; attempt < 1000; ++attempt) {
      const double angle = rng.uniform() * 2.0 * std::numbers::pi;
      const double px = config_.circle_radius * std::cos(angle) + rng.uniform(-1.0, 1.0) * config_.placement_noise;
      const double py = config_.circle_radius * std::sin(angle) + rng.uniform(-1.0, 1.0) * config_.placement_noise;
      const Vec2 start{px, py}, goal{-px, -py};
      bool ok = true;
      auto clear = [&](Vec2 a, Vec2 b, double ra) { return abs(a - b) >= 2.0 * (ra + h.radius); };
      const auto& r = state_.robot;
      ok = clear(start, r.position(), r.radius) && clear(goal, r.goal(), r.radius) &&
           clear(start, r.goal(), r.radius) && clear(goal, r.position(), r.radius);
      for (const auto& o : state_.humans) {
        if (!ok) break;
        ok = clear(start, o.position(), o.radius) && clear(goal, o.goal(), o.radius);
      }
      if (!ok) continue;
      h.px = px;
      h.py = py;
      h.gx = -px;
      h.gy = -py;
      h.theta = std::atan2(-py, -px);
      return h;
    }
    throw PlacementError("could not place human " + std::to_string(state_.humans.size()) +
                         " after 1000 attempts; crowd too dense for the configured circle");
  }

  void move(AgentState& a, Vec2 v) const {
    a.vx = v.x;
    a.vy = v.y;
    a.px += v.x * config_.dt;
    a.py += v.y * config_.dt;
    if (abs(v) > 1e-9) a.theta = std::atan2(v.y, v.x);
  }

  Events detect_events() const {
    Events ev;
    const auto& r = state_.robot;
    for (const auto& h : state_.humans) {
      const double center = abs(h.position() - r.position());
      const double clearance = center - h.radius - r.radius;
      ev.min_clearance = std::min(ev.min_clearance, clearance);
      if (center < h.radius + r.radius) ev.collision = true;
    }
    ev.discomfort = ev.min_clearance < config_.discomfort_dist;
    ev.success = !ev.collision && abs(r.goal() - r.position()) < config_.goal_radius;
    ev.timeout = !ev.collision && !ev.success && time() >= config_.time_limit - 1e-9;
    return ev;
  }

  void push_observation() {
    const std::size_t n = 1 + state_.humans.size();
    Snapshot snap{std::vector<double>(n * kChannels, 0.0), std::vector<char>(n, 0)};
    auto fill = [&](std::size_t slot, const AgentState& a, bool robot) {
      double* v = &snap.values[slot * kChannels];
      v[kPx] = a.px;
      v[kPy] = a.py;
      v[kVx] = a.vx;
      v[kVy] = a.vy;
      v[kRadius] = a.radius;
      v[kGoalDx] = robot ? a.gx - a.px : 0.0;
      v[kGoalDy] = robot ? a.gy - a.py : 0.0;
      snap.mask[slot] = 1;
    };
    fill(0, state_.robot, true);
    const auto visible = visible_humans();
    for (std::size_t i = 0; i < state_.humans.size(); ++i)
      if (visible[i]) fill(i + 1, state_.humans[i], false);
    history_.push_back(std::move(snap));
    while (history_.size() > config_.window) history_.pop_front();
  }

  SimConfig config_;
  JointState state_;
  EpisodeLog log_;
  std::size_t steps_ = 0;
  std::deque<Snapshot> history_;
  std::chrono::steady_clock::time_point started_{};
};

// The robot driven by ORCA over the humans it can currently see.
inline Vec2 orca_robot_action(const CrowdSim& sim) {
  const auto visible = sim.visible_humans();
  std::vector<AgentState> seen;
  for (std::size_t i = 0; i < visible.size(); ++i)
    if (visible[i]) seen.push_back(sim.state().humans[i]);
  return orca_velocity(sim.state().robot, seen, sim.config().dt, sim.config().orca);
}

}  // namespace navistar::sim
