#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "navistar/sim/env_window.hpp"
#include "navistar/sim/episode_log.hpp"

namespace navistar::pref {

inline constexpr std::size_t kSegmentLength = 20;
inline constexpr std::size_t kRewardHumans = 5;
inline constexpr std::size_t kFeatureDim = 5 + 5 * kRewardHumans + 2;

namespace feature_detail {

struct Seen {
  double dist_sq, rx, ry, vx, vy, radius;
};

inline std::vector<double> assemble(double vx, double vy, double gdx, double gdy, double radius, std::vector<Seen> seen,
                                    sim::Vec2 action) {
  std::stable_sort(seen.begin(), seen.end(), [](const Seen& a, const Seen& b) { return a.dist_sq < b.dist_sq; });
  std::vector<double> f(kFeatureDim, 0.0);
  f[0] = vx;
  f[1] = vy;
  f[2] = gdx;
  f[3] = gdy;
  f[4] = radius;
  for (std::size_t k = 0; k < std::min(seen.size(), kRewardHumans); ++k) {
    double* h = &f[5 + 5 * k];
    h[0] = seen[k].rx;
    h[1] = seen[k].ry;
    h[2] = seen[k].vx;
    h[3] = seen[k].vy;
    h[4] = seen[k].radius;
  }
  f[kFeatureDim - 2] = action.x;
  f[kFeatureDim - 1] = action.y;
  return f;
}

}  // namespace feature_detail

// Reward input for one step: robot [vx, vy, goal dx, goal dy, radius], the 5
// nearest visible humans [rel px, rel py, vx, vy, radius] (zero padded), and
// the action. Uses the latest timestep of the window.
inline std::vector<double> reward_features(const EnvWindow& window, sim::Vec2 action) {
  const std::size_t t = window.steps - 1;
  const double px = window.at(t, 0, kPx), py = window.at(t, 0, kPy);
  std::vector<feature_detail::Seen> seen;
  for (std::size_t i = 1; i < window.agents; ++i) {
    if (!window.valid(t, i)) continue;
    const double rx = window.at(t, i, kPx) - px, ry = window.at(t, i, kPy) - py;
    seen.push_back({rx * rx + ry * ry, rx, ry, window.at(t, i, kVx), window.at(t, i, kVy), window.at(t, i, kRadius)});
  }
  return feature_detail::assemble(window.at(t, 0, kVx), window.at(t, 0, kVy), window.at(t, 0, kGoalDx),
                                  window.at(t, 0, kGoalDy), window.at(t, 0, kRadius), std::move(seen), action);
}

// Same features from a logged joint state and its visibility mask.
inline std::vector<double> reward_features(const sim::JointState& s, const std::vector<char>& visible, sim::Vec2 action) {
  const auto& r = s.robot;
  std::vector<feature_detail::Seen> seen;
  for (std::size_t i = 0; i < s.humans.size(); ++i) {
    if (!visible[i]) continue;
    const auto& h = s.humans[i];
    const double rx = h.px - r.px, ry = h.py - r.py;
    seen.push_back({rx * rx + ry * ry, rx, ry, h.vx, h.vy, h.radius});
  }
  return feature_detail::assemble(r.vx, r.vy, r.gx - r.px, r.gy - r.py, r.radius, std::move(seen), action);
}

// Fixed-length slice of (state, action) pairs from one episode.
struct TrajectorySegment {
  std::string id;
  std::string episode_id;
  std::size_t start = 0;
  std::vector<sim::StepRecord> steps;
  std::vector<std::vector<double>> features;  // one row per step

  std::size_t length() const { return steps.size(); }

  void validate(std::size_t expected_length = kSegmentLength) const {
    if (steps.size() != expected_length || features.size() != expected_length)
      throw std::invalid_argument("segment " + id + " must have exactly " + std::to_string(expected_length) + " steps");
    for (const auto& row : features) {
      if (row.size() != kFeatureDim) throw std::invalid_argument("segment " + id + " has a malformed feature row");
      for (double v : row)
        if (!std::isfinite(v)) throw std::invalid_argument("segment " + id + " has non-finite features");
    }
  }
};

inline TrajectorySegment make_segment(const sim::EpisodeLog& log, const std::string& episode_id, std::size_t start,
                                      std::size_t length = kSegmentLength) {
  if (start + length > log.steps.size()) throw std::out_of_range("segment exceeds episode length");
  TrajectorySegment seg;
  seg.id = episode_id + ":" + std::to_string(start);
  seg.episode_id = episode_id;
  seg.start = start;
  for (std::size_t k = start; k < start + length; ++k) {
    const auto& rec = log.steps[k];
    seg.steps.push_back(rec);
    seg.features.push_back(reward_features(rec.state, rec.visible, rec.action));
  }
  return seg;
}

// Back-to-back segments from the start of the episode plus one ending at the
// final step, so terminal events are always represented.
inline std::vector<TrajectorySegment> segments_from_episode(const sim::EpisodeLog& log, const std::string& episode_id,
                                                            std::size_t length = kSegmentLength) {
  std::vector<TrajectorySegment> out;
  const std::size_t n = log.steps.size();
  if (n < length) return out;
  std::size_t start = 0;
  for (; start + length <= n; start += length) out.push_back(make_segment(log, episode_id, start, length));
  if (n % length != 0) out.push_back(make_segment(log, episode_id, n - length, length));
  return out;
}

inline nlohmann::ordered_json segment_to_json(const TrajectorySegment& seg, bool with_features = true) {
  nlohmann::ordered_json j;
  j["id"] = seg.id;
  j["episode_id"] = seg.episode_id;
  j["start"] = seg.start;
  j["length"] = seg.length();
  j["agents"] = seg.steps.empty() ? 0 : 1 + seg.steps.front().state.humans.size();
  j["agent_fields"] = {"px", "py", "vx", "vy", "radius", "gx", "gy", "v_pref", "theta"};
  nlohmann::ordered_json steps = nlohmann::ordered_json::array();
  for (const auto& s : seg.steps) steps.push_back(sim::step_to_json(s));
  j["steps"] = steps;
  if (with_features) j["features"] = seg.features;
  return j;
}

inline TrajectorySegment segment_from_json(const nlohmann::ordered_json& j) {
  TrajectorySegment seg;
  seg.id = j.at("id");
  seg.episode_id = j.at("episode_id");
  seg.start = j.at("start");
  for (const auto& s : j.at("steps")) seg.steps.push_back(sim::step_from_json(s));
  if (j.contains("features")) {
    seg.features = j.at("features").get<std::vector<std::vector<double>>>();
  } else {
    for (const auto& rec : seg.steps) seg.features.push_back(reward_features(rec.state, rec.visible, rec.action));
  }
  return seg;
}

// Segments addressable by id. One writer, many readers.
class SegmentStore {
 public:
  void add(TrajectorySegment seg) {
    seg.validate(seg.length());
    std::unique_lock lock(mutex_);
    if (index_.count(seg.id)) throw std::invalid_argument("duplicate segment id " + seg.id);
    index_[seg.id] = segments_.size();
    segments_.push_back(std::move(seg));
  }

  std::size_t size() const {
    std::shared_lock lock(mutex_);
    return segments_.size();
  }

  bool contains(const std::string& id) const {
    std::shared_lock lock(mutex_);
    return index_.count(id) > 0;
  }

  TrajectorySegment get(const std::string& id) const {
    std::shared_lock lock(mutex_);
    auto it = index_.find(id);
    if (it == index_.end()) throw std::out_of_range("unknown segment " + id);
    return segments_[it->second];
  }

  TrajectorySegment at(std::size_t i) const {
    std::shared_lock lock(mutex_);
    return segments_.at(i);
  }

  std::vector<TrajectorySegment> snapshot() const {
    std::shared_lock lock(mutex_);
    return segments_;
  }

  // One JSON line per segment, in insertion order.
  void save(const std::filesystem::path& path) const {
    std::shared_lock lock(mutex_);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write segment store " + path.string());
    for (const auto& s : segments_) out << segment_to_json(s).dump() << '\n';
  }

  // Appends every segment saved at `path`.
  void load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open segment store " + path.string());
    std::string line;
    while (std::getline(in, line))
      if (!line.empty()) add(segment_from_json(nlohmann::ordered_json::parse(line)));
  }

 private:
  mutable std::shared_mutex mutex_;
  std::vector<TrajectorySegment> segments_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace navistar::pref
