#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "navistar/sim/agent.hpp"

namespace navistar::sim {

enum class Outcome { running, success, collision, timeout };

inline const char* outcome_name(Outcome o) {
  switch (o) {
    case Outcome::success: return "success";
    case Outcome::collision: return "collision";
    case Outcome::timeout: return "timeout";
    default: return "running";
  }
}

inline Outcome parse_outcome(const std::string& s) {
  if (s == "success") return Outcome::success;
  if (s == "collision") return Outcome::collision;
  if (s == "timeout") return Outcome::timeout;
  if (s == "running") return Outcome::running;
  throw std::invalid_argument("unknown outcome: " + s);
}

struct Events {
  bool collision = false;
  bool success = false;
  bool timeout = false;
  bool discomfort = false;
  // Smallest robot-human surface distance after the step; +inf without humans.
  double min_clearance = std::numeric_limits<double>::infinity();

  bool operator==(const Events&) const = default;
};

struct JointState {
  AgentState robot;
  std::vector<AgentState> humans;
  bool operator==(const JointState&) const = default;
};

// One step: the joint state the action was chosen in, the action, and what
// followed.
struct StepRecord {
  std::size_t step = 0;
  double time = 0.0;
  JointState state;
  std::vector<char> visible;  // per human, under the robot's FOV
  Vec2 action;
  double reward = 0.0;
  Events events;
  bool operator==(const StepRecord&) const = default;
};

struct EpisodeLog {
  std::uint64_t seed = 0;
  std::vector<StepRecord> steps;
  Outcome outcome = Outcome::running;
  double wall_seconds = 0.0;  // not serialized, so logs stay byte-stable

  bool done() const { return outcome != Outcome::running; }
};

// Line format, one JSON object per step with fields in this order:
//   step, time, robot [px,py,vx,vy,radius,gx,gy,v_pref,theta],
//   humans [[px,py,vx,vy,radius,gx,gy,v_pref,theta], ...], visible [0|1...],
//   action [vx,vy], reward, events {collision,success,timeout,discomfort,
//   min_clearance (null when there are no humans)}, and on the final line
//   outcome plus seed.
namespace log_detail {

using ordered_json = nlohmann::ordered_json;

inline ordered_json agent_json(const AgentState& a) {
  return ordered_json::array({a.px, a.py, a.vx, a.vy, a.radius, a.gx, a.gy, a.v_pref, a.theta});
}

inline AgentState agent_from(const ordered_json& j) {
  if (!j.is_array() || j.size() != 9) throw std::invalid_argument("episode log: agent needs 9 numbers");
  AgentState a;
  a.px = j[0]; a.py = j[1]; a.vx = j[2]; a.vy = j[3]; a.radius = j[4];
  a.gx = j[5]; a.gy = j[6]; a.v_pref = j[7]; a.theta = j[8];
  return a;
}

}  // namespace log_detail

inline nlohmann::ordered_json step_to_json(const StepRecord& r) {
  using log_detail::ordered_json;
  ordered_json j;
  j["step"] = r.step;
  j["time"] = r.time;
  j["robot"] = log_detail::agent_json(r.state.robot);
  ordered_json humans = ordered_json::array();
  for (const auto& h : r.state.humans) humans.push_back(log_detail::agent_json(h));
  j["humans"] = humans;
  ordered_json visible = ordered_json::array();
  for (char v : r.visible) visible.push_back(v ? 1 : 0);
  j["visible"] = visible;
  j["action"] = ordered_json::array({r.action.x, r.action.y});
  j["reward"] = r.reward;
  ordered_json ev;
  ev["collision"] = r.events.collision;
  ev["success"] = r.events.success;
  ev["timeout"] = r.events.timeout;
  ev["discomfort"] = r.events.discomfort;
  if (std::isfinite(r.events.min_clearance))
    ev["min_clearance"] = r.events.min_clearance;
  else
    ev["min_clearance"] = nullptr;
  j["events"] = ev;
  return j;
}

inline StepRecord step_from_json(const nlohmann::ordered_json& j) {
  StepRecord r;
  r.step = j.at("step");
  r.time = j.at("time");
  r.state.robot = log_detail::agent_from(j.at("robot"));
  for (const auto& h : j.at("humans")) r.state.humans.push_back(log_detail::agent_from(h));
  for (const auto& v : j.at("visible")) r.visible.push_back(static_cast<char>(v.get<int>()));
  r.action = {j.at("action").at(0), j.at("action").at(1)};
  r.reward = j.at("reward");
  const auto& ev = j.at("events");
  r.events.collision = ev.at("collision");
  r.events.success = ev.at("success");
  r.events.timeout = ev.at("timeout");
  r.events.discomfort = ev.at("discomfort");
  r.events.min_clearance =
      ev.at("min_clearance").is_null() ? std::numeric_limits<double>::infinity() : ev.at("min_clearance").get<double>();
  return r;
}

inline std::string to_jsonl(const EpisodeLog& log) {
  std::string out;
  for (std::size_t i = 0; i < log.steps.size(); ++i) {
    auto j = step_to_json(log.steps[i]);
    if (i + 1 == log.steps.size()) {
      j["outcome"] = outcome_name(log.outcome);
      j["seed"] = log.seed;
    }
    out += j.dump();
    out += '\n';
  }
  return out;
}

inline EpisodeLog from_jsonl(std::istream& in) {
  EpisodeLog log;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::ordered_json j;
    try {
      j = nlohmann::ordered_json::parse(line);
      log.steps.push_back(step_from_json(j));
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument("episode log line " + std::to_string(line_no) + ": " + e.what());
    }
    if (log.done()) throw std::invalid_argument("episode log: records after the terminal line");
    if (j.contains("outcome")) {
      log.outcome = parse_outcome(j["outcome"].get<std::string>());
      log.seed = j.value("seed", std::uint64_t{0});
    }
  }
  return log;
}

inline void write_episode_log(const std::filesystem::path& path, const EpisodeLog& log) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write episode log " + path.string());
  out << to_jsonl(log);
  if (!out) throw std::runtime_error("failed writing episode log " + path.string());
}

inline EpisodeLog read_episode_log(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open episode log " + path.string());
  return from_jsonl(in);
}

}  // namespace navistar::sim
