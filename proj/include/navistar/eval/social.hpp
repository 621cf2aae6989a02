#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "json.hpp"
#include "navistar/sim/crowd_sim.hpp"

namespace navistar::eval {

struct ScoreParams {
  double v = 0.35;        // weight of navigation time against comfort
  double v_prime = 0.25;  // failure penalty, subtracted
  double du = 0.45;       // uncomfortable distance, meters

  void validate() const {
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("v must lie in [0, 1]");
    if (!std::isfinite(v_prime)) throw std::invalid_argument("v_prime must be finite");
    if (!(du > 0.0) || !std::isfinite(du)) throw std::invalid_argument("du must be positive");
  }
};

struct EpisodeResult {
  std::uint64_t seed = 0;
  sim::Outcome outcome = sim::Outcome::running;
  double nav_time = 0.0;               // seconds until termination
  double dt = 0.25;
  std::vector<double> clearance;       // min robot-human clearance at t = 0, dt, ..., nav_time
  std::size_t discomfort_steps = 0;
  std::string error;                   // set when the environment threw

  bool failed() const { return outcome != sim::Outcome::success; }
};

// 1 - mean of (l - min) / (max - min) over successful times. min defaults to
// the fastest success; pass the fastest time over all cases to follow the
// full-suite definition. Degenerate max == min gives 1; no successes gives 0.
inline double f_time(std::span<const double> success_times, double suite_min = NAN) {
  if (success_times.empty()) return 0.0;
  for (double t : success_times)
    if (!(t >= 0.0)) throw std::invalid_argument("navigation times must be non-negative");
  const double lo = std::isnan(suite_min) ? *std::min_element(success_times.begin(), success_times.end()) : suite_min;
  const double hi = *std::max_element(success_times.begin(), success_times.end());
  if (lo > hi) throw std::invalid_argument("suite minimum exceeds the slowest success");
  if (hi == lo) return 1.0;
  double sum = 0.0;
  for (double t : success_times) sum += (t - lo) / (hi - lo);
  return 1.0 - sum / static_cast<double>(success_times.size());
}

inline double sigmoid(double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

// Trapezoidal integral of the clearance series, negative clearances counted as 0.
inline double clearance_integral(const std::vector<double>& clearance, double dt) {
  double total = 0.0;
  for (std::size_t k = 1; k < clearance.size(); ++k)
    total += 0.5 * dt * (std::max(clearance[k - 1], 0.0) + std::max(clearance[k], 0.0));
  return total;
}

// sigmoid(du * dt / integral - 1) for one episode, dt being the simulation
// step; failures saturate at 1.
inline double discomfort_term(const EpisodeResult& e, double du) {
  if (e.failed()) return 1.0;
  const double integral = clearance_integral(e.clearance, e.dt);
  if (!(integral > 0.0)) return 1.0;
  return sigmoid(du * e.dt / integral - 1.0);
}

inline bool counts_as_uncomfortable(const EpisodeResult& e) {
  if (e.nav_time <= 0.0 && e.outcome == sim::Outcome::success) return false;  // zero-length episode
  return e.failed() || e.discomfort_steps > 0;
}

// 1 - 1/2 [mean discomfort term over the m uncomfortable episodes + m/n],
// clamped to [0, 1]; m = 0 gives 1.
inline double f_uc(std::span<const EpisodeResult> episodes, double du) {
  std::size_t m = 0;
  double sum = 0.0;
  for (const auto& e : episodes) {
    if (!counts_as_uncomfortable(e)) continue;
    ++m;
    sum += discomfort_term(e, du);
  }
  if (m == 0 || episodes.empty()) return 1.0;
  const double md = static_cast<double>(m);
  const double value = 1.0 - 0.5 * (sum / md + md / static_cast<double>(episodes.size()));
  return std::clamp(value, 0.0, 1.0);
}

inline double social_score(double ftime, double fuc, double ff, double v, double v_prime) {
  if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("v must lie in [0, 1]");
  return 100.0 * (v * ftime + (1.0 - v) * fuc - v_prime * ff);
}

struct Aggregates {
  std::size_t n_cases = 0;
  std::size_t successes = 0, collisions = 0, timeouts = 0, errors = 0;
  double success_rate = 0.0;
  double ff = 0.0;
  double f_time = 0.0;
  double f_uc = 1.0;
  double f_sc = 0.0;
  double mean_success_time = 0.0;
};

// Order of `episodes` does not matter; they are sorted by seed first.
inline Aggregates aggregate(std::vector<EpisodeResult> episodes, const ScoreParams& params) {
  params.validate();
  std::stable_sort(episodes.begin(), episodes.end(), [](const auto& a, const auto& b) { return a.seed < b.seed; });
  Aggregates a;
  a.n_cases = episodes.size();
  if (episodes.empty()) throw std::invalid_argument("aggregate: no episodes");
  std::vector<double> success_times;
  double suite_min = INFINITY;
  for (const auto& e : episodes) {
    suite_min = std::min(suite_min, e.nav_time);
    switch (e.outcome) {
      case sim::Outcome::success:
        ++a.successes;
        success_times.push_back(e.nav_time);
        break;
      case sim::Outcome::collision: ++a.collisions; break;
      case sim::Outcome::timeout: ++a.timeouts; break;
      default: ++a.errors; break;
    }
  }
  const double n = static_cast<double>(a.n_cases);
  a.success_rate = static_cast<double>(a.successes) / n;
  a.ff = static_cast<double>(a.n_cases - a.successes) / n;
  a.f_time = f_time(success_times, success_times.empty() ? NAN : suite_min);
  a.f_uc = f_uc(episodes, params.du);
  a.f_sc = social_score(a.f_time, a.f_uc, a.ff, params.v, params.v_prime);
  if (!success_times.empty())
    a.mean_success_time = std::accumulate(success_times.begin(), success_times.end(), 0.0) / success_times.size();
  return a;
}

struct EvaluationReport {
  ScoreParams params;
  sim::SimConfig sim;
  std::vector<EpisodeResult> episodes;
  Aggregates totals;
};

inline std::vector<double> clearance_series(const sim::EpisodeLog& log) {
  std::vector<double> out;
  if (log.steps.empty()) return out;
  const auto& first = log.steps.front().state;
  double c0 = std::numeric_limits<double>::infinity();
  for (const auto& h : first.humans) c0 = std::min(c0, sim::abs(h.position() - first.robot.position()) - h.radius - first.robot.radius);
  out.push_back(c0);
  for (const auto& s : log.steps) out.push_back(s.events.min_clearance);
  return out;
}

// A discomfort step ends with the robot closer than du to some human.
inline EpisodeResult summarize_episode(const sim::EpisodeLog& log, double dt, double du) {
  EpisodeResult r;
  r.seed = log.seed;
  r.outcome = log.outcome;
  r.dt = dt;
  r.nav_time = static_cast<double>(log.steps.size()) * dt;
  r.clearance = clearance_series(log);
  for (const auto& s : log.steps) r.discomfort_steps += s.events.min_clearance < du ? 1 : 0;
  return r;
}

using Policy = std::function<sim::Vec2(const EnvWindow&, const sim::CrowdSim&)>;

// Runs one episode per seed with a fresh copy of the environment.
inline EvaluationReport evaluate(const Policy& policy, const sim::SimConfig& config, const std::vector<std::uint64_t>& seeds,
                                 const ScoreParams& params = {},
                                 const std::function<void(const sim::EpisodeLog&)>& on_episode = {}) {
  params.validate();
  config.validate();
  if (seeds.empty()) throw std::invalid_argument("evaluate: need at least one case");
  EvaluationReport report;
  report.params = params;
  report.sim = config;
  for (std::uint64_t seed : seeds) {
    sim::CrowdSim env(config);
    try {
      EnvWindow obs = env.reset(seed);
      while (!env.done()) obs = env.step(policy(obs, env)).observation;
      report.episodes.push_back(summarize_episode(env.log(), config.dt, params.du));
      if (on_episode) on_episode(env.log());
    } catch (const std::exception& e) {
      EpisodeResult failed = summarize_episode(env.log(), config.dt, params.du);
      failed.seed = seed;
      failed.outcome = sim::Outcome::running;
      failed.error = e.what();
      report.episodes.push_back(std::move(failed));
    }
  }
  report.totals = aggregate(report.episodes, params);
  return report;
}

inline std::vector<std::uint64_t> seed_range(std::uint64_t first, std::size_t count) {
  std::vector<std::uint64_t> s(count);
  std::iota(s.begin(), s.end(), first);
  return s;
}

inline nlohmann::ordered_json report_to_json(const EvaluationReport& r) {
  nlohmann::ordered_json j;
  j["config"] = {{"v", r.params.v},
                 {"v_prime", r.params.v_prime},
                 {"du", r.params.du},
                 {"n_cases", r.totals.n_cases},
                 {"n_humans", r.sim.n_humans},
                 {"fov_deg", r.sim.fov_deg}};
  const auto& t = r.totals;
  j["summary"] = {{"success_rate", t.success_rate}, {"successes", t.successes}, {"collisions", t.collisions},
                  {"timeouts", t.timeouts},         {"errors", t.errors},       {"FF", t.ff},
                  {"F_time", t.f_time},             {"F_uc", t.f_uc},           {"F_SC", t.f_sc},
                  {"mean_success_time", t.mean_success_time}};
  nlohmann::ordered_json eps = nlohmann::ordered_json::array();
  for (const auto& e : r.episodes) {
    nlohmann::ordered_json c = nlohmann::ordered_json::array();
    for (double v : e.clearance) c.push_back(std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json());
    nlohmann::ordered_json ej = {{"seed", e.seed},
                                 {"outcome", e.error.empty() ? sim::outcome_name(e.outcome) : "error"},
                                 {"nav_time", e.nav_time},
                                 {"discomfort_steps", e.discomfort_steps},
                                 {"min_clearance", c}};
    if (!e.error.empty()) ej["error"] = e.error;
    eps.push_back(ej);
  }
  j["episodes"] = eps;
  return j;
}

// One-line summary in the layout of a results table.
inline std::string score_row(const EvaluationReport& r) {
  const auto& t = r.totals;
  return fmt::format("FOV {:>3.0f} | humans {:>2} | cases {:>4} | success {:.3f} | FF {:.3f} | F_time {:.3f} | F_uc {:.3f} | F_SC {:.2f}",
                     r.sim.fov_deg, r.sim.n_humans, t.n_cases, t.success_rate, t.ff, t.f_time, t.f_uc, t.f_sc);
}

inline std::string report_text(const EvaluationReport& r) {
  std::ostringstream out;
  out << "evaluation report\n";
  out << fmt::format("v = {}, v' = {}, du = {} m, cases = {}\n", r.params.v, r.params.v_prime, r.params.du, r.totals.n_cases);
  out << score_row(r) << "\n\n";
  out << "seed\toutcome\tnav_time\tdiscomfort_steps\tmin_clearance\n";
  for (const auto& e : r.episodes) {
    double lo = INFINITY;
    for (double c : e.clearance) lo = std::min(lo, c);
    out << e.seed << '\t' << (e.error.empty() ? sim::outcome_name(e.outcome) : "error") << '\t'
        << fmt::format("{:.2f}", e.nav_time) << '\t' << e.discomfort_steps << '\t'
        << (std::isfinite(lo) ? fmt::format("{:.3f}", lo) : std::string("-")) << '\n';
  }
  return out.str();
}

}  // namespace navistar::eval
