#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "navistar/eval/social.hpp"
#include "navistar/rl/trainer.hpp"
#include "navistar/sim/crowd_sim.hpp"

namespace navistar::config {

using ordered_json = nlohmann::ordered_json;

// Bad or unknown configuration; the message names the field.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EvalConfig {
  eval::ScoreParams score;
  std::size_t cases = 500;
  std::uint64_t first_seed = 2000000;

  void validate() const {
    score.validate();
    if (cases == 0) throw std::invalid_argument("eval.cases must be positive");
  }
};

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  double lease_seconds = 120.0;
  double wait_seconds = 600.0;  // how long train waits for a session's labels

  void validate() const {
    if (port < 0 || port > 65535) throw std::invalid_argument("service.port must lie in [0, 65535]");
    if (!(lease_seconds > 0.0)) throw std::invalid_argument("service.lease_seconds must be positive");
    if (!(wait_seconds >= 0.0)) throw std::invalid_argument("service.wait_seconds must be non-negative");
  }
};

struct RunConfig {
  std::uint64_t seed = 0;
  sim::SimConfig sim;
  rl::TrainConfig train;  // train.seed mirrors seed
  EvalConfig eval;
  ServiceConfig service;

  void validate() const {
    sim.validate();
    train.validate();
    eval.validate();
    service.validate();
    if (sim.window != train.star.window) throw std::invalid_argument("sim.window and star.window differ");
    if (1 + sim.n_humans > train.star.max_agents) throw std::invalid_argument("sim.n_humans exceeds star.max_agents");
  }
};

namespace detail {

// Name-to-member table for one JSON object.
template <class S>
class Fields {
 public:
  template <class M>
  Fields& add(const std::string& name, M S::*member) {
    entries_.push_back({name,
                        [member](S& s, const ordered_json& j) { s.*member = j.get<M>(); },
                        [member](const S& s) { return ordered_json(s.*member); }});
    return *this;
  }

  Fields& add(const std::string& name, std::function<void(S&, const ordered_json&)> set,
              std::function<ordered_json(const S&)> get) {
    entries_.push_back({name, std::move(set), std::move(get)});
    return *this;
  }

  void read(S& s, const ordered_json& j, const std::string& section) const {
    if (!j.is_object()) throw ConfigError(section + ": expected an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
      const std::string field = section.empty() ? it.key() : section + "." + it.key();
      const Entry* e = find(it.key());
      if (!e) throw ConfigError("unknown config key '" + field + "'");
      try {
        e->set(s, it.value());
      } catch (const ConfigError&) {
        throw;
      } catch (const std::exception& ex) {
        throw ConfigError("config key '" + field + "': " + ex.what());
      }
    }
  }

  void write(const S& s, ordered_json& j) const {
    for (const auto& e : entries_) j[e.name] = e.get(s);
  }

 private:
  struct Entry {
    std::string name;
    std::function<void(S&, const ordered_json&)> set;
    std::function<ordered_json(const S&)> get;
  };

  const Entry* find(const std::string& name) const {
    for (const auto& e : entries_)
      if (e.name == name) return &e;
    return nullptr;
  }

  std::vector<Entry> entries_;
};

// Unsigned fields reject negative numbers instead of wrapping.
template <class S, class U>
Fields<S>& add_unsigned(Fields<S>& f, const std::string& name, U S::*member) {
  return f.add(
      name,
      [member](S& s, const ordered_json& j) {
        if (!j.is_number_unsigned()) throw std::invalid_argument("expected a non-negative integer");
        s.*member = j.get<U>();
      },
      [member](const S& s) { return ordered_json(s.*member); });
}

inline Fields<sim::OrcaParams> orca_fields() {
  Fields<sim::OrcaParams> f;
  f.add("time_horizon", &sim::OrcaParams::time_horizon).add("neighbor_dist", &sim::OrcaParams::neighbor_dist);
  add_unsigned(f, "max_neighbors", &sim::OrcaParams::max_neighbors);
  f.add("safety_margin", &sim::OrcaParams::safety_margin);
  return f;
}

inline ordered_json vec_json(sim::Vec2 v) { return ordered_json::array({v.x, v.y}); }
inline sim::Vec2 vec_from(const ordered_json& j) {
  if (!j.is_array() || j.size() != 2) throw std::invalid_argument("expected [x, y]");
  return {j[0].get<double>(), j[1].get<double>()};
}

inline Fields<sim::SimConfig> sim_fields() {
  using C = sim::SimConfig;
  Fields<C> f;
  f.add("circle_radius", &C::circle_radius);
  add_unsigned(f, "n_humans", &C::n_humans);
  f.add("dt", &C::dt).add("time_limit", &C::time_limit).add("fov_deg", &C::fov_deg).add("robot_visible", &C::robot_visible);
  f.add("discomfort_dist", &C::discomfort_dist).add("goal_radius", &C::goal_radius).add("human_radius", &C::human_radius);
  f.add("human_v_pref", &C::human_v_pref).add("robot_radius", &C::robot_radius).add("robot_v_pref", &C::robot_v_pref);
  f.add("placement_noise", &C::placement_noise);
  f.add("robot_start", [](C& c, const ordered_json& j) { c.robot_start = vec_from(j); },
        [](const C& c) { return vec_json(c.robot_start); });
  f.add("robot_goal", [](C& c, const ordered_json& j) { c.robot_goal = vec_from(j); },
        [](const C& c) { return vec_json(c.robot_goal); });
  add_unsigned(f, "window", &C::window);
  add_unsigned(f, "max_humans", &C::max_humans);
  f.add("orca", [](C& c, const ordered_json& j) { orca_fields().read(c.orca, j, "sim.orca"); },
        [](const C& c) {
          ordered_json o = ordered_json::object();
          orca_fields().write(c.orca, o);
          return o;
        });
  return f;
}

inline Fields<star::StarConfig> star_fields() {
  using C = star::StarConfig;
  Fields<C> f;
  add_unsigned(f, "model_dim", &C::model_dim);
  add_unsigned(f, "heads", &C::heads);
  add_unsigned(f, "cheb_order", &C::cheb_order);
  add_unsigned(f, "window", &C::window);
  add_unsigned(f, "max_agents", &C::max_agents);
  add_unsigned(f, "ffn_hidden", &C::ffn_hidden);
  f.add("adjacency_sigma", &C::adjacency_sigma).add("log_std_min", &C::log_std_min).add("log_std_max", &C::log_std_max);
  return f;
}

// TrainConfig scalars and the SAC hyperparameters share the "train" section.
inline Fields<rl::TrainConfig> train_fields() {
  using C = rl::TrainConfig;
  Fields<C> f;
  f.add("reward_mode", [](C& c, const ordered_json& j) { c.reward_mode = rl::parse_reward_mode(j.get<std::string>()); },
        [](const C& c) { return ordered_json(rl::reward_mode_name(c.reward_mode)); });
  add_unsigned(f, "episodes", &C::episodes);
  add_unsigned(f, "batch", &C::batch);
  add_unsigned(f, "buffer", &C::buffer);
  add_unsigned(f, "update_every", &C::update_every);
  add_unsigned(f, "updates_per_round", &C::updates_per_round);
  add_unsigned(f, "demo_episodes", &C::demo_episodes);
  add_unsigned(f, "bc_steps", &C::bc_steps);
  add_unsigned(f, "bc_batch", &C::bc_batch);
  f.add("bc_lr", &C::bc_lr);
  add_unsigned(f, "critic_warmup", &C::critic_warmup);
  f.add("bc_weight", &C::bc_weight);
  add_unsigned(f, "eval_every", &C::eval_every);
  add_unsigned(f, "eval_cases", &C::eval_cases);
  add_unsigned(f, "eval_seed", &C::eval_seed);
  add_unsigned(f, "checkpoint_every", &C::checkpoint_every);
  f.add("progress_shaping", &C::progress_shaping);
  auto sac = [&f](const std::string& name, auto rl::SacConfig::*m) {
    f.add(name, [m](C& c, const ordered_json& j) { c.sac.*m = j.get<std::remove_reference_t<decltype(c.sac.*m)>>(); },
          [m](const C& c) { return ordered_json(c.sac.*m); });
  };
  sac("gamma", &rl::SacConfig::gamma);
  sac("tau", &rl::SacConfig::tau);
  sac("actor_lr", &rl::SacConfig::actor_lr);
  sac("critic_lr", &rl::SacConfig::critic_lr);
  sac("alpha_lr", &rl::SacConfig::alpha_lr);
  sac("initial_alpha", &rl::SacConfig::initial_alpha);
  sac("entropy_target", &rl::SacConfig::entropy_target);
  sac("grad_clip", &rl::SacConfig::grad_clip);
  f.add("critic_hidden", [](C& c, const ordered_json& j) {
          if (!j.is_number_unsigned()) throw std::invalid_argument("expected a non-negative integer");
          c.sac.critic_hidden = j.get<std::size_t>();
        },
        [](const C& c) { return ordered_json(c.sac.critic_hidden); });
  f.add("actor_update_every", [](C& c, const ordered_json& j) {
          if (!j.is_number_unsigned()) throw std::invalid_argument("expected a non-negative integer");
          c.sac.actor_update_every = j.get<std::size_t>();
        },
        [](const C& c) { return ordered_json(c.sac.actor_update_every); });
  return f;
}

inline Fields<rl::FeedbackConfig> feedback_fields() {
  using C = rl::FeedbackConfig;
  Fields<C> f;
  add_unsigned(f, "sessions", &C::sessions);
  add_unsigned(f, "every", &C::every);
  add_unsigned(f, "pairs_per_session", &C::pairs_per_session);
  add_unsigned(f, "reward_steps", &C::reward_steps);
  add_unsigned(f, "reward_batch", &C::reward_batch);
  add_unsigned(f, "ensemble", &C::ensemble);
  f.add("reward_lr", &C::reward_lr).add("strategy", &C::strategy).add("labeler", &C::labeler);
  return f;
}

inline Fields<EvalConfig> eval_fields() {
  Fields<EvalConfig> f;
  f.add("v", [](EvalConfig& c, const ordered_json& j) { c.score.v = j.get<double>(); },
        [](const EvalConfig& c) { return ordered_json(c.score.v); });
  f.add("v_prime", [](EvalConfig& c, const ordered_json& j) { c.score.v_prime = j.get<double>(); },
        [](const EvalConfig& c) { return ordered_json(c.score.v_prime); });
  f.add("du", [](EvalConfig& c, const ordered_json& j) { c.score.du = j.get<double>(); },
        [](const EvalConfig& c) { return ordered_json(c.score.du); });
  add_unsigned(f, "cases", &EvalConfig::cases);
  add_unsigned(f, "first_seed", &EvalConfig::first_seed);
  return f;
}

inline Fields<ServiceConfig> service_fields() {
  Fields<ServiceConfig> f;
  f.add("host", &ServiceConfig::host).add("port", &ServiceConfig::port);
  f.add("lease_seconds", &ServiceConfig::lease_seconds).add("wait_seconds", &ServiceConfig::wait_seconds);
  return f;
}

template <class S>
ordered_json section(const Fields<S>& f, const S& s) {
  ordered_json j = ordered_json::object();
  f.write(s, j);
  return j;
}

}  // namespace detail

inline ordered_json to_json(const RunConfig& c) {
  using namespace detail;
  ordered_json j;
  j["seed"] = c.seed;
  j["sim"] = section(sim_fields(), c.sim);
  j["star"] = section(star_fields(), c.train.star);
  j["train"] = section(train_fields(), c.train);
  j["feedback"] = section(feedback_fields(), c.train.feedback);
  j["eval"] = section(eval_fields(), c.eval);
  j["service"] = section(service_fields(), c.service);
  return j;
}

// Missing keys keep their defaults; unknown keys and bad values throw
// ConfigError. The result is validated.
inline RunConfig from_json(const ordered_json& j) {
  using namespace detail;
  if (!j.is_object()) throw ConfigError("config: expected an object at top level");
  RunConfig c;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& key = it.key();
    const auto& v = it.value();
    if (key == "seed") {
      if (!v.is_number_unsigned()) throw ConfigError("config key 'seed': expected a non-negative integer");
      c.seed = v.get<std::uint64_t>();
    } else if (key == "sim") {
      sim_fields().read(c.sim, v, "sim");
    } else if (key == "star") {
      star_fields().read(c.train.star, v, "star");
    } else if (key == "train") {
      train_fields().read(c.train, v, "train");
    } else if (key == "feedback") {
      feedback_fields().read(c.train.feedback, v, "feedback");
    } else if (key == "eval") {
      eval_fields().read(c.eval, v, "eval");
    } else if (key == "service") {
      service_fields().read(c.service, v, "service");
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
  c.train.seed = c.seed;
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  return c;
}

inline RunConfig load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  ordered_json j;
  try {
    j = ordered_json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j);
}

inline void save(const std::filesystem::path& path, const RunConfig& c) {
  std::ofstream out(path);
  out << to_json(c).dump(2) << '\n';
  if (!out) throw std::runtime_error("cannot write config " + path.string());
}

}  // namespace navistar::config
