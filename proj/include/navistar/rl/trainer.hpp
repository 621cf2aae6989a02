#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "json.hpp"
#include "navistar/autodiff/checkpoint.hpp"
#include "navistar/pref/ensemble.hpp"
#include "navistar/pref/label_store.hpp"
#include "navistar/pref/oracle.hpp"
#include "navistar/pref/sampler.hpp"
#include "navistar/pref/segment.hpp"
#include "navistar/rl/relabel.hpp"
#include "navistar/rl/replay.hpp"
#include "navistar/rl/sac.hpp"
#include "navistar/sim/crowd_sim.hpp"

namespace navistar::rl {

enum class RewardMode { handcrafted, learned };

inline RewardMode parse_reward_mode(const std::string& s) {
  if (s == "handcrafted") return RewardMode::handcrafted;
  if (s == "learned") return RewardMode::learned;
  throw std::invalid_argument("reward mode must be learned or handcrafted, got '" + s + "'");
}

inline const char* reward_mode_name(RewardMode m) { return m == RewardMode::learned ? "learned" : "handcrafted"; }

struct FeedbackConfig {
  std::size_t sessions = 10;
  std::size_t every = 20;             // episodes between sessions
  std::size_t pairs_per_session = 50;
  std::size_t reward_steps = 200;     // gradient steps per session
  std::size_t reward_batch = 128;
  std::size_t ensemble = 3;
  double reward_lr = 3e-4;
  std::string strategy = "disagreement";
  std::string labeler = "oracle";     // oracle | service

  void validate() const {
    if (every == 0) throw std::invalid_argument("feedback.every must be at least 1");
    if (reward_batch == 0) throw std::invalid_argument("feedback.reward_batch must be positive");
    if (ensemble == 0) throw std::invalid_argument("feedback.ensemble must be at least 1");
    if (!(reward_lr > 0.0)) throw std::invalid_argument("feedback.reward_lr must be positive");
    pref::parse_strategy(strategy);
    if (labeler != "oracle" && labeler != "service")
      throw std::invalid_argument("feedback.labeler must be oracle or service, got '" + labeler + "'");
  }
};

struct TrainConfig {
  SacConfig sac;
  star::StarConfig star;
  FeedbackConfig feedback;
  RewardMode reward_mode = RewardMode::handcrafted;
  std::uint64_t seed = 0;
  std::size_t episodes = 10000;        // every environment episode, demonstrations included
  std::size_t batch = 128;
  std::size_t buffer = 100000;
  std::size_t update_every = 1;        // environment steps between update rounds
  std::size_t updates_per_round = 1;
  std::size_t demo_episodes = 0;       // ORCA-driven episodes used for the warm start
  std::size_t bc_steps = 0;
  std::size_t bc_batch = 32;
  double bc_lr = 1e-3;
  std::size_t critic_warmup = 0;       // critic-only updates after the warm start
  double bc_weight = 0.0;              // Q-filtered imitation term kept in the actor loss
  std::size_t eval_every = 100;        // episodes between evaluations; 0 disables
  std::size_t eval_cases = 20;
  std::uint64_t eval_seed = 1000000;   // held-out seeds eval_seed, eval_seed + 1, ...
  std::size_t checkpoint_every = 0;    // 0: only the final checkpoint
  double progress_shaping = 0.0;       // k in k (g phi(s') - phi(s)), phi = -distance to goal

  void validate() const {
    sac.validate();
    star.validate();
    if (reward_mode == RewardMode::learned) feedback.validate();
    if (batch == 0) throw std::invalid_argument("train.batch must be positive");
    if (buffer == 0) throw std::invalid_argument("train.buffer must be positive");
    if (update_every == 0) throw std::invalid_argument("train.update_every must be at least 1");
    if (bc_steps > 0 && bc_batch == 0) throw std::invalid_argument("train.bc_batch must be positive");
    if (!(bc_weight >= 0.0)) throw std::invalid_argument("train.bc_weight must be non-negative");
    if (!(bc_lr > 0.0)) throw std::invalid_argument("train.bc_lr must be positive");
    if (demo_episodes > episodes) throw std::invalid_argument("train.demo_episodes exceeds train.episodes");
    if (!(progress_shaping >= 0.0)) throw std::invalid_argument("train.progress_shaping must be non-negative");
    if (eval_every > 0 && eval_cases == 0) throw std::invalid_argument("train.eval_cases must be positive");
  }
};

inline std::uint64_t training_seed(std::uint64_t seed, std::size_t episode) { return mix_seed(seed, 1000 + episode); }

// Where preference labels come from. `offer` hands over freshly sampled pairs;
// `collect` returns every label that arrived since the previous call, each once.
class FeedbackSource {
 public:
  virtual ~FeedbackSource() = default;
  virtual void offer(const std::vector<std::pair<const pref::TrajectorySegment*, const pref::TrajectorySegment*>>& pairs) = 0;
  virtual std::vector<pref::PreferenceRecord> collect() = 0;
};

// Scripted supervisor over the handcrafted score; the tie margin follows the
// score range of the segments collected so far.
class OracleFeedback : public FeedbackSource {
 public:
  explicit OracleFeedback(const std::deque<pref::TrajectorySegment>* segments,
                          pref::SegmentScorer scorer = pref::default_segment_score)
      : segments_(segments), scorer_(std::move(scorer)) {}

  void offer(const std::vector<std::pair<const pref::TrajectorySegment*, const pref::TrajectorySegment*>>& pairs) override {
    const pref::OracleLabeler oracle(scorer_, pref::score_range(*segments_, scorer_));
    for (const auto& [a, b] : pairs) {
      pref::PreferenceRecord r;
      r.seg0_id = a->id;
      r.seg1_id = b->id;
      r.label = oracle(*a, *b);
      r.labeler = "oracle";
      pending_.push_back(std::move(r));
    }
  }

  std::vector<pref::PreferenceRecord> collect() override { return std::exchange(pending_, {}); }

 private:
  const std::deque<pref::TrajectorySegment>* segments_;
  pref::SegmentScorer scorer_;
  std::vector<pref::PreferenceRecord> pending_;
};

struct EvalStats {
  double success_rate = 0.0;
  double collision_rate = 0.0;
  double timeout_rate = 0.0;
  double mean_return = 0.0;  // discounted handcrafted return
  double mean_success_time = 0.0;
};

// Deterministic policy (tanh of the mean) on the held-out seeds.
inline EvalStats evaluate_policy(const star::StarParams& actor, const sim::SimConfig& sim_cfg, std::uint64_t first_seed,
                                 std::size_t cases, double gamma) {
  EvalStats s;
  std::size_t successes = 0, collisions = 0, timeouts = 0;
  double time_total = 0.0, ret_total = 0.0;
  for (std::size_t k = 0; k < cases; ++k) {
    sim::CrowdSim env(sim_cfg);
    EnvWindow obs = env.reset(first_seed + k);
    while (!env.done()) obs = env.step(mean_action(obs, actor, env.state().robot.v_pref)).observation;
    const auto& log = env.log();
    std::vector<double> rewards;
    for (const auto& st : log.steps) rewards.push_back(st.reward);
    ret_total += discounted_return(rewards, sim_cfg.robot_v_pref, gamma, sim_cfg.dt);
    if (log.outcome == sim::Outcome::success) {
      ++successes;
      time_total += static_cast<double>(log.steps.size()) * sim_cfg.dt;
    }
    collisions += log.outcome == sim::Outcome::collision;
    timeouts += log.outcome == sim::Outcome::timeout;
  }
  const double n = static_cast<double>(cases);
  s.success_rate = successes / n;
  s.collision_rate = collisions / n;
  s.timeout_rate = timeouts / n;
  s.mean_return = ret_total / n;
  s.mean_success_time = successes ? time_total / successes : 0.0;
  return s;
}

struct TrainState {
  std::size_t episode = 0;  // episodes completed
  std::size_t env_steps = 0;
  std::size_t updates = 0;
  std::size_t labels = 0;
  std::size_t sessions = 0;
  std::string checkpoint;   // file name of the latest checkpoint, relative to the run directory

  nlohmann::ordered_json to_json() const {
    return {{"episode", episode}, {"env_steps", env_steps}, {"updates", updates},
            {"labels", labels},   {"sessions", sessions},   {"checkpoint", checkpoint}};
  }

  static TrainState from_json(const nlohmann::ordered_json& j) {
    TrainState s;
    s.episode = j.at("episode");
    s.env_steps = j.at("env_steps");
    s.updates = j.at("updates");
    s.labels = j.at("labels");
    s.sessions = j.at("sessions");
    s.checkpoint = j.at("checkpoint");
    return s;
  }
};

// collect -> label -> reward update -> relabel -> policy update, with an
// optional behaviour-cloning warm start from ORCA demonstrations.
//
// Run directory layout: metrics.jsonl (one line per evaluation),
// checkpoint_<episode>.ckpt, state.json (latest checkpoint and counters).
// Loads the actor from a trainer checkpoint ("actor." entries) or from a
// checkpoint holding only actor parameters.
inline void load_actor(const std::filesystem::path& path, star::StarParams& actor) {
  const auto stored = ad::read_checkpoint(path);
  ad::ParamSet only;
  for (const auto& [name, t] : stored)
    if (name.rfind("actor.", 0) == 0) only.add(name.substr(6), t);
  if (only.size() == 0)
    for (const auto& [name, t] : stored) only.add(name, t);
  auto target = actor.params();
  if (only.size() != target.size())
    throw ad::CheckpointError("checkpoint " + path.string() + " holds " + std::to_string(only.size()) +
                              " actor parameters, expected " + std::to_string(target.size()));
  for (std::size_t i = 0; i < only.size(); ++i) {
    const auto& [name, dst] = target.entries()[i];
    const auto& src = only.entries()[i];
    if (src.first != name || src.second.shape() != dst.shape())
      throw ad::CheckpointError("checkpoint " + path.string() + " does not match the actor at " + name);
  }
  target.copy_values_from(only);
}

class Trainer {
 public:
  using Progress = std::function<void(const nlohmann::ordered_json&)>;

  Trainer(TrainConfig cfg, sim::SimConfig sim_cfg, std::filesystem::path run_dir)
      : cfg_(std::move(cfg)), sim_cfg_(std::move(sim_cfg)), run_dir_(std::move(run_dir)),
        agent_(SacAgent::make(cfg_.star, cfg_.sac, mix_seed(cfg_.seed, 1))),
        opt_(std::make_unique<SacOptimizers>(agent_, cfg_.sac)),
        buffer_(cfg_.buffer), rng_(mix_seed(cfg_.seed, 2)) {
    cfg_.validate();
    sim_cfg_.validate();
    if (sim_cfg_.window != cfg_.star.window)
      throw std::invalid_argument("sim.window and star.window differ");
    if (1 + sim_cfg_.n_humans > cfg_.star.max_agents) throw std::invalid_argument("sim.n_humans exceeds star.max_agents");
    if (cfg_.reward_mode == RewardMode::learned) {
      ensemble_ = std::make_unique<pref::RewardEnsemble>(cfg_.feedback.ensemble, mix_seed(cfg_.seed, 3),
                                                         cfg_.feedback.reward_lr);
      if (cfg_.feedback.labeler == "oracle") {
        owned_feedback_ = std::make_unique<OracleFeedback>(&segments_);
        feedback_ = owned_feedback_.get();
      }
    }
  }

  // Labels from somewhere other than the oracle (the preference service).
  void set_feedback_source(FeedbackSource* source) { feedback_ = source; }
  void set_progress(Progress p) { progress_ = std::move(p); }

  SacAgent& agent() { return agent_; }
  const SacAgent& agent() const { return agent_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  const TrainState& state() const { return state_; }
  const std::deque<pref::TrajectorySegment>& segments() const { return segments_; }
  const pref::RewardEnsemble* ensemble() const { return ensemble_.get(); }
  const std::filesystem::path& run_dir() const { return run_dir_; }

  ad::ParamSet params() const {
    ad::ParamSet s = agent_.params();
    if (ensemble_) s.add_all("reward.", ensemble_->params());
    return s;
  }

  // Loads the latest checkpoint and counters. Replay contents, optimizer
  // moments and collected preferences are not part of a checkpoint and start
  // empty.
  void resume() {
    const auto state_path = run_dir_ / "state.json";
    if (!std::filesystem::exists(state_path)) throw std::runtime_error("no state.json in " + run_dir_.string());
    std::ifstream in(state_path);
    state_ = TrainState::from_json(nlohmann::ordered_json::parse(in));
    auto p = params();
    ad::load_checkpoint(run_dir_ / state_.checkpoint, p);
    rng_ = Rng(mix_seed(cfg_.seed, 100 + state_.episode));
    resumed_ = true;
  }

  void run() {
    std::filesystem::create_directories(run_dir_);
    if (!resumed_) std::ofstream(run_dir_ / "metrics.jsonl", std::ios::trunc);
    const bool learned = cfg_.reward_mode == RewardMode::learned;
    if (learned && !feedback_) throw std::logic_error("learned reward mode needs a feedback source");
    warm_started_ = state_.episode >= cfg_.demo_episodes;

    while (state_.episode < cfg_.episodes) {
      const std::size_t ep = state_.episode;
      const bool demo = ep < cfg_.demo_episodes;
      run_episode(ep, demo);
      ++state_.episode;
      if (!warm_started_ && state_.episode >= cfg_.demo_episodes) warm_start();
      if (learned && state_.sessions < cfg_.feedback.sessions && state_.episode % cfg_.feedback.every == 0)
        feedback_session();
      if (cfg_.eval_every > 0 && state_.episode % cfg_.eval_every == 0) write_metrics();
      if (cfg_.checkpoint_every > 0 && state_.episode % cfg_.checkpoint_every == 0) save();
    }
    if (!warm_started_) warm_start();
    save();
  }

  // Writes checkpoint_<episode>.ckpt and state.json.
  void save() {
    std::filesystem::create_directories(run_dir_);
    state_.checkpoint = fmt::format("checkpoint_{:06}.ckpt", state_.episode);
    ad::save_checkpoint(run_dir_ / state_.checkpoint, params());
    std::ofstream out(run_dir_ / "state.json", std::ios::trunc);
    out << state_.to_json().dump(2) << '\n';
    if (!out) throw std::runtime_error("failed writing state.json in " + run_dir_.string());
  }

 private:
  void run_episode(std::size_t ep, bool demo) {
    sim::CrowdSim env(sim_cfg_);
    EnvWindow obs = env.reset(training_seed(cfg_.seed, ep));
    const double v_pref = env.state().robot.v_pref;
    std::size_t steps = 0;
    while (!env.done()) {
      const sim::Vec2 action = demo ? sim::orca_robot_action(env) : sample_action(obs, agent_.actor, v_pref, rng_);
      auto result = env.step(action);
      const auto& rec = env.log().steps.back();
      Transition t;
      t.features = pref::reward_features(obs, rec.action);
      t.observation = std::move(obs);
      t.action = action;
      t.reward = reward_of(t.features, result.reward);
      t.shaping = shaping(rec.state.robot, env.state().robot);
      t.next_observation = result.observation;
      t.done = result.events.collision || result.events.success;
      t.v_pref = v_pref;
      if (demo) demos_.push_back({t.observation, {action.x / v_pref, action.y / v_pref}});
      buffer_.push(std::move(t));
      obs = std::move(result.observation);
      ++state_.env_steps;
      ++steps;
      if (!demo && warm_started_ && steps % cfg_.update_every == 0 && buffer_.size() >= cfg_.batch)
        for (std::size_t u = 0; u < cfg_.updates_per_round; ++u) update(true);
    }
    if (cfg_.reward_mode == RewardMode::learned) {
      for (auto& seg : pref::segments_from_episode(env.log(), fmt::format("ep{}", ep))) {
        segment_index_[seg.id] = segments_.size();
        segments_.push_back(std::move(seg));
      }
    }
  }

  // Potential-based progress term; phi is minus the distance to the goal.
  double shaping(const sim::AgentState& before, const sim::AgentState& after) const {
    if (cfg_.progress_shaping == 0.0) return 0.0;
    const double g = std::pow(cfg_.sac.gamma, sim_cfg_.dt * before.v_pref);
    const double phi0 = -sim::abs(before.goal() - before.position());
    const double phi1 = -sim::abs(after.goal() - after.position());
    return cfg_.progress_shaping * (g * phi1 - phi0);
  }

  double reward_of(const std::vector<double>& features, double handcrafted) const {
    return ensemble_ ? ensemble_->reward(features) : handcrafted;
  }

  DemoBatch demo_batch(std::size_t size) {
    DemoBatch d;
    std::vector<double> actions;
    for (std::size_t k = 0; k < std::min(size, demos_.size()); ++k) {
      const auto& demo = demos_[rng_.index(demos_.size())];
      d.observations.push_back(&demo.observation);
      actions.push_back(demo.action.x);
      actions.push_back(demo.action.y);
    }
    if (!actions.empty()) d.actions = Tensor::from({d.observations.size(), 2}, std::move(actions));
    return d;
  }

  void update(bool train_actor) {
    const auto batch = buffer_.sample(cfg_.batch, rng_);
    const bool with_demos = train_actor && cfg_.bc_weight > 0.0 && !demos_.empty();
    const DemoBatch demos = with_demos ? demo_batch(cfg_.bc_batch) : DemoBatch{};
    const auto l = sac_update(batch, agent_, *opt_, cfg_.sac, sim_cfg_.dt, rng_, train_actor,
                              with_demos ? &demos : nullptr, cfg_.bc_weight);
    acc_.add("bc_loss", l.bc_loss);
    acc_.add("bc_kept", l.bc_kept);
    ++state_.updates;
    acc_.add("q1_loss", l.q1_loss);
    acc_.add("q2_loss", l.q2_loss);
    acc_.add("actor_loss", l.actor_loss);
    acc_.add("entropy", l.entropy);
    acc_.add("alpha", l.alpha);
  }

  // Behaviour cloning of the squashed mean onto the demonstrations, then
  // critic-only updates so the actor starts against informed critics.
  void warm_start() {
    warm_started_ = true;
    if (!demos_.empty() && cfg_.bc_steps > 0) {
      ad::Adam bc(agent_.actor.params().tensors(), cfg_.bc_lr);
      for (std::size_t s = 0; s < cfg_.bc_steps; ++s) {
        const DemoBatch d = demo_batch(cfg_.bc_batch);
        bc.zero_grad();
        const Tensor loss =
            ad::mean(ad::square(ad::sub(ad::tanh(policy_batch(d.observations, agent_.actor).mean), d.actions)));
        require_finite_loss(loss.item(), "imitation loss", s);
        ad::backward(loss);
        auto tensors = bc.params();
        ad::clip_grad_norm(tensors, cfg_.sac.grad_clip);
        bc.step();
        acc_.add("imitation_loss", loss.item());
      }
    }
    if (cfg_.bc_weight == 0.0) {
      demos_.clear();
      demos_.shrink_to_fit();
    }
    if (buffer_.size() >= cfg_.batch)
      for (std::size_t u = 0; u < cfg_.critic_warmup; ++u) update(false);
  }

  void feedback_session() {
    ++state_.sessions;
    if (segments_.size() >= 2) {
      const auto strategy = pref::parse_strategy(cfg_.feedback.strategy);
      std::vector<std::pair<const pref::TrajectorySegment*, const pref::TrajectorySegment*>> pairs;
      for (std::size_t k = 0; k < cfg_.feedback.pairs_per_session; ++k) {
        const auto [a, b] = pref::sample_pair(segments_, strategy, rng_, ensemble_.get());
        pairs.emplace_back(&segments_[a], &segments_[b]);
      }
      feedback_->offer(pairs);
    }
    for (const auto& r : feedback_->collect()) {
      auto a = segment_index_.find(r.seg0_id), b = segment_index_.find(r.seg1_id);
      if (a == segment_index_.end() || b == segment_index_.end()) continue;  // segment from an earlier run
      examples_.push_back({&segments_[a->second].features, &segments_[b->second].features, r.label});
      ++state_.labels;
    }
    if (examples_.empty()) return;
    for (std::size_t s = 0; s < cfg_.feedback.reward_steps; ++s) {
      const double loss = ensemble_->train_step(pref::minibatch(examples_, cfg_.feedback.reward_batch, rng_));
      require_finite_loss(loss, "reward loss", s);
      acc_.add("reward_loss", loss);
    }
    relabel_rewards(buffer_, *ensemble_);
  }

  void write_metrics() {
    const auto ev = evaluate_policy(agent_.actor, sim_cfg_, cfg_.eval_seed, cfg_.eval_cases, cfg_.sac.gamma);
    nlohmann::ordered_json j;
    j["episode"] = state_.episode;
    j["env_steps"] = state_.env_steps;
    j["updates"] = state_.updates;
    j["success_rate"] = ev.success_rate;
    j["collision_rate"] = ev.collision_rate;
    j["timeout_rate"] = ev.timeout_rate;
    j["mean_return"] = ev.mean_return;
    j["mean_success_time"] = ev.mean_success_time;
    for (const char* key : {"q1_loss", "q2_loss", "actor_loss", "entropy", "alpha", "imitation_loss", "bc_loss", "bc_kept",
                            "reward_loss"})
      j[key] = acc_.mean_json(key);
    j["labels"] = state_.labels;
    acc_.clear();
    std::ofstream out(run_dir_ / "metrics.jsonl", std::ios::app);
    out << j.dump() << '\n';
    if (!out) throw std::runtime_error("failed writing metrics.jsonl in " + run_dir_.string());
    if (progress_) progress_(j);
  }

  struct Demo {
    EnvWindow observation;
    sim::Vec2 action;  // in units of v_pref
  };

  // Running means between metrics lines; NaN entries are skipped.
  struct Accumulator {
    std::map<std::string, std::pair<double, std::size_t>> sums;
    void add(const std::string& k, double v) {
      if (!std::isfinite(v)) return;
      auto& [s, n] = sums[k];
      s += v;
      ++n;
    }
    nlohmann::ordered_json mean_json(const std::string& k) const {
      auto it = sums.find(k);
      if (it == sums.end() || it->second.second == 0) return nullptr;
      return it->second.first / static_cast<double>(it->second.second);
    }
    void clear() { sums.clear(); }
  };

  TrainConfig cfg_;
  sim::SimConfig sim_cfg_;
  std::filesystem::path run_dir_;
  SacAgent agent_;
  std::unique_ptr<SacOptimizers> opt_;
  ReplayBuffer buffer_;
  Rng rng_;
  TrainState state_;
  bool resumed_ = false;
  bool warm_started_ = false;
  std::vector<Demo> demos_;
  std::unique_ptr<pref::RewardEnsemble> ensemble_;
  std::unique_ptr<FeedbackSource> owned_feedback_;
  FeedbackSource* feedback_ = nullptr;
  std::deque<pref::TrajectorySegment> segments_;  // stable addresses for examples_
  std::map<std::string, std::size_t> segment_index_;
  std::vector<pref::PreferenceExample> examples_;
  Accumulator acc_;
  Progress progress_;
};

}  // namespace navistar::rl
