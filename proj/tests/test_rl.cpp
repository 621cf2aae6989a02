#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "navistar/autodiff/finite_diff.hpp"
#include "navistar/rl/relabel.hpp"
#include "navistar/rl/replay.hpp"
#include "navistar/rl/sac.hpp"
#include "navistar/rl/trainer.hpp"
#include "support.hpp"

using namespace navistar;
using namespace navistar::rl;
using testsupport::random_window;

namespace {

star::StarConfig tiny_star() {
  star::StarConfig c;
  c.model_dim = 8;
  c.heads = 2;
  c.ffn_hidden = 16;
  c.window = 3;
  c.max_agents = 6;
  return c;
}

SacConfig tiny_sac() {
  SacConfig c;
  c.critic_hidden = 16;
  return c;
}

Transition random_transition(Rng& rng, std::size_t agents = 3) {
  Transition t;
  t.observation = random_window(3, agents, rng, 1.0);
  t.next_observation = random_window(3, agents, rng, 1.0);
  t.action = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
  t.reward = rng.uniform(-1, 1);
  t.done = rng.uniform() < 0.2;
  t.features = std::vector<double>(pref::kFeatureDim);
  for (auto& f : t.features) f = rng.normal();
  return t;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::filesystem::path fresh_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("navistar_rl_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

TrainConfig tiny_train(std::size_t episodes) {
  TrainConfig c;
  c.star = tiny_star();
  c.sac = tiny_sac();
  c.sac.critic_lr = 3e-4;
  c.episodes = episodes;
  c.batch = 16;
  c.update_every = 8;
  c.eval_every = 2;
  c.eval_cases = 2;
  c.seed = 5;
  return c;
}

sim::SimConfig tiny_sim(std::size_t humans) {
  sim::SimConfig s;
  s.n_humans = humans;
  s.window = 3;
  s.time_limit = 8.0;
  return s;
}

}  // namespace

TEST(DiscountedReturn, GammaOneIsPlainSum) {
  const std::vector<double> r = {0.5, -1.0, 2.0, 0.25};
  EXPECT_EQ(discounted_return(r, 1.0, 1.0, 0.25), 1.75);
}

TEST(DiscountedReturn, OnlyFirstTerm) {
  const std::vector<double> r = {1.0, 0.0, 0.0};
  EXPECT_EQ(discounted_return(r, 1.0, 0.9, 1.0), 1.0);
}

TEST(DiscountedReturn, MatchesLoopOracle) {
  Rng rng(3);
  for (int c = 0; c < 100; ++c) {
    std::vector<double> r(1 + rng.index(20));
    for (auto& x : r) x = rng.uniform(-1, 1);
    const double gamma = rng.uniform(0.5, 1.0), v = rng.uniform(0.5, 1.5), dt = rng.uniform(0.1, 1.0);
    double oracle = 0.0;
    for (std::size_t t = 0; t < r.size(); ++t) {
      const double seconds = static_cast<double>(t) * dt;
      oracle += std::pow(gamma, seconds * v) * r[t];
    }
    EXPECT_EQ(discounted_return(r, v, gamma, dt), oracle);
  }
}

TEST(Replay, RingOverwritesOldest) {
  ReplayBuffer b(3);
  for (int i = 0; i < 5; ++i) {
    Transition t;
    t.reward = i;
    b.push(t);
    EXPECT_LE(b.size(), 3u);
  }
  EXPECT_EQ(b.size(), 3u);
  EXPECT_EQ(b.at(0).reward, 3.0);
  EXPECT_EQ(b.at(1).reward, 4.0);
  EXPECT_EQ(b.at(2).reward, 2.0);
  EXPECT_THROW(ReplayBuffer(0), std::invalid_argument);
  Rng rng(1);
  EXPECT_THROW(ReplayBuffer(4).sample(2, rng), std::logic_error);
}

TEST(Replay, UniformSampling) {
  ReplayBuffer b(100);
  for (int i = 0; i < 100; ++i) b.push(Transition{});
  Rng rng(2024);
  std::vector<int> counts(100, 0);
  const std::size_t draws = 100000;
  for (std::size_t i : b.sample_indices(draws, rng)) ++counts[i];
  const double expected = draws / 100.0, sigma = std::sqrt(draws * 0.01 * 0.99);
  for (int c : counts) EXPECT_LT(std::abs(c - expected), 3.0 * sigma);
}

TEST(CriticFeatures, IgnoresHumanSlotOrder) {
  Rng rng(8);
  const EnvWindow w = random_window(3, 5, rng, 0.8);
  EXPECT_EQ(critic_features(w), critic_features(w.permuted({0, 3, 1, 4, 2})));
  EXPECT_EQ(critic_features(w).size(), critic_feature_dim(3));
}

TEST(CriticFeatures, NoHumansLeavesZeros) {
  Rng rng(9);
  const EnvWindow w = random_window(3, 1, rng);
  const auto f = critic_features(w);
  const std::size_t per_step = critic_feature_dim(1);
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t k = kCriticRobotFields; k < per_step; ++k) EXPECT_EQ(f[t * per_step + k], 0.0);
  EXPECT_EQ(f[2], w.at(0, 0, kGoalDx));
}

TEST(SquashedSample, LogDensityClosedForm) {
  const Tensor mean = Tensor::from({1, 2}, {0.3, -0.2});
  const Tensor log_std = Tensor::from({1, 2}, {-0.5, 0.1});
  const Tensor noise = Tensor::from({1, 2}, {0.7, -1.1});
  const auto s = squashed_sample({mean, log_std}, noise);
  double expected = 0.0;
  for (int i = 0; i < 2; ++i) {
    const double sd = std::exp(log_std[i]), u = mean[i] + sd * noise[i];
    const double gauss = -0.5 * noise[i] * noise[i] - std::log(sd) - 0.5 * std::log(2.0 * M_PI);
    expected += gauss - std::log(1.0 - std::tanh(u) * std::tanh(u) + 1e-6);
    EXPECT_DOUBLE_EQ(s.action[i], std::tanh(u));
  }
  EXPECT_NEAR(s.log_prob.item(), expected, 1e-12);
}

TEST(SacUpdate, ZeroRewardZeroGammaTargetsZero) {
  SacConfig cfg = tiny_sac();
  cfg.gamma = 0.0;
  SacAgent agent = SacAgent::make(tiny_star(), cfg, 4);
  SacOptimizers opt(agent, cfg);
  Rng rng(4);
  Transition t = random_transition(rng);
  t.reward = 0.0;
  t.done = false;
  std::vector<const Transition*> batch(6, &t);
  double expected = 0.0;
  {
    ad::NoGradGuard guard;
    const Tensor q = agent.q1(critic_input({&t.observation}), action_input({&t}));
    expected = q.item() * q.item();
  }
  const auto l = sac_update(batch, agent, opt, cfg, 0.25, rng);
  EXPECT_NEAR(l.q1_loss, expected, 1e-12);
  EXPECT_TRUE(std::isfinite(l.actor_loss));
}

TEST(SacUpdate, ActorGradientMatchesFiniteDifferences) {
  SacConfig cfg = tiny_sac();
  SacAgent agent = SacAgent::make(tiny_star(), cfg, 6);
  Rng rng(6);
  Transition t = random_transition(rng);
  const std::vector<const Transition*> batch = {&t};
  const Tensor noise = standard_noise(1, rng);
  const double err = ad::finite_diff_check([&] { return actor_objective(batch, agent, noise); },
                                           agent.actor.params().tensors(), 1e-6);
  EXPECT_LT(err, 1e-3);
}

TEST(SacUpdate, TargetIsExactPolyakAverage) {
  SacConfig cfg = tiny_sac();
  SacAgent agent = SacAgent::make(tiny_star(), cfg, 7);
  SacOptimizers opt(agent, cfg);
  Rng rng(7);
  std::vector<Transition> data;
  for (int i = 0; i < 4; ++i) data.push_back(random_transition(rng));
  std::vector<const Transition*> batch;
  for (auto& d : data) batch.push_back(&d);
  // make the targets differ from the online critics first
  sac_update(batch, agent, opt, cfg, 0.25, rng);
  std::vector<std::vector<double>> old;
  for (const auto& [name, t] : agent.target_params().entries()) old.emplace_back(t.data().begin(), t.data().end());
  sac_update(batch, agent, opt, cfg, 0.25, rng);
  const auto online = agent.critic_params().entries();
  const auto target = agent.target_params().entries();
  for (std::size_t k = 0; k < target.size(); ++k)
    for (std::size_t i = 0; i < old[k].size(); ++i)
      ASSERT_EQ(target[k].second[i], (1.0 - 0.005) * old[k][i] + 0.005 * online[k].second[i]);
}

TEST(SacUpdate, PolyakContractsTowardFrozenOnline) {
  SacAgent agent = SacAgent::make(tiny_star(), tiny_sac(), 8);
  Rng rng(8);
  for (auto& [name, t] : agent.critic_params().entries()) {
    Tensor w = t;
    for (auto& v : w.mutable_data()) v += rng.uniform(-1, 1);
  }
  auto gap = [&] {
    double s = 0.0;
    const auto a = agent.critic_params().entries(), b = agent.target_params().entries();
    for (std::size_t k = 0; k < a.size(); ++k)
      for (std::size_t i = 0; i < a[k].second.numel(); ++i) s += std::pow(a[k].second[i] - b[k].second[i], 2);
    return std::sqrt(s);
  };
  double prev = gap();
  for (int i = 0; i < 50; ++i) {
    auto targets = agent.target_params();
    targets.polyak_from(agent.critic_params(), 0.005);
    const double now = gap();
    EXPECT_LT(now, prev);
    prev = now;
  }
}

TEST(SacUpdate, NonFiniteRewardAborts) {
  SacConfig cfg = tiny_sac();
  SacAgent agent = SacAgent::make(tiny_star(), cfg, 9);
  SacOptimizers opt(agent, cfg);
  Rng rng(9);
  Transition t = random_transition(rng);
  t.reward = NAN;
  EXPECT_THROW(sac_update({&t}, agent, opt, cfg, 0.25, rng), TrainingAborted);
  EXPECT_THROW(sac_update({}, agent, opt, cfg, 0.25, rng), std::invalid_argument);
}

TEST(SacUpdate, QFilteredImitationKeepsOnlyBetterDemos) {
  SacConfig cfg = tiny_sac();
  SacAgent agent = SacAgent::make(tiny_star(), cfg, 10);
  Rng rng(10);
  std::vector<EnvWindow> windows;
  for (int i = 0; i < 8; ++i) windows.push_back(random_window(3, 3, rng, 1.0));
  DemoBatch demos;
  std::vector<double> acts;
  for (auto& w : windows) {
    demos.observations.push_back(&w);
    acts.push_back(rng.uniform(-1, 1));
    acts.push_back(rng.uniform(-1, 1));
  }
  demos.actions = Tensor::from({8, 2}, acts);
  const auto [term, kept] = filtered_bc_term(demos, agent);
  double expected = 0.0;
  std::size_t count = 0;
  ad::NoGradGuard guard;
  const Tensor feats = critic_input(demos.observations);
  for (std::size_t i = 0; i < 8; ++i) {
    const auto out = star::forward(windows[i], agent.actor);
    const Tensor own = Tensor::from({1, 2}, {std::tanh(out.mean[0]), std::tanh(out.mean[1])});
    const Tensor demo = Tensor::from({1, 2}, {acts[2 * i], acts[2 * i + 1]});
    const Tensor f = ad::gather_rows(feats, {i});
    const double qd = std::min(agent.q1(f, demo).item(), agent.q2(f, demo).item());
    const double qo = std::min(agent.q1(f, own).item(), agent.q2(f, own).item());
    if (qd > qo) {
      ++count;
      expected += std::pow(own[0] - demo[0], 2) + std::pow(own[1] - demo[1], 2);
    }
  }
  EXPECT_EQ(kept, count / 8.0);
  EXPECT_NEAR(term.item(), expected / 8.0, 1e-12);
}

TEST(Relabel, ZeroNetGivesZeroRewards) {
  pref::RewardEnsemble ens(3, 1);
  for (std::size_t k = 0; k < ens.size(); ++k)
    for (auto& [name, t] : ens.member(k).params().entries()) {
      Tensor w = t;
      for (auto& v : w.mutable_data()) v = 0.0;
    }
  ReplayBuffer b(50);
  Rng rng(11);
  for (int i = 0; i < 30; ++i) b.push(random_transition(rng));
  EXPECT_EQ(relabel_rewards(b, ens), 30u);
  for (std::size_t i = 0; i < b.size(); ++i) EXPECT_EQ(b.at(i).reward, 0.0);
}

TEST(Relabel, IdempotentAndMatchesDirectCalls) {
  pref::RewardEnsemble ens(3, 12);
  ReplayBuffer b(200);
  Rng rng(12);
  for (int i = 0; i < 150; ++i) b.push(random_transition(rng));
  relabel_rewards(b, ens, 64);
  std::vector<double> first;
  for (std::size_t i = 0; i < b.size(); ++i) first.push_back(b.at(i).reward);
  relabel_rewards(b, ens, 64);
  for (std::size_t i = 0; i < b.size(); ++i) EXPECT_EQ(b.at(i).reward, first[i]);
  for (std::size_t i : b.sample_indices(100, rng)) {
    double direct = 0.0;
    for (std::size_t k = 0; k < ens.size(); ++k) direct += ens.member(k).reward(b.at(i).features);
    EXPECT_EQ(b.at(i).reward, direct / 3.0);
  }
}

TEST(Trainer, ZeroEpisodesCheckpointEqualsInitialization) {
  const auto dir = fresh_dir("zero");
  Trainer tr(tiny_train(0), tiny_sim(0), dir);
  tr.run();
  Trainer fresh(tiny_train(0), tiny_sim(0), fresh_dir("zero_ref"));
  auto loaded = fresh.params();
  ad::load_checkpoint(dir / "checkpoint_000000.ckpt", loaded);
  Trainer reference(tiny_train(0), tiny_sim(0), fresh_dir("zero_ref2"));
  const auto a = loaded.entries(), b = reference.params().entries();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t k = 0; k < a.size(); ++k)
    for (std::size_t i = 0; i < a[k].second.numel(); ++i) ASSERT_EQ(a[k].second[i], b[k].second[i]) << a[k].first;
  EXPECT_EQ(read_file(dir / "metrics.jsonl"), "");
}

TEST(Trainer, MetricsLinePerEvaluation) {
  const auto dir = fresh_dir("cadence");
  TrainConfig c = tiny_train(6);
  c.demo_episodes = 2;
  c.bc_steps = 5;
  c.bc_batch = 4;
  c.critic_warmup = 2;
  c.bc_weight = 0.5;
  c.progress_shaping = 0.1;
  Trainer tr(c, tiny_sim(1), dir);
  tr.run();
  const std::string metrics = read_file(dir / "metrics.jsonl");
  EXPECT_EQ(std::count(metrics.begin(), metrics.end(), '\n'), 3);
  EXPECT_EQ(tr.state().episode, 6u);
  EXPECT_GT(tr.state().updates, 0u);
  const auto last = nlohmann::json::parse(metrics.substr(metrics.rfind('\n', metrics.size() - 2) + 1));
  EXPECT_EQ(last.at("episode"), 6);
  EXPECT_TRUE(last.contains("success_rate"));
}

TEST(Trainer, LearnedRewardRunIsDeterministic) {
  TrainConfig c = tiny_train(6);
  c.reward_mode = RewardMode::learned;
  c.feedback.sessions = 2;
  c.feedback.every = 2;
  c.feedback.pairs_per_session = 6;
  c.feedback.reward_steps = 5;
  c.feedback.reward_batch = 8;
  sim::SimConfig s = tiny_sim(1);
  s.time_limit = 10.0;
  const auto d1 = fresh_dir("det1"), d2 = fresh_dir("det2");
  Trainer a(c, s, d1), b(c, s, d2);
  a.run();
  b.run();
  EXPECT_GT(a.state().labels, 0u);
  EXPECT_EQ(a.state().labels, b.state().labels);
  EXPECT_EQ(read_file(d1 / "metrics.jsonl"), read_file(d2 / "metrics.jsonl"));
  EXPECT_EQ(read_file(d1 / a.state().checkpoint), read_file(d2 / b.state().checkpoint));
}

TEST(Trainer, ResumesFromLatestCheckpoint) {
  const auto dir = fresh_dir("resume");
  TrainConfig c = tiny_train(2);
  Trainer first(c, tiny_sim(0), dir);
  first.run();
  c.episodes = 4;
  Trainer second(c, tiny_sim(0), dir);
  second.resume();
  EXPECT_EQ(second.state().episode, 2u);
  const auto a = first.params().entries(), b = second.params().entries();
  for (std::size_t k = 0; k < a.size(); ++k) ASSERT_EQ(a[k].second[0], b[k].second[0]);
  second.run();
  EXPECT_EQ(second.state().episode, 4u);
  const std::string metrics = read_file(dir / "metrics.jsonl");
  EXPECT_EQ(std::count(metrics.begin(), metrics.end(), '\n'), 2);
  EXPECT_TRUE(std::filesystem::exists(dir / "checkpoint_000004.ckpt"));
}

TEST(Trainer, RejectsInconsistentConfig) {
  TrainConfig c = tiny_train(2);
  sim::SimConfig s = tiny_sim(0);
  s.window = 5;
  EXPECT_THROW(Trainer(c, s, fresh_dir("bad")), std::invalid_argument);
  c.demo_episodes = 3;
  EXPECT_THROW(Trainer(c, tiny_sim(0), fresh_dir("bad")), std::invalid_argument);
  EXPECT_THROW(parse_reward_mode("sparse"), std::invalid_argument);
}
