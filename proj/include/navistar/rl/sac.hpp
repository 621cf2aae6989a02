#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "navistar/autodiff/ops.hpp"
#include "navistar/autodiff/optim.hpp"
#include "navistar/autodiff/params.hpp"
#include "navistar/rl/replay.hpp"
#include "navistar/star/network.hpp"
#include "navistar/util/rng.hpp"

namespace navistar::rl {

using ad::Tensor;

class TrainingAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// sum_t gamma^(t * dt * v_pref) r_t
inline double discounted_return(std::span<const double> rewards, double v_pref, double gamma, double dt) {
  double total = 0.0;
  for (std::size_t t = 0; t < rewards.size(); ++t)
    total += std::pow(gamma, static_cast<double>(t) * dt * v_pref) * rewards[t];
  return total;
}

inline constexpr std::size_t kCriticHumans = 5;
inline constexpr std::size_t kCriticRobotFields = 5;
inline constexpr std::size_t kCriticHumanFields = 5;

inline std::size_t critic_feature_dim(std::size_t steps) {
  return steps * (kCriticRobotFields + kCriticHumans * kCriticHumanFields);
}

// Fixed-size flattening of a window for the critics. Per timestep: robot
// [vx, vy, goal dx, goal dy, radius] and, for the 5 humans nearest at the
// latest step, [valid, rel px, rel py, vx, vy]; missing slots are zero.
inline std::vector<double> critic_features(const EnvWindow& w) {
  const std::size_t last = w.steps - 1;
  std::vector<std::pair<double, std::size_t>> order;
  for (std::size_t i = 1; i < w.agents; ++i) {
    double d = INFINITY;
    if (w.valid(last, i)) {
      const double dx = w.at(last, i, kPx) - w.at(last, 0, kPx), dy = w.at(last, i, kPy) - w.at(last, 0, kPy);
      d = dx * dx + dy * dy;
    }
    order.emplace_back(d, i);
  }
  std::stable_sort(order.begin(), order.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  const std::size_t per_step = kCriticRobotFields + kCriticHumans * kCriticHumanFields;
  std::vector<double> f(w.steps * per_step, 0.0);
  for (std::size_t t = 0; t < w.steps; ++t) {
    double* row = &f[t * per_step];
    row[0] = w.at(t, 0, kVx);
    row[1] = w.at(t, 0, kVy);
    row[2] = w.at(t, 0, kGoalDx);
    row[3] = w.at(t, 0, kGoalDy);
    row[4] = w.at(t, 0, kRadius);
    for (std::size_t k = 0; k < std::min(order.size(), kCriticHumans); ++k) {
      const std::size_t i = order[k].second;
      if (!w.valid(t, i)) continue;
      double* h = row + kCriticRobotFields + k * kCriticHumanFields;
      h[0] = 1.0;
      h[1] = w.at(t, i, kPx) - w.at(t, 0, kPx);
      h[2] = w.at(t, i, kPy) - w.at(t, 0, kPy);
      h[3] = w.at(t, i, kVx);
      h[4] = w.at(t, i, kVy);
    }
  }
  return f;
}

// Q(s, a) over critic features and the action divided by v_pref.
struct Critic {
  ad::Mlp mlp;

  static Critic make(std::size_t feature_dim, std::size_t hidden, Rng& rng) {
    return {ad::Mlp::make({feature_dim + 2, hidden, hidden, 1}, rng)};
  }

  Tensor operator()(const Tensor& features, const Tensor& actions) const {
    return mlp(ad::concat({features, actions}, 1));
  }

  ad::ParamSet params(const std::string& prefix = "") const { return mlp.params(prefix); }
};

struct SacConfig {
  double gamma = 0.99;
  double tau = 0.005;
  double actor_lr = 4e-5;
  double critic_lr = 4e-5;
  double alpha_lr = 3e-4;
  double initial_alpha = 0.1;
  double entropy_target = -2.0;
  double grad_clip = 10.0;
  std::size_t critic_hidden = 128;
  std::size_t actor_update_every = 1;  // critic updates per actor/temperature update

  void validate() const {
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("train.gamma must lie in [0, 1]");
    if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("train.tau must lie in (0, 1]");
    if (!(actor_lr > 0.0)) throw std::invalid_argument("train.actor_lr must be positive");
    if (!(critic_lr > 0.0)) throw std::invalid_argument("train.critic_lr must be positive");
    if (!(alpha_lr > 0.0)) throw std::invalid_argument("train.alpha_lr must be positive");
    if (!(initial_alpha > 0.0)) throw std::invalid_argument("train.initial_alpha must be positive");
    if (!(grad_clip > 0.0)) throw std::invalid_argument("train.grad_clip must be positive");
    if (critic_hidden == 0) throw std::invalid_argument("train.critic_hidden must be positive");
    if (actor_update_every == 0) throw std::invalid_argument("train.actor_update_every must be at least 1");
  }
};

struct SacAgent {
  star::StarParams actor;
  Critic q1, q2, q1_target, q2_target;
  Tensor log_alpha;

  static SacAgent make(const star::StarConfig& star_cfg, const SacConfig& cfg, std::uint64_t seed) {
    star_cfg.validate();
    cfg.validate();
    SacAgent a;
    Rng actor_rng(mix_seed(seed, 0)), critic_rng(mix_seed(seed, 1));
    a.actor = star::StarParams::make(star_cfg, actor_rng);
    const std::size_t f = critic_feature_dim(star_cfg.window);
    a.q1 = Critic::make(f, cfg.critic_hidden, critic_rng);
    a.q2 = Critic::make(f, cfg.critic_hidden, critic_rng);
    a.q1_target = Critic::make(f, cfg.critic_hidden, critic_rng);
    a.q2_target = Critic::make(f, cfg.critic_hidden, critic_rng);
    a.q1_target.params().copy_values_from(a.q1.params());
    a.q2_target.params().copy_values_from(a.q2.params());
    a.log_alpha = Tensor::scalar(std::log(cfg.initial_alpha), true);
    return a;
  }

  double alpha() const { return std::exp(log_alpha.item()); }

  ad::ParamSet critic_params() const {
    ad::ParamSet s;
    s.add_all("q1.", q1.params());
    s.add_all("q2.", q2.params());
    return s;
  }

  ad::ParamSet target_params() const {
    ad::ParamSet s;
    s.add_all("q1.", q1_target.params());
    s.add_all("q2.", q2_target.params());
    return s;
  }

  ad::ParamSet params() const {
    ad::ParamSet s;
    s.add_all("actor.", actor.params());
    s.add_all("critic.", critic_params());
    s.add_all("target.", target_params());
    s.add("log_alpha", log_alpha);
    return s;
  }
};

struct PolicyBatch {
  Tensor mean;     // (B, 2), pre-squash
  Tensor log_std;  // (B, 2)
};

inline PolicyBatch policy_batch(const std::vector<const EnvWindow*>& windows, const star::StarParams& actor) {
  std::vector<Tensor> means, log_stds;
  for (const auto* w : windows) {
    auto out = star::forward(*w, actor);
    means.push_back(out.mean);
    log_stds.push_back(out.log_std);
  }
  return {ad::concat(means, 0), ad::concat(log_stds, 0)};
}

struct SquashedSample {
  Tensor action;    // (B, 2), in units of v_pref: tanh(u)
  Tensor log_prob;  // (B, 1), density of the unit-scaled action
};

// Reparameterised tanh-Gaussian draw u = mean + std * noise, a = tanh(u).
// The density carries the tanh Jacobian; a 1e-6 floor keeps it finite at
// saturation. Scaling by v_pref shifts log-densities by a constant and is
// left to the caller.
inline SquashedSample squashed_sample(const PolicyBatch& p, const Tensor& noise) {
  const Tensor u = ad::add(p.mean, ad::mul(ad::exp(p.log_std), noise));
  const Tensor a = ad::tanh(u);
  const std::size_t B = noise.dim(0);
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  const Tensor gauss = ad::add_scalar(ad::neg(ad::add(ad::scale(ad::square(noise), 0.5), p.log_std)), -half_log_2pi);
  const Tensor jac = ad::log(ad::add_scalar(ad::neg(ad::square(a)), 1.0 + 1e-6));
  const Tensor lp = ad::reshape(ad::sum_axis(ad::sub(gauss, jac), 1), {B, 1});
  return {a, lp};
}

inline Tensor standard_noise(std::size_t batch, Rng& rng) {
  std::vector<double> v(batch * 2);
  for (auto& x : v) x = rng.normal();
  return Tensor::from({batch, 2}, std::move(v));
}

inline Tensor critic_input(const std::vector<const EnvWindow*>& windows) {
  std::vector<double> rows;
  std::size_t dim = 0;
  for (const auto* w : windows) {
    auto f = critic_features(*w);
    dim = f.size();
    rows.insert(rows.end(), f.begin(), f.end());
  }
  return Tensor::from({windows.size(), dim}, std::move(rows));
}

inline Tensor action_input(const std::vector<const Transition*>& batch) {
  std::vector<double> v;
  for (const auto* t : batch) {
    v.push_back(t->action.x / t->v_pref);
    v.push_back(t->action.y / t->v_pref);
  }
  return Tensor::from({batch.size(), 2}, std::move(v));
}

// Deterministic action: v_pref * tanh(mean).
inline sim::Vec2 mean_action(const EnvWindow& w, const star::StarParams& actor, double v_pref) {
  ad::NoGradGuard guard;
  const auto out = star::forward(w, actor);
  return {v_pref * std::tanh(out.mean[0]), v_pref * std::tanh(out.mean[1])};
}

inline sim::Vec2 sample_action(const EnvWindow& w, const star::StarParams& actor, double v_pref, Rng& rng) {
  ad::NoGradGuard guard;
  const auto out = star::forward(w, actor);
  const double ux = out.mean[0] + std::exp(out.log_std[0]) * rng.normal();
  const double uy = out.mean[1] + std::exp(out.log_std[1]) * rng.normal();
  return {v_pref * std::tanh(ux), v_pref * std::tanh(uy)};
}

struct SacLosses {
  double q1_loss = 0.0;
  double q2_loss = 0.0;
  double actor_loss = NAN;  // NaN when the actor was not updated this step
  double alpha_loss = NAN;
  double alpha = 0.0;
  double entropy = NAN;     // minus the mean log-density of fresh actions
  double critic_grad_norm = 0.0;
  double actor_grad_norm = NAN;
  double bc_loss = NAN;      // Q-filtered imitation term, when demonstrations are supplied
  double bc_kept = NAN;
};

// Soft Bellman targets y = r + g (1 - done) (min target Q(s', a') - alpha log pi(a'|s')),
// g = gamma^(dt v_pref) per transition.
inline Tensor soft_targets(const std::vector<const Transition*>& batch, const SacAgent& agent, const SacConfig& cfg,
                           double dt, const Tensor& next_noise) {
  ad::NoGradGuard guard;
  std::vector<const EnvWindow*> next;
  for (const auto* t : batch) next.push_back(&t->next_observation);
  const auto sample = squashed_sample(policy_batch(next, agent.actor), next_noise);
  const Tensor feats = critic_input(next);
  const Tensor q = ad::minimum(agent.q1_target(feats, sample.action), agent.q2_target(feats, sample.action));
  const double alpha = agent.alpha();
  std::vector<double> y(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto* t = batch[i];
    const double g = std::pow(cfg.gamma, dt * t->v_pref);
    const double soft = q[i] - alpha * sample.log_prob[i];
    y[i] = t->reward + t->shaping + (t->done ? 0.0 : g * soft);
  }
  return Tensor::from({batch.size(), 1}, std::move(y));
}

// mean(alpha log pi(a|s) - min Q(s, a)) with a reparameterised through `noise`.
inline Tensor actor_objective(const std::vector<const Transition*>& batch, const SacAgent& agent, const Tensor& noise,
                              Tensor* log_prob_out = nullptr) {
  std::vector<const EnvWindow*> obs;
  for (const auto* t : batch) obs.push_back(&t->observation);
  const auto sample = squashed_sample(policy_batch(obs, agent.actor), noise);
  const Tensor feats = critic_input(obs);
  const Tensor q = ad::minimum(agent.q1(feats, sample.action), agent.q2(feats, sample.action));
  if (log_prob_out) *log_prob_out = sample.log_prob;
  return ad::mean(ad::sub(ad::scale(sample.log_prob, agent.alpha()), q));
}

// Demonstration states with expert actions in units of v_pref.
struct DemoBatch {
  std::vector<const EnvWindow*> observations;
  Tensor actions;  // (B, 2)
};

// Q-filtered behaviour cloning: squared error between tanh(mean) and the
// expert action, counted only where the critics rate the expert action above
// the policy's own. Returns the term and the fraction of rows kept.
inline std::pair<Tensor, double> filtered_bc_term(const DemoBatch& demos, const SacAgent& agent) {
  const std::size_t B = demos.observations.size();
  const Tensor pred = ad::tanh(policy_batch(demos.observations, agent.actor).mean);
  std::vector<double> keep(B * 2, 0.0);
  std::size_t kept = 0;
  {
    ad::NoGradGuard guard;
    const Tensor feats = critic_input(demos.observations);
    const Tensor own = pred.detach();
    const Tensor q_demo = ad::minimum(agent.q1(feats, demos.actions), agent.q2(feats, demos.actions));
    const Tensor q_own = ad::minimum(agent.q1(feats, own), agent.q2(feats, own));
    for (std::size_t i = 0; i < B; ++i)
      if (q_demo[i] > q_own[i]) {
        keep[2 * i] = keep[2 * i + 1] = 1.0;
        ++kept;
      }
  }
  const Tensor err = ad::mul(ad::square(ad::sub(pred, demos.actions)), Tensor::from({B, 2}, std::move(keep)));
  return {ad::scale(ad::sum(err), 1.0 / static_cast<double>(B)), static_cast<double>(kept) / static_cast<double>(B)};
}

class SacOptimizers {
 public:
  SacOptimizers(const SacAgent& agent, const SacConfig& cfg)
      : actor(agent.actor.params().tensors(), cfg.actor_lr),
        critic(agent.critic_params().tensors(), cfg.critic_lr),
        temperature({agent.log_alpha}, cfg.alpha_lr) {}

  ad::Adam actor;
  ad::Adam critic;
  ad::Adam temperature;
  std::size_t updates = 0;
};

inline void require_finite_loss(double v, const char* what, std::size_t update) {
  if (!std::isfinite(v))
    throw TrainingAborted(std::string("non-finite ") + what + " at update " + std::to_string(update) +
                          "; gradients clipped at global norm, check learning rates and rewards");
}

namespace detail {
inline SacLosses sac_update_impl(const std::vector<const Transition*>& batch, SacAgent& agent, SacOptimizers& opt,
                                 const SacConfig& cfg, double dt, Rng& rng, bool train_actor,
                                 const DemoBatch* demos, double bc_weight) {
  if (batch.empty()) throw std::invalid_argument("sac_update: empty batch");
  SacLosses out;
  const std::size_t B = batch.size();
  const Tensor y = soft_targets(batch, agent, cfg, dt, standard_noise(B, rng));

  std::vector<const EnvWindow*> obs;
  for (const auto* t : batch) obs.push_back(&t->observation);
  const Tensor feats = critic_input(obs);
  const Tensor acts = action_input(batch);
  opt.critic.zero_grad();
  const Tensor l1 = ad::mean(ad::square(ad::sub(agent.q1(feats, acts), y)));
  const Tensor l2 = ad::mean(ad::square(ad::sub(agent.q2(feats, acts), y)));
  out.q1_loss = l1.item();
  out.q2_loss = l2.item();
  require_finite_loss(out.q1_loss + out.q2_loss, "critic loss", opt.updates);
  ad::backward(ad::add(l1, l2));
  out.critic_grad_norm = ad::clip_grad_norm(opt.critic.params(), cfg.grad_clip);
  opt.critic.step();

  if (train_actor && opt.updates % cfg.actor_update_every == 0) {
    opt.actor.zero_grad();
    Tensor log_prob;
    Tensor loss = actor_objective(batch, agent, standard_noise(B, rng), &log_prob);
    out.actor_loss = loss.item();
    require_finite_loss(out.actor_loss, "actor loss", opt.updates);
    if (demos && bc_weight > 0.0 && !demos->observations.empty()) {
      auto [bc, kept] = filtered_bc_term(*demos, agent);
      out.bc_loss = bc.item();
      out.bc_kept = kept;
      loss = ad::add(loss, ad::scale(bc, bc_weight));
    }
    ad::backward(loss);
    out.actor_grad_norm = ad::clip_grad_norm(opt.actor.params(), cfg.grad_clip);
    opt.actor.step();
    for (auto& t : opt.critic.params()) t.zero_grad();  // actor pass leaves critic gradients behind

    double mean_lp = 0.0;
    for (std::size_t i = 0; i < B; ++i) mean_lp += log_prob[i];
    mean_lp /= static_cast<double>(B);
    out.entropy = -mean_lp;
    // d/d log_alpha of -log_alpha (log pi + target), averaged
    opt.temperature.zero_grad();
    const Tensor alpha_loss = ad::scale(agent.log_alpha, -(mean_lp + cfg.entropy_target));
    out.alpha_loss = alpha_loss.item();
    ad::backward(alpha_loss);
    opt.temperature.step();
  }

  auto targets = agent.target_params();
  targets.polyak_from(agent.critic_params(), cfg.tau);
  out.alpha = agent.alpha();
  ++opt.updates;
  return out;
}
}  // namespace detail

// One SAC step: twin critics, then (every actor_update_every calls) actor and
// temperature, then polyak averaging of the target critics.
inline SacLosses sac_update(const std::vector<const Transition*>& batch, SacAgent& agent, SacOptimizers& opt,
                            const SacConfig& cfg, double dt, Rng& rng, bool train_actor = true,
                            const DemoBatch* demos = nullptr, double bc_weight = 0.0) {
  try {
    return detail::sac_update_impl(batch, agent, opt, cfg, dt, rng, train_actor, demos, bc_weight);
  } catch (const ad::NonFiniteError& e) {
    throw TrainingAborted(std::string(e.what()) + " at update " + std::to_string(opt.updates));
  }
}

}  // namespace navistar::rl
