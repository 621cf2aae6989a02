// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance [--only NAME]... [--allow-fail NAME]... [--configs DIR] [--cli PATH] [--report FILE]
//
// Exit status is 1 when a criterion fails that was not passed to --allow-fail.

#include <CLI11.hpp>
#include <Eigen/Dense>
#include <fmt/core.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "navistar/autodiff/finite_diff.hpp"
#include "navistar/autodiff/ops.hpp"
#include "navistar/config/run_config.hpp"
#include "navistar/eval/social.hpp"
#include "navistar/pref/preference.hpp"
#include "navistar/rl/trainer.hpp"
#include "navistar/sim/crowd_sim.hpp"
#include "navistar/star/network.hpp"
#include "pref_fixture.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace navistar;
using ad::Tensor;
using testsupport::random_window;
using testsupport::row_sum_error;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

class Stopwatch {
 public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count(); }

 private:
  std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

Tensor random_tensor(ad::Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(ad::numel_of(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v));
}

// ---- autodiff and STAR ----

Verdict gradient_suite() {
  Stopwatch clock;
  double worst = 0.0;
  std::string worst_name;
  auto record = [&](double err, const std::string& name) {
    if (!(err <= worst)) {
      worst = err;
      worst_name = name;
    }
  };
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(9100 + seed);
    const std::size_t r = 1 + rng.index(6), c = 1 + rng.index(6), k = 1 + rng.index(6);
    const Tensor other = random_tensor({r, c}, rng), right = random_tensor({c, k}, rng);
    const Tensor left = random_tensor({k, r}, rng), bias = random_tensor({c}, rng);
    struct Case {
      const char* name;
      ad::Shape shape;
      double lo, hi;
      std::function<Tensor(const Tensor&)> op;
    };
    const std::vector<Case> cases = {
        {"matmul_left", {r, c}, -1, 1, [&](const Tensor& x) { return ad::matmul(x, right); }},
        {"matmul_right", {r, c}, -1, 1, [&](const Tensor& x) { return ad::matmul(left, x); }},
        {"add", {r, c}, -1, 1, [&](const Tensor& x) { return ad::add(x, other); }},
        {"sub", {r, c}, -1, 1, [&](const Tensor& x) { return ad::sub(other, x); }},
        {"scale", {r, c}, -1, 1, [&](const Tensor& x) { return ad::scale(x, 2.3); }},
        {"mul", {r, c}, -1, 1, [&](const Tensor& x) { return ad::mul(x, ad::mul(x, other)); }},
        {"concat0", {r, c}, -1, 1, [&](const Tensor& x) { return ad::concat({x, other}, 0); }},
        {"concat1", {r, c}, -1, 1, [&](const Tensor& x) { return ad::concat({other, x, x}, 1); }},
        {"slice", {r, c}, -1, 1, [&](const Tensor& x) { return ad::slice(x, 1, 0, (c + 1) / 2); }},
        {"reshape", {r, c}, -1, 1, [&](const Tensor& x) { return ad::reshape(x, {r * c}); }},
        {"transpose", {r, c}, -1, 1, [&](const Tensor& x) { return ad::transpose(x); }},
        {"permute", {2, r, c}, -1, 1, [&](const Tensor& x) { return ad::permute(x, {1, 2, 0}); }},
        {"relu", {r, c}, -1, 1, [&](const Tensor& x) { return ad::relu(x); }},
        {"sigmoid", {r, c}, -3, 3, [&](const Tensor& x) { return ad::sigmoid(x); }},
        {"tanh", {r, c}, -2, 2, [&](const Tensor& x) { return ad::tanh(x); }},
        {"exp", {r, c}, -1, 1, [&](const Tensor& x) { return ad::exp(x); }},
        {"log", {r, c}, 0.5, 2, [&](const Tensor& x) { return ad::log(x); }},
        {"square", {r, c}, -1, 1, [&](const Tensor& x) { return ad::square(x); }},
        {"mean", {r, c}, -1, 1, [&](const Tensor& x) { return ad::mean(x); }},
        {"sum", {r, c}, -1, 1, [&](const Tensor& x) { return ad::sum(x); }},
        {"mean_axis", {r, c}, -1, 1, [&](const Tensor& x) { return ad::mean_axis(x, 1); }},
        {"sum_axis", {r, c}, -1, 1, [&](const Tensor& x) { return ad::sum_axis(x, 0); }},
        {"add_bias", {r, c}, -1, 1, [&](const Tensor& x) { return ad::add_bias(x, bias); }},
        {"add_bias_b", {c}, -1, 1, [&](const Tensor& x) { return ad::add_bias(other, x); }},
        {"softmax_rows", {r, c}, -2, 2, [&](const Tensor& x) { return ad::softmax_rows(x); }},
        {"clamp", {r, c}, -2, 2, [&](const Tensor& x) { return ad::clamp(x, -0.5, 0.5); }},
        {"minimum", {r, c}, -1, 1, [&](const Tensor& x) { return ad::minimum(x, other); }},
        {"gather_rows", {r, c}, -1, 1, [&](const Tensor& x) { return ad::gather_rows(x, {0, r - 1, 0}); }},
    };
    for (const auto& cs : cases) {
      Tensor x = random_tensor(cs.shape, rng, cs.lo, cs.hi);
      for (double& v : x.mutable_data())  // off the relu and clamp kinks
        if (std::abs(v) < 1e-3 || std::abs(std::abs(v) - 0.5) < 1e-3) v += 0.01;
      const Tensor w = random_tensor(cs.op(x).shape(), rng);
      auto f = [&](const Tensor& t) { return ad::sum(ad::mul(cs.op(t), w)); };
      record(ad::finite_diff_check(f, x, 1e-5), cs.name);
    }
  }
  {
    Rng rng(9200);
    auto p = star::StarParams::make(testsupport::small_config(), rng);
    const EnvWindow w = random_window(3, 2, rng, 1.0);
    auto loss = [&] {
      const auto out = star::forward(w, p);
      return ad::add(ad::add(ad::sum(out.value), ad::sum(ad::scale(out.mean, 0.6))),
                     ad::sum(ad::scale(out.log_std, -0.4)));
    };
    record(ad::finite_diff_check(loss, p.params().tensors(), 1e-5), "star_forward");
  }
  const double secs = clock.seconds();
  return {worst < 1e-4 && secs < 60.0,
          fmt::format("max rel err {:.2e} ({}), {:.1f} s", worst, worst_name, secs)};
}

Verdict attention_rows() {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(9300 + seed);
    auto p = star::StarParams::make(star::StarConfig{}, rng);
    const EnvWindow w = random_window(1 + rng.index(5), 1 + rng.index(8), rng, 0.6);
    const auto b = star::forward(w, p).attention;
    const std::size_t T = b.steps, N = b.agents, h = b.heads;
    std::vector<char> srow, trow;
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t hd = 0; hd < h; ++hd)
        for (std::size_t i = 0; i < N; ++i) srow.push_back(w.valid(t, i));
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t hd = 0; hd < h; ++hd)
        for (std::size_t t = 0; t < T; ++t) trow.push_back(w.valid(t, i));
    worst = std::max({worst, row_sum_error(b.spatial, T * h * N, N, srow),
                      row_sum_error(b.temporal, N * h * T, T, trow),
                      row_sum_error(b.cross_spatial, h * b.spatial_length(), b.fused_length()),
                      row_sum_error(b.cross_temporal, h * b.temporal_length(), b.fused_length()),
                      row_sum_error(b.self_fusion, h * b.fused_length(), b.fused_length())});
  }
  return {worst <= 1e-6, fmt::format("max |row sum - 1| {:.2e} over 20 configs", worst)};
}

Verdict permutation_invariance() {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(9400 + seed);
    auto p = star::StarParams::make(star::StarConfig{}, rng);
    const std::size_t n = 3 + rng.index(6);
    const EnvWindow w = random_window(5, n, rng);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = n - 1; i > 1; --i) std::swap(order[i], order[1 + rng.index(i)]);
    const auto a = star::forward(w, p), b = star::forward(w.permuted(order), p);
    worst = std::max({worst, std::abs(a.value.item() - b.value.item()), std::abs(a.mean[0] - b.mean[0]),
                      std::abs(a.mean[1] - b.mean[1])});
  }
  return {worst < 1e-9, fmt::format("max change {:.2e} over 20 seeds", worst)};
}

Eigen::MatrixXd to_eigen(const Tensor& t) {
  Eigen::MatrixXd m(t.dim(0), t.dim(1));
  for (std::size_t i = 0; i < t.dim(0); ++i)
    for (std::size_t j = 0; j < t.dim(1); ++j) m(i, j) = t.at(i, j);
  return m;
}

// Dense T_k(L_hat) powers built with Eigen, against the recurrence on x.
Verdict chebyshev_oracle() {
  double worst = 0.0;
  std::size_t cases = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed)
    for (std::size_t order = 0; order <= 3; ++order) {
      Rng rng(9500 + 10 * seed + order);
      const std::size_t n = 1 + rng.index(6), d = 1 + rng.index(4);
      std::vector<std::array<double, 2>> pos(n);
      for (auto& q : pos) q = {rng.uniform(-4, 4), rng.uniform(-4, 4)};
      std::vector<char> mask(n, 1);
      for (std::size_t i = 1; i < n; ++i) mask[i] = rng.uniform() < 0.8;
      const Tensor lap = star::scaled_laplacian(star::build_adjacency(pos, 2.0, mask));
      const Tensor x = random_tensor({n, d}, rng);
      std::vector<Tensor> theta;
      for (std::size_t k = 0; k <= order; ++k) theta.push_back(random_tensor({d, d}, rng));
      const Tensor out = star::cheb_gcn(x, lap, theta);

      const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n), Lh = to_eigen(lap);
      std::vector<Eigen::MatrixXd> T{I, Lh};
      for (std::size_t k = 2; k <= order; ++k) T.push_back(2.0 * Lh * T[k - 1] - T[k - 2]);
      Eigen::MatrixXd ref = Eigen::MatrixXd::Zero(n, d);
      for (std::size_t k = 0; k <= order; ++k) ref += T[k] * to_eigen(x) * to_eigen(theta[k]);
      worst = std::max(worst, (to_eigen(out) - ref).cwiseAbs().maxCoeff());
      ++cases;
    }
  return {worst <= 1e-9, fmt::format("max abs err {:.2e} over {} cases", worst, cases)};
}

// ---- crowd ----

Verdict orca_safety() {
  Stopwatch clock;
  std::size_t collisions = 0, episodes = 0, truncated = 0;
  for (std::size_t n : {2u, 5u, 10u}) {
    sim::SimConfig cfg;
    cfg.n_humans = n;
    cfg.robot_start = {0.0, -1000.0};  // out of the way; humans never react to it
    cfg.robot_goal = {0.0, -980.0};
    sim::CrowdSim env(cfg);
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      env.reset(70000 + seed);
      bool hit = env.min_human_clearance() <= 0.0;
      while (!env.done()) {
        env.step({0.0, 0.0});
        hit = hit || env.min_human_clearance() <= 0.0;
      }
      truncated += env.log().outcome != sim::Outcome::timeout;
      collisions += hit;
      ++episodes;
    }
  }
  const double secs = clock.seconds();
  return {collisions == 0 && truncated == 0 && secs < 120.0,
          fmt::format("{} colliding episodes of {}, {:.1f} s", collisions, episodes, secs)};
}

// ---- preferences ----

struct Recovery {
  double accuracy = 0.0;
  std::vector<double> weights;
};

Recovery recover(std::uint64_t seed) {
  testsupport::LinearPreferenceTask task(seed, 2000);
  pref::RewardEnsemble model(1, seed + 1);
  Rng batches(seed + 2);
  for (int step = 0; step < 500; ++step) model.train_step(pref::minibatch(task.train(), 128, batches));
  Recovery r;
  r.accuracy = task.heldout_accuracy(model.member(0));
  for (const auto& t : model.params().tensors()) r.weights.insert(r.weights.end(), t.data().begin(), t.data().end());
  return r;
}

Verdict preference_recovery() {
  Stopwatch clock;
  const auto a = recover(41), b = recover(41), c = recover(42);
  const bool same = a.weights == b.weights && a.accuracy == b.accuracy;
  return {same && a.accuracy >= 0.90 && c.accuracy >= 0.90,
          fmt::format("held-out accuracy {:.3f} (seed 41), {:.3f} (seed 42), rerun {}, {:.1f} s", a.accuracy,
                      c.accuracy, same ? "identical" : "differs", clock.seconds())};
}

Verdict predictor_identities() {
  Rng rng(9600);
  std::size_t bad_identical = 0, bad_antisym = 0, bad_boundary = 0;
  auto features = [&] {
    pref::Features f(pref::kSegmentLength, std::vector<double>(pref::kFeatureDim));
    for (auto& row : f)
      for (double& v : row) v = rng.normal();
    return f;
  };
  for (int k = 0; k < 20; ++k) {
    Rng init(9700 + k);
    const auto net = pref::RewardNet::make(init);
    const auto f = features(), g = features();
    bad_identical += pref::preference_predictor(f, f, net) != 0.5;
    bad_antisym += pref::preference_predictor(f, g, net) + pref::preference_predictor(g, f, net) != 1.0;
  }
  for (int k = 0; k < 1000; ++k) {
    const double r0 = rng.uniform(-30, 30), r1 = rng.uniform(-30, 30);
    bad_antisym += pref::preference_probability(r0, r1) != 1.0 - pref::preference_probability(r1, r0);
  }
  // returns whose predicted probabilities differ by exactly the margin
  const double gap = 2.0 * std::atanh(0.1);
  for (int k = 0; k < 100; ++k) {
    const double r0 = rng.uniform(-5, 5);
    const double p1 = pref::preference_probability(r0, r0 + gap);
    bad_boundary += pref::predicted_label(1.0 - p1, p1) != pref::Label::tie;
    bad_boundary += pref::predicted_label(p1, 1.0 - p1) != pref::Label::tie;
  }
  bad_boundary += pref::predicted_label(0.55, 0.45) != pref::Label::tie;
  bad_boundary += pref::predicted_label(0.45, 0.55) != pref::Label::tie;
  bad_boundary += pref::predicted_label(0.5501, 0.4499) != pref::Label::left;
  bad_boundary += pref::predicted_label(0.4499, 0.5501) != pref::Label::right;
  bad_boundary += pref::omega(pref::Label::tie) != std::pair{0.5, 0.5};
  return {bad_identical + bad_antisym + bad_boundary == 0,
          fmt::format("violations: identical {}, antisymmetry {}, margin boundary {}", bad_identical, bad_antisym,
                      bad_boundary)};
}

// ---- policy learning ----

struct DeskRun {
  double success = 0.0;
  double seconds = 0.0;
  std::size_t episodes = 0;
};

DeskRun desk_run(const fs::path& config_path) {
  const auto cfg = config::load(config_path);
  const auto dir = fs::temp_directory_path() / ("navistar_accept_" + config_path.stem().string());
  fs::remove_all(dir);
  Stopwatch clock;
  rl::Trainer trainer(cfg.train, cfg.sim, dir);
  trainer.run();
  const auto stats = rl::evaluate_policy(trainer.agent().actor, cfg.sim, cfg.eval.first_seed, 100, cfg.train.sac.gamma);
  fs::remove_all(dir);
  return {stats.success_rate, clock.seconds(), cfg.train.episodes};
}

Verdict desk_scale_sac(const fs::path& configs) {
  const auto empty = desk_run(configs / "desk_0h.json");
  const auto crowd = desk_run(configs / "desk_2h.json");
  const bool ok0 = empty.episodes <= 300 && empty.success >= 0.90 && empty.seconds < 1800.0;
  const bool ok2 = crowd.episodes <= 2000 && crowd.success >= 0.70 && crowd.seconds < 1800.0;
  return {ok0 && ok2,
          fmt::format("0 humans: {}/100 after {} episodes in {:.0f} s; 2 humans: {}/100 after {} episodes in {:.0f} s",
                      std::lround(100 * empty.success), empty.episodes, empty.seconds, std::lround(100 * crowd.success),
                      crowd.episodes, crowd.seconds)};
}

// ---- social score ----

eval::EpisodeResult synthetic_episode(Rng& rng, std::uint64_t seed) {
  eval::EpisodeResult e;
  e.seed = seed;
  const double u = rng.uniform();
  e.outcome = u < 0.6 ? sim::Outcome::success : (u < 0.8 ? sim::Outcome::collision : sim::Outcome::timeout);
  const std::size_t steps = 2 + rng.index(100);
  e.nav_time = steps * e.dt;
  const double base = rng.uniform(-0.1, 1.5);
  for (std::size_t k = 0; k <= steps; ++k) {
    e.clearance.push_back(base + rng.uniform(-0.3, 0.3));
    if (k > 0 && e.clearance.back() < 0.45) ++e.discomfort_steps;
  }
  return e;
}

sim::Vec2 stand_still(const EnvWindow&, const sim::CrowdSim&) { return {}; }

Verdict social_score_golden() {
  const eval::ScoreParams params;  // v = 0.35, v' = 0.25
  std::vector<eval::EpisodeResult> perfect(25);
  for (std::size_t i = 0; i < perfect.size(); ++i) {
    perfect[i].seed = i;
    perfect[i].outcome = sim::Outcome::success;
    perfect[i].nav_time = 17.5;
    perfect[i].clearance.assign(71, 2.0);
  }
  const double perfect_score = eval::aggregate(perfect, params).f_sc;

  sim::SimConfig cfg;
  cfg.n_humans = 5;
  const auto still = eval::evaluate(stand_still, cfg, eval::seed_range(80000, 20), params).totals;

  Rng rng(9800);
  std::size_t violations = 0;
  for (int k = 0; k < 1000; ++k) {
    std::vector<eval::EpisodeResult> suite;
    const std::size_t n = 1 + rng.index(40);
    for (std::size_t i = 0; i < n; ++i) suite.push_back(synthetic_episode(rng, i));
    const auto a = eval::aggregate(suite, params);
    const double bump = rng.uniform(0.0, 0.5);
    violations += eval::social_score(std::min(1.0, a.f_time + bump), a.f_uc, a.ff, params.v, params.v_prime) < a.f_sc - 1e-12;
    violations += eval::social_score(a.f_time, std::min(1.0, a.f_uc + bump), a.ff, params.v, params.v_prime) < a.f_sc - 1e-12;
    violations += eval::social_score(a.f_time, a.f_uc, std::min(1.0, a.ff + bump), params.v, params.v_prime) > a.f_sc + 1e-12;
    violations += !(a.f_time >= 0.0 && a.f_time <= 1.0 && a.f_uc >= 0.0 && a.f_uc <= 1.0 && a.ff >= 0.0 && a.ff <= 1.0);
    violations += !(a.f_sc <= 100.0 && a.f_sc >= -100.0 * params.v_prime);
    // more clearance for one uncomfortable success cannot lower comfort
    for (auto& e : suite)
      if (!e.failed() && e.discomfort_steps > 0) {
        for (double& c : e.clearance) c += 0.2;
        violations += eval::aggregate(suite, params).f_uc < a.f_uc - 1e-12;
        break;
      }
  }
  const bool ok = perfect_score == 100.0 && still.ff == 1.0 && std::abs(still.f_sc + 25.0) < 1e-12 && violations == 0;
  return {ok, fmt::format("perfect {:.6g}, stand-still FF {:.6g} F_SC {:.6g}, {} monotonicity violations in 1000 suites",
                          perfect_score, still.ff, still.f_sc, violations)};
}

// ---- CLI ----

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_command(const std::string& cmd) {
  const int status = std::system((cmd + " > /dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Verdict end_to_end_determinism(const std::string& cli) {
  const auto dir = fs::temp_directory_path() / "navistar_accept_repro";
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto j = config::to_json(config::RunConfig{});
  j["seed"] = 2024;
  j["sim"]["n_humans"] = 2;
  j["sim"]["time_limit"] = 10.0;
  j["star"]["model_dim"] = 8;
  j["star"]["heads"] = 2;
  j["star"]["ffn_hidden"] = 16;
  j["train"]["reward_mode"] = "learned";
  j["train"]["episodes"] = 8;
  j["train"]["batch"] = 16;
  j["train"]["update_every"] = 4;
  j["train"]["eval_every"] = 2;
  j["train"]["eval_cases"] = 2;
  j["train"]["critic_hidden"] = 16;
  j["feedback"]["every"] = 2;
  j["feedback"]["sessions"] = 3;
  j["feedback"]["pairs_per_session"] = 6;
  j["feedback"]["reward_steps"] = 5;
  j["feedback"]["reward_batch"] = 8;
  std::ofstream(dir / "config.json") << j.dump(2);
  int codes = 0;
  for (const char* run : {"a", "b"})
    codes += run_command(cli + " train --config " + (dir / "config.json").string() + " --out " + (dir / run).string());
  const std::string a = slurp(dir / "a" / "metrics.jsonl"), b = slurp(dir / "b" / "metrics.jsonl");
  const auto lines = std::count(a.begin(), a.end(), '\n');
  // the oracle must actually have labelled something by the last line
  const bool labels = !a.empty() && a.substr(a.rfind('{', a.size() - 2)).find("\"labels\":0}") == std::string::npos;
  fs::remove_all(dir);
  return {codes == 0 && lines == 4 && labels && a == b,
          fmt::format("exit codes {}, {} metrics lines, logs {}", codes, lines, a == b ? "identical" : "differ")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"navistar acceptance suite"};
  std::vector<std::string> only, allow_fail;
  std::string configs = NAVISTAR_CONFIGS, cli = NAVISTAR_CLI, report_path;
  app.add_option("--only", only, "run just these criteria");
  app.add_option("--allow-fail", allow_fail, "report these criteria but keep the exit status clean");
  app.add_option("--configs", configs, "directory holding desk_0h.json and desk_2h.json");
  app.add_option("--cli", cli, "navistar executable");
  app.add_option("--report", report_path, "also write the verdict lines to this file");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"gradient-suite", gradient_suite},
      {"attention-normalization", attention_rows},
      {"permutation-invariance", permutation_invariance},
      {"chebyshev-oracle", chebyshev_oracle},
      {"orca-safety", orca_safety},
      {"preference-recovery", preference_recovery},
      {"predictor-identities", predictor_identities},
      {"desk-scale-sac", [&] { return desk_scale_sac(configs); }},
      {"social-score-golden", social_score_golden},
      {"end-to-end-determinism", [&] { return end_to_end_determinism(cli); }},
  };
  const std::set<std::string> selected(only.begin(), only.end()), allowed(allow_fail.begin(), allow_fail.end());
  std::ofstream report;
  if (!report_path.empty()) report.open(report_path, std::ios::trunc);
  auto emit = [&](const std::string& line) {
    fmt::print("{}", line);
    std::fflush(stdout);
    if (report) report << line << std::flush;
  };
  int hard_failures = 0, failures = 0;
  for (const auto& [name, check] : criteria) {
    if (!selected.empty() && !selected.count(name)) continue;
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    emit(fmt::format("{} {:<24} {}\n", v.pass ? "PASS" : "FAIL", name, v.detail));
    if (!v.pass) {
      ++failures;
      if (!allowed.count(name)) ++hard_failures;
    }
  }
  emit(fmt::format("{} failed, {} allowed\n", failures, failures - hard_failures));
  return hard_failures ? 1 : 0;
}
