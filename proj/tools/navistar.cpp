#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "navistar/config/run_config.hpp"
#include "navistar/eval/social.hpp"
#include "navistar/rl/trainer.hpp"
#include "navistar/service/pref_service.hpp"
#include "navistar/sim/crowd_sim.hpp"
#include "navistar/sim/log_window.hpp"
#include "navistar/sim/orca.hpp"
#include "navistar/star/export.hpp"

namespace fs = std::filesystem;
using namespace navistar;

namespace {

enum Exit { kOk = 0, kBadConfig = 1, kMissing = 2, kAborted = 3 };

class MissingArtifact : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> humans;
  std::optional<double> fov;
  std::optional<std::string> reward_mode;
  std::optional<int> port;
  std::optional<std::size_t> cases;
};

config::RunConfig load_config(const Overrides& o) {
  config::RunConfig c;
  if (!o.config.empty()) {
    if (!fs::exists(o.config)) throw MissingArtifact("config file not found: " + o.config);
    c = config::load(o.config);
  }
  auto j = config::to_json(c);
  if (o.seed) j["seed"] = *o.seed;
  if (o.humans) j["sim"]["n_humans"] = *o.humans;
  if (o.fov) j["sim"]["fov_deg"] = *o.fov;
  if (o.reward_mode) j["train"]["reward_mode"] = *o.reward_mode;
  if (o.port) j["service"]["port"] = *o.port;
  if (o.cases) j["eval"]["cases"] = *o.cases;
  return config::from_json(j);
}

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::is_regular_file(p)) throw MissingArtifact(what + " not found: " + p.string());
}

std::atomic<bool> g_stop{false};
void on_signal(int) { g_stop = true; }

// --- subcommands -----------------------------------------------------------

int cmd_scaffold(const Overrides& o, const std::string& out) {
  const auto c = load_config(o);
  if (out.empty() || out == "-") {
    std::cout << config::to_json(c).dump(2) << '\n';
  } else {
    config::save(out, c);
    spdlog::info("wrote {}", out);
  }
  return kOk;
}

int cmd_train(const Overrides& o, const std::string& out, bool resume) {
  const auto c = load_config(o);
  const fs::path run_dir = out.empty() ? fs::path("run") : fs::path(out);
  fs::create_directories(run_dir);
  config::save(run_dir / "config.json", c);

  rl::Trainer trainer(c.train, c.sim, run_dir);
  trainer.set_progress([](const nlohmann::ordered_json& j) {
    spdlog::info("episode {} success {:.2f} collision {:.2f} timeout {:.2f} return {:.3f}", j.at("episode").get<std::size_t>(),
                 j.at("success_rate").get<double>(), j.at("collision_rate").get<double>(),
                 j.at("timeout_rate").get<double>(), j.at("mean_return").get<double>());
  });

  // Human labeling: training hosts the service and waits for labels each session.
  std::unique_ptr<pref::LabelStore> labels;
  std::unique_ptr<pref::SegmentStore> segments;
  std::unique_ptr<service::TicketQueue> queue;
  std::unique_ptr<service::PrefService> svc;
  std::unique_ptr<service::ServiceHost> host;
  std::unique_ptr<service::ServiceFeedback> feedback;
  const bool human = c.train.reward_mode == rl::RewardMode::learned && c.train.feedback.labeler == "service";
  if (human) {
    labels = std::make_unique<pref::LabelStore>(run_dir / "labels.jsonl");
    segments = std::make_unique<pref::SegmentStore>();
    queue = std::make_unique<service::TicketQueue>(*labels, service::wall_clock(), c.service.lease_seconds);
    svc = std::make_unique<service::PrefService>(*segments, *queue, service::star_attention(&trainer.agent().actor));
    host = std::make_unique<service::ServiceHost>(*svc, c.service.host, c.service.port);
    feedback = std::make_unique<service::ServiceFeedback>(*segments, *queue, *labels, c.service.wait_seconds);
    trainer.set_feedback_source(feedback.get());
    spdlog::info("label service on http://{}:{}", c.service.host, host->port());
  }

  if (resume) {
    if (!fs::exists(run_dir / "state.json")) throw MissingArtifact("nothing to resume in " + run_dir.string());
    trainer.resume();
    spdlog::info("resumed at episode {}", trainer.state().episode);
  }
  trainer.run();
  if (segments) segments->save(run_dir / "segments.jsonl");
  spdlog::info("done: {} episodes, {} updates, checkpoint {}", trainer.state().episode, trainer.state().updates,
               (run_dir / trainer.state().checkpoint).string());
  return kOk;
}

eval::Policy make_policy(const std::string& name, const std::string& checkpoint, const config::RunConfig& c,
                         std::shared_ptr<star::StarParams>& actor) {
  if (!checkpoint.empty()) {
    require_file(checkpoint, "checkpoint");
    Rng rng(0);
    actor = std::make_shared<star::StarParams>(star::StarParams::make(c.train.star, rng));
    rl::load_actor(checkpoint, *actor);
    return [actor](const EnvWindow& w, const sim::CrowdSim& env) {
      return rl::mean_action(w, *actor, env.state().robot.v_pref);
    };
  }
  if (name == "orca") return [](const EnvWindow&, const sim::CrowdSim& env) { return sim::orca_robot_action(env); };
  if (name == "stand-still") return [](const EnvWindow&, const sim::CrowdSim&) { return sim::Vec2{0.0, 0.0}; };
  if (name == "straight")
    return [](const EnvWindow&, const sim::CrowdSim& env) {
      const auto& r = env.state().robot;
      const sim::Vec2 d = r.goal() - r.position();
      const double n = sim::abs(d);
      return n < 1e-9 ? sim::Vec2{0.0, 0.0} : d * (std::min(r.v_pref, n / env.config().dt) / n);
    };
  throw config::ConfigError("--policy must be orca, stand-still or straight (or pass --checkpoint), got '" + name + "'");
}

int cmd_evaluate(const Overrides& o, const std::string& checkpoint, const std::string& policy_name, const std::string& out) {
  const auto c = load_config(o);
  std::shared_ptr<star::StarParams> actor;
  const auto policy = make_policy(policy_name, checkpoint, c, actor);
  const fs::path dir = out.empty() ? fs::path("eval") : fs::path(out);
  fs::create_directories(dir / "logs");
  std::size_t k = 0;
  const auto report = eval::evaluate(policy, c.sim, eval::seed_range(c.eval.first_seed, c.eval.cases), c.eval.score,
                                     [&](const sim::EpisodeLog& log) {
                                       sim::write_episode_log(dir / "logs" / fmt::format("episode_{:04}.jsonl", k++), log);
                                     });
  std::ofstream(dir / "report.txt") << eval::report_text(report);
  std::ofstream(dir / "report.json") << eval::report_to_json(report).dump(2) << '\n';
  std::cout << eval::score_row(report) << std::endl;
  return kOk;
}

// Static trajectory plot: one polyline per agent, robot in red.
void write_svg(const fs::path& path, const std::vector<sim::StepRecord>& steps) {
  double lo_x = 1e9, hi_x = -1e9, lo_y = 1e9, hi_y = -1e9;
  auto grow = [&](const sim::AgentState& a) {
    lo_x = std::min(lo_x, a.px - a.radius);
    hi_x = std::max(hi_x, a.px + a.radius);
    lo_y = std::min(lo_y, a.py - a.radius);
    hi_y = std::max(hi_y, a.py + a.radius);
  };
  for (const auto& s : steps) {
    grow(s.state.robot);
    for (const auto& h : s.state.humans) grow(h);
  }
  const double scale = 500.0 / std::max({hi_x - lo_x, hi_y - lo_y, 1.0});
  auto X = [&](double x) { return (x - lo_x) * scale + 10.0; };
  auto Y = [&](double y) { return (hi_y - y) * scale + 10.0; };
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << fmt::format("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0f}\" height=\"{:.0f}\">\n",
                     X(hi_x) + 10.0, Y(lo_y) + 10.0);
  const std::size_t agents = steps.empty() ? 0 : 1 + steps.front().state.humans.size();
  for (std::size_t i = 0; i < agents; ++i) {
    out << "<polyline fill=\"none\" stroke=\"" << (i == 0 ? "red" : "steelblue") << "\" points=\"";
    for (const auto& s : steps) {
      const auto& a = i == 0 ? s.state.robot : s.state.humans[i - 1];
      out << fmt::format("{:.1f},{:.1f} ", X(a.px), Y(a.py));
    }
    out << "\"/>\n";
    const auto& last = i == 0 ? steps.back().state.robot : steps.back().state.humans[i - 1];
    out << fmt::format("<circle cx=\"{:.1f}\" cy=\"{:.1f}\" r=\"{:.1f}\" fill=\"{}\" opacity=\"0.5\"/>\n", X(last.px),
                       Y(last.py), last.radius * scale, i == 0 ? "red" : "steelblue");
  }
  out << "</svg>\n";
}

int cmd_replay(const std::string& log_path, const std::string& segment_id, const std::string& segments_path,
               const std::string& out) {
  std::vector<sim::StepRecord> steps;
  std::string outcome;
  if (!segment_id.empty()) {
    require_file(segments_path, "segment store");
    pref::SegmentStore store;
    store.load(segments_path);
    if (!store.contains(segment_id)) throw MissingArtifact("segment " + segment_id + " not in " + segments_path);
    steps = store.get(segment_id).steps;
    outcome = "segment";
  } else {
    if (log_path.empty()) throw config::ConfigError("replay needs --log or --segment");
    require_file(log_path, "episode log");
    const auto log = sim::read_episode_log(log_path);
    steps = log.steps;
    outcome = sim::outcome_name(log.outcome);
  }
  std::cout << "step\ttime\trobot_x\trobot_y\taction_x\taction_y\treward\tmin_clearance\tevents\n";
  for (const auto& s : steps) {
    std::string ev;
    if (s.events.collision) ev += "collision ";
    if (s.events.success) ev += "success ";
    if (s.events.timeout) ev += "timeout ";
    if (s.events.discomfort) ev += "discomfort ";
    std::cout << fmt::format("{}\t{:.2f}\t{:.3f}\t{:.3f}\t{:.3f}\t{:.3f}\t{:.4f}\t{:.3f}\t{}\n", s.step, s.time,
                             s.state.robot.px, s.state.robot.py, s.action.x, s.action.y, s.reward, s.events.min_clearance,
                             ev.empty() ? "-" : ev.substr(0, ev.size() - 1));
  }
  std::cout << "steps " << steps.size() << " outcome " << outcome << '\n';
  if (!out.empty() && !steps.empty()) write_svg(out, steps);
  return kOk;
}

int cmd_label_serve(const Overrides& o, const std::string& out, const std::string& checkpoint) {
  const auto c = load_config(o);
  const fs::path dir = out.empty() ? fs::path("run") : fs::path(out);
  require_file(dir / "segments.jsonl", "segment store");
  pref::SegmentStore segments;
  segments.load(dir / "segments.jsonl");
  pref::LabelStore labels(dir / "labels.jsonl");
  service::TicketQueue queue(labels, service::wall_clock(), c.service.lease_seconds);
  std::shared_ptr<star::StarParams> actor;
  if (!checkpoint.empty()) make_policy("", checkpoint, c, actor);

  // queue a session of uniformly sampled pairs
  const auto all = segments.snapshot();
  if (all.size() >= 2) {
    Rng rng(mix_seed(c.seed, 7));
    for (std::size_t k = 0; k < c.train.feedback.pairs_per_session; ++k) {
      const auto [a, b] = pref::sample_pair(all, pref::SampleStrategy::uniform, rng);
      queue.enqueue(all[a].id, all[b].id);
    }
  }
  service::PrefService svc(segments, queue, actor ? service::star_attention(actor.get()) : service::AttentionProvider{});
  service::ServiceHost host(svc, c.service.host, c.service.port);
  spdlog::info("serving {} segments, {} pending pairs on http://{}:{}", segments.size(), queue.counts().pending,
               c.service.host, host.port());
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(200));
  host.stop();
  spdlog::info("stopped; {} labels stored", labels.size());
  return kOk;
}

int cmd_export_attention(const Overrides& o, const std::string& checkpoint, const std::string& out, std::size_t step) {
  const auto c = load_config(o);
  if (checkpoint.empty()) throw config::ConfigError("export-attention needs --checkpoint");
  require_file(checkpoint, "checkpoint");
  Rng rng(0);
  auto actor = star::StarParams::make(c.train.star, rng);
  rl::load_actor(checkpoint, actor);
  // scenario: the seeded episode driven by the policy up to `step`
  sim::CrowdSim env(c.sim);
  EnvWindow obs = env.reset(c.eval.first_seed + c.seed);
  for (std::size_t k = 0; k < step && !env.done(); ++k)
    obs = env.step(rl::mean_action(obs, actor, env.state().robot.v_pref)).observation;
  ad::NoGradGuard guard;
  const auto output = star::forward(obs, actor);
  const fs::path path = out.empty() ? fs::path("attention.json") : fs::path(out);
  star::write_attention(path, output.attention);
  std::cout << fmt::format("wrote {} (T={}, h={}, N={})", path.string(), output.attention.steps, output.attention.heads,
                           output.attention.agents)
            << std::endl;
  return kOk;
}

void add_common(CLI::App* sub, Overrides& o) {
  sub->add_option("--config", o.config, "JSON run configuration (see `config scaffold`)");
  sub->add_option("--seed", o.seed, "Seed override");
  sub->add_option("--humans", o.humans, "Number of humans override");
  sub->add_option("--fov", o.fov, "Robot field of view in degrees (90, 180, 360)");
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* lvl = std::getenv("STAR_LOG_LEVEL")) spdlog::set_level(spdlog::level::from_str(lvl));
  spdlog::set_pattern("[%H:%M:%S] %v");

  CLI::App app{"navistar: crowd navigation with STAR policies and preference rewards"};
  app.require_subcommand(1);
  Overrides o;
  std::string out, checkpoint, policy = "orca", log_path, segment_id, segments_path;
  bool resume = false;
  std::size_t step = 0;

  auto* train = app.add_subcommand("train", "Train a policy; writes checkpoints and metrics.jsonl to --out");
  add_common(train, o);
  train->add_option("--reward-mode", o.reward_mode, "handcrafted or learned");
  train->add_option("--port", o.port, "Label service port when feedback.labeler is service");
  train->add_option("--out", out, "Run directory (default ./run)");
  train->add_flag("--resume", resume, "Continue from the latest checkpoint in --out");

  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a policy and write an evaluation report");
  add_common(evaluate, o);
  evaluate->add_option("--checkpoint", checkpoint, "Checkpoint holding the actor");
  evaluate->add_option("--policy", policy, "Scripted policy when no checkpoint is given: orca, stand-still, straight");
  evaluate->add_option("--cases", o.cases, "Number of test cases");
  evaluate->add_option("--out", out, "Report directory (default ./eval)");

  auto* replay = app.add_subcommand("replay", "Print an episode log or stored segment as a step table");
  replay->add_option("--log", log_path, "Episode log (JSONL)");
  replay->add_option("--segment", segment_id, "Segment id");
  replay->add_option("--segments", segments_path, "Segment store holding --segment");
  replay->add_option("--out", out, "Also write an SVG trajectory plot here");

  auto* serve = app.add_subcommand("label-serve", "Serve stored segment pairs for labeling over HTTP");
  add_common(serve, o);
  serve->add_option("--port", o.port, "Listening port");
  serve->add_option("--out", out, "Run directory with segments.jsonl; labels go to labels.jsonl");
  serve->add_option("--checkpoint", checkpoint, "Actor checkpoint for attention payloads");

  auto* exporter = app.add_subcommand("export-attention", "Run one forward pass and write the attention maps");
  add_common(exporter, o);
  exporter->add_option("--checkpoint", checkpoint, "Checkpoint holding the actor");
  exporter->add_option("--out", out, "Output file (default attention.json)");
  exporter->add_option("--step", step, "Policy steps to run before the forward pass");

  auto* cfg = app.add_subcommand("config", "Configuration helpers");
  cfg->require_subcommand(1);
  auto* scaffold = cfg->add_subcommand("scaffold", "Write the full default configuration");
  add_common(scaffold, o);
  scaffold->add_option("--reward-mode", o.reward_mode, "handcrafted or learned");
  scaffold->add_option("--port", o.port, "Label service port");
  scaffold->add_option("--cases", o.cases, "Evaluation cases");
  scaffold->add_option("--out", out, "Output file (stdout when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kBadConfig;
  }

  try {
    if (*train) return cmd_train(o, out, resume);
    if (*evaluate) return cmd_evaluate(o, checkpoint, policy, out);
    if (*replay) return cmd_replay(log_path, segment_id, segments_path, out);
    if (*serve) return cmd_label_serve(o, out, checkpoint);
    if (*exporter) return cmd_export_attention(o, checkpoint, out, step);
    if (*scaffold) return cmd_scaffold(o, out);
  } catch (const config::ConfigError& e) {
    spdlog::error("{}", e.what());
    return kBadConfig;
  } catch (const std::invalid_argument& e) {
    spdlog::error("invalid configuration: {}", e.what());
    return kBadConfig;
  } catch (const MissingArtifact& e) {
    spdlog::error("{}", e.what());
    return kMissing;
  } catch (const ad::CheckpointError& e) {
    spdlog::error("{}", e.what());
    return kMissing;
  } catch (const rl::TrainingAborted& e) {
    spdlog::error("training aborted: {}", e.what());
    return kAborted;
  } catch (const std::exception& e) {
    spdlog::error("aborted: {}", e.what());
    return kAborted;
  }
  return kOk;
}
