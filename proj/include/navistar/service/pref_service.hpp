#pragma once

#include <chrono>
#include <functional>
#include <optional>
#include <string>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "navistar/autodiff/tensor.hpp"
#include "navistar/pref/segment.hpp"
#include "navistar/rl/trainer.hpp"
#include "navistar/service/tickets.hpp"
#include "navistar/sim/log_window.hpp"
#include "navistar/star/export.hpp"
#include "navistar/star/network.hpp"

namespace navistar::service {

using ordered_json = nlohmann::ordered_json;

// Attention payload for a segment, or nullopt when there is none to show.
using AttentionProvider = std::function<std::optional<ordered_json>(const pref::TrajectorySegment&)>;

// Runs the actor on the window at the segment's last step.
inline AttentionProvider star_attention(const star::StarParams* actor) {
  return [actor](const pref::TrajectorySegment& seg) -> std::optional<ordered_json> {
    if (seg.steps.empty()) return std::nullopt;
    const EnvWindow w = sim::window_from_records(seg.steps, seg.steps.size() - 1, actor->config.window);
    ad::NoGradGuard guard;
    ordered_json j = star::attention_to_json(star::forward(w, *actor).attention);
    j["segment_id"] = seg.id;
    j["segment_step"] = seg.steps.size() - 1;
    return j;
  };
}

inline ordered_json ticket_to_json(const PairTicket& t) {
  ordered_json j;
  j["ticket_id"] = t.id;
  j["status"] = status_name(t.status);
  j["seg0_id"] = t.seg0_id;
  j["seg1_id"] = t.seg1_id;
  j["created"] = t.created;
  j["leased_at"] = t.leased_at ? ordered_json(*t.leased_at) : ordered_json(nullptr);
  return j;
}

class PrefService {
 public:
  PrefService(const pref::SegmentStore& segments, TicketQueue& queue, AttentionProvider attention = {})
      : segments_(segments), queue_(queue), attention_(std::move(attention)) {}

  void routes(httplib::Server& srv) {
    srv.Get("/api/health", [this](const httplib::Request&, httplib::Response& res) {
      const auto c = queue_.counts();
      ordered_json j{{"status", "ok"},    {"segments", segments_.size()}, {"created", c.created},
                     {"pending", c.pending}, {"labeled", c.labeled},        {"expired", c.expired}};
      send(res, 200, j);
    });

    srv.Get("/api/pairs/next", [this](const httplib::Request&, httplib::Response& res) {
      const auto t = queue_.next();
      if (!t) {
        res.status = 204;
        return;
      }
      ordered_json j = ticket_to_json(*t);
      j["lease_seconds"] = queue_.lease_seconds();
      ordered_json segs = ordered_json::array(), att = ordered_json::array();
      for (const auto& id : {t->seg0_id, t->seg1_id}) {
        if (!segments_.contains(id)) {
          send(res, 500, error_json("ticket refers to missing segment " + id));
          return;
        }
        const auto seg = segments_.get(id);
        segs.push_back(pref::segment_to_json(seg, false));
        if (attention_) {
          const auto a = attention_(seg);
          att.push_back(a ? *a : ordered_json(nullptr));
        }
      }
      j["segments"] = segs;
      if (attention_) j["attention"] = att;
      send(res, 200, j);
    });

    srv.Post("/api/labels", [this](const httplib::Request& req, httplib::Response& res) {
      std::string ticket;
      pref::Label label;
      try {
        const auto body = ordered_json::parse(req.body);
        ticket = body.at("ticket_id").get<std::string>();
        const auto& w = body.at("omega");
        if (!w.is_array() || w.size() != 2 || !w[0].is_number() || !w[1].is_number())
          throw std::invalid_argument("omega must be a pair of numbers");
        label = pref::label_from_omega(w[0].get<double>(), w[1].get<double>());
      } catch (const std::exception& e) {
        send(res, 422, error_json(std::string("bad label: ") + e.what()));
        return;
      }
      switch (queue_.label(ticket, label)) {
        case LabelResult::ok: send(res, 200, {{"ticket_id", ticket}, {"status", "labeled"}}); return;
        case LabelResult::unknown_ticket: send(res, 404, error_json("unknown ticket " + ticket)); return;
        case LabelResult::already_labeled: send(res, 409, error_json("ticket " + ticket + " is already labeled")); return;
        case LabelResult::expired: send(res, 409, error_json("ticket " + ticket + " expired")); return;
        case LabelResult::storage_failed: send(res, 500, error_json("label store write failed")); return;
      }
    });

    srv.Get(R"(/api/segments/(.+))", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      if (!segments_.contains(id)) {
        send(res, 404, error_json("unknown segment " + id));
        return;
      }
      send(res, 200, pref::segment_to_json(segments_.get(id), false));
    });

    srv.Get(R"(/api/attention/(.+))", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      if (!segments_.contains(id)) {
        send(res, 404, error_json("unknown segment " + id));
        return;
      }
      const auto a = attention_ ? attention_(segments_.get(id)) : std::nullopt;
      if (!a) {
        send(res, 404, error_json("no attention for segment " + id));
        return;
      }
      send(res, 200, *a);
    });
  }

 private:
  static ordered_json error_json(const std::string& msg) { return {{"error", msg}}; }

  static void send(httplib::Response& res, int status, const ordered_json& j) {
    res.status = status;
    res.set_content(j.dump(), "application/json");
  }

  const pref::SegmentStore& segments_;
  TicketQueue& queue_;
  AttentionProvider attention_;
};

// Owns an httplib server on a background thread.
class ServiceHost {
 public:
  ServiceHost(PrefService& service, const std::string& host = "127.0.0.1", int port = 0) {
    service.routes(server_);
    port_ = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (port_ < 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~ServiceHost() { stop(); }
  ServiceHost(const ServiceHost&) = delete;
  ServiceHost& operator=(const ServiceHost&) = delete;

  int port() const { return port_; }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

 private:
  httplib::Server server_;
  int port_ = -1;
  std::thread thread_;
};

// Feedback through the service: offered pairs become tickets, collected
// records are the label-store lines not handed out before.
class ServiceFeedback : public rl::FeedbackSource {
 public:
  ServiceFeedback(pref::SegmentStore& segments, TicketQueue& queue, pref::LabelStore& labels,
                  double wait_seconds = 0.0)
      : segments_(segments), queue_(queue), labels_(labels), wait_(wait_seconds), consumed_(labels.size()) {}

  void offer(const std::vector<std::pair<const pref::TrajectorySegment*, const pref::TrajectorySegment*>>& pairs) override {
    for (const auto& [a, b] : pairs) {
      for (const auto* s : {a, b})
        if (!segments_.contains(s->id)) segments_.add(*s);
      queue_.enqueue(a->id, b->id);
    }
  }

  // Waits up to wait_seconds for the pending queue to drain, then takes
  // whatever was labeled since the last call.
  std::vector<pref::PreferenceRecord> collect() override {
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(wait_);
    while (queue_.counts().pending > 0 && std::chrono::steady_clock::now() < deadline)
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
    auto out = labels_.records_since(consumed_);
    consumed_ += out.size();
    return out;
  }

  std::size_t consumed() const { return consumed_; }

 private:
  pref::SegmentStore& segments_;
  TicketQueue& queue_;
  pref::LabelStore& labels_;
  double wait_;
  std::size_t consumed_;
};

}  // namespace navistar::service
