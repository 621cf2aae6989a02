#pragma once

#include <chrono>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "navistar/pref/label_store.hpp"
#include "navistar/pref/preference.hpp"

namespace navistar::service {

using Clock = std::function<double()>;  // seconds

inline Clock wall_clock() {
  return [] {
    return std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();
  };
}

enum class TicketStatus { pending, labeled, expired };

inline const char* status_name(TicketStatus s) {
  switch (s) {
    case TicketStatus::pending: return "pending";
    case TicketStatus::labeled: return "labeled";
    case TicketStatus::expired: return "expired";
  }
  return "?";
}

struct PairTicket {
  std::string id;
  std::string seg0_id;
  std::string seg1_id;
  TicketStatus status = TicketStatus::pending;
  double created = 0.0;
  std::optional<double> leased_at;  // first fetch; the lease runs from here
};

struct QueueCounts {
  std::size_t created = 0, pending = 0, labeled = 0, expired = 0;
};

enum class LabelResult { ok, unknown_ticket, already_labeled, expired, storage_failed };

// Pair queue with leases. A fetched ticket stays the answer to every fetch
// until it is labeled or its lease runs out; an expired ticket is retired and
// its pair re-enters the back of the queue under a fresh ticket.
class TicketQueue {
 public:
  explicit TicketQueue(pref::LabelStore& labels, Clock clock = wall_clock(), double lease_seconds = 120.0)
      : labels_(labels), clock_(std::move(clock)), lease_(lease_seconds) {
    if (!(lease_seconds > 0.0)) throw std::invalid_argument("lease seconds must be positive");
    // tickets labeled before a restart still answer 409
    for (const auto& r : labels_.records())
      if (!r.ticket_id.empty()) labeled_before_.insert(r.ticket_id);
  }

  // Returns the id of the pending ticket for this pair, creating one if needed.
  std::string enqueue(const std::string& seg0, const std::string& seg1) {
    std::lock_guard lock(mutex_);
    sweep();
    for (const auto& id : order_) {
      const auto& t = tickets_.at(id);
      if (t.seg0_id == seg0 && t.seg1_id == seg1) return id;
    }
    return create(seg0, seg1);
  }

  std::optional<PairTicket> next() {
    std::lock_guard lock(mutex_);
    sweep();
    if (order_.empty()) return std::nullopt;
    auto& t = tickets_.at(order_.front());
    if (!t.leased_at) t.leased_at = clock_();
    return t;
  }

  std::optional<PairTicket> find(const std::string& id) const {
    std::lock_guard lock(mutex_);
    auto it = tickets_.find(id);
    if (it == tickets_.end()) return std::nullopt;
    return it->second;
  }

  // Write-ahead: the record is appended before the ticket is marked, so a
  // storage failure leaves the ticket pending and nothing half-written.
  LabelResult label(const std::string& id, pref::Label label, const std::string& labeler = "human") {
    std::lock_guard lock(mutex_);
    sweep();
    auto it = tickets_.find(id);
    if (it == tickets_.end()) return labeled_before_.count(id) ? LabelResult::already_labeled : LabelResult::unknown_ticket;
    auto& t = it->second;
    if (t.status == TicketStatus::labeled) return LabelResult::already_labeled;
    if (t.status == TicketStatus::expired) return LabelResult::expired;
    pref::PreferenceRecord r{t.seg0_id, t.seg1_id, label, labeler, clock_(), t.id};
    try {
      labels_.append(r);
    } catch (const std::exception&) {
      return LabelResult::storage_failed;
    }
    t.status = TicketStatus::labeled;
    std::erase(order_, id);
    ++counts_.labeled;
    --counts_.pending;
    return LabelResult::ok;
  }

  QueueCounts counts() {
    std::lock_guard lock(mutex_);
    sweep();
    return counts_;
  }

  double lease_seconds() const { return lease_; }

 private:
  std::string create(const std::string& seg0, const std::string& seg1) {
    std::string id;
    do {
      id = "t" + std::to_string(++serial_);
    } while (labeled_before_.count(id));
    tickets_[id] = PairTicket{id, seg0, seg1, TicketStatus::pending, clock_(), std::nullopt};
    order_.push_back(id);
    ++counts_.created;
    ++counts_.pending;
    return id;
  }

  void sweep() {
    const double now = clock_();
    std::vector<std::pair<std::string, std::string>> again;
    for (auto it = order_.begin(); it != order_.end();) {
      auto& t = tickets_.at(*it);
      if (t.leased_at && now - *t.leased_at >= lease_) {
        t.status = TicketStatus::expired;
        ++counts_.expired;
        --counts_.pending;
        again.emplace_back(t.seg0_id, t.seg1_id);
        it = order_.erase(it);
      } else {
        ++it;
      }
    }
    for (const auto& [a, b] : again) create(a, b);
  }

  pref::LabelStore& labels_;
  Clock clock_;
  double lease_;
  mutable std::mutex mutex_;
  std::map<std::string, PairTicket> tickets_;
  std::deque<std::string> order_;  // pending, oldest first
  std::set<std::string> labeled_before_;
  QueueCounts counts_;
  std::size_t serial_ = 0;
};

}  // namespace navistar::service
