#pragma once

#include <filesystem>
#include <fstream>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "navistar/pref/preference.hpp"

namespace navistar::pref {

struct PreferenceRecord {
  std::string seg0_id;
  std::string seg1_id;
  Label label = Label::tie;
  std::string labeler = "oracle";  // human | oracle
  double timestamp = 0.0;          // seconds, from the injected clock
  std::string ticket_id;           // empty when the label did not come through the service

  bool operator==(const PreferenceRecord&) const = default;
};

inline nlohmann::ordered_json record_to_json(const PreferenceRecord& r) {
  const auto [w0, w1] = omega(r.label);
  nlohmann::ordered_json j;
  j["seg0_id"] = r.seg0_id;
  j["seg1_id"] = r.seg1_id;
  j["omega"] = {w0, w1};
  j["labeler"] = r.labeler;
  j["timestamp"] = r.timestamp;
  if (!r.ticket_id.empty()) j["ticket_id"] = r.ticket_id;
  return j;
}

inline PreferenceRecord record_from_json(const nlohmann::ordered_json& j) {
  PreferenceRecord r;
  r.seg0_id = j.at("seg0_id");
  r.seg1_id = j.at("seg1_id");
  const auto& w = j.at("omega");
  if (!w.is_array() || w.size() != 2) throw std::invalid_argument("omega must be a pair");
  r.label = label_from_omega(w[0].get<double>(), w[1].get<double>());
  r.labeler = j.at("labeler");
  if (r.labeler != "human" && r.labeler != "oracle") throw std::invalid_argument("labeler must be human or oracle");
  r.timestamp = j.at("timestamp");
  r.ticket_id = j.value("ticket_id", std::string{});
  return r;
}

// Append-only JSONL file of preference records. A record is visible in memory
// only after its line has been written and flushed.
class LabelStore {
 public:
  explicit LabelStore(std::filesystem::path path) : path_(std::move(path)) {
    if (!std::filesystem::is_regular_file(path_)) return;
    std::ifstream in(path_, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read label store " + path_.string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      try {
        records_.push_back(record_from_json(nlohmann::ordered_json::parse(line)));
      } catch (const std::exception& e) {
        throw std::runtime_error("label store " + path_.string() + " line " + std::to_string(line_no) + ": " + e.what());
      }
    }
  }

  void append(const PreferenceRecord& r) {
    const std::string line = record_to_json(r).dump() + "\n";
    std::lock_guard lock(mutex_);
    std::ofstream out(path_, std::ios::binary | std::ios::app);
    if (!out) throw std::runtime_error("cannot open label store " + path_.string());
    out.write(line.data(), static_cast<std::streamsize>(line.size()));
    out.flush();
    if (!out) throw std::runtime_error("failed writing label store " + path_.string());
    records_.push_back(r);
  }

  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return records_.size();
  }

  std::vector<PreferenceRecord> records() const {
    std::lock_guard lock(mutex_);
    return records_;
  }

  // Records from index `from` on; lets a consumer take each record once.
  std::vector<PreferenceRecord> records_since(std::size_t from) const {
    std::lock_guard lock(mutex_);
    if (from >= records_.size()) return {};
    return {records_.begin() + static_cast<std::ptrdiff_t>(from), records_.end()};
  }

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  mutable std::mutex mutex_;
  std::vector<PreferenceRecord> records_;
};

}  // namespace navistar::pref
