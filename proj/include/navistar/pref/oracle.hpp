#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "navistar/pref/preference.hpp"
#include "navistar/pref/segment.hpp"

namespace navistar::pref {

using SegmentScorer = std::function<double(const TrajectorySegment&)>;

// Handcrafted reward summed over the segment minus the number of steps that
// ended inside the discomfort distance.
inline double default_segment_score(const TrajectorySegment& seg) {
  double score = 0.0;
  for (const auto& s : seg.steps) score += s.reward - (s.events.discomfort ? 1.0 : 0.0);
  return score;
}

template <class Scorer, class Range>
double score_range(const Range& segments, Scorer&& scorer) {
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& s : segments) {
    const double v = scorer(s);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return std::isfinite(lo) ? hi - lo : 0.0;
}

// Scripted supervisor: prefers the higher-scoring segment unless the scores
// are within margin, which is a tie.
class OracleLabeler {
 public:
  OracleLabeler(SegmentScorer scorer, double range_estimate)
      : scorer_(std::move(scorer)), margin_(kTieMargin * std::abs(range_estimate)) {
    if (!scorer_) throw std::invalid_argument("oracle needs a scorer");
    if (!std::isfinite(range_estimate)) throw std::invalid_argument("oracle range estimate must be finite");
  }

  double margin() const { return margin_; }

  static Label compare(double score0, double score1, double margin) {
    const double diff = score1 - score0;
    if (std::abs(diff) <= margin) return Label::tie;
    return diff > 0.0 ? Label::right : Label::left;
  }

  Label operator()(const TrajectorySegment& seg0, const TrajectorySegment& seg1) const {
    return compare(scorer_(seg0), scorer_(seg1), margin_);
  }

 private:
  SegmentScorer scorer_;
  double margin_;
};

}  // namespace navistar::pref
