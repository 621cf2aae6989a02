#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "navistar/autodiff/ops.hpp"
#include "navistar/pref/reward_net.hpp"

namespace navistar::pref {

inline constexpr double kTieMargin = 0.1;
inline constexpr double kProbFloor = 1e-12;

// Which segment the supervisor preferred. left is omega = (1, 0), i.e. seg0.
enum class Label { left, right, tie };

inline std::pair<double, double> omega(Label l) {
  switch (l) {
    case Label::left: return {1.0, 0.0};
    case Label::right: return {0.0, 1.0};
    default: return {0.5, 0.5};
  }
}

inline Label label_from_omega(double w0, double w1) {
  if (w0 == 1.0 && w1 == 0.0) return Label::left;
  if (w0 == 0.0 && w1 == 1.0) return Label::right;
  if (w0 == 0.5 && w1 == 0.5) return Label::tie;
  throw std::invalid_argument("omega must be (1,0), (0,1) or (0.5,0.5)");
}

inline const char* label_name(Label l) {
  switch (l) {
    case Label::left: return "left";
    case Label::right: return "right";
    default: return "tie";
  }
}

inline Label parse_label(const std::string& s) {
  if (s == "left") return Label::left;
  if (s == "right") return Label::right;
  if (s == "tie") return Label::tie;
  throw std::invalid_argument("unknown label: " + s);
}

// P(seg1 preferred) from the two summed rewards. Equal to
// exp(r1) / (exp(r0) + exp(r1)) without overflow. Evaluating the logistic on
// the non-negative side only keeps swapping the arguments an exact complement.
inline double preference_probability(double return0, double return1) {
  const double d = return1 - return0;
  if (d >= 0.0) return 1.0 / (1.0 + std::exp(-d));
  return 1.0 - 1.0 / (1.0 + std::exp(d));
}

// Summed per-step rewards; lets callers inject arbitrary reward sequences.
inline double preference_probability(const std::vector<double>& rewards0, const std::vector<double>& rewards1) {
  if (rewards0.size() != rewards1.size()) throw std::invalid_argument("segments must have equal length");
  double r0 = 0.0, r1 = 0.0;
  for (double r : rewards0) r0 += r;
  for (double r : rewards1) r1 += r;
  return preference_probability(r0, r1);
}

inline double preference_predictor(const Features& seg0, const Features& seg1, const RewardNet& net) {
  if (seg0.size() != seg1.size()) throw std::invalid_argument("segments must have equal length");
  ad::NoGradGuard guard;
  const ad::Tensor r = segment_returns(net, {&seg0, &seg1});
  return preference_probability(r[0], r[1]);
}

inline double preference_predictor(const TrajectorySegment& seg0, const TrajectorySegment& seg1, const RewardNet& net) {
  return preference_predictor(seg0.features, seg1.features, net);
}

// The margin case wins where the three cases overlap.
inline Label predicted_label(double p0, double p1) {
  if (!(std::abs(p0 + p1 - 1.0) <= 1e-9)) throw std::invalid_argument("P0 + P1 must equal 1");
  if (std::abs(p0 - p1) <= kTieMargin + 1e-12) return Label::tie;
  return p0 > 0.5 ? Label::left : Label::right;
}

struct PreferenceExample {
  const Features* seg0;
  const Features* seg1;
  Label label;
};

// Mean cross-entropy between omega and the predictor. A tie contributes
// 1/2 log P0 + 1/2 log P1.
inline ad::Tensor pref_loss(const std::vector<PreferenceExample>& batch, const RewardNet& net) {
  if (batch.empty()) throw std::invalid_argument("pref_loss: empty batch");
  std::vector<const Features*> segs;
  std::vector<double> w0, w1;
  for (const auto& ex : batch) {
    if (ex.seg0->size() != ex.seg1->size()) throw std::invalid_argument("segments must have equal length");
    segs.push_back(ex.seg0);
    segs.push_back(ex.seg1);
    const auto [a, b] = omega(ex.label);
    w0.push_back(a);
    w1.push_back(b);
  }
  const std::size_t n = batch.size();
  const ad::Tensor returns = ad::reshape(segment_returns(net, segs), {n, 2});
  const ad::Tensor diff = ad::sub(ad::slice(returns, 1, 1, 2), ad::slice(returns, 1, 0, 1));
  const ad::Tensor p1 = ad::sigmoid(diff);
  const ad::Tensor p0 = ad::add_scalar(ad::neg(p1), 1.0);
  const ad::Tensor log_p0 = ad::log(ad::clamp(p0, kProbFloor, 2.0));
  const ad::Tensor log_p1 = ad::log(ad::clamp(p1, kProbFloor, 2.0));
  const ad::Tensor terms = ad::add(ad::mul(ad::Tensor::from({n, 1}, w0), log_p0), ad::mul(ad::Tensor::from({n, 1}, w1), log_p1));
  return ad::neg(ad::mean(terms));
}

// Fraction of pairs whose learned return ordering matches the reference
// ordering. Pairs the reference scores equal are skipped.
template <class Score>
double ranking_accuracy(const std::vector<std::pair<const Features*, const Features*>>& pairs, const RewardNet& net,
                        Score&& reference) {
  std::size_t agree = 0, counted = 0;
  for (const auto& [a, b] : pairs) {
    const double ra = reference(*a), rb = reference(*b);
    if (ra == rb) continue;
    ++counted;
    const double la = segment_return(net, *a), lb = segment_return(net, *b);
    if ((lb > la) == (rb > ra)) ++agree;
  }
  if (counted == 0) throw std::invalid_argument("ranking_accuracy: no comparable pairs");
  return static_cast<double>(agree) / static_cast<double>(counted);
}

}  // namespace navistar::pref
