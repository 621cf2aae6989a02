#pragma once

#include <cmath>
#include <vector>

#include "navistar/autodiff/tensor.hpp"
#include "navistar/sim/env_window.hpp"
#include "navistar/star/attention.hpp"
#include "navistar/star/network.hpp"
#include "navistar/util/rng.hpp"

namespace testsupport {

using navistar::EnvWindow;
using navistar::Rng;
using navistar::ad::Tensor;

// Plain row-major matrix for loop-based oracles.
struct Mat {
  std::size_t rows = 0, cols = 0;
  std::vector<double> v;
  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}
  double& operator()(std::size_t i, std::size_t j) { return v[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return v[i * cols + j]; }
};

inline Mat to_mat(const Tensor& t) {
  Mat m(t.dim(0), t.numel() / t.dim(0));
  for (std::size_t i = 0; i < m.v.size(); ++i) m.v[i] = t[i];
  return m;
}

inline Mat mm(const Mat& a, const Mat& b) {
  Mat c(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < b.cols; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

inline Mat plus(Mat a, const Mat& b) {
  for (std::size_t i = 0; i < a.v.size(); ++i) a.v[i] += b.v[i];
  return a;
}

inline Mat relu(Mat a) {
  for (double& x : a.v) x = x > 0 ? x : 0;
  return a;
}

inline Mat rows_of(const Mat& a, const std::vector<std::size_t>& idx) {
  Mat out(idx.size(), a.cols);
  for (std::size_t r = 0; r < idx.size(); ++r)
    for (std::size_t c = 0; c < a.cols; ++c) out(r, c) = a(idx[r], c);
  return out;
}

inline Mat stack(const Mat& a, const Mat& b) {
  Mat out(a.rows + b.rows, a.cols);
  std::copy(a.v.begin(), a.v.end(), out.v.begin());
  std::copy(b.v.begin(), b.v.end(), out.v.begin() + a.v.size());
  return out;
}

struct NaiveAttention {
  Mat output;
  std::vector<double> weights;  // (h, Lq, Lk)
};

// Per-head loop implementation of masked multi-head attention.
inline NaiveAttention naive_attention(const navistar::star::AttentionParams& p, const Mat& xq, const Mat& xk,
                                      const std::vector<char>& mask, std::size_t heads,
                                      navistar::star::ScoreScaling scaling) {
  const std::size_t lq = xq.rows, lk = xk.rows, d = xq.cols, dh = d / heads;
  const Mat q = mm(xq, to_mat(p.query.weight)), k = mm(xk, to_mat(p.key.weight)), v = mm(xk, to_mat(p.value.weight));
  Mat merged(lq, d);
  NaiveAttention out;
  out.weights.assign(heads * lq * lk, 0.0);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t i = 0; i < lq; ++i) {
      std::vector<double> logits(lk);
      double mx = -INFINITY;
      for (std::size_t j = 0; j < lk; ++j) {
        if (!mask.empty() && !mask[j]) continue;
        double s = 0.0;
        for (std::size_t c = 0; c < dh; ++c) s += q(i, h * dh + c) * k(j, h * dh + c);
        if (scaling == navistar::star::ScoreScaling::inside_softmax) s *= scale;
        logits[j] = s;
        mx = std::max(mx, s);
      }
      double z = 0.0;
      for (std::size_t j = 0; j < lk; ++j)
        if (mask.empty() || mask[j]) z += std::exp(logits[j] - mx);
      for (std::size_t j = 0; j < lk; ++j) {
        const double a = (mask.empty() || mask[j]) ? std::exp(logits[j] - mx) / z : 0.0;
        out.weights[(h * lq + i) * lk + j] = a;
        for (std::size_t c = 0; c < dh; ++c) merged(i, h * dh + c) += a * v(j, h * dh + c);
      }
      if (scaling == navistar::star::ScoreScaling::outside_softmax)
        for (std::size_t c = 0; c < dh; ++c) merged(i, h * dh + c) *= scale;
    }
  out.output = mm(merged, to_mat(p.out.weight));
  for (std::size_t i = 0; i < lq; ++i)
    for (std::size_t c = 0; c < d; ++c) out.output(i, c) += p.out.bias[c];
  return out;
}

inline Mat naive_ffn(const navistar::star::FeedForward& f, const Mat& x) {
  return mm(relu(mm(relu(mm(x, to_mat(f.w1))), to_mat(f.w2))), to_mat(f.w3));
}

// Residual attention followed by a residual feedforward.
inline Mat naive_layer(const navistar::star::TransformerParams& p, const Mat& xq, const Mat& xk,
                       std::size_t heads, std::vector<double>* maps = nullptr) {
  auto att = naive_attention(p.attention, xq, xk, {}, heads, navistar::star::ScoreScaling::inside_softmax);
  if (maps) *maps = att.weights;
  const Mat r = plus(att.output, xq);
  return plus(r, naive_ffn(p.ffn, r));
}

inline navistar::star::StarConfig small_config() {
  navistar::star::StarConfig c;
  c.model_dim = 8;
  c.heads = 2;
  c.ffn_hidden = 16;
  c.cheb_order = 2;
  c.window = 3;
  c.max_agents = 8;
  return c;
}

// Random window: robot always valid, humans valid with probability `p_valid`.
inline EnvWindow random_window(std::size_t steps, std::size_t agents, Rng& rng, double p_valid = 0.8) {
  EnvWindow w(steps, agents);
  for (std::size_t i = 0; i < agents; ++i) {
    double px = rng.uniform(-6, 6), py = rng.uniform(-6, 6);
    const double vx = rng.uniform(-1, 1), vy = rng.uniform(-1, 1);
    for (std::size_t t = 0; t < steps; ++t) {
      px += 0.25 * vx;
      py += 0.25 * vy;
      const bool valid = i == 0 || rng.uniform() < p_valid;
      w.set_valid(t, i, valid);
      if (!valid) continue;
      w.at(t, i, navistar::kPx) = px;
      w.at(t, i, navistar::kPy) = py;
      w.at(t, i, navistar::kVx) = vx;
      w.at(t, i, navistar::kVy) = vy;
      w.at(t, i, navistar::kRadius) = 0.3;
      if (i == 0) {
        w.at(t, i, navistar::kGoalDx) = 4.0 - px;
        w.at(t, i, navistar::kGoalDy) = 9.0 - py;
      }
    }
  }
  return w;
}

inline double row_sum_error(const std::vector<double>& maps, std::size_t rows, std::size_t cols,
                            const std::vector<char>& row_valid = {}) {
  double worst = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (!row_valid.empty() && !row_valid[r]) continue;
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double a = maps[r * cols + c];
      if (a < 0.0 || a > 1.0) return INFINITY;
      s += a;
    }
    worst = std::max(worst, std::abs(s - 1.0));
  }
  return worst;
}

}  // namespace testsupport
