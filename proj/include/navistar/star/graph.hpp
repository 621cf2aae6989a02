#pragma once

#include <array>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "navistar/autodiff/ops.hpp"

namespace navistar::star {

using ad::Tensor;

// Gaussian-kernel adjacency over agent positions. Entries touching a masked
// agent are zero (including its diagonal); valid diagonals are 1.
inline Tensor build_adjacency(std::span<const std::array<double, 2>> positions, double sigma, std::span<const char> mask) {
  if (!(sigma > 0.0)) throw std::invalid_argument("build_adjacency: sigma must be positive");
  if (mask.size() != positions.size()) throw std::invalid_argument("build_adjacency: mask length differs from positions");
  const std::size_t n = positions.size();
  std::vector<double> m(n * n, 0.0);
  const double denom = 2.0 * sigma * sigma;
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    m[i * n + i] = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      if (!mask[j]) continue;
      const double dx = positions[i][0] - positions[j][0];
      const double dy = positions[i][1] - positions[j][1];
      const double w = std::exp(-(dx * dx + dy * dy) / denom);
      m[i * n + j] = w;
      m[j * n + i] = w;
    }
  }
  return Tensor::from({n, n}, std::move(m));
}

// L = I - D^{-1/2} M D^{-1/2}; zero-degree rows use degree 1.
inline std::vector<double> normalized_laplacian(const Tensor& adjacency) {
  const std::size_t n = adjacency.dim(0);
  std::vector<double> inv_sqrt_deg(n);
  for (std::size_t i = 0; i < n; ++i) {
    double deg = 0.0;
    for (std::size_t j = 0; j < n; ++j) deg += adjacency.at(i, j);
    inv_sqrt_deg[i] = 1.0 / std::sqrt(deg > 0.0 ? deg : 1.0);
  }
  std::vector<double> lap(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      lap[i * n + j] = (i == j ? 1.0 : 0.0) - inv_sqrt_deg[i] * adjacency.at(i, j) * inv_sqrt_deg[j];
  return lap;
}

struct PowerIterationResult {
  double eigenvalue = 0.0;
  int iterations = 0;
};

// Largest eigenvalue of a symmetric positive semi-definite matrix by power
// iteration with a Rayleigh-quotient estimate. An empty `start` uses the
// squared row norms of the matrix, which keeps the result independent of row
// order; if that vector lies in the null space the start falls back to
// 1 + (i+1)/(n+1).
inline PowerIterationResult largest_eigenvalue(std::span<const double> matrix, std::size_t n, int max_iterations = 50,
                                               double tolerance = 1e-8, std::span<const double> start = {}) {
  std::vector<double> v(n), w(n);
  auto multiply = [&](const std::vector<double>& x, std::vector<double>& y) {
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += matrix[i * n + j] * x[j];
      y[i] = acc;
    }
  };
  auto normalize = [](std::vector<double>& x) {
    double s = 0.0;
    for (double e : x) s += e * e;
    s = std::sqrt(s);
    if (s > 0.0)
      for (double& e : x) e /= s;
    return s;
  };
  if (!start.empty()) {
    if (start.size() != n) throw std::invalid_argument("largest_eigenvalue: start vector length mismatch");
    v.assign(start.begin(), start.end());
  } else {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) v[i] += matrix[i * n + j] * matrix[i * n + j];
  }
  normalize(v);
  multiply(v, w);
  double probe = 0.0;
  for (double e : w) probe += e * e;
  if (start.empty() && std::sqrt(probe) <= 1e-12) {
    for (std::size_t i = 0; i < n; ++i) v[i] = 1.0 + static_cast<double>(i + 1) / static_cast<double>(n + 1);
    normalize(v);
  }

  PowerIterationResult result;
  double previous = 0.0;
  for (int it = 1; it <= max_iterations; ++it) {
    multiply(v, w);
    double rayleigh = 0.0;
    for (std::size_t i = 0; i < n; ++i) rayleigh += v[i] * w[i];
    result.eigenvalue = rayleigh;
    result.iterations = it;
    if (normalize(w) == 0.0) break;
    v.swap(w);
    if (it > 1 && std::abs(rayleigh - previous) < tolerance) break;
    previous = rayleigh;
  }
  return result;
}

// L_hat = 2 L / lambda_max - I, with lambda_max = 2 when the spectrum is
// numerically zero.
inline Tensor scaled_laplacian(const Tensor& adjacency) {
  const std::size_t n = adjacency.dim(0);
  auto lap = normalized_laplacian(adjacency);
  double lambda = largest_eigenvalue(lap, n).eigenvalue;
  if (lambda <= 1e-9) lambda = 2.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) lap[i * n + j] = 2.0 * lap[i * n + j] / lambda - (i == j ? 1.0 : 0.0);
  return Tensor::from({n, n}, std::move(lap));
}

// sum_k T_k(L_hat) x theta_k using T_0 = I, T_1 = L_hat,
// T_k = 2 L_hat T_{k-1} - T_{k-2}, applied to x rather than formed densely.
inline Tensor cheb_gcn(const Tensor& x, const Tensor& scaled_lap, const std::vector<Tensor>& theta) {
  if (theta.empty()) throw std::invalid_argument("cheb_gcn: need at least one coefficient (K >= 0)");
  Tensor prev = x;
  Tensor out = ad::matmul(x, theta[0]);
  if (theta.size() == 1) return out;
  Tensor cur = ad::matmul(scaled_lap, x);
  out = ad::add(out, ad::matmul(cur, theta[1]));
  for (std::size_t k = 2; k < theta.size(); ++k) {
    Tensor next = ad::sub(ad::scale(ad::matmul(scaled_lap, cur), 2.0), prev);
    out = ad::add(out, ad::matmul(next, theta[k]));
    prev = cur;
    cur = next;
  }
  return out;
}

}  // namespace navistar::star
