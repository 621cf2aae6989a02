#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "navistar/autodiff/tensor.hpp"

namespace navistar::ad {

namespace detail {

inline ShapeError mismatch(const char* op, const Shape& a, const Shape& b) {
  return ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

// Views an axis of a row-major shape as (outer, mid, inner) extents.
struct AxisView {
  std::size_t outer = 1, mid = 1, inner = 1;
};

inline AxisView axis_view(const Shape& s, std::size_t axis) {
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= s[i];
  v.mid = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) v.inner *= s[i];
  return v;
}

inline double* grad_of(Node& n, std::size_t input) {
  auto& in = *n.inputs[input];
  return in.requires_grad ? in.grad.data() : nullptr;
}

template <class Fwd, class Deriv>
Tensor unary(const char* op, const Tensor& x, Fwd fwd, Deriv deriv) {
  require_finite(x, op);
  std::vector<double> out(x.numel());
  auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(in[i]);
  return make_result(op, x.shape(), std::move(out), {x}, [deriv](Node& n) {
    double* g = grad_of(n, 0);
    if (!g) return;
    const auto& xin = n.inputs[0]->data;
    for (std::size_t i = 0; i < n.data.size(); ++i) g[i] += n.grad[i] * deriv(xin[i], n.data[i]);
  });
}

}  // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) throw detail::mismatch("matmul", a.shape(), b.shape());
  require_finite(a, "matmul");
  require_finite(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  const double* A = a.data().data();
  const double* B = b.data().data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aip * B[p * n + j];
    }
  return make_result("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](Node& node) {
    const double* G = node.grad.data();
    const double* A = node.inputs[0]->data.data();
    const double* B = node.inputs[1]->data.data();
    if (double* gA = detail::grad_of(node, 0))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += G[i * n + j] * B[p * n + j];
          gA[i * k + p] += acc;
        }
    if (double* gB = detail::grad_of(node, 1))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = A[i * k + p];
          for (std::size_t j = 0; j < n; ++j) gB[p * n + j] += aip * G[i * n + j];
        }
  });
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw detail::mismatch("add", a.shape(), b.shape());
  require_finite(a, "add");
  require_finite(b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return make_result("add", a.shape(), std::move(out), {a, b}, [](Node& n) {
    for (std::size_t k = 0; k < 2; ++k)
      if (double* g = detail::grad_of(n, k))
        for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i];
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw detail::mismatch("sub", a.shape(), b.shape());
  require_finite(a, "sub");
  require_finite(b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return make_result("sub", a.shape(), std::move(out), {a, b}, [](Node& n) {
    if (double* g = detail::grad_of(n, 0))
      for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i];
    if (double* g = detail::grad_of(n, 1))
      for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] -= n.grad[i];
  });
}

// Elementwise (Hadamard) product.
inline Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw detail::mismatch("mul", a.shape(), b.shape());
  require_finite(a, "mul");
  require_finite(b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return make_result("mul", a.shape(), std::move(out), {a, b}, [](Node& n) {
    const auto& A = n.inputs[0]->data;
    const auto& B = n.inputs[1]->data;
    if (double* g = detail::grad_of(n, 0))
      for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i] * B[i];
    if (double* g = detail::grad_of(n, 1))
      for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i] * A[i];
  });
}

inline Tensor scale(const Tensor& x, double c) {
  return detail::unary("scale", x, [c](double v) { return c * v; }, [c](double, double) { return c; });
}

inline Tensor add_scalar(const Tensor& x, double c) {
  return detail::unary("add_scalar", x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

inline Tensor neg(const Tensor& x) { return scale(x, -1.0); }

// x + b where b has the size of x's last axis.
inline Tensor add_bias(const Tensor& x, const Tensor& b) {
  const std::size_t width = x.shape().back();
  if (b.numel() != width) throw detail::mismatch("add_bias", x.shape(), b.shape());
  require_finite(x, "add_bias");
  require_finite(b, "add_bias");
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + b[i % width];
  return make_result("add_bias", x.shape(), std::move(out), {x, b}, [width](Node& n) {
    if (double* g = detail::grad_of(n, 0))
      for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i];
    if (double* g = detail::grad_of(n, 1))
      for (std::size_t i = 0; i < n.grad.size(); ++i) g[i % width] += n.grad[i];
  });
}

inline Tensor relu(const Tensor& x) {
  return detail::unary(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

inline Tensor sigmoid(const Tensor& x) {
  return detail::unary(
      "sigmoid", x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

inline Tensor tanh(const Tensor& x) {
  return detail::unary(
      "tanh", x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

inline Tensor exp(const Tensor& x) {
  return detail::unary(
      "exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

inline Tensor log(const Tensor& x) {
  return detail::unary(
      "log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

inline Tensor square(const Tensor& x) {
  return detail::unary(
      "square", x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

// Clamps into [lo, hi]; the gradient is passed through only strictly inside.
inline Tensor clamp(const Tensor& x, double lo, double hi) {
  return detail::unary(
      "clamp", x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v > lo && v < hi) ? 1.0 : 0.0; });
}

// Elementwise minimum; ties route the gradient to `a`.
inline Tensor minimum(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw detail::mismatch("minimum", a.shape(), b.shape());
  require_finite(a, "minimum");
  require_finite(b, "minimum");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(a[i], b[i]);
  return make_result("minimum", a.shape(), std::move(out), {a, b}, [](Node& n) {
    const auto& A = n.inputs[0]->data;
    const auto& B = n.inputs[1]->data;
    double* ga = detail::grad_of(n, 0);
    double* gb = detail::grad_of(n, 1);
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      if (A[i] <= B[i]) {
        if (ga) ga[i] += n.grad[i];
      } else if (gb) {
        gb[i] += n.grad[i];
      }
    }
  });
}

inline Tensor sum(const Tensor& x) {
  require_finite(x, "sum");
  double s = 0.0;
  for (double v : x.data()) s += v;
  return make_result("sum", {1}, {s}, {x}, [](Node& n) {
    if (double* g = detail::grad_of(n, 0))
      for (std::size_t i = 0; i < n.inputs[0]->data.size(); ++i) g[i] += n.grad[0];
  });
}

inline Tensor mean(const Tensor& x) {
  require_finite(x, "mean");
  double s = 0.0;
  for (double v : x.data()) s += v;
  const double inv = 1.0 / static_cast<double>(x.numel());
  return make_result("mean", {1}, {s * inv}, {x}, [inv](Node& n) {
    if (double* g = detail::grad_of(n, 0))
      for (std::size_t i = 0; i < n.inputs[0]->data.size(); ++i) g[i] += n.grad[0] * inv;
  });
}

// Reduces one axis away. A rank-1 input reduces to shape (1).
inline Tensor sum_axis(const Tensor& x, std::size_t axis, double factor = 1.0) {
  if (axis >= x.rank()) throw ShapeError("sum_axis: axis " + std::to_string(axis) + " out of range for " + shape_str(x.shape()));
  require_finite(x, "sum_axis");
  const auto v = detail::axis_view(x.shape(), axis);
  Shape out_shape;
  for (std::size_t i = 0; i < x.rank(); ++i)
    if (i != axis) out_shape.push_back(x.dim(i));
  if (out_shape.empty()) out_shape = {1};
  std::vector<double> out(v.outer * v.inner, 0.0);
  const double* X = x.data().data();
  for (std::size_t o = 0; o < v.outer; ++o)
    for (std::size_t m = 0; m < v.mid; ++m)
      for (std::size_t i = 0; i < v.inner; ++i) out[o * v.inner + i] += X[(o * v.mid + m) * v.inner + i];
  for (double& val : out) val *= factor;
  return make_result("sum_axis", std::move(out_shape), std::move(out), {x}, [v, factor](Node& n) {
    double* g = detail::grad_of(n, 0);
    if (!g) return;
    for (std::size_t o = 0; o < v.outer; ++o)
      for (std::size_t m = 0; m < v.mid; ++m)
        for (std::size_t i = 0; i < v.inner; ++i) g[(o * v.mid + m) * v.inner + i] += factor * n.grad[o * v.inner + i];
  });
}

inline Tensor mean_axis(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) throw ShapeError("mean_axis: axis out of range for " + shape_str(x.shape()));
  return sum_axis(x, axis, 1.0 / static_cast<double>(x.dim(axis)));
}

// Numerically stable softmax over the last axis.
inline Tensor softmax_rows(const Tensor& x) {
  const std::size_t width = x.shape().back();
  require_finite(x, "softmax_rows");
  const std::size_t rows = x.numel() / width;
  std::vector<double> out(x.numel());
  const double* X = x.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = X + r * width;
    double* y = out.data() + r * width;
    const double mx = *std::max_element(row, row + width);
    double s = 0.0;
    for (std::size_t j = 0; j < width; ++j) {
      y[j] = std::exp(row[j] - mx);
      s += y[j];
    }
    for (std::size_t j = 0; j < width; ++j) y[j] /= s;
  }
  return make_result("softmax_rows", x.shape(), std::move(out), {x}, [rows, width](Node& n) {
    double* g = detail::grad_of(n, 0);
    if (!g) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = n.data.data() + r * width;
      const double* gy = n.grad.data() + r * width;
      double dot = 0.0;
      for (std::size_t j = 0; j < width; ++j) dot += gy[j] * y[j];
      for (std::size_t j = 0; j < width; ++j) g[r * width + j] += y[j] * (gy[j] - dot);
    }
  });
}

inline Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw ShapeError("concat: axis out of range for " + shape_str(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    if (p.rank() != first.size()) throw detail::mismatch("concat", first, p.shape());
    for (std::size_t i = 0; i < first.size(); ++i)
      if (i != axis && p.dim(i) != first[i]) throw detail::mismatch("concat", first, p.shape());
    require_finite(p, "concat");
    out_shape[axis] += p.dim(axis);
  }
  const auto ov = detail::axis_view(out_shape, axis);
  std::vector<double> out(numel_of(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const std::size_t mid = p.dim(axis);
    const double* P = p.data().data();
    for (std::size_t o = 0; o < ov.outer; ++o)
      std::copy_n(P + o * mid * ov.inner, mid * ov.inner, out.data() + (o * ov.mid + offset) * ov.inner);
    offset += mid;
  }
  return make_result("concat", std::move(out_shape), std::move(out), parts, [ov, offsets](Node& n) {
    for (std::size_t k = 0; k < n.inputs.size(); ++k) {
      double* g = detail::grad_of(n, k);
      if (!g) continue;
      const std::size_t part_mid = n.inputs[k]->data.size() / (ov.outer * ov.inner);
      for (std::size_t o = 0; o < ov.outer; ++o)
        for (std::size_t e = 0; e < part_mid * ov.inner; ++e)
          g[o * part_mid * ov.inner + e] += n.grad[(o * ov.mid + offsets[k]) * ov.inner + e];
    }
  });
}

// Half-open range [begin, end) along `axis`.
inline Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  if (axis >= x.rank() || begin >= end || end > x.dim(axis))
    throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) + ") on axis " +
                     std::to_string(axis) + " invalid for " + shape_str(x.shape()));
  require_finite(x, "slice");
  const auto v = detail::axis_view(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape[axis] = end - begin;
  const std::size_t width = (end - begin) * v.inner;
  std::vector<double> out(v.outer * width);
  const double* X = x.data().data();
  for (std::size_t o = 0; o < v.outer; ++o)
    std::copy_n(X + (o * v.mid + begin) * v.inner, width, out.data() + o * width);
  return make_result("slice", std::move(out_shape), std::move(out), {x}, [v, begin, width](Node& n) {
    double* g = detail::grad_of(n, 0);
    if (!g) return;
    for (std::size_t o = 0; o < v.outer; ++o)
      for (std::size_t e = 0; e < width; ++e) g[(o * v.mid + begin) * v.inner + e] += n.grad[o * width + e];
  });
}

inline Tensor reshape(const Tensor& x, Shape shape) {
  if (numel_of(shape) != x.numel()) throw detail::mismatch("reshape", x.shape(), shape);
  require_finite(x, "reshape");
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_result("reshape", std::move(shape), std::move(out), {x}, [](Node& n) {
    if (double* g = detail::grad_of(n, 0))
      for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i];
  });
}

// General axis permutation: output axis i is input axis perm[i].
inline Tensor permute(const Tensor& x, const std::vector<std::size_t>& perm) {
  const std::size_t r = x.rank();
  if (perm.size() != r) throw ShapeError("permute: permutation rank mismatch for " + shape_str(x.shape()));
  std::vector<bool> used(r, false);
  for (auto p : perm) {
    if (p >= r || used[p]) throw ShapeError("permute: invalid permutation for " + shape_str(x.shape()));
    used[p] = true;
  }
  require_finite(x, "permute");
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = x.dim(perm[i]);
  std::vector<std::size_t> in_strides(r, 1);
  for (std::size_t i = r - 1; i > 0; --i) in_strides[i - 1] = in_strides[i] * x.dim(i);
  // source offset for every destination element
  std::vector<std::size_t> src(x.numel());
  std::vector<std::size_t> idx(r, 0);
  for (std::size_t flat = 0; flat < src.size(); ++flat) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < r; ++i) off += idx[i] * in_strides[perm[i]];
    src[flat] = off;
    for (std::size_t i = r; i-- > 0;) {
      if (++idx[i] < out_shape[i]) break;
      idx[i] = 0;
    }
  }
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[src[i]];
  return make_result("permute", std::move(out_shape), std::move(out), {x}, [src = std::move(src)](Node& n) {
    if (double* g = detail::grad_of(n, 0))
      for (std::size_t i = 0; i < n.grad.size(); ++i) g[src[i]] += n.grad[i];
  });
}

inline Tensor transpose(const Tensor& x) {
  if (x.rank() != 2) throw ShapeError("transpose: expected rank 2, got " + shape_str(x.shape()));
  return permute(x, {1, 0});
}

// Selects rows of a rank-2 tensor; indices may repeat.
inline Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& rows) {
  if (x.rank() != 2) throw ShapeError("gather_rows: expected rank 2, got " + shape_str(x.shape()));
  if (rows.empty()) throw ShapeError("gather_rows: empty index list");
  const std::size_t width = x.dim(1);
  for (auto r : rows)
    if (r >= x.dim(0)) throw ShapeError("gather_rows: row " + std::to_string(r) + " out of range for " + shape_str(x.shape()));
  require_finite(x, "gather_rows");
  std::vector<double> out(rows.size() * width);
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy_n(x.data().data() + rows[i] * width, width, out.data() + i * width);
  return make_result("gather_rows", {rows.size(), width}, std::move(out), {x}, [rows, width](Node& n) {
    double* g = detail::grad_of(n, 0);
    if (!g) return;
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < width; ++j) g[rows[i] * width + j] += n.grad[i * width + j];
  });
}

}  // namespace navistar::ad
