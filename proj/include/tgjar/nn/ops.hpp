// Copyright (c) 2026 The TGJAR Authors
// SPDX-License-Identifier: Apache-2.0

// Differentiable primitives over Graph<T>. Each op computes its forward value
// eagerly and records the matching backward closure.

#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "tgjar/core/error.hpp"
#include "tgjar/core/tensor.hpp"
#include "tgjar/nn/graph.hpp"

namespace tgjar::nn {

template <class T>
using MatrixMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <class T>
using ConstMatrixMap =
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// Shape viewed as (outer, axis, inner) around one axis.
struct AxisSplit {
  std::size_t outer = 1, n = 1, inner = 1;
};

inline AxisSplit split_axis(const Shape& s, std::size_t axis) {
  if (axis >= s.size()) throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  AxisSplit a;
  for (std::size_t i = 0; i < axis; ++i) a.outer *= s[i];
  a.n = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) a.inner *= s[i];
  return a;
}

// ---------------------------------------------------------------------------
// Elementwise

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor<T> out = a.value();
  const T* pb = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += pb[i];
  return a.graph().record(std::move(out), {a, b}, [](const Graph<T>&, std::size_t, const Tensor<T>& go, auto grads) {
    for (int k = 0; k < 2; ++k) {
      if (!grads[k]) continue;
      T* g = grads[k]->data();
      for (std::size_t i = 0; i < go.size(); ++i) g[i] += go[i];
    }
  });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "sub");
  Tensor<T> out = a.value();
  const T* pb = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= pb[i];
  return a.graph().record(std::move(out), {a, b}, [](const Graph<T>&, std::size_t, const Tensor<T>& go, auto grads) {
    if (grads[0])
      for (std::size_t i = 0; i < go.size(); ++i) (*grads[0])[i] += go[i];
    if (grads[1])
      for (std::size_t i = 0; i < go.size(); ++i) (*grads[1])[i] -= go[i];
  });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  Tensor<T> out = a.value();
  const T* pb = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= pb[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.graph().record(std::move(out), {a, b}, [ia, ib](const Graph<T>& g, std::size_t, const Tensor<T>& go, auto grads) {
    const Tensor<T>& va = g.value(ia);
    const Tensor<T>& vb = g.value(ib);
    if (grads[0])
      for (std::size_t i = 0; i < go.size(); ++i) (*grads[0])[i] += go[i] * vb[i];
    if (grads[1])
      for (std::size_t i = 0; i < go.size(); ++i) (*grads[1])[i] += go[i] * va[i];
  });
}

template <class T>
Var<T> div(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "div");
  Tensor<T> out = a.value();
  const T* pb = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] /= pb[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.graph().record(std::move(out), {a, b}, [ia, ib](const Graph<T>& g, std::size_t, const Tensor<T>& go, auto grads) {
    const Tensor<T>& va = g.value(ia);
    const Tensor<T>& vb = g.value(ib);
    if (grads[0])
      for (std::size_t i = 0; i < go.size(); ++i) (*grads[0])[i] += go[i] / vb[i];
    if (grads[1])
      for (std::size_t i = 0; i < go.size(); ++i) (*grads[1])[i] -= go[i] * va[i] / (vb[i] * vb[i]);
  });
}

// Shared shape for pointwise unary ops: f(x) and f'(x, f(x)).
template <class T, class F, class DF>
Var<T> unary(const Var<T>& x, F f, DF df) {
  Tensor<T> out = x.value();
  for (auto& v : out.storage()) v = f(v);
  const std::size_t ix = x.id();
  return x.graph().record(std::move(out), {x}, [ix, df](const Graph<T>& g, std::size_t self, const Tensor<T>& go, auto grads) {
    const Tensor<T>& vx = g.value(ix);
    const Tensor<T>& vy = g.value(self);
    for (std::size_t i = 0; i < go.size(); ++i) (*grads[0])[i] += go[i] * df(vx[i], vy[i]);
  });
}

template <class T>
Var<T> scale(const Var<T>& x, T s) {
  Tensor<T> out = x.value();
  for (auto& v : out.storage()) v *= s;
  return x.graph().record(std::move(out), {x}, [s](const Graph<T>&, std::size_t, const Tensor<T>& go, auto grads) {
    for (std::size_t i = 0; i < go.size(); ++i) (*grads[0])[i] += s * go[i];
  });
}

template <class T>
Var<T> add_scalar(const Var<T>& x, T s) {
  Tensor<T> out = x.value();
  for (auto& v : out.storage()) v += s;
  return x.graph().record(std::move(out), {x}, [](const Graph<T>&, std::size_t, const Tensor<T>& go, auto grads) {
    for (std::size_t i = 0; i < go.size(); ++i) (*grads[0])[i] += go[i];
  });
}

template <class T>
Var<T> exp(const Var<T>& x) {
  return unary(x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <class T>
Var<T> log(const Var<T>& x) {
  return unary(x, [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

template <class T>
Var<T> tanh(const Var<T>& x) {
  return unary(x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <class T>
Var<T> sigmoid(const Var<T>& x) {
  return unary(
      x, [](T v) { return T(1) / (T(1) + std::exp(-v)); }, [](T, T y) { return y * (T(1) - y); });
}

template <class T>
Var<T> abs(const Var<T>& x) {
  return unary(
      x, [](T v) { return std::abs(v); }, [](T v, T) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

template <class T>
Var<T> square(const Var<T>& x) {
  return unary(x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

// Gradient passes where lo <= x <= hi.
template <class T>
Var<T> clamp(const Var<T>& x, T lo, T hi) {
  return unary(
      x, [lo, hi](T v) { return std::clamp(v, lo, hi); },
      [lo, hi](T v, T) { return (v >= lo && v <= hi) ? T(1) : T(0); });
}

// ---------------------------------------------------------------------------
// Shape manipulation

template <class T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  Tensor<T> out = x.value().reshaped(std::move(shape));
  return x.graph().record(std::move(out), {x}, [](const Graph<T>&, std::size_t, const Tensor<T>& go, auto grads) {
    for (std::size_t i = 0; i < go.size(); ++i) (*grads[0])[i] += go[i];
  });
}

template <class T>
Var<T> transpose(const Var<T>& x) {
  if (x.value().rank() != 2) throw ShapeError("transpose expects a matrix");
  const std::size_t r = x.dim(0), c = x.dim(1);
  Tensor<T> out({c, r});
  const Tensor<T>& v = x.value();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = v[i * c + j];
  return x.graph().record(std::move(out), {x}, [r, c](const Graph<T>&, std::size_t, const Tensor<T>& go, auto grads) {
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) (*grads[0])[i * c + j] += go[j * r + i];
  });
}

template <class T>
Var<T> slice(const Var<T>& x, std::size_t axis, std::size_t begin, std::size_t end) {
  const AxisSplit a = split_axis(x.shape(), axis);
  if (begin >= end || end > a.n) throw ShapeError("slice range out of bounds");
  Shape s = x.shape();
  s[axis] = end - begin;
  Tensor<T> out(s);
  const std::size_t m = end - begin;
  const Tensor<T>& v = x.value();
  for (std::size_t o = 0; o < a.outer; ++o)
    std::copy_n(v.data() + (o * a.n + begin) * a.inner, m * a.inner, out.data() + o * m * a.inner);
  return x.graph().record(std::move(out), {x}, [a, m, begin](const Graph<T>&, std::size_t, const Tensor<T>& go, auto grads) {
    T* g = grads[0]->data();
    for (std::size_t o = 0; o < a.outer; ++o)
      for (std::size_t i = 0; i < m * a.inner; ++i) g[(o * a.n + begin) * a.inner + i] += go[o * m * a.inner + i];
  });
}

template <class T>
Var<T> concat(const std::vector<Var<T>>& xs, std::size_t axis) {
  if (xs.empty()) throw ShapeError("concat of nothing");
  Shape s = xs[0].shape();
  std::size_t total = 0;
  std::vector<std::size_t> sizes;
  for (const auto& x : xs) {
    Shape t = x.shape();
    if (t.size() != s.size()) throw ShapeError("concat rank mismatch");
    for (std::size_t d = 0; d < s.size(); ++d)
      if (d != axis && t[d] != s[d]) throw ShapeError("concat shape mismatch " + shape_str(t) + " vs " + shape_str(s));
    sizes.push_back(t[axis]);
    total += t[axis];
  }
  s[axis] = total;
  const AxisSplit a = split_axis(s, axis);
  Tensor<T> out(s);
  std::size_t off = 0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const Tensor<T>& v = xs[k].value();
    const std::size_t m = sizes[k];
    for (std::size_t o = 0; o < a.outer; ++o)
      std::copy_n(v.data() + o * m * a.inner, m * a.inner, out.data() + (o * a.n + off) * a.inner);
    off += m;
  }
  return xs[0].graph().record(std::move(out), xs, [a, sizes](const Graph<T>&, std::size_t, const Tensor<T>& go, auto grads) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < sizes.size(); ++k) {
      const std::size_t m = sizes[k];
      if (grads[k]) {
        T* g = grads[k]->data();
        for (std::size_t o = 0; o < a.outer; ++o)
          for (std::size_t i = 0; i < m * a.inner; ++i) g[o * m * a.inner + i] += go[(o * a.n + off) * a.inner + i];
      }
      off += m;
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions

template <class T>
Var<T> sum(const Var<T>& x) {
  T acc = 0;
  for (T v : x.value().values()) acc += v;
  return x.graph().record(Tensor<T>({1}, acc), {x}, [](const Graph<T>&, std::size_t, const Tensor<T>& go, auto grads) {
    for (auto& g : grads[0]->storage()) g += go[0];
  });
}

template <class T>
Var<T> mean(const Var<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.value().size()));
}

// Sum over one axis, which is removed from the shape (a matrix keeps rank 1).
template <class T>
Var<T> sum_axis(const Var<T>& x, std::size_t axis) {
  const AxisSplit a = split_axis(x.shape(), axis);
  Shape s = x.shape();
  s.erase(s.begin() + static_cast<std::ptrdiff_t>(axis));
  if (s.empty()) s = {1};
  Tensor<T> out(s);
  const Tensor<T>& v = x.value();
  for (std::size_t o = 0; o < a.outer; ++o)
    for (std::size_t k = 0; k < a.n; ++k)
      for (std::size_t i = 0; i < a.inner; ++i) out[o * a.inner + i] += v[(o * a.n + k) * a.inner + i];
  return x.graph().record(std::move(out), {x}, [a](const Graph<T>&, std::size_t, const Tensor<T>& go, auto grads) {
    T* g = grads[0]->data();
    for (std::size_t o = 0; o < a.outer; ++o)
      for (std::size_t k = 0; k < a.n; ++k)
        for (std::size_t i = 0; i < a.inner; ++i) g[(o * a.n + k) * a.inner + i] += go[o * a.inner + i];
  });
}

// ---------------------------------------------------------------------------
// Normalizations over an axis

template <class T>
Var<T> softmax(const Var<T>& x, std::size_t axis) {
  const AxisSplit a = split_axis(x.shape(), axis);
  Tensor<T> out(x.shape());
  const Tensor<T>& v = x.value();
  for (std::size_t o = 0; o < a.outer; ++o) {
    for (std::size_t i = 0; i < a.inner; ++i) {
      auto idx = [&](std::size_t k) { return (o * a.n + k) * a.inner + i; };
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t k = 0; k < a.n; ++k) mx = std::max(mx, v[idx(k)]);
      T z = 0;
      for (std::size_t k = 0; k < a.n; ++k) z += (out[idx(k)] = std::exp(v[idx(k)] - mx));
      for (std::size_t k = 0; k < a.n; ++k) out[idx(k)] /= z;
    }
  }
  return x.graph().record(std::move(out), {x}, [a](const Graph<T>& g, std::size_t self, const Tensor<T>& go, auto grads) {
    const Tensor<T>& vy = g.value(self);
    T* gx = grads[0]->data();
    for (std::size_t o = 0; o < a.outer; ++o) {
      for (std::size_t i = 0; i < a.inner; ++i) {
        auto idx = [&](std::size_t k) { return (o * a.n + k) * a.inner + i; };
        T dot = 0;
        for (std::size_t k = 0; k < a.n; ++k) dot += go[idx(k)] * vy[idx(k)];
        for (std::size_t k = 0; k < a.n; ++k) gx[idx(k)] += vy[idx(k)] * (go[idx(k)] - dot);
      }
    }
  });
}

template <class T>
Var<T> log_softmax(const Var<T>& x, std::size_t axis) {
  const AxisSplit a = split_axis(x.shape(), axis);
  Tensor<T> out(x.shape());
  const Tensor<T>& v = x.value();
  for (std::size_t o = 0; o < a.outer; ++o) {
    for (std::size_t i = 0; i < a.inner; ++i) {
      auto idx = [&](std::size_t k) { return (o * a.n + k) * a.inner + i; };
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t k = 0; k < a.n; ++k) mx = std::max(mx, v[idx(k)]);
      T z = 0;
      for (std::size_t k = 0; k < a.n; ++k) z += std::exp(v[idx(k)] - mx);
      const T lse = mx + std::log(z);
      for (std::size_t k = 0; k < a.n; ++k) out[idx(k)] = v[idx(k)] - lse;
    }
  }
  return x.graph().record(std::move(out), {x}, [a](const Graph<T>& g, std::size_t self, const Tensor<T>& go, auto grads) {
    const Tensor<T>& vy = g.value(self);
    T* gx = grads[0]->data();
    for (std::size_t o = 0; o < a.outer; ++o) {
      for (std::size_t i = 0; i < a.inner; ++i) {
        auto idx = [&](std::size_t k) { return (o * a.n + k) * a.inner + i; };
        T s = 0;
        for (std::size_t k = 0; k < a.n; ++k) s += go[idx(k)];
        for (std::size_t k = 0; k < a.n; ++k) gx[idx(k)] += go[idx(k)] - std::exp(vy[idx(k)]) * s;
      }
    }
  });
}

// x / sqrt(sum_axis(x^2) + eps). Unit-normalizes feature channels (axis=1 of
// NCHW) or matrix rows (axis=1 of a 2-D tensor).
template <class T>
Var<T> normalize(const Var<T>& x, std::size_t axis, T eps) {
  const AxisSplit a = split_axis(x.shape(), axis);
  Tensor<T> out(x.shape());
  std::vector<T> inv(a.outer * a.inner);
  const Tensor<T>& v = x.value();
  for (std::size_t o = 0; o < a.outer; ++o) {
    for (std::size_t i = 0; i < a.inner; ++i) {
      T ss = 0;
      for (std::size_t k = 0; k < a.n; ++k) ss += v[(o * a.n + k) * a.inner + i] * v[(o * a.n + k) * a.inner + i];
      const T r = T(1) / std::sqrt(ss + eps);
      inv[o * a.inner + i] = r;
      for (std::size_t k = 0; k < a.n; ++k) out[(o * a.n + k) * a.inner + i] = v[(o * a.n + k) * a.inner + i] * r;
    }
  }
  const std::size_t ix = x.id();
  return x.graph().record(std::move(out), {x}, [a, ix, inv = std::move(inv)](const Graph<T>& g, std::size_t, const Tensor<T>& go, auto grads) {
    const Tensor<T>& v = g.value(ix);
    T* gx = grads[0]->data();
    for (std::size_t o = 0; o < a.outer; ++o) {
      for (std::size_t i = 0; i < a.inner; ++i) {
        auto idx = [&](std::size_t k) { return (o * a.n + k) * a.inner + i; };
        const T r = inv[o * a.inner + i];
        T dot = 0;
        for (std::size_t k = 0; k < a.n; ++k) dot += go[idx(k)] * v[idx(k)];
        for (std::size_t k = 0; k < a.n; ++k) gx[idx(k)] += r * go[idx(k)] - r * r * r * v[idx(k)] * dot;
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Dense linear algebra

template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  if (a.value().rank() != 2 || b.value().rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul shape mismatch " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor<T> out({m, n});
  MatrixMap<T>(out.data(), m, n).noalias() =
      ConstMatrixMap<T>(a.value().data(), m, k) * ConstMatrixMap<T>(b.value().data(), k, n);
  const std::size_t ia = a.id(), ib = b.id();
  return a.graph().record(std::move(out), {a, b}, [=](const Graph<T>& g, std::size_t, const Tensor<T>& go, auto grads) {
    ConstMatrixMap<T> G(go.data(), m, n);
    if (grads[0])
      MatrixMap<T>(grads[0]->data(), m, k).noalias() += G * ConstMatrixMap<T>(g.value(ib).data(), k, n).transpose();
    if (grads[1])
      MatrixMap<T>(grads[1]->data(), k, n).noalias() += ConstMatrixMap<T>(g.value(ia).data(), m, k).transpose() * G;
  });
}

// Fully-connected layer on rows: x (N, in), weight (out, in), bias (out).
template <class T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  if (x.value().rank() != 2 || weight.value().rank() != 2 || x.dim(1) != weight.dim(1) ||
      bias.value().size() != weight.dim(0)) {
    throw ShapeError("linear shape mismatch: x " + shape_str(x.shape()) + ", weight " +
                     shape_str(weight.shape()));
  }
  const std::size_t n = x.dim(0), in = x.dim(1), outd = weight.dim(0);
  Tensor<T> out({n, outd});
  MatrixMap<T> Y(out.data(), n, outd);
  Y.noalias() = ConstMatrixMap<T>(x.value().data(), n, in) *
                ConstMatrixMap<T>(weight.value().data(), outd, in).transpose();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < outd; ++c) Y(r, c) += bias.value()[c];
  const std::size_t ix = x.id(), iw = weight.id();
  return x.graph().record(std::move(out), {x, weight, bias}, [=](const Graph<T>& g, std::size_t, const Tensor<T>& go, auto grads) {
    ConstMatrixMap<T> G(go.data(), n, outd);
    if (grads[0])
      MatrixMap<T>(grads[0]->data(), n, in).noalias() += G * ConstMatrixMap<T>(g.value(iw).data(), outd, in);
    if (grads[1])
      MatrixMap<T>(grads[1]->data(), outd, in).noalias() += G.transpose() * ConstMatrixMap<T>(g.value(ix).data(), n, in);
    if (grads[2])
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < outd; ++c) (*grads[2])[c] += G(r, c);
  });
}

// Rows of `table` selected by `ids` (embedding lookup).
template <class T>
Var<T> gather_rows(const Var<T>& table, const std::vector<std::size_t>& ids) {
  if (table.value().rank() != 2) throw ShapeError("gather_rows expects a matrix");
  const std::size_t rows = table.dim(0), cols = table.dim(1);
  if (ids.empty()) throw DomainError("gather_rows with no ids");
  Tensor<T> out({ids.size(), cols});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] >= rows) throw DomainError("row id " + std::to_string(ids[r]) + " out of range");
    std::copy_n(table.value().data() + ids[r] * cols, cols, out.data() + r * cols);
  }
  return table.graph().record(std::move(out), {table}, [ids, cols](const Graph<T>&, std::size_t, const Tensor<T>& go, auto grads) {
    for (std::size_t r = 0; r < ids.size(); ++r)
      for (std::size_t c = 0; c < cols; ++c) (*grads[0])[ids[r] * cols + c] += go[r * cols + c];
  });
}

// ---------------------------------------------------------------------------
// Convolutional layers (NCHW)

struct Conv2dSpec {
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 1;

  std::size_t out_size(std::size_t in) const {
    if (in + 2 * padding < kernel) throw ShapeError("convolution input smaller than kernel");
    return (in + 2 * padding - kernel) / stride + 1;
  }
};

namespace detail {

template <class T>
void im2col(const T* x, std::size_t c, std::size_t h, std::size_t w, const Conv2dSpec& s, std::size_t ho,
            std::size_t wo, T* cols) {
  const std::size_t k = s.kernel;
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(s.padding);
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        T* row = cols + ((ci * k + ky) * k + kx) * ho * wo;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * s.stride + ky) - pad;
          T* dst = row + oy * wo;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) {
            std::fill_n(dst, wo, T(0));
            continue;
          }
          const T* src = x + (ci * h + static_cast<std::size_t>(iy)) * w;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * s.stride + kx) - pad;
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) ? T(0) : src[ix];
          }
        }
      }
    }
  }
}

template <class T>
void col2im(const T* cols, std::size_t c, std::size_t h, std::size_t w, const Conv2dSpec& s, std::size_t ho,
            std::size_t wo, T* x) {
  const std::size_t k = s.kernel;
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(s.padding);
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const T* row = cols + ((ci * k + ky) * k + kx) * ho * wo;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * s.stride + ky) - pad;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          T* dst = x + (ci * h + static_cast<std::size_t>(iy)) * w;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * s.stride + kx) - pad;
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(w)) dst[ix] += row[oy * wo + ox];
          }
        }
      }
    }
  }
}

inline bool is_pointwise(const Conv2dSpec& s) { return s.kernel == 1 && s.stride == 1 && s.padding == 0; }

}  // namespace detail


// Cross-correlation with bias. x (N,Cin,H,W), weight (Cout,Cin,k,k), bias (Cout).
template <class T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, const Conv2dSpec& s) {
  if (x.rank() != 4 || weight.rank() != 4 || weight.dim(1) != x.dim(1) || weight.dim(2) != s.kernel ||
      weight.dim(3) != s.kernel || bias.size() != weight.dim(0)) {
    throw ShapeError("conv2d shape mismatch: x " + shape_str(x.shape()) + ", weight " + shape_str(weight.shape()));
  }
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3), co = weight.dim(0);
  const std::size_t ho = s.out_size(h), wo = s.out_size(w), kk = c * s.kernel * s.kernel, p = ho * wo;
  Tensor<T> y({n, co, ho, wo});
  Buffer<T> cols(detail::is_pointwise(s) ? 0 : kk * p);
  ConstMatrixMap<T> W(weight.data(), co, kk);
  for (std::size_t b = 0; b < n; ++b) {
    const T* xb = x.data() + b * c * h * w;
    const T* colp = xb;
    if (!detail::is_pointwise(s)) {
      detail::im2col(xb, c, h, w, s, ho, wo, cols.data());
      colp = cols.data();
    }
    MatrixMap<T> Y(y.data() + b * co * p, co, p);
    Y.noalias() = W * ConstMatrixMap<T>(colp, kk, p);
    for (std::size_t o = 0; o < co; ++o) Y.row(o).array() += bias[o];
  }
  return y;
}

// Accumulates into dx/dweight/dbias when non-null.
template <class T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& weight, const Conv2dSpec& s, const Tensor<T>& grad_out,
                     Tensor<T>* dx, Tensor<T>* dweight, Tensor<T>* dbias) {
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3), co = weight.dim(0);
  const std::size_t ho = s.out_size(h), wo = s.out_size(w), kk = c * s.kernel * s.kernel, p = ho * wo;
  const bool pw = detail::is_pointwise(s);
  Buffer<T> cols(pw ? 0 : kk * p), dcols(pw ? 0 : kk * p);
  ConstMatrixMap<T> W(weight.data(), co, kk);
  for (std::size_t b = 0; b < n; ++b) {
    ConstMatrixMap<T> G(grad_out.data() + b * co * p, co, p);
    const T* xb = x.data() + b * c * h * w;
    if (dweight) {
      const T* colp = xb;
      if (!pw) {
        detail::im2col(xb, c, h, w, s, ho, wo, cols.data());
        colp = cols.data();
      }
      MatrixMap<T>(dweight->data(), co, kk).noalias() += G * ConstMatrixMap<T>(colp, kk, p).transpose();
    }
    if (dbias) {
      for (std::size_t o = 0; o < co; ++o) (*dbias)[o] += G.row(o).sum();
    }
    if (dx) {
      T* dxb = dx->data() + b * c * h * w;
      if (pw) {
        MatrixMap<T>(dxb, kk, p).noalias() += W.transpose() * G;
      } else {
        MatrixMap<T>(dcols.data(), kk, p).noalias() = W.transpose() * G;
        detail::col2im(dcols.data(), c, h, w, s, ho, wo, dxb);
      }
    }
  }
}

template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, const Conv2dSpec& s) {
  Tensor<T> y = conv2d_forward(x.value(), weight.value(), bias.value(), s);
  const std::size_t ix = x.id(), iw = weight.id();
  return x.graph().record(std::move(y), {x, weight, bias}, [=](const Graph<T>& g, std::size_t, const Tensor<T>& go, auto grads) {
    conv2d_backward(g.value(ix), g.value(iw), s, go, grads[0], grads[1], grads[2]);
  });
}

// Per-channel PReLU on axis 1; slope has one entry per channel.
template <class T>
Var<T> prelu(const Var<T>& x, const Var<T>& slope) {
  const AxisSplit a = split_axis(x.shape(), 1);
  if (slope.value().size() != a.n) throw ShapeError("prelu slope count does not match channels");
  Tensor<T> out = x.value();
  const Tensor<T>& sl = slope.value();
  for (std::size_t o = 0; o < a.outer; ++o)
    for (std::size_t c = 0; c < a.n; ++c) {
      T* p = out.data() + (o * a.n + c) * a.inner;
      for (std::size_t i = 0; i < a.inner; ++i)
        if (p[i] < T(0)) p[i] *= sl[c];
    }
  const std::size_t ix = x.id(), is = slope.id();
  return x.graph().record(std::move(out), {x, slope}, [=](const Graph<T>& g, std::size_t, const Tensor<T>& go, auto grads) {
    const Tensor<T>& v = g.value(ix);
    const Tensor<T>& s = g.value(is);
    for (std::size_t o = 0; o < a.outer; ++o)
      for (std::size_t c = 0; c < a.n; ++c)
        for (std::size_t i = 0; i < a.inner; ++i) {
          const std::size_t j = (o * a.n + c) * a.inner + i;
          const bool neg = v[j] < T(0);
          if (grads[0]) (*grads[0])[j] += neg ? s[c] * go[j] : go[j];
          if (grads[1] && neg) (*grads[1])[c] += v[j] * go[j];
        }
  });
}

// Global average pooling (N,C,H,W) -> (N,C).
template <class T>
Var<T> gap(const Var<T>& x) {
  if (x.value().rank() != 4) throw ShapeError("gap expects NCHW");
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor<T> out({n, c});
  for (std::size_t i = 0; i < n * c; ++i) {
    T acc = 0;
    for (std::size_t j = 0; j < hw; ++j) acc += x.value()[i * hw + j];
    out[i] = acc / static_cast<T>(hw);
  }
  return x.graph().record(std::move(out), {x}, [n, c, hw](const Graph<T>&, std::size_t, const Tensor<T>& go, auto grads) {
    for (std::size_t i = 0; i < n * c; ++i)
      for (std::size_t j = 0; j < hw; ++j) (*grads[0])[i * hw + j] += go[i] / static_cast<T>(hw);
  });
}

// (N,C) broadcast to (N,C,H,W).
template <class T>
Var<T> repeat_spatial(const Var<T>& x, std::size_t h, std::size_t w) {
  if (x.value().rank() != 2) throw ShapeError("repeat_spatial expects (N,C)");
  const std::size_t n = x.dim(0), c = x.dim(1), hw = h * w;
  Tensor<T> out({n, c, h, w});
  for (std::size_t i = 0; i < n * c; ++i) std::fill_n(out.data() + i * hw, hw, x.value()[i]);
  return x.graph().record(std::move(out), {x}, [n, c, hw](const Graph<T>&, std::size_t, const Tensor<T>& go, auto grads) {
    for (std::size_t i = 0; i < n * c; ++i) {
      T acc = 0;
      for (std::size_t j = 0; j < hw; ++j) acc += go[i * hw + j];
      (*grads[0])[i] += acc;
    }
  });
}

template <class T>
Var<T> upsample_nearest2x(const Var<T>& x) {
  if (x.value().rank() != 4) throw ShapeError("upsample expects NCHW");
  const std::size_t nc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor<T> out({x.dim(0), x.dim(1), 2 * h, 2 * w});
  for (std::size_t i = 0; i < nc; ++i)
    for (std::size_t y = 0; y < 2 * h; ++y)
      for (std::size_t xx = 0; xx < 2 * w; ++xx)
        out[(i * 2 * h + y) * 2 * w + xx] = x.value()[(i * h + y / 2) * w + xx / 2];
  return x.graph().record(std::move(out), {x}, [nc, h, w](const Graph<T>&, std::size_t, const Tensor<T>& go, auto grads) {
    for (std::size_t i = 0; i < nc; ++i)
      for (std::size_t y = 0; y < 2 * h; ++y)
        for (std::size_t xx = 0; xx < 2 * w; ++xx)
          (*grads[0])[(i * h + y / 2) * w + xx / 2] += go[(i * 2 * h + y) * 2 * w + xx];
  });
}

struct BatchNormOptions {
  bool training = true;
  double momentum = 0.1;
  double eps = 1e-5;
};

// Batch normalization over (N,H,W) per channel. In training mode the updated
// running statistics are pushed to the graph as buffer updates named
// `running_prefix + "running_mean"/"running_var"`.
template <class T>
Var<T> batchnorm2d(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, const Tensor<T>& running_mean,
                   const Tensor<T>& running_var, const BatchNormOptions& opt, const std::string& running_prefix) {
  if (x.value().rank() != 4) throw ShapeError("batchnorm2d expects NCHW");
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3), m = n * hw;
  if (gamma.value().size() != c || beta.value().size() != c) throw ShapeError("batchnorm2d channel mismatch");
  const Tensor<T>& v = x.value();
  std::vector<T> mu(c), invstd(c);
  if (opt.training) {
    Tensor<T> new_mean = running_mean, new_var = running_var;
    for (std::size_t ch = 0; ch < c; ++ch) {
      T s = 0;
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t i = 0; i < hw; ++i) s += v[(b * c + ch) * hw + i];
      const T mean = s / static_cast<T>(m);
      T ss = 0;
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t i = 0; i < hw; ++i) {
          const T d = v[(b * c + ch) * hw + i] - mean;
          ss += d * d;
        }
      const T var = ss / static_cast<T>(m);
      mu[ch] = mean;
      invstd[ch] = T(1) / std::sqrt(var + static_cast<T>(opt.eps));
      const T mom = static_cast<T>(opt.momentum);
      const T unbiased = m > 1 ? ss / static_cast<T>(m - 1) : var;
      new_mean[ch] = (T(1) - mom) * running_mean[ch] + mom * mean;
      new_var[ch] = (T(1) - mom) * running_var[ch] + mom * unbiased;
    }
    x.graph().push_buffer_update(running_prefix + "running_mean", std::move(new_mean));
    x.graph().push_buffer_update(running_prefix + "running_var", std::move(new_var));
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mu[ch] = running_mean[ch];
      invstd[ch] = T(1) / std::sqrt(running_var[ch] + static_cast<T>(opt.eps));
    }
  }
  Tensor<T> xhat(x.shape()), out(x.shape());
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < hw; ++i) {
        const std::size_t j = (b * c + ch) * hw + i;
        xhat[j] = (v[j] - mu[ch]) * invstd[ch];
        out[j] = gamma.value()[ch] * xhat[j] + beta.value()[ch];
      }
  const std::size_t ig = gamma.id();
  const bool training = opt.training;
  return x.graph().record(
      std::move(out), {x, gamma, beta},
      [=, xhat = std::move(xhat), invstd = std::move(invstd)](const Graph<T>& g, std::size_t, const Tensor<T>& go, auto grads) {
        const Tensor<T>& gm = g.value(ig);
        for (std::size_t ch = 0; ch < c; ++ch) {
          T sg = 0, sgx = 0;
          for (std::size_t b = 0; b < n; ++b)
            for (std::size_t i = 0; i < hw; ++i) {
              const std::size_t j = (b * c + ch) * hw + i;
              sg += go[j];
              sgx += go[j] * xhat[j];
            }
          if (grads[1]) (*grads[1])[ch] += sgx;
          if (grads[2]) (*grads[2])[ch] += sg;
          if (!grads[0]) continue;
          const T k = gm[ch] * invstd[ch];
          for (std::size_t b = 0; b < n; ++b)
            for (std::size_t i = 0; i < hw; ++i) {
              const std::size_t j = (b * c + ch) * hw + i;
              if (training) {
                (*grads[0])[j] += k * (go[j] - sg / static_cast<T>(m) - xhat[j] * sgx / static_cast<T>(m));
              } else {
                (*grads[0])[j] += k * go[j];
              }
            }
        }
      });
}

}  // namespace tgjar::nn
