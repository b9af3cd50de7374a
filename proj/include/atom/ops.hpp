#ifndef ATOM_OPS_HPP_
#define ATOM_OPS_HPP_

#include <cmath>
#include <vector>

#include "atom/autodiff.hpp"
#include "atom/common.hpp"
#include "atom/tensor.hpp"

// Differentiable primitives. Every backward rule is itself expressed with
// recorded operations, so a gradient computed with create_graph stays a
// differentiable function of the graph leaves; this is what the nested
// BackProp calls of the online optimizer rely on. Nonlinearities capture
// their local derivative as a constant, which keeps Jacobian products
// exact while not modelling second-order terms.

namespace atom {

template <typename T>
using Edge = typename Node<T>::Edge;

// ---------------------------------------------------------------------------
// Elementwise and reduction ops
// ---------------------------------------------------------------------------

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  check(a.value().same_shape(b.value()), "add: shape mismatch ",
        shape_str(a.shape()), " vs ", shape_str(b.shape()));
  Tensor<T> out(a.shape());
  const T* pa = a.value().data();
  const T* pb = b.value().data();
  T* po = out.data();
  for (int64_t i = 0; i < out.size(); ++i) po[i] = pa[i] + pb[i];
  return detail::make_node<T>(
      "add", std::move(out),
      {{a.node(), [](const Var<T>& g) { return g; }, true},
       {b.node(), [](const Var<T>& g) { return g; }, true}});
}

template <typename T>
Var<T> neg(const Var<T>& a) {
  Tensor<T> out(a.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = -a.value()[i];
  return detail::make_node<T>(
      "neg", std::move(out),
      {{a.node(), [](const Var<T>& g) { return neg(g); }, true}});
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  check(a.value().same_shape(b.value()), "sub: shape mismatch ",
        shape_str(a.shape()), " vs ", shape_str(b.shape()));
  Tensor<T> out(a.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  return detail::make_node<T>(
      "sub", std::move(out),
      {{a.node(), [](const Var<T>& g) { return g; }, true},
       {b.node(), [](const Var<T>& g) { return neg(g); }, true}});
}

// Multiply by a plain scalar constant.
template <typename T>
Var<T> smul(const Var<T>& a, T c) {
  Tensor<T> out(a.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * c;
  return detail::make_node<T>(
      "smul", std::move(out),
      {{a.node(), [c](const Var<T>& g) { return smul(g, c); }, true}});
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  check(a.value().same_shape(b.value()), "mul: shape mismatch ",
        shape_str(a.shape()), " vs ", shape_str(b.shape()));
  Tensor<T> out(a.shape());
  const T* pa = a.value().data();
  const T* pb = b.value().data();
  T* po = out.data();
  for (int64_t i = 0; i < out.size(); ++i) po[i] = pa[i] * pb[i];
  return detail::make_node<T>(
      "mul", std::move(out),
      {{a.node(), [b](const Var<T>& g) { return mul(g, b); }, true},
       {b.node(), [a](const Var<T>& g) { return mul(g, a); }, true}});
}

template <typename T>
Var<T> sum(const Var<T>& a);

// Fills `shape` with the value of a scalar variable.
template <typename T>
Var<T> broadcast_fill(const Var<T>& s, std::vector<int> shape) {
  check(s.size() == 1, "broadcast_fill: source must be scalar, got ",
        shape_str(s.shape()));
  Tensor<T> out = Tensor<T>::full(shape, s.value()[0]);
  return detail::make_node<T>(
      "broadcast_fill", std::move(out),
      {{s.node(), [](const Var<T>& g) { return sum(g); }, true}});
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  T acc = 0;
  for (int64_t i = 0; i < a.size(); ++i) acc += a.value()[i];
  std::vector<int> in_shape = a.shape();
  return detail::make_node<T>(
      "sum", Tensor<T>::scalar(acc),
      {{a.node(),
        [in_shape](const Var<T>& g) { return broadcast_fill(g, in_shape); },
        true}});
}

template <typename T>
Var<T> dot(const Var<T>& a, const Var<T>& b) {
  check(a.size() == b.size(), "dot: length mismatch ", a.size(), " vs ",
        b.size());
  return sum(mul(a, b));
}

// Sums over all axes but the last; the workhorse behind per-channel
// statistics and bias gradients.
template <typename T>
Var<T> sum_channelwise(const Var<T>& a) {
  check(a.value().rank() >= 1, "sum_channelwise: rank-0 input");
  const int c = a.shape().back();
  Tensor<T> out({c});
  const int64_t rows = a.size() / c;
  const T* pa = a.value().data();
  for (int64_t r = 0; r < rows; ++r) {
    for (int i = 0; i < c; ++i) out[i] += pa[r * c + i];
  }
  std::vector<int> in_shape = a.shape();
  return detail::make_node<T>(
      "sum_channelwise", std::move(out),
      {{a.node(),
        [in_shape](const Var<T>& g) {
          return broadcast_channelwise(g, in_shape);
        },
        true}});
}

// Repeats a length-C vector across all leading axes of `shape`.
template <typename T>
Var<T> broadcast_channelwise(const Var<T>& v, std::vector<int> shape) {
  check(v.value().rank() == 1, "broadcast_channelwise: need rank-1 source");
  check(!shape.empty() && shape.back() == v.shape()[0],
        "broadcast_channelwise: channel mismatch, source ",
        shape_str(v.shape()), " target ", shape_str(shape));
  const int c = shape.back();
  Tensor<T> out(shape);
  const int64_t rows = out.size() / c;
  for (int64_t r = 0; r < rows; ++r) {
    for (int i = 0; i < c; ++i) out[r * c + i] = v.value()[i];
  }
  return detail::make_node<T>(
      "broadcast_channelwise", std::move(out),
      {{v.node(), [](const Var<T>& g) { return sum_channelwise(g); }, true}});
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

template <typename T>
Var<T> reshape(const Var<T>& a, std::vector<int> shape) {
  Tensor<T> out = a.value().reshaped(shape);
  std::vector<int> in_shape = a.shape();
  return detail::make_node<T>(
      "reshape", std::move(out),
      {{a.node(),
        [in_shape](const Var<T>& g) { return reshape(g, in_shape); }, true}});
}

template <typename T>
Var<T> flatten(const Var<T>& a) {
  return reshape(a, {static_cast<int>(a.size())});
}

template <typename T>
Var<T> embed1d(const Var<T>& a, int64_t offset, int64_t total);

template <typename T>
Var<T> slice1d(const Var<T>& a, int64_t offset, int64_t len) {
  check(a.value().rank() == 1, "slice1d: need rank-1 input, got ",
        shape_str(a.shape()));
  check(offset >= 0 && len >= 0 && offset + len <= a.size(),
        "slice1d: range [", offset, ", ", offset + len, ") out of bounds for ",
        a.size());
  Tensor<T> out({static_cast<int>(len)});
  for (int64_t i = 0; i < len; ++i) out[i] = a.value()[offset + i];
  const int64_t total = a.size();
  return detail::make_node<T>(
      "slice1d", std::move(out),
      {{a.node(),
        [offset, total](const Var<T>& g) { return embed1d(g, offset, total); },
        true}});
}

template <typename T>
Var<T> embed1d(const Var<T>& a, int64_t offset, int64_t total) {
  check(a.value().rank() == 1, "embed1d: need rank-1 input");
  check(offset >= 0 && offset + a.size() <= total, "embed1d: range overflow");
  Tensor<T> out({static_cast<int>(total)});
  for (int64_t i = 0; i < a.size(); ++i) out[offset + i] = a.value()[i];
  const int64_t len = a.size();
  return detail::make_node<T>(
      "embed1d", std::move(out),
      {{a.node(),
        [offset, len](const Var<T>& g) { return slice1d(g, offset, len); },
        true}});
}

template <typename T>
Var<T> concat1d(const std::vector<Var<T>>& parts) {
  check(!parts.empty(), "concat1d: empty input list");
  int64_t total = 0;
  for (const auto& p : parts) {
    check(p.value().rank() == 1, "concat1d: all parts must be rank-1");
    total += p.size();
  }
  Tensor<T> out({static_cast<int>(total)});
  std::vector<Edge<T>> edges;
  int64_t offset = 0;
  for (const auto& p : parts) {
    for (int64_t i = 0; i < p.size(); ++i) out[offset + i] = p.value()[i];
    const int64_t off = offset, len = p.size();
    edges.push_back({p.node(),
                     [off, len](const Var<T>& g) { return slice1d(g, off, len); },
                     true});
    offset += p.size();
  }
  return detail::make_node<T>("concat1d", std::move(out), std::move(edges));
}

template <typename T>
Var<T> embed0(const Var<T>& a, int index, int n);

// Extracts element `index` along a new leading axis: [N, ...] -> [...].
template <typename T>
Var<T> slice0(const Var<T>& a, int index) {
  check(a.value().rank() >= 2, "slice0: need rank >= 2");
  const int n = a.shape()[0];
  check(index >= 0 && index < n, "slice0: index ", index, " out of [0, ", n,
        ")");
  std::vector<int> out_shape(a.shape().begin() + 1, a.shape().end());
  const int64_t stride = a.size() / n;
  Tensor<T> out(out_shape);
  for (int64_t i = 0; i < stride; ++i) out[i] = a.value()[index * stride + i];
  return detail::make_node<T>(
      "slice0", std::move(out),
      {{a.node(), [index, n](const Var<T>& g) { return embed0(g, index, n); },
        true}});
}

template <typename T>
Var<T> embed0(const Var<T>& a, int index, int n) {
  std::vector<int> out_shape = a.shape();
  out_shape.insert(out_shape.begin(), n);
  Tensor<T> out(out_shape);
  const int64_t stride = a.size();
  for (int64_t i = 0; i < stride; ++i) out[index * stride + i] = a.value()[i];
  return detail::make_node<T>(
      "embed0", std::move(out),
      {{a.node(), [index](const Var<T>& g) { return slice0(g, index); }, true}});
}

// Stacks same-shaped tensors along a new leading axis.
template <typename T>
Var<T> stack0(const std::vector<Var<T>>& parts) {
  check(!parts.empty(), "stack0: empty input list");
  for (const auto& p : parts) {
    check(p.value().same_shape(parts[0].value()),
          "stack0: shape mismatch ", shape_str(p.shape()), " vs ",
          shape_str(parts[0].shape()));
  }
  std::vector<int> out_shape = parts[0].shape();
  out_shape.insert(out_shape.begin(), static_cast<int>(parts.size()));
  Tensor<T> out(out_shape);
  const int64_t stride = parts[0].size();
  std::vector<Edge<T>> edges;
  for (size_t k = 0; k < parts.size(); ++k) {
    for (int64_t i = 0; i < stride; ++i) {
      out[static_cast<int64_t>(k) * stride + i] = parts[k].value()[i];
    }
    const int idx = static_cast<int>(k);
    edges.push_back(
        {parts[k].node(),
         [idx](const Var<T>& g) { return slice0(g, idx); }, true});
  }
  return detail::make_node<T>("stack0", std::move(out), std::move(edges));
}

template <typename T>
Var<T> embed_cols(const Var<T>& a, int offset, int total_cols);

// Columns [offset, offset+len) of a rank-2 matrix.
template <typename T>
Var<T> slice_cols(const Var<T>& a, int offset, int len) {
  check(a.value().rank() == 2, "slice_cols: need rank-2 input");
  const int rows = a.shape()[0], cols = a.shape()[1];
  check(offset >= 0 && len >= 0 && offset + len <= cols,
        "slice_cols: range [", offset, ", ", offset + len,
        ") out of bounds for ", cols, " columns");
  Tensor<T> out({rows, len});
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < len; ++j) out.at(i, j) = a.value().at(i, offset + j);
  }
  return detail::make_node<T>(
      "slice_cols", std::move(out),
      {{a.node(),
        [offset, cols](const Var<T>& g) { return embed_cols(g, offset, cols); },
        true}});
}

template <typename T>
Var<T> embed_cols(const Var<T>& a, int offset, int total_cols) {
  check(a.value().rank() == 2, "embed_cols: need rank-2 input");
  const int rows = a.shape()[0], len = a.shape()[1];
  check(offset >= 0 && offset + len <= total_cols, "embed_cols: overflow");
  Tensor<T> out({rows, total_cols});
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < len; ++j) out.at(i, offset + j) = a.value().at(i, j);
  }
  return detail::make_node<T>(
      "embed_cols", std::move(out),
      {{a.node(),
        [offset, len](const Var<T>& g) { return slice_cols(g, offset, len); },
        true}});
}

// Concatenates rank-2 matrices with equal row counts along columns.
template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  check(!parts.empty(), "concat_cols: empty input list");
  const int rows = parts[0].shape()[0];
  int cols = 0;
  for (const auto& p : parts) {
    check(p.value().rank() == 2 && p.shape()[0] == rows,
          "concat_cols: row mismatch ", shape_str(p.shape()), " vs ",
          shape_str(parts[0].shape()));
    cols += p.shape()[1];
  }
  Tensor<T> out({rows, cols});
  std::vector<Edge<T>> edges;
  int offset = 0;
  for (const auto& p : parts) {
    const int len = p.shape()[1];
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < len; ++j) {
        out.at(i, offset + j) = p.value().at(i, j);
      }
    }
    const int off = offset;
    edges.push_back(
        {p.node(),
         [off, len](const Var<T>& g) { return slice_cols(g, off, len); },
         true});
    offset += len;
  }
  return detail::make_node<T>("concat_cols", std::move(out), std::move(edges));
}

// ---------------------------------------------------------------------------
// Matrix ops
// ---------------------------------------------------------------------------

template <typename T>
Var<T> transpose(const Var<T>& a) {
  check(a.value().rank() == 2, "transpose: need rank-2, got ",
        shape_str(a.shape()));
  const int m = a.shape()[0], n = a.shape()[1];
  Tensor<T> out({n, m});
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) out.at(j, i) = a.value().at(i, j);
  }
  return detail::make_node<T>(
      "transpose", std::move(out),
      {{a.node(), [](const Var<T>& g) { return transpose(g); }, true}});
}

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  check(a.value().rank() == 2 && b.value().rank() == 2,
        "matmul: need rank-2 operands, got ", shape_str(a.shape()), " and ",
        shape_str(b.shape()));
  check(a.shape()[1] == b.shape()[0], "matmul: inner dim mismatch ",
        shape_str(a.shape()), " x ", shape_str(b.shape()));
  const int m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  Tensor<T> out({m, n});
  const T* pa = a.value().data();
  const T* pb = b.value().data();
  T* po = out.data();
  for (int i = 0; i < m; ++i) {
    T* orow = po + static_cast<int64_t>(i) * n;
    for (int kk = 0; kk < k; ++kk) {
      const T av = pa[static_cast<int64_t>(i) * k + kk];
      const T* brow = pb + static_cast<int64_t>(kk) * n;
      for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return detail::make_node<T>(
      "matmul", std::move(out),
      {{a.node(), [b](const Var<T>& g) { return matmul(g, transpose(b)); },
        true},
       {b.node(), [a](const Var<T>& g) { return matmul(transpose(a), g); },
        true}});
}

// ---------------------------------------------------------------------------
// Nonlinearities
// ---------------------------------------------------------------------------

template <typename T>
Var<T> relu(const Var<T>& a) {
  Tensor<T> out(a.shape());
  Tensor<T> deriv(a.shape());
  for (int64_t i = 0; i < out.size(); ++i) {
    const T v = a.value()[i];
    out[i] = v > T(0) ? v : T(0);
    deriv[i] = v > T(0) ? T(1) : T(0);
  }
  Var<T> d = Var<T>::constant(std::move(deriv));
  return detail::make_node<T>(
      "relu", std::move(out),
      {{a.node(), [d](const Var<T>& g) { return mul(g, d); }, true}});
}

// Parametric exponential linear unit: identity for t >= 0 and
// alpha * (exp(t / alpha) - 1) for t < 0. C1 everywhere with slope 1 at 0.
template <typename T>
Var<T> pelu(const Var<T>& a, T alpha) {
  check(alpha > T(0), "pelu: alpha must be positive, got ", alpha);
  Tensor<T> out(a.shape());
  Tensor<T> deriv(a.shape());
  for (int64_t i = 0; i < out.size(); ++i) {
    const T v = a.value()[i];
    if (v >= T(0)) {
      out[i] = v;
      deriv[i] = T(1);
    } else {
      const T e = std::exp(v / alpha);
      out[i] = alpha * (e - T(1));
      deriv[i] = e;
    }
  }
  Var<T> d = Var<T>::constant(std::move(deriv));
  return detail::make_node<T>(
      "pelu", std::move(out),
      {{a.node(), [d](const Var<T>& g) { return mul(g, d); }, true}});
}

// 1/sqrt(x) on positive inputs; the derivative is captured as a constant,
// so this op is first-order only (sufficient: it only appears inside
// batch-norm statistics).
template <typename T>
Var<T> rsqrt(const Var<T>& a) {
  Tensor<T> out(a.shape());
  Tensor<T> deriv(a.shape());
  for (int64_t i = 0; i < out.size(); ++i) {
    const T v = a.value()[i];
    check(v > T(0), "rsqrt: non-positive input ", v);
    const T r = T(1) / std::sqrt(v);
    out[i] = r;
    deriv[i] = T(-0.5) * r * r * r;
  }
  Var<T> d = Var<T>::constant(std::move(deriv));
  return detail::make_node<T>(
      "rsqrt", std::move(out),
      {{a.node(), [d](const Var<T>& g) { return mul(g, d); }, true}});
}

// Channel-wise multiplication of a feature map by a coefficient vector;
// c has shape [C] or [1, 1, C] matching the last axis of z.
template <typename T>
Var<T> modulate(const Var<T>& z, const Var<T>& c) {
  Var<T> cv = c;
  if (c.value().rank() != 1) {
    cv = reshape(c, {static_cast<int>(c.size())});
  }
  check(!z.shape().empty() && z.shape().back() == cv.shape()[0],
        "modulate: channel mismatch, features ", shape_str(z.shape()),
        " coefficients ", shape_str(c.shape()));
  return mul(z, broadcast_channelwise(cv, z.shape()));
}

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

struct Pad {
  int top = 0, bottom = 0, left = 0, right = 0;
  static Pad uniform(int p) { return {p, p, p, p}; }
  // TensorFlow-style SAME padding: output size equals input size at
  // stride 1, with the extra pixel of even kernels on the bottom/right.
  static Pad same(int kh, int kw) {
    return {(kh - 1) / 2, kh / 2, (kw - 1) / 2, kw / 2};
  }
};

namespace detail {

struct ConvDims {
  int n, h, w, ci;        // input
  int kh, kw, co;         // kernel
  int ho, wo;             // output
  bool batched;
};

template <typename T>
ConvDims conv_dims(const std::vector<int>& xs, const std::vector<int>& ws,
                   int stride, Pad pad) {
  check(ws.size() == 4, "conv2d: kernel must be rank-4 [kh, kw, Cin, Cout]");
  check(xs.size() == 3 || xs.size() == 4,
        "conv2d: input must be [H, W, C] or [N, H, W, C], got rank ",
        xs.size());
  check(stride >= 1, "conv2d: stride must be >= 1, got ", stride);
  ConvDims d;
  d.batched = xs.size() == 4;
  d.n = d.batched ? xs[0] : 1;
  d.h = xs[d.batched ? 1 : 0];
  d.w = xs[d.batched ? 2 : 1];
  d.ci = xs[d.batched ? 3 : 2];
  d.kh = ws[0];
  d.kw = ws[1];
  check(ws[2] == d.ci, "conv2d: channel mismatch, input ", shape_str(xs),
        " kernel ", shape_str(ws));
  d.co = ws[3];
  const int ph = d.h + pad.top + pad.bottom;
  const int pw = d.w + pad.left + pad.right;
  check(d.kh <= ph && d.kw <= pw,
        "conv2d: kernel larger than padded input (kernel ", d.kh, "x", d.kw,
        ", padded input ", ph, "x", pw, ")");
  d.ho = (ph - d.kh) / stride + 1;
  d.wo = (pw - d.kw) / stride + 1;
  return d;
}

template <typename T>
Tensor<T> conv_forward(const Tensor<T>& x, const Tensor<T>& w, int stride,
                       Pad pad) {
  ConvDims d = conv_dims<T>(x.shape(), w.shape(), stride, pad);
  std::vector<int> out_shape =
      d.batched ? std::vector<int>{d.n, d.ho, d.wo, d.co}
                : std::vector<int>{d.ho, d.wo, d.co};
  Tensor<T> y(out_shape);
  const T* px = x.data();
  const T* pw = w.data();
  T* py = y.data();
  const int64_t x_img = static_cast<int64_t>(d.h) * d.w * d.ci;
  const int64_t y_img = static_cast<int64_t>(d.ho) * d.wo * d.co;
  for (int n = 0; n < d.n; ++n) {
    const T* xn = px + n * x_img;
    T* yn = py + n * y_img;
    for (int io = 0; io < d.ho; ++io) {
      for (int jo = 0; jo < d.wo; ++jo) {
        T* orow = yn + (static_cast<int64_t>(io) * d.wo + jo) * d.co;
        for (int a = 0; a < d.kh; ++a) {
          const int ii = io * stride + a - pad.top;
          if (ii < 0 || ii >= d.h) continue;
          for (int b = 0; b < d.kw; ++b) {
            const int jj = jo * stride + b - pad.left;
            if (jj < 0 || jj >= d.w) continue;
            const T* xrow = xn + (static_cast<int64_t>(ii) * d.w + jj) * d.ci;
            const T* wrow =
                pw + (static_cast<int64_t>(a) * d.kw + b) * d.ci * d.co;
            if (d.co == 1) {
              // Single output channel: contiguous dot over ci.
              T acc = 0;
              for (int ci = 0; ci < d.ci; ++ci) acc += xrow[ci] * wrow[ci];
              orow[0] += acc;
            } else {
              for (int ci = 0; ci < d.ci; ++ci) {
                const T xv = xrow[ci];
                const T* wv = wrow + static_cast<int64_t>(ci) * d.co;
                for (int co = 0; co < d.co; ++co) orow[co] += xv * wv[co];
              }
            }
          }
        }
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> conv_input_grad_kernel(const Tensor<T>& gy, const Tensor<T>& w,
                                 int stride, Pad pad,
                                 const std::vector<int>& x_shape) {
  ConvDims d = conv_dims<T>(x_shape, w.shape(), stride, pad);
  Tensor<T> gx(x_shape);
  const T* pg = gy.data();
  const T* pw = w.data();
  T* px = gx.data();
  const int64_t x_img = static_cast<int64_t>(d.h) * d.w * d.ci;
  const int64_t y_img = static_cast<int64_t>(d.ho) * d.wo * d.co;
  for (int n = 0; n < d.n; ++n) {
    const T* gn = pg + n * y_img;
    T* xn = px + n * x_img;
    for (int io = 0; io < d.ho; ++io) {
      for (int jo = 0; jo < d.wo; ++jo) {
        const T* grow = gn + (static_cast<int64_t>(io) * d.wo + jo) * d.co;
        for (int a = 0; a < d.kh; ++a) {
          const int ii = io * stride + a - pad.top;
          if (ii < 0 || ii >= d.h) continue;
          for (int b = 0; b < d.kw; ++b) {
            const int jj = jo * stride + b - pad.left;
            if (jj < 0 || jj >= d.w) continue;
            T* xrow = xn + (static_cast<int64_t>(ii) * d.w + jj) * d.ci;
            const T* wrow =
                pw + (static_cast<int64_t>(a) * d.kw + b) * d.ci * d.co;
            if (d.co == 1) {
              const T g = grow[0];
              for (int ci = 0; ci < d.ci; ++ci) xrow[ci] += wrow[ci] * g;
            } else {
              for (int ci = 0; ci < d.ci; ++ci) {
                const T* wv = wrow + static_cast<int64_t>(ci) * d.co;
                T acc = 0;
                for (int co = 0; co < d.co; ++co) acc += wv[co] * grow[co];
                xrow[ci] += acc;
              }
            }
          }
        }
      }
    }
  }
  return gx;
}

template <typename T>
Tensor<T> conv_weight_grad_kernel(const Tensor<T>& x, const Tensor<T>& gy,
                                  int stride, Pad pad,
                                  const std::vector<int>& w_shape) {
  ConvDims d = conv_dims<T>(x.shape(), w_shape, stride, pad);
  Tensor<T> gw(w_shape);
  const T* px = x.data();
  const T* pg = gy.data();
  T* pw = gw.data();
  const int64_t x_img = static_cast<int64_t>(d.h) * d.w * d.ci;
  const int64_t y_img = static_cast<int64_t>(d.ho) * d.wo * d.co;
  for (int n = 0; n < d.n; ++n) {
    const T* xn = px + n * x_img;
    const T* gn = pg + n * y_img;
    for (int io = 0; io < d.ho; ++io) {
      for (int jo = 0; jo < d.wo; ++jo) {
        const T* grow = gn + (static_cast<int64_t>(io) * d.wo + jo) * d.co;
        for (int a = 0; a < d.kh; ++a) {
          const int ii = io * stride + a - pad.top;
          if (ii < 0 || ii >= d.h) continue;
          for (int b = 0; b < d.kw; ++b) {
            const int jj = jo * stride + b - pad.left;
            if (jj < 0 || jj >= d.w) continue;
            const T* xrow = xn + (static_cast<int64_t>(ii) * d.w + jj) * d.ci;
            T* wrow = pw + (static_cast<int64_t>(a) * d.kw + b) * d.ci * d.co;
            if (d.co == 1) {
              const T g = grow[0];
              for (int ci = 0; ci < d.ci; ++ci) wrow[ci] += xrow[ci] * g;
            } else {
              for (int ci = 0; ci < d.ci; ++ci) {
                const T xv = xrow[ci];
                T* wv = wrow + static_cast<int64_t>(ci) * d.co;
                for (int co = 0; co < d.co; ++co) wv[co] += xv * grow[co];
              }
            }
          }
        }
      }
    }
  }
  return gw;
}

}  // namespace detail

template <typename T>
Var<T> conv2d_input_grad(const Var<T>& gy, const Var<T>& w, int stride,
                         Pad pad, const std::vector<int>& x_shape);
template <typename T>
Var<T> conv2d_weight_grad(const Var<T>& x, const Var<T>& gy, int stride,
                          Pad pad, const std::vector<int>& w_shape);

namespace detail {

// Forward convolution differentiable in x only (w or x held constant);
// used inside the adjoints of the two gradient ops below.
template <typename T>
Var<T> conv_fwd_wrt_input(const Var<T>& x, const Var<T>& w, int stride,
                          Pad pad) {
  Tensor<T> y = conv_forward(x.value(), w.value(), stride, pad);
  std::vector<int> x_shape = x.shape();
  return make_node<T>(
      "conv2d", std::move(y),
      {{x.node(),
        [w, stride, pad, x_shape](const Var<T>& g) {
          return conv2d_input_grad(g, w, stride, pad, x_shape);
        },
        true}});
}

template <typename T>
Var<T> conv_fwd_wrt_kernel(const Var<T>& x, const Var<T>& w, int stride,
                           Pad pad) {
  Tensor<T> y = conv_forward(x.value(), w.value(), stride, pad);
  std::vector<int> w_shape = w.shape();
  return make_node<T>(
      "conv2d", std::move(y),
      {{w.node(),
        [x, stride, pad, w_shape](const Var<T>& g) {
          return conv2d_weight_grad(x, g, stride, pad, w_shape);
        },
        true}});
}

}  // namespace detail

// Gradient of conv2d w.r.t. its input, as a first-class differentiable op
// (linear in gy; w is treated as a constant).
template <typename T>
Var<T> conv2d_input_grad(const Var<T>& gy, const Var<T>& w, int stride,
                         Pad pad, const std::vector<int>& x_shape) {
  Tensor<T> gx =
      detail::conv_input_grad_kernel(gy.value(), w.value(), stride, pad,
                                     x_shape);
  return detail::make_node<T>(
      "conv2d_input_grad", std::move(gx),
      {{gy.node(),
        [w, stride, pad](const Var<T>& g) {
          return detail::conv_fwd_wrt_input(g, w, stride, pad);
        },
        true}});
}

// Gradient of conv2d w.r.t. its kernel (linear in gy; x constant).
template <typename T>
Var<T> conv2d_weight_grad(const Var<T>& x, const Var<T>& gy, int stride,
                          Pad pad, const std::vector<int>& w_shape) {
  Tensor<T> gw =
      detail::conv_weight_grad_kernel(x.value(), gy.value(), stride, pad,
                                      w_shape);
  return detail::make_node<T>(
      "conv2d_weight_grad", std::move(gw),
      {{gy.node(),
        [x, stride, pad](const Var<T>& g) {
          return detail::conv_fwd_wrt_kernel(x, g, stride, pad);
        },
        true}});
}

// Multi-channel 2D convolution. x is [H, W, Cin] or [N, H, W, Cin], the
// kernel is [kh, kw, Cin, Cout].
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, int stride, Pad pad) {
  Tensor<T> y = detail::conv_forward(x.value(), w.value(), stride, pad);
  std::vector<int> x_shape = x.shape();
  std::vector<int> w_shape = w.shape();
  return detail::make_node<T>(
      "conv2d", std::move(y),
      {{x.node(),
        [w, stride, pad, x_shape](const Var<T>& g) {
          return conv2d_input_grad(g, w, stride, pad, x_shape);
        },
        true},
       {w.node(),
        [x, stride, pad, w_shape](const Var<T>& g) {
          return conv2d_weight_grad(x, g, stride, pad, w_shape);
        },
        true}});
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, int stride, int padding) {
  return conv2d(x, w, stride, Pad::uniform(padding));
}

// ---------------------------------------------------------------------------
// Operator sugar
// ---------------------------------------------------------------------------

template <typename T>
Var<T> operator+(const Var<T>& a, const Var<T>& b) { return add(a, b); }
template <typename T>
Var<T> operator-(const Var<T>& a, const Var<T>& b) { return sub(a, b); }
template <typename T>
Var<T> operator*(const Var<T>& a, const Var<T>& b) { return mul(a, b); }
template <typename T>
Var<T> operator*(T c, const Var<T>& a) { return smul(a, c); }
template <typename T>
Var<T> operator-(const Var<T>& a) { return neg(a); }

}  // namespace atom

#endif  // ATOM_OPS_HPP_
