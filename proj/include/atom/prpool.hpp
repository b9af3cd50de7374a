#ifndef ATOM_PRPOOL_HPP_
#define ATOM_PRPOOL_HPP_

#include <cmath>
#include <vector>

#include "atom/box.hpp"
#include "atom/ops.hpp"

// Precise ROI pooling: each output bin is the exact integral of the
// bilinearly interpolated feature surface over the bin rectangle, divided
// by the bin area. The integral of a bilinear patch is a closed-form
// polynomial per unit cell, so no sub-sampling is involved and the result
// is continuous and differentiable in the box coordinates.
//
// Coordinate convention: feature sample (i, j) sits at continuous
// coordinate x = j, y = i. Reads outside the grid are zero.

namespace atom {

template <typename T>
struct PooledFeature {
  Tensor<T> data;         // [K, K, D]
  BoundingBox source_box;
  int bins = 0;
};

namespace detail {

// Integrals of the two linear hat weights over [a0, a1], a sub-interval of
// the unit cell: weight (1-u) and weight u.
inline void hat_weights(double a0, double a1, double& w0, double& w1) {
  const double len = a1 - a0;
  const double half_sq = 0.5 * (a1 * a1 - a0 * a0);
  w0 = len - half_sq;
  w1 = half_sq;
}

template <typename T>
inline const T* sample_row(const Tensor<T>& map, int i, int j, int h, int w) {
  if (i < 0 || i >= h || j < 0 || j >= w) return nullptr;
  return map.data() + (static_cast<int64_t>(i) * w + j) * map.shape()[2];
}

// Integral of the surface over [x0,x1] x [y0,y1], accumulated per channel
// into out (length D, not cleared).
template <typename T>
void integrate_rect(const Tensor<T>& map, double x0, double x1, double y0,
                    double y1, double scale, T* out) {
  const int h = map.shape()[0], w = map.shape()[1], d = map.shape()[2];
  const int jx_lo = std::max(static_cast<int>(std::floor(x0)), -1);
  const int jx_hi = std::min(static_cast<int>(std::ceil(x1)) - 1, w - 1);
  const int iy_lo = std::max(static_cast<int>(std::floor(y0)), -1);
  const int iy_hi = std::min(static_cast<int>(std::ceil(y1)) - 1, h - 1);
  for (int iy = iy_lo; iy <= iy_hi; ++iy) {
    const double b0 = std::max(y0, static_cast<double>(iy)) - iy;
    const double b1 = std::min(y1, static_cast<double>(iy + 1)) - iy;
    if (b1 <= b0) continue;
    double wv0, wv1;
    hat_weights(b0, b1, wv0, wv1);
    for (int jx = jx_lo; jx <= jx_hi; ++jx) {
      const double a0 = std::max(x0, static_cast<double>(jx)) - jx;
      const double a1 = std::min(x1, static_cast<double>(jx + 1)) - jx;
      if (a1 <= a0) continue;
      double wu0, wu1;
      hat_weights(a0, a1, wu0, wu1);
      const T* f00 = sample_row(map, iy, jx, h, w);
      const T* f01 = sample_row(map, iy, jx + 1, h, w);
      const T* f10 = sample_row(map, iy + 1, jx, h, w);
      const T* f11 = sample_row(map, iy + 1, jx + 1, h, w);
      const double w00 = wu0 * wv0 * scale, w01 = wu1 * wv0 * scale;
      const double w10 = wu0 * wv1 * scale, w11 = wu1 * wv1 * scale;
      for (int c = 0; c < d; ++c) {
        double acc = 0;
        if (f00) acc += w00 * f00[c];
        if (f01) acc += w01 * f01[c];
        if (f10) acc += w10 * f10[c];
        if (f11) acc += w11 * f11[c];
        out[c] += static_cast<T>(acc);
      }
    }
  }
}

// Adjoint of integrate_rect: scatters go (length D) into gmap.
template <typename T>
void integrate_rect_adjoint(Tensor<T>& gmap, double x0, double x1, double y0,
                            double y1, double scale, const T* go) {
  const int h = gmap.shape()[0], w = gmap.shape()[1], d = gmap.shape()[2];
  auto grow = [&](int i, int j) -> T* {
    if (i < 0 || i >= h || j < 0 || j >= w) return nullptr;
    return gmap.data() + (static_cast<int64_t>(i) * w + j) * d;
  };
  const int jx_lo = std::max(static_cast<int>(std::floor(x0)), -1);
  const int jx_hi = std::min(static_cast<int>(std::ceil(x1)) - 1, w - 1);
  const int iy_lo = std::max(static_cast<int>(std::floor(y0)), -1);
  const int iy_hi = std::min(static_cast<int>(std::ceil(y1)) - 1, h - 1);
  for (int iy = iy_lo; iy <= iy_hi; ++iy) {
    const double b0 = std::max(y0, static_cast<double>(iy)) - iy;
    const double b1 = std::min(y1, static_cast<double>(iy + 1)) - iy;
    if (b1 <= b0) continue;
    double wv0, wv1;
    hat_weights(b0, b1, wv0, wv1);
    for (int jx = jx_lo; jx <= jx_hi; ++jx) {
      const double a0 = std::max(x0, static_cast<double>(jx)) - jx;
      const double a1 = std::min(x1, static_cast<double>(jx + 1)) - jx;
      if (a1 <= a0) continue;
      double wu0, wu1;
      hat_weights(a0, a1, wu0, wu1);
      T* g00 = grow(iy, jx);
      T* g01 = grow(iy, jx + 1);
      T* g10 = grow(iy + 1, jx);
      T* g11 = grow(iy + 1, jx + 1);
      const double w00 = wu0 * wv0 * scale, w01 = wu1 * wv0 * scale;
      const double w10 = wu0 * wv1 * scale, w11 = wu1 * wv1 * scale;
      for (int c = 0; c < d; ++c) {
        const T g = go[c];
        if (g00) g00[c] += static_cast<T>(w00 * g);
        if (g01) g01[c] += static_cast<T>(w01 * g);
        if (g10) g10[c] += static_cast<T>(w10 * g);
        if (g11) g11[c] += static_cast<T>(w11 * g);
      }
    }
  }
}

// Line integral of the surface along the vertical line x = c over
// y in [y0, y1], per channel (accumulated into out).
template <typename T>
void line_integral_x(const Tensor<T>& map, double c, double y0, double y1,
                     T* out) {
  const int h = map.shape()[0], w = map.shape()[1], d = map.shape()[2];
  const int jx = static_cast<int>(std::floor(c));
  if (jx < -1 || jx > w - 1) return;
  const double u = c - jx;
  const int iy_lo = std::max(static_cast<int>(std::floor(y0)), -1);
  const int iy_hi = std::min(static_cast<int>(std::ceil(y1)) - 1, h - 1);
  for (int iy = iy_lo; iy <= iy_hi; ++iy) {
    const double b0 = std::max(y0, static_cast<double>(iy)) - iy;
    const double b1 = std::min(y1, static_cast<double>(iy + 1)) - iy;
    if (b1 <= b0) continue;
    double wv0, wv1;
    hat_weights(b0, b1, wv0, wv1);
    const T* f00 = sample_row(map, iy, jx, h, w);
    const T* f01 = sample_row(map, iy, jx + 1, h, w);
    const T* f10 = sample_row(map, iy + 1, jx, h, w);
    const T* f11 = sample_row(map, iy + 1, jx + 1, h, w);
    for (int cch = 0; cch < d; ++cch) {
      const double g0 = (f00 ? (1 - u) * f00[cch] : 0.0) +
                        (f01 ? u * f01[cch] : 0.0);
      const double g1 = (f10 ? (1 - u) * f10[cch] : 0.0) +
                        (f11 ? u * f11[cch] : 0.0);
      out[cch] += static_cast<T>(g0 * wv0 + g1 * wv1);
    }
  }
}

// Line integral along the horizontal line y = c over x in [x0, x1].
template <typename T>
void line_integral_y(const Tensor<T>& map, double c, double x0, double x1,
                     T* out) {
  const int h = map.shape()[0], w = map.shape()[1], d = map.shape()[2];
  const int iy = static_cast<int>(std::floor(c));
  if (iy < -1 || iy > h - 1) return;
  const double v = c - iy;
  const int jx_lo = std::max(static_cast<int>(std::floor(x0)), -1);
  const int jx_hi = std::min(static_cast<int>(std::ceil(x1)) - 1, w - 1);
  for (int jx = jx_lo; jx <= jx_hi; ++jx) {
    const double a0 = std::max(x0, static_cast<double>(jx)) - jx;
    const double a1 = std::min(x1, static_cast<double>(jx + 1)) - jx;
    if (a1 <= a0) continue;
    double wu0, wu1;
    hat_weights(a0, a1, wu0, wu1);
    const T* f00 = sample_row(map, iy, jx, h, w);
    const T* f01 = sample_row(map, iy, jx + 1, h, w);
    const T* f10 = sample_row(map, iy + 1, jx, h, w);
    const T* f11 = sample_row(map, iy + 1, jx + 1, h, w);
    for (int cch = 0; cch < d; ++cch) {
      const double g0 = (f00 ? (1 - v) * f00[cch] : 0.0) +
                        (f10 ? v * f10[cch] : 0.0);
      const double g1 = (f01 ? (1 - v) * f01[cch] : 0.0) +
                        (f11 ? v * f11[cch] : 0.0);
      out[cch] += static_cast<T>(g0 * wu0 + g1 * wu1);
    }
  }
}

}  // namespace detail

// Bilinear interpolation of the feature map at a continuous point;
// reads outside the grid are zero.
template <typename T>
Tensor<T> bilinear_at(const Tensor<T>& map, double x, double y) {
  check(map.rank() == 3, "bilinear_at: map must be [H, W, D]");
  const int h = map.shape()[0], w = map.shape()[1], d = map.shape()[2];
  const int jx = static_cast<int>(std::floor(x));
  const int iy = static_cast<int>(std::floor(y));
  const double u = x - jx, v = y - iy;
  Tensor<T> out({d});
  const T* f00 = detail::sample_row(map, iy, jx, h, w);
  const T* f01 = detail::sample_row(map, iy, jx + 1, h, w);
  const T* f10 = detail::sample_row(map, iy + 1, jx, h, w);
  const T* f11 = detail::sample_row(map, iy + 1, jx + 1, h, w);
  for (int c = 0; c < d; ++c) {
    double acc = 0;
    if (f00) acc += (1 - u) * (1 - v) * f00[c];
    if (f01) acc += u * (1 - v) * f01[c];
    if (f10) acc += (1 - u) * v * f10[c];
    if (f11) acc += u * v * f11[c];
    out[c] = static_cast<T>(acc);
  }
  return out;
}

template <typename T>
Tensor<T> prpool_forward(const Tensor<T>& map, const BoundingBox& box, int k) {
  check(map.rank() == 3, "prpool: map must be [H, W, D]");
  check(k >= 1, "prpool: bin count must be >= 1, got ", k);
  check(box.w > 1e-6 && box.h > 1e-6, "prpool: degenerate box ", box.w, "x",
        box.h);
  const int d = map.shape()[2];
  const double bw = box.w / k, bh = box.h / k;
  const double x0 = box.x1(), y0 = box.y1();
  Tensor<T> out({k, k, d});
  const double inv_area = 1.0 / (bw * bh);
  for (int p = 0; p < k; ++p) {
    for (int q = 0; q < k; ++q) {
      detail::integrate_rect(map, x0 + q * bw, x0 + (q + 1) * bw,
                             y0 + p * bh, y0 + (p + 1) * bh, inv_area,
                             out.data() + (static_cast<int64_t>(p) * k + q) * d);
    }
  }
  return out;
}

template <typename T>
PooledFeature<T> prpool(const Tensor<T>& map, const BoundingBox& box, int k) {
  return PooledFeature<T>{prpool_forward(map, box, k), box, k};
}

namespace detail {

// Gradient of the pooled bins w.r.t. (cx, cy, w, h). Derivatives w.r.t. a
// moving integration boundary are line integrals of the surface along that
// edge; the 1/area factor contributes the -value/size terms.
template <typename T>
Tensor<T> prpool_box_grad(const Tensor<T>& map, const BoundingBox& box, int k,
                          const Tensor<T>& pooled, const Tensor<T>& go) {
  const int d = map.shape()[2];
  const double bw = box.w / k, bh = box.h / k;
  const double x0 = box.x1(), y0 = box.y1();
  const double inv_area = 1.0 / (bw * bh);

  // Vertical cell edges: (k+1) x k x d, horizontal: k x (k+1) x d.
  std::vector<T> lx(static_cast<size_t>(k + 1) * k * d, T(0));
  std::vector<T> ly(static_cast<size_t>(k) * (k + 1) * d, T(0));
  for (int e = 0; e <= k; ++e) {
    for (int p = 0; p < k; ++p) {
      line_integral_x(map, x0 + e * bw, y0 + p * bh, y0 + (p + 1) * bh,
                      lx.data() + (static_cast<size_t>(e) * k + p) * d);
    }
    for (int q = 0; q < k; ++q) {
      line_integral_y(map, y0 + e * bh, x0 + q * bw, x0 + (q + 1) * bw,
                      ly.data() + (static_cast<size_t>(q) * (k + 1) + e) * d);
    }
  }

  double gcx = 0, gcy = 0, gw = 0, gh = 0;
  for (int p = 0; p < k; ++p) {
    for (int q = 0; q < k; ++q) {
      const T* gbin = go.data() + (static_cast<int64_t>(p) * k + q) * d;
      const T* vbin = pooled.data() + (static_cast<int64_t>(p) * k + q) * d;
      const T* lx0 = lx.data() + (static_cast<size_t>(q) * k + p) * d;
      const T* lx1 = lx.data() + (static_cast<size_t>(q + 1) * k + p) * d;
      const T* ly0 = ly.data() + (static_cast<size_t>(q) * (k + 1) + p) * d;
      const T* ly1 = ly.data() + (static_cast<size_t>(q) * (k + 1) + p + 1) * d;
      // d(edge x-coordinate)/dw for the left/right edges of bin column q.
      const double ex0 = -0.5 + static_cast<double>(q) / k;
      const double ex1 = -0.5 + static_cast<double>(q + 1) / k;
      const double ey0 = -0.5 + static_cast<double>(p) / k;
      const double ey1 = -0.5 + static_cast<double>(p + 1) / k;
      for (int c = 0; c < d; ++c) {
        const double g = gbin[c];
        gcx += g * (lx1[c] - lx0[c]) * inv_area;
        gcy += g * (ly1[c] - ly0[c]) * inv_area;
        gw += g * ((lx1[c] * ex1 - lx0[c] * ex0) * inv_area -
                   vbin[c] / box.w);
        gh += g * ((ly1[c] * ey1 - ly0[c] * ey0) * inv_area -
                   vbin[c] / box.h);
      }
    }
  }
  return Tensor<T>({4}, {static_cast<T>(gcx), static_cast<T>(gcy),
                         static_cast<T>(gw), static_cast<T>(gh)});
}

template <typename T>
Tensor<T> prpool_map_grad(const std::vector<int>& map_shape,
                          const BoundingBox& box, int k, const Tensor<T>& go) {
  Tensor<T> gmap(map_shape);
  const int d = map_shape[2];
  const double bw = box.w / k, bh = box.h / k;
  const double x0 = box.x1(), y0 = box.y1();
  const double inv_area = 1.0 / (bw * bh);
  for (int p = 0; p < k; ++p) {
    for (int q = 0; q < k; ++q) {
      integrate_rect_adjoint(gmap, x0 + q * bw, x0 + (q + 1) * bw,
                             y0 + p * bh, y0 + (p + 1) * bh, inv_area,
                             go.data() + (static_cast<int64_t>(p) * k + q) * d);
    }
  }
  return gmap;
}

}  // namespace detail

// Differentiable PrPool. `box` is a length-4 variable (cx, cy, w, h) in
// feature-map coordinates. First-order only: neither backward rule
// participates in graph-building sweeps.
template <typename T>
Var<T> prpool_op(const Var<T>& map, const Var<T>& box, int k) {
  check(box.value().rank() == 1 && box.size() == 4,
        "prpool: box variable must have shape [4]");
  const BoundingBox b(box.value()[0], box.value()[1], box.value()[2],
                      box.value()[3]);
  Tensor<T> pooled = prpool_forward(map.value(), b, k);
  Tensor<T> pooled_copy = pooled;
  std::vector<int> map_shape = map.shape();
  Var<T> map_capture = map;
  return detail::make_node<T>(
      "prpool", std::move(pooled_copy),
      {{map.node(),
        [map_shape, b, k](const Var<T>& g) {
          return Var<T>::constant(
              detail::prpool_map_grad<T>(map_shape, b, k, g.value()));
        },
        false},
       {box.node(),
        [map_capture, b, k, pooled](const Var<T>& g) {
          return Var<T>::constant(detail::prpool_box_grad(
              map_capture.value(), b, k, pooled, g.value()));
        },
        false}});
}

}  // namespace atom

#endif  // ATOM_PRPOOL_HPP_
