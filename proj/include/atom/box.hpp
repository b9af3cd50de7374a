#ifndef ATOM_BOX_HPP_
#define ATOM_BOX_HPP_

#include <algorithm>
#include <array>
#include <cmath>

#include "atom/common.hpp"

namespace atom {

// Axis-aligned box in pixel coordinates, stored as center + size.
struct BoundingBox {
  double cx = 0, cy = 0, w = 0, h = 0;

  BoundingBox() = default;
  BoundingBox(double cx_, double cy_, double w_, double h_)
      : cx(cx_), cy(cy_), w(w_), h(h_) {}

  static BoundingBox from_corners(double x1, double y1, double x2, double y2) {
    return BoundingBox(0.5 * (x1 + x2), 0.5 * (y1 + y2), x2 - x1, y2 - y1);
  }
  // Corner + size, the ground-truth text file convention.
  static BoundingBox from_xywh(double x, double y, double w, double h) {
    return BoundingBox(x + 0.5 * w, y + 0.5 * h, w, h);
  }

  double x1() const { return cx - 0.5 * w; }
  double y1() const { return cy - 0.5 * h; }
  double x2() const { return cx + 0.5 * w; }
  double y2() const { return cy + 0.5 * h; }
  double area() const { return w * h; }
  bool valid() const {
    return w > 0 && h > 0 && std::isfinite(cx) && std::isfinite(cy) &&
           std::isfinite(w) && std::isfinite(h);
  }
};

// Jaccard index of two boxes; 0 when disjoint, 1 iff identical.
inline double geometric_iou(const BoundingBox& a, const BoundingBox& b) {
  check(a.w > 0 && a.h > 0 && b.w > 0 && b.h > 0,
        "geometric_iou: boxes must have positive dimensions");
  const double ix = std::max(
      0.0, std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1()));
  const double iy = std::max(
      0.0, std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1()));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return inter / uni;
}

// (cx/w, cy/h, log w, log h) encoding of a box.
inline std::array<double, 4> box_encode(const BoundingBox& b) {
  check(b.w > 0 && b.h > 0, "box_encode: non-positive size ", b.w, "x", b.h);
  return {b.cx / b.w, b.cy / b.h, std::log(b.w), std::log(b.h)};
}

inline BoundingBox box_decode(const std::array<double, 4>& t) {
  for (double v : t) check(std::isfinite(v), "box_decode: non-finite entry");
  const double w = std::exp(t[2]);
  const double h = std::exp(t[3]);
  return BoundingBox(t[0] * w, t[1] * h, w, h);
}

}  // namespace atom

#endif  // ATOM_BOX_HPP_
