#ifndef ATOM_PATCH_HPP_
#define ATOM_PATCH_HPP_

#include <cmath>

#include "atom/box.hpp"
#include "atom/imageops.hpp"

namespace atom {

// Affine map between patch pixels and frame pixels. Patch pixel p sits at
// frame coordinate origin + (p + 0.5) * step - 0.5, so the map is exactly
// invertible for boxes.
struct PatchTransform {
  double origin_x = 0, origin_y = 0;
  double step = 1;  // frame pixels per patch pixel

  double to_patch_x(double frame_x) const {
    return (frame_x - origin_x) / step - 0.5;
  }
  double to_patch_y(double frame_y) const {
    return (frame_y - origin_y) / step - 0.5;
  }
  double to_frame_x(double patch_x) const {
    return origin_x + (patch_x + 0.5) * step;
  }
  double to_frame_y(double patch_y) const {
    return origin_y + (patch_y + 0.5) * step;
  }

  BoundingBox to_patch(const BoundingBox& b) const {
    return BoundingBox(to_patch_x(b.cx), to_patch_y(b.cy), b.w / step,
                       b.h / step);
  }
  BoundingBox to_frame(const BoundingBox& b) const {
    return BoundingBox(to_frame_x(b.cx), to_frame_y(b.cy), b.w * step,
                       b.h * step);
  }
};

struct Patch {
  TensorF image;  // [out_size, out_size, 3]
  PatchTransform transform;
};

// Square crop of side area_factor * sqrt(w * h) centered on the box,
// bilinearly resampled to out_size x out_size and zero-padded outside the
// frame.
inline Patch extract_patch(const TensorF& frame, const BoundingBox& box,
                           double area_factor, int out_size) {
  check(frame.rank() == 3 && frame.size() > 0, "extract_patch: empty frame");
  check(box.w > 0 && box.h > 0, "extract_patch: invalid box size ", box.w,
        "x", box.h);
  const double side = area_factor * std::sqrt(box.w * box.h);
  Patch p;
  p.transform.origin_x = box.cx - 0.5 * side;
  p.transform.origin_y = box.cy - 0.5 * side;
  p.transform.step = side / out_size;
  p.image = crop_resample(frame, box.cx, box.cy, side, out_size);
  return p;
}

// Box coordinates from patch pixels to feature-map cells for a backbone
// level with the given stride (feature cell i covers patch pixels
// [i*s, (i+1)*s), its center sitting at patch coordinate i*s + (s-1)/2).
inline BoundingBox box_to_feature_coords(const BoundingBox& b, int stride) {
  const double off = 0.5 * (stride - 1);
  return BoundingBox((b.cx - off) / stride, (b.cy - off) / stride,
                     b.w / stride, b.h / stride);
}

}  // namespace atom

#endif  // ATOM_PATCH_HPP_
