#include "atom/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "atom/common.hpp"

namespace atom {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Wave {
  double ax, ay, phase, amp;
};

struct Color {
  double r, g, b;
};

// Signed distance to the target silhouette in its local (unrotated) frame.
double shape_sdf(TargetShape shape, double px, double py, double hw,
                 double hh) {
  switch (shape) {
    case TargetShape::kRectangle: {
      const double qx = std::abs(px) - hw;
      const double qy = std::abs(py) - hh;
      const double ox = std::max(qx, 0.0), oy = std::max(qy, 0.0);
      return std::sqrt(ox * ox + oy * oy) + std::min(std::max(qx, qy), 0.0);
    }
    case TargetShape::kEllipse: {
      const double k = std::sqrt((px * px) / (hw * hw) + (py * py) / (hh * hh));
      return (k - 1.0) * std::min(hw, hh);
    }
    case TargetShape::kTriangle: {
      // Isosceles triangle: apex up, base at the bottom of the box.
      const double x = std::abs(px);
      // Edge from apex (0, -hh) to base corner (hw, hh).
      const double ex = hw, ey = 2 * hh;
      const double vx = x - 0.0, vy = py + hh;
      double t = std::clamp((vx * ex + vy * ey) / (ex * ex + ey * ey), 0.0, 1.0);
      const double dx = vx - ex * t, dy = vy - ey * t;
      double d = std::sqrt(dx * dx + dy * dy);
      const double base_d = hh - py;  // distance below base edge
      const bool inside = py <= hh && (vy * ex - vx * ey) >= 0;
      d = std::min(d, std::abs(base_d));
      return inside ? -d : d;
    }
  }
  return 1e9;
}

struct ObjectState {
  double cx, cy, hw, hh, angle;
  Color color;
};

// Bounding box of the rotated silhouette.
BoundingBox object_bbox(TargetShape shape, const ObjectState& o) {
  const double c = std::cos(o.angle), s = std::sin(o.angle);
  if (shape == TargetShape::kEllipse) {
    const double ex =
        std::sqrt(o.hw * o.hw * c * c + o.hh * o.hh * s * s);
    const double ey =
        std::sqrt(o.hw * o.hw * s * s + o.hh * o.hh * c * c);
    return BoundingBox(o.cx, o.cy, 2 * ex, 2 * ey);
  }
  std::vector<std::pair<double, double>> pts;
  if (shape == TargetShape::kRectangle) {
    pts = {{-o.hw, -o.hh}, {o.hw, -o.hh}, {-o.hw, o.hh}, {o.hw, o.hh}};
  } else {
    pts = {{0.0, -o.hh}, {-o.hw, o.hh}, {o.hw, o.hh}};
  }
  double x0 = 1e18, x1 = -1e18, y0 = 1e18, y1 = -1e18;
  for (auto [x, y] : pts) {
    const double rx = o.cx + c * x - s * y;
    const double ry = o.cy + s * x + c * y;
    x0 = std::min(x0, rx);
    x1 = std::max(x1, rx);
    y0 = std::min(y0, ry);
    y1 = std::max(y1, ry);
  }
  return BoundingBox::from_corners(x0, y0, x1, y1);
}

// Renders an object over the frame with a 1-px soft edge.
void render_object(TensorF& frame, TargetShape shape, const ObjectState& o) {
  const int h = frame.shape()[0], w = frame.shape()[1];
  const BoundingBox bb = object_bbox(shape, o);
  const int i0 = std::max(0, static_cast<int>(std::floor(bb.y1() - 2)));
  const int i1 = std::min(h - 1, static_cast<int>(std::ceil(bb.y2() + 2)));
  const int j0 = std::max(0, static_cast<int>(std::floor(bb.x1() - 2)));
  const int j1 = std::min(w - 1, static_cast<int>(std::ceil(bb.x2() + 2)));
  const double c = std::cos(o.angle), s = std::sin(o.angle);
  for (int i = i0; i <= i1; ++i) {
    for (int j = j0; j <= j1; ++j) {
      const double dx = j - o.cx, dy = i - o.cy;
      const double lx = c * dx + s * dy;
      const double ly = -s * dx + c * dy;
      const double d = shape_sdf(shape, lx, ly, o.hw, o.hh);
      const double cov = std::clamp(0.5 - d, 0.0, 1.0);
      if (cov <= 0) continue;
      // Slight radial shading so the object is not a flat color.
      const double shade =
          1.0 - 0.15 * std::min(1.0, (lx * lx + ly * ly) /
                                         (o.hw * o.hw + o.hh * o.hh));
      frame.at(i, j, 0) = static_cast<float>(
          (1 - cov) * frame.at(i, j, 0) + cov * o.color.r * shade);
      frame.at(i, j, 1) = static_cast<float>(
          (1 - cov) * frame.at(i, j, 1) + cov * o.color.g * shade);
      frame.at(i, j, 2) = static_cast<float>(
          (1 - cov) * frame.at(i, j, 2) + cov * o.color.b * shade);
    }
  }
}

}  // namespace

Sequence synth_sequence(const SynthSpec& spec, uint64_t seed) {
  check(spec.n_frames >= 1, "synth: need at least one frame");
  check(spec.width >= 32 && spec.height >= 32, "synth: frame too small");

  const double max_growth =
      std::max({1.0, spec.scale_factor * std::sqrt(spec.aspect_factor),
                spec.scale_factor / std::sqrt(std::min(1.0, spec.aspect_factor))});
  const double max_side =
      std::max(spec.target_w, spec.target_h) * max_growth * 1.5;
  check(max_side < std::min(spec.width, spec.height),
        "synth: target (up to ", max_side, " px with drift) does not fit a ",
        spec.width, "x", spec.height, " frame");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  // Background: smooth random waves per channel over a base color.
  Color base{0.35 + 0.3 * unit(rng), 0.35 + 0.3 * unit(rng),
             0.35 + 0.3 * unit(rng)};
  std::vector<Wave> waves(6);
  for (auto& wv : waves) {
    wv.ax = (unit(rng) - 0.5) * 0.15;
    wv.ay = (unit(rng) - 0.5) * 0.15;
    wv.phase = unit(rng) * 2 * kPi;
    wv.amp = spec.background_amplitude * (0.3 + 0.7 * unit(rng));
  }

  // Target color with guaranteed contrast against the background base.
  Color target_color{};
  for (int tries = 0; tries < 100; ++tries) {
    target_color = {unit(rng), unit(rng), unit(rng)};
    const double dist = std::abs(target_color.r - base.r) +
                        std::abs(target_color.g - base.g) +
                        std::abs(target_color.b - base.b);
    if (dist > 0.8) break;
  }

  // Motion: straight line with wall bounces.
  const double margin = 0.5 * max_side + 6;
  double cx = margin + unit(rng) * (spec.width - 2 * margin);
  double cy = margin + unit(rng) * (spec.height - 2 * margin);
  double dir = unit(rng) * 2 * kPi;
  double vx = spec.speed * std::cos(dir);
  double vy = spec.speed * std::sin(dir);

  // Distractors: same shape, shifted color, paths crossing the target's.
  struct Distractor {
    double cx0, cy0, vx, vy, size_scale;
    Color color;
    int t_cross;
  };
  std::vector<Distractor> ds;
  for (int k = 0; k < spec.distractors; ++k) {
    Distractor d;
    d.t_cross = static_cast<int>((0.25 + 0.5 * unit(rng)) * spec.n_frames);
    const double ang = unit(rng) * 2 * kPi;
    const double sp = spec.speed * (0.8 + 0.6 * unit(rng)) + 0.5;
    d.vx = sp * std::cos(ang);
    d.vy = sp * std::sin(ang);
    d.size_scale = 0.85 + 0.3 * unit(rng);
    const double shift = spec.distractor_color_shift;
    d.color = {std::clamp(target_color.r + shift * (unit(rng) - 0.5) * 2 +
                              (unit(rng) < 0.5 ? -shift : shift) * 0.5,
                          0.0, 1.0),
               std::clamp(target_color.g + shift * (unit(rng) - 0.5) * 2, 0.0,
                          1.0),
               std::clamp(target_color.b + shift * (unit(rng) - 0.5) * 2, 0.0,
                          1.0)};
    d.cx0 = d.cy0 = 0;  // fixed up once the target path is known
    ds.push_back(d);
  }

  Sequence seq;
  seq.name = spec.name;
  seq.frames.reserve(static_cast<size_t>(spec.n_frames));
  seq.ground_truth.reserve(static_cast<size_t>(spec.n_frames));

  // Precompute the target path to anchor distractor crossings.
  std::vector<std::pair<double, double>> path(
      static_cast<size_t>(spec.n_frames));
  {
    double px = cx, py = cy, pvx = vx, pvy = vy;
    for (int t = 0; t < spec.n_frames; ++t) {
      path[static_cast<size_t>(t)] = {px, py};
      px += pvx;
      py += pvy;
      if (px < margin || px > spec.width - margin) pvx = -pvx;
      if (py < margin || py > spec.height - margin) pvy = -pvy;
      px = std::clamp(px, margin - 1, spec.width - margin + 1);
      py = std::clamp(py, margin - 1, spec.height - margin + 1);
    }
  }
  for (auto& d : ds) {
    const auto [tx, ty] = path[static_cast<size_t>(
        std::clamp(d.t_cross, 0, spec.n_frames - 1))];
    // Pass within roughly one target size of the crossing point.
    const double off = (unit(rng) < 0.5 ? -1 : 1) *
                       (0.8 + 0.6 * unit(rng)) *
                       std::max(spec.target_w, spec.target_h);
    const double nx = -d.vy, ny = d.vx;
    const double nn = std::hypot(nx, ny) + 1e-9;
    d.cx0 = tx + off * nx / nn - d.vx * d.t_cross;
    d.cy0 = ty + off * ny / nn - d.vy * d.t_cross;
  }

  for (int t = 0; t < spec.n_frames; ++t) {
    const double u = spec.n_frames > 1
                         ? static_cast<double>(t) / (spec.n_frames - 1)
                         : 0.0;
    TensorF frame({spec.height, spec.width, 3});
    for (int i = 0; i < spec.height; ++i) {
      for (int j = 0; j < spec.width; ++j) {
        double mod = 0;
        for (const auto& wv : waves) {
          mod += wv.amp * std::sin(wv.ax * j + wv.ay * i + wv.phase);
        }
        frame.at(i, j, 0) = static_cast<float>(std::clamp(base.r + mod, 0.0, 1.0));
        frame.at(i, j, 1) = static_cast<float>(std::clamp(base.g + mod * 0.8, 0.0, 1.0));
        frame.at(i, j, 2) = static_cast<float>(std::clamp(base.b + mod * 1.2, 0.0, 1.0));
      }
    }

    const double scale = std::pow(spec.scale_factor, u);
    const double aspect = std::pow(spec.aspect_factor, u);
    ObjectState target;
    target.cx = path[static_cast<size_t>(t)].first;
    target.cy = path[static_cast<size_t>(t)].second;
    target.hw = 0.5 * spec.target_w * scale * std::sqrt(aspect);
    target.hh = 0.5 * spec.target_h * scale / std::sqrt(aspect);
    target.angle = spec.rotation_deg * u * kPi / 180.0;
    target.color = target_color;

    for (const auto& d : ds) {
      ObjectState od;
      od.cx = d.cx0 + d.vx * t;
      od.cy = d.cy0 + d.vy * t;
      od.hw = target.hw * d.size_scale;
      od.hh = target.hh * d.size_scale;
      od.angle = target.angle;
      od.color = d.color;
      render_object(frame, spec.shape, od);
    }
    render_object(frame, spec.shape, target);

    seq.frames.push_back(std::move(frame));
    seq.ground_truth.push_back(object_bbox(spec.shape, target));
  }
  return seq;
}

}  // namespace atom
