#ifndef ATOM_SYNTH_HPP_
#define ATOM_SYNTH_HPP_

#include <cstdint>
#include <string>

#include "atom/sequence.hpp"

namespace atom {

enum class TargetShape { kRectangle, kEllipse, kTriangle };

// Parameters of a rendered sequence. Drift factors are totals over the
// whole sequence (e.g. aspect_factor = 2 doubles the aspect ratio between
// the first and last frame).
struct SynthSpec {
  std::string name = "synth";
  int n_frames = 100;
  int width = 256;
  int height = 192;
  TargetShape shape = TargetShape::kRectangle;
  double target_w = 44;
  double target_h = 44;
  double speed = 1.5;            // translation, px/frame
  double scale_factor = 1.0;     // total size drift
  double aspect_factor = 1.0;    // total aspect drift
  double rotation_deg = 0.0;     // total in-plane rotation
  int distractors = 0;
  double distractor_color_shift = 0.25;
  double background_amplitude = 0.15;
};

// Renders a sequence with exact ground-truth boxes. Deterministic under
// the seed; distractors are same-shape objects with perturbed color whose
// paths cross near the target.
Sequence synth_sequence(const SynthSpec& spec, uint64_t seed);

}  // namespace atom

#endif  // ATOM_SYNTH_HPP_
