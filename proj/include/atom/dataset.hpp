#ifndef ATOM_DATASET_HPP_
#define ATOM_DATASET_HPP_

#include <vector>

#include "atom/iou_net.hpp"
#include "atom/patch.hpp"
#include "atom/synth.hpp"

// Synthetic offline-training data: rendered sequences feeding the pair
// sampler contract. Real video data can replace this by implementing the
// same PairSampler signature.

namespace atom {

struct DatasetConfig {
  int sequences = 24;
  int frames_per_sequence = 60;
  int max_frame_gap = 50;
  double test_center_jitter = 0.15;  // fraction of target size
  double test_scale_jitter = 0.15;   // log-scale sigma
  double area_factor = 5.0;
  int patch_size = 288;
};

class SynthDataset {
 public:
  static SynthDataset generate(const DatasetConfig& cfg, uint64_t seed) {
    SynthDataset ds;
    ds.cfg_ = cfg;
    Rng rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const TargetShape shapes[] = {TargetShape::kRectangle,
                                  TargetShape::kEllipse,
                                  TargetShape::kTriangle};
    for (int i = 0; i < cfg.sequences; ++i) {
      SynthSpec spec;
      spec.name = "train" + std::to_string(i);
      spec.n_frames = cfg.frames_per_sequence;
      spec.shape = shapes[i % 3];
      spec.target_w = 34 + 22 * unit(rng);
      spec.target_h = 34 + 22 * unit(rng);
      spec.speed = 0.5 + 2.0 * unit(rng);
      spec.scale_factor = std::exp((unit(rng) - 0.5) * 0.8);
      spec.aspect_factor = std::exp((unit(rng) - 0.5) * 0.9);
      spec.rotation_deg = (unit(rng) - 0.5) * 90.0;
      spec.distractors = (i % 2 == 0) ? 1 + (i % 3) : 0;
      ds.sequences_.push_back(synth_sequence(spec, seed * 1000 + i));
    }
    return ds;
  }

  const std::vector<Sequence>& sequences() const { return sequences_; }

  TrainingPair sample_pair(Rng& rng) const {
    check(!sequences_.empty(), "dataset: no sequences");
    std::uniform_int_distribution<size_t> pick(0, sequences_.size() - 1);
    const Sequence& seq = sequences_[pick(rng)];
    std::uniform_int_distribution<int> fpick(0, seq.size() - 1);
    const int i = fpick(rng);
    std::uniform_int_distribution<int> gap(-cfg_.max_frame_gap,
                                           cfg_.max_frame_gap);
    const int j = std::clamp(i + gap(rng), 0, seq.size() - 1);

    TrainingPair pair;
    const BoundingBox& ref_gt = seq.ground_truth[static_cast<size_t>(i)];
    Patch ref = extract_patch(seq.frames[static_cast<size_t>(i)], ref_gt,
                              cfg_.area_factor, cfg_.patch_size);
    pair.reference_patch = std::move(ref.image);
    pair.reference_box = ref.transform.to_patch(ref_gt);

    // Test crop centered on a perturbed box, simulating tracker drift.
    const BoundingBox& test_gt = seq.ground_truth[static_cast<size_t>(j)];
    std::normal_distribution<double> gauss(0.0, 1.0);
    BoundingBox center = test_gt;
    center.cx += cfg_.test_center_jitter * test_gt.w * gauss(rng);
    center.cy += cfg_.test_center_jitter * test_gt.h * gauss(rng);
    center.w *= std::exp(cfg_.test_scale_jitter * gauss(rng));
    center.h *= std::exp(cfg_.test_scale_jitter * gauss(rng));
    Patch test = extract_patch(seq.frames[static_cast<size_t>(j)], center,
                               cfg_.area_factor, cfg_.patch_size);
    pair.test_patch = std::move(test.image);
    pair.test_box = test.transform.to_patch(test_gt);
    return pair;
  }

  PairSampler sampler() const {
    return [this](Rng& rng) { return sample_pair(rng); };
  }

 private:
  DatasetConfig cfg_;
  std::vector<Sequence> sequences_;
};

// Fixed validation set with frozen candidates, evaluated via the same
// eval-mode path the tracker uses.
template <typename T>
std::vector<typename IouNet<T>::BatchSample> build_validation_samples(
    const SynthDataset& dataset, const TinyBackbone<T>& backbone, int n_pairs,
    int candidates, double min_iou, uint64_t seed) {
  Rng rng(seed);
  std::vector<typename IouNet<T>::BatchSample> out;
  out.reserve(static_cast<size_t>(n_pairs));
  for (int i = 0; i < n_pairs; ++i) {
    TrainingPair pair = dataset.sample_pair(rng);
    typename IouNet<T>::BatchSample s;
    s.ref_feats = backbone.extract(pair.reference_patch);
    s.test_feats = backbone.extract(pair.test_patch);
    s.ref_box = pair.reference_box;
    CandidateSet cands =
        generate_candidates(pair.test_box, candidates, min_iou, rng);
    s.candidates = cands.boxes;
    for (const auto& c : s.candidates) {
      s.target_iou.push_back(geometric_iou(c, pair.test_box));
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace atom

#endif  // ATOM_DATASET_HPP_
