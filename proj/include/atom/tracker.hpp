#ifndef ATOM_TRACKER_HPP_
#define ATOM_TRACKER_HPP_

#include <algorithm>
#include <cmath>
#include <vector>

#include "atom/backbone.hpp"
#include "atom/classifier.hpp"
#include "atom/iou_net.hpp"
#include "atom/patch.hpp"

namespace atom {

struct TrackerConfig {
  int patch_size = 288;
  double area_factor = 5.0;
  int proposals = 10;
  int ascent_steps = 5;
  double step_length = 1.0;
  int top_k = 3;
  int update_interval = 10;
  double lost_threshold = 0.25;
  double hard_negative_boost = 2.0;
  int initial_augmentations = 30;
  double label_sigma_frac = 1.0 / 12.0;  // of the score-map side
  double proposal_center_noise = 0.1;    // fraction of box size, uniform
  double proposal_size_noise = 0.1;      // uniform in log-size
  double distractor_ratio = 0.5;         // secondary/primary peak ratio
  double distractor_dist_frac = 0.2;     // of the score-map side
  int memory_capacity = 50;
  double memory_eta = 0.01;
  double lambda = 1e-2;

  // Ablation switches.
  bool use_classifier = true;   // false: estimation-only tracking
  bool hard_negatives = true;
  bool multi_scale = false;     // classifier-only multi-scale estimation
  double no_classifier_area_factor = 6.0;
  double multi_scale_ratio = 1.02;
  int multi_scale_count = 5;

  enum class Optimizer { kGncg, kGd, kGdpp };
  Optimizer optimizer = Optimizer::kGncg;
  double gd_lr = 1e-4;
  double gd_momentum = 0.9;
};

template <typename T>
struct TrackerState {
  BoundingBox box;  // frame coordinates
  ClassifierWeights<T> cls;
  SampleMemory<T> memory{50, 0.01};
  TargetEncoding<T> modulation;
  int frame_index = 0;
  bool lost = false;
  Rng rng;

  // Instrumentation.
  uint64_t init_backprop_calls = 0;
  uint64_t last_update_calls = 0;
  double last_confidence = 0;
  int hard_negative_events = 0;
};

template <typename T>
struct FrameResult {
  BoundingBox box;
  double confidence = 0;
  bool lost = false;
};

// Secondary-peak rule: fires when an 8-neighborhood local maximum away
// from the primary peak exceeds ratio * primary.
template <typename T>
bool detect_distractor(const Tensor<T>& score, double ratio,
                       double min_dist_frac) {
  const int h = score.shape()[0], w = score.shape()[1];
  int pi = 0, pj = 0;
  T best = score.at(0, 0);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      if (score.at(i, j) > best) {
        best = score.at(i, j);
        pi = i;
        pj = j;
      }
    }
  }
  if (best <= T(0)) return false;
  const double min_dist = min_dist_frac * std::max(h, w);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      const double dist = std::hypot(static_cast<double>(i - pi),
                                     static_cast<double>(j - pj));
      if (dist <= min_dist) continue;
      const T v = score.at(i, j);
      if (v <= ratio * best) continue;
      bool is_peak = true;
      for (int di = -1; di <= 1 && is_peak; ++di) {
        for (int dj = -1; dj <= 1; ++dj) {
          if (di == 0 && dj == 0) continue;
          const int ni = i + di, nj = j + dj;
          if (ni < 0 || ni >= h || nj < 0 || nj >= w) continue;
          if (score.at(ni, nj) > v) {
            is_peak = false;
            break;
          }
        }
      }
      if (is_peak) return true;
    }
  }
  return false;
}

// The online tracking procedure: classification gives a coarse 2D
// location, IoU maximization refines the full box, and the classifier is
// re-optimized on a schedule (plus instantly on hard negatives).
template <typename T>
class Tracker {
 public:
  Tracker(const TrackerConfig& cfg, const TinyBackbone<T>& backbone,
          IouNet<T>& iou)
      : cfg_(cfg), backbone_(backbone), iou_(iou) {}

  const TrackerConfig& config() const { return cfg_; }

  TrackerState<T> initialize(const TensorF& frame, const BoundingBox& gt,
                             uint64_t seed) {
    check(gt.valid(), "initialize: invalid ground-truth box");
    TrackerState<T> state;
    state.rng = Rng(seed);
    state.box = gt;
    state.memory = SampleMemory<T>(cfg_.memory_capacity, cfg_.memory_eta);
    state.frame_index = 0;

    Patch patch = extract_patch(frame, gt, cfg_.area_factor, cfg_.patch_size);
    BackboneFeatures<T> feats0 = backbone_.extract(patch.image);

    if (cfg_.use_classifier) {
      const BoundingBox gt_patch = patch.transform.to_patch(gt);
      auto augmented = augment_first_frame(
          patch.image, cfg_.initial_augmentations, state.rng);
      std::vector<std::pair<Tensor<T>, Tensor<T>>> samples;
      for (size_t a = 0; a < augmented.size(); ++a) {
        // Reuse the already-extracted features for the unmodified patch.
        BackboneFeatures<T> f =
            a == 0 ? feats0 : backbone_.extract(augmented[a].patch);
        Tensor<T> label = label_for_center(
            f.block4, gt_patch.cx + augmented[a].shift_x,
            gt_patch.cy + augmented[a].shift_y);
        samples.emplace_back(std::move(f.block4), std::move(label));
      }
      state.memory.add_initial(std::move(samples));

      state.cls = ClassifierWeights<T>(state.rng,
                                       TinyBackbone<T>::kBlock4Channels);
      state.cls.lambda1 = state.cls.lambda2 = static_cast<T>(cfg_.lambda);
      const uint64_t calls0 = Tape::current().backprop_calls();
      run_initial_optimization(state);
      state.init_backprop_calls = Tape::current().backprop_calls() - calls0;
    }

    if (!cfg_.multi_scale) {
      state.modulation =
          iou_.compute_modulation(feats0, patch.transform.to_patch(gt));
    }
    return state;
  }

  FrameResult<T> track_frame(TrackerState<T>& state, const TensorF& frame) {
    ++state.frame_index;
    if (cfg_.multi_scale) return multi_scale_track(state, frame);
    if (!cfg_.use_classifier) return estimation_only_track(state, frame);

    Patch patch =
        extract_patch(frame, state.box, cfg_.area_factor, cfg_.patch_size);
    BackboneFeatures<T> feats = backbone_.extract(patch.image);
    Tensor<T> score = classify(feats.block4, state.cls);

    int pi, pj;
    const double conf = peak_of(score, pi, pj);
    state.last_confidence = conf;
    if (conf < cfg_.lost_threshold) {
      state.lost = true;
      return {state.box, conf, true};
    }
    state.lost = false;

    // Coarse location from the classifier, previous size as the initial
    // box, refined by IoU maximization over noisy proposals.
    const int stride = TinyBackbone<T>::kBlock4Stride;
    const double off = 0.5 * (stride - 1);
    const double px = pj * stride + off;
    const double py = pi * stride + off;
    BoundingBox init_box(px, py, state.box.w / patch.transform.step,
                         state.box.h / patch.transform.step);
    TestEncoding<T> test_enc = iou_.encode_test(feats);
    BoundingBox fused = refine_proposals(state, test_enc, init_box);
    BoundingBox new_box = patch.transform.to_frame(fused);

    // Model update: every update_interval frames, instantly on a
    // detected distractor (with a doubled sample weight).
    const bool hard_negative =
        cfg_.hard_negatives &&
        detect_distractor(score, cfg_.distractor_ratio,
                          cfg_.distractor_dist_frac);
    if (hard_negative) ++state.hard_negative_events;
    Tensor<T> label =
        label_for_center(feats.block4, fused.cx, fused.cy);
    state.memory.add(std::move(feats.block4), std::move(label),
                     hard_negative ? cfg_.hard_negative_boost : 1.0);
    if (hard_negative || state.frame_index % cfg_.update_interval == 0) {
      run_update_optimization(state);
    }

    state.box = new_box;
    return {new_box, conf, false};
  }

  // Classifier-only brute-force scale search (ablation baseline).
  FrameResult<T> multi_scale_track(TrackerState<T>& state,
                                   const TensorF& frame) {
    const int half = cfg_.multi_scale_count / 2;
    double best_conf = -1e300;
    int best_k = 0, bpi = 0, bpj = 0;
    Patch best_patch;
    BackboneFeatures<T> best_feats;
    for (int k = -half; k <= half; ++k) {
      const double s = std::pow(cfg_.multi_scale_ratio, k);
      BoundingBox scaled(state.box.cx, state.box.cy, state.box.w * s,
                         state.box.h * s);
      Patch patch =
          extract_patch(frame, scaled, cfg_.area_factor, cfg_.patch_size);
      BackboneFeatures<T> feats = backbone_.extract(patch.image);
      Tensor<T> score = classify(feats.block4, state.cls);
      int pi, pj;
      const double conf = peak_of(score, pi, pj);
      if (conf > best_conf) {
        best_conf = conf;
        best_k = k;
        bpi = pi;
        bpj = pj;
        best_patch = std::move(patch);
        best_feats = std::move(feats);
      }
    }
    state.last_confidence = best_conf;
    if (best_conf < cfg_.lost_threshold) {
      state.lost = true;
      return {state.box, best_conf, true};
    }
    state.lost = false;

    const double s = std::pow(cfg_.multi_scale_ratio, best_k);
    const int stride = TinyBackbone<T>::kBlock4Stride;
    const double off = 0.5 * (stride - 1);
    const double px = bpj * stride + off;
    const double py = bpi * stride + off;
    BoundingBox in_patch(px, py, 0, 0);
    BoundingBox new_box(best_patch.transform.to_frame_x(px),
                        best_patch.transform.to_frame_y(py), state.box.w * s,
                        state.box.h * s);

    Tensor<T> label = label_for_center(best_feats.block4, px, py);
    state.memory.add(std::move(best_feats.block4), std::move(label), 1.0);
    if (state.frame_index % cfg_.update_interval == 0) {
      run_update_optimization(state);
    }
    state.box = new_box;
    return {new_box, best_conf, false};
  }

  // Estimation-only tracking over a larger search region; the previous box
  // is the single seed for proposal generation and the classifier is never
  // consulted.
  FrameResult<T> estimation_only_track(TrackerState<T>& state,
                                       const TensorF& frame) {
    Patch patch = extract_patch(frame, state.box,
                                cfg_.no_classifier_area_factor,
                                cfg_.patch_size);
    BackboneFeatures<T> feats = backbone_.extract(patch.image);
    TestEncoding<T> test_enc = iou_.encode_test(feats);
    BoundingBox init_box = patch.transform.to_patch(state.box);
    BoundingBox fused = refine_proposals(state, test_enc, init_box);
    BoundingBox new_box = patch.transform.to_frame(fused);
    state.box = new_box;
    const double conf =
        iou_.predict_iou(state.modulation, test_enc, fused);
    state.last_confidence = conf;
    return {new_box, conf, false};
  }

  // Shared proposal generation + refinement + top-k fusion, in patch
  // coordinates. Proposal 0 is the unperturbed box.
  BoundingBox refine_proposals(TrackerState<T>& state,
                               const TestEncoding<T>& test_enc,
                               const BoundingBox& init_box) {
    std::uniform_real_distribution<double> uc(-cfg_.proposal_center_noise,
                                              cfg_.proposal_center_noise);
    std::uniform_real_distribution<double> us(-cfg_.proposal_size_noise,
                                              cfg_.proposal_size_noise);
    std::vector<std::pair<double, BoundingBox>> scored;
    for (int p = 0; p < cfg_.proposals; ++p) {
      BoundingBox prop = init_box;
      if (p > 0) {
        prop.cx += uc(state.rng) * init_box.w;
        prop.cy += uc(state.rng) * init_box.h;
        prop.w *= std::exp(us(state.rng));
        prop.h *= std::exp(us(state.rng));
      }
      RefineResult ref = iou_.refine_box(state.modulation, test_enc, prop,
                                         cfg_.ascent_steps, cfg_.step_length);
      const double pred =
          iou_.predict_iou(state.modulation, test_enc, ref.box);
      scored.emplace_back(pred, ref.box);
    }
    std::stable_sort(scored.begin(), scored.end(),
                     [](const auto& a, const auto& b) {
                       return a.first > b.first;
                     });
    const int k = std::min(cfg_.top_k, static_cast<int>(scored.size()));
    BoundingBox fused(0, 0, 0, 0);
    for (int i = 0; i < k; ++i) {
      fused.cx += scored[i].second.cx / k;
      fused.cy += scored[i].second.cy / k;
      fused.w += scored[i].second.w / k;
      fused.h += scored[i].second.h / k;
    }
    return fused;
  }

 private:
  double peak_of(const Tensor<T>& score, int& pi, int& pj) const {
    pi = pj = 0;
    T best = score.at(0, 0);
    for (int i = 0; i < score.shape()[0]; ++i) {
      for (int j = 0; j < score.shape()[1]; ++j) {
        if (score.at(i, j) > best) {
          best = score.at(i, j);
          pi = i;
          pj = j;
        }
      }
    }
    return static_cast<double>(best);
  }

  Tensor<T> label_for_center(const Tensor<T>& block4_feats, double patch_x,
                             double patch_y) const {
    const int h = block4_feats.shape()[0];
    const int w = block4_feats.shape()[1];
    const int stride = TinyBackbone<T>::kBlock4Stride;
    const double off = 0.5 * (stride - 1);
    LabelConfig lc;
    lc.sigma = cfg_.label_sigma_frac * std::max(h, w);
    return make_label<T>((patch_x - off) / stride, (patch_y - off) / stride,
                         lc, h, w);
  }

  void run_initial_optimization(TrackerState<T>& state) {
    switch (cfg_.optimizer) {
      case TrackerConfig::Optimizer::kGncg:
        train_initial(state.memory, state.cls);
        break;
      case TrackerConfig::Optimizer::kGd:
        run_gd(state, /*train_w1=*/true, 126);
        break;
      case TrackerConfig::Optimizer::kGdpp:
        run_gd(state, /*train_w1=*/true, 630);
        break;
    }
  }

  void run_update_optimization(TrackerState<T>& state) {
    const uint64_t calls0 = Tape::current().backprop_calls();
    switch (cfg_.optimizer) {
      case TrackerConfig::Optimizer::kGncg:
        train_update(state.memory, state.cls);
        break;
      case TrackerConfig::Optimizer::kGd:
        run_gd(state, /*train_w1=*/false, 11);
        break;
      case TrackerConfig::Optimizer::kGdpp:
        run_gd(state, /*train_w1=*/false, 55);
        break;
    }
    state.last_update_calls = Tape::current().backprop_calls() - calls0;
  }

  void run_gd(TrackerState<T>& state, bool train_w1, int steps) {
    ResidualProblem<T> problem =
        make_classifier_problem(state.memory, state.cls, train_w1);
    gradient_descent(problem, steps, static_cast<T>(cfg_.gd_lr),
                     static_cast<T>(cfg_.gd_momentum));
    if (train_w1) {
      state.cls.w1 = problem.weights[0];
      state.cls.w2 = problem.weights[1];
    } else {
      state.cls.w2 = problem.weights[0];
    }
  }

  TrackerConfig cfg_;
  const TinyBackbone<T>& backbone_;
  IouNet<T>& iou_;
};

}  // namespace atom

#endif  // ATOM_TRACKER_HPP_
