#ifndef ATOM_IOU_NET_HPP_
#define ATOM_IOU_NET_HPP_

#include <array>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "atom/backbone.hpp"
#include "atom/imageops.hpp"
#include "atom/model_io.hpp"
#include "atom/nn.hpp"
#include "atom/optim.hpp"
#include "atom/patch.hpp"
#include "atom/prpool.hpp"

namespace atom {

// Fusion strategies for the reference appearance, plus the single-block
// variants used in the architecture study.
enum class IouVariant {
  kModulation,
  kConcatenation,
  kSiamese,
  kBaseline,      // no reference branch
  kBlock3Only,
  kBlock4Only,
};

inline const char* iou_variant_name(IouVariant v) {
  switch (v) {
    case IouVariant::kModulation: return "modulation";
    case IouVariant::kConcatenation: return "concatenation";
    case IouVariant::kSiamese: return "siamese";
    case IouVariant::kBaseline: return "baseline";
    case IouVariant::kBlock3Only: return "block3";
    case IouVariant::kBlock4Only: return "block4";
  }
  return "?";
}

inline IouVariant iou_variant_from_name(const std::string& s) {
  for (IouVariant v :
       {IouVariant::kModulation, IouVariant::kConcatenation,
        IouVariant::kSiamese, IouVariant::kBaseline, IouVariant::kBlock3Only,
        IouVariant::kBlock4Only}) {
    if (s == iou_variant_name(v)) return v;
  }
  fail("unknown IoU network variant: '", s, "'");
}

// Candidate boxes around a ground-truth box.
struct CandidateSet {
  std::vector<BoundingBox> boxes;
  std::vector<double> scores;  // optional predicted IoU
};

// Gaussian-perturbed candidates with a minimum-IoU guarantee. Noise decays
// along the retry schedule; at min_iou = 1 only the box itself qualifies.
inline CandidateSet generate_candidates(const BoundingBox& gt, int n,
                                        double min_iou, Rng& rng) {
  check(n >= 1, "generate_candidates: need n >= 1");
  check(gt.valid(), "generate_candidates: invalid ground-truth box");
  std::normal_distribution<double> gauss(0.0, 1.0);
  CandidateSet out;
  const double dim = std::sqrt(gt.w * gt.h);
  for (int i = 0; i < n; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < 1000; ++attempt) {
      const double decay = std::pow(0.97, attempt);
      BoundingBox c(gt.cx + 0.25 * dim * decay * gauss(rng),
                    gt.cy + 0.25 * dim * decay * gauss(rng),
                    gt.w * std::exp(0.25 * decay * gauss(rng)),
                    gt.h * std::exp(0.25 * decay * gauss(rng)));
      if (!c.valid() || c.w < 1.0 || c.h < 1.0) continue;
      if (geometric_iou(c, gt) >= min_iou) {
        out.boxes.push_back(c);
        placed = true;
        break;
      }
    }
    if (!placed) {
      // The ground-truth box always satisfies the constraint; reaching
      // here means the requested IoU is so high that only it qualifies.
      if (min_iou >= 1.0 - 1e-9 && min_iou <= 1.0) {
        out.boxes.push_back(gt);
      } else {
        fail("generate_candidates: retry budget exhausted for min_iou ",
             min_iou);
      }
    }
  }
  return out;
}

// Target-specific reference information, precomputed once per sequence.
// Slot use per variant: modulation and single-block variants store the
// positive per-channel coefficient vectors; concatenation stores per-block
// reference FC activations; siamese stores the full reference embedding in
// ref3.
template <typename T>
struct TargetEncoding {
  Tensor<T> ref3, ref4;
};

// Post-conv test-branch feature maps for one frame, pooled per candidate.
template <typename T>
struct TestEncoding {
  Tensor<T> map3, map4;  // [H, W, Dz] each (inactive blocks empty)
};

struct RefineResult {
  BoundingBox box;
  std::vector<double> iou_trace;  // predicted IoU per ascent step
};

struct IouTrainConfig {
  int epochs = 40;
  int batch_pairs = 64;
  int pairs_per_epoch = 192;
  int candidates = 16;
  double min_iou = 0.1;
  double lr = 1e-3;
  double lr_decay = 0.2;
  int lr_step_epochs = 15;
  bool flip_augment = true;
  double color_jitter = 0.1;
};

struct EpochStats {
  int epoch;
  double train_mse;  // [0, 1] IoU scale
  double val_mse;    // [0, 1] IoU scale
  double lr;
};

// One offline training example: reference and test crops with their boxes
// in patch coordinates. Any data source implementing this contract plugs
// into train_offline.
struct TrainingPair {
  TensorF reference_patch;
  BoundingBox reference_box;
  TensorF test_patch;
  BoundingBox test_box;
};
using PairSampler = std::function<TrainingPair(Rng&)>;

// The IoU prediction head. Two backbone blocks feed per-block branches:
// the test branch is conv-conv-PrPool(5x5)-FC, the reference branch (for
// the modulation variant) conv-PrPool(3x3)-FC. Pooled test features are
// multiplied channel-wise by the reference coefficients, and a three-layer
// predictor maps the fused representation to one scalar regressing IoU on
// the [-1, 1] scale. Conv and FC layers carry BatchNorm + ReLU.
template <typename T>
class IouNet {
 public:
  static constexpr int kRefPool = 3;
  static constexpr int kTestPool = 5;
  static constexpr int kDz = 16;
  static constexpr int kFcDim = 128;
  static constexpr int kGDim = 256;

  IouNet(IouVariant variant, uint64_t seed,
         int c3 = TinyBackbone<T>::kBlock3Channels,
         int c4 = TinyBackbone<T>::kBlock4Channels)
      : variant_(variant), strides_{TinyBackbone<T>::kBlock3Stride,
                                    TinyBackbone<T>::kBlock4Stride} {
    Rng rng(seed);
    const std::array<int, 2> cin = {c3, c4};
    for (int b = 0; b < 2; ++b) {
      if (!block_active(b)) continue;
      test_conv1_[b] = Conv2dLayer<T>(rng, 3, cin[b], kDz);
      test_bn1_[b] = BatchNorm<T>(kDz);
      test_conv2_[b] = Conv2dLayer<T>(rng, 3, kDz, kDz);
      test_bn2_[b] = BatchNorm<T>(kDz);
      test_fc_[b] = LinearLayer<T>(rng, kTestPool * kTestPool * kDz, kFcDim);
      test_fc_bn_[b] = BatchNorm<T>(kFcDim);
      if (has_modulation()) {
        ref_conv_[b] = Conv2dLayer<T>(rng, 3, cin[b], kDz);
        ref_bn_[b] = BatchNorm<T>(kDz);
        ref_fc_[b] = LinearLayer<T>(rng, kRefPool * kRefPool * kDz, kDz);
        ref_fc_bn_[b] = BatchNorm<T>(kDz);
      }
      if (variant_ == IouVariant::kConcatenation ||
          variant_ == IouVariant::kSiamese) {
        // Branch-specific FC over the shared-conv pooled features.
        ref_branch_fc_[b] =
            LinearLayer<T>(rng, kTestPool * kTestPool * kDz, kFcDim);
        ref_branch_fc_bn_[b] = BatchNorm<T>(kFcDim);
      }
    }
    if (variant_ != IouVariant::kSiamese) {
      g1_ = LinearLayer<T>(rng, predictor_input_dim(), kGDim);
      g1_bn_ = BatchNorm<T>(kGDim);
      g2_ = LinearLayer<T>(rng, kGDim, kGDim);
      g2_bn_ = BatchNorm<T>(kGDim);
      g3_ = LinearLayer<T>(rng, kGDim, 1);
    }
    register_params();
  }

  IouVariant variant() const { return variant_; }
  Params<T>& params() { return params_; }

  bool block_active(int b) const {
    if (variant_ == IouVariant::kBlock3Only) return b == 0;
    if (variant_ == IouVariant::kBlock4Only) return b == 1;
    return true;
  }
  bool has_modulation() const {
    return variant_ == IouVariant::kModulation ||
           variant_ == IouVariant::kBlock3Only ||
           variant_ == IouVariant::kBlock4Only;
  }
  bool has_reference() const { return variant_ != IouVariant::kBaseline; }

  int active_blocks() const { return block_active(0) + block_active(1); }

  int predictor_input_dim() const {
    if (variant_ == IouVariant::kConcatenation) return 4 * kFcDim;
    return active_blocks() * kFcDim;
  }

  // Structural introspection used by tests: conv weights ahead of PrPool
  // are shared between branches for the concatenation/siamese variants.
  bool shares_branch_convs() const {
    return variant_ == IouVariant::kConcatenation ||
           variant_ == IouVariant::kSiamese;
  }

  // ------------------------------------------------------------------
  // Tracking-time API (eval-mode batch norm, frozen weights)
  // ------------------------------------------------------------------

  TestEncoding<T> encode_test(const BackboneFeatures<T>& feats) {
    NoGradGuard ng;
    TestEncoding<T> enc;
    if (block_active(0)) enc.map3 = encode_map(0, feats.block3, false).value();
    if (block_active(1)) enc.map4 = encode_map(1, feats.block4, false).value();
    return enc;
  }

  TargetEncoding<T> compute_modulation(const BackboneFeatures<T>& ref_feats,
                                       const BoundingBox& b0_patch) {
    check(b0_patch.valid(), "compute_modulation: degenerate reference box ",
          b0_patch.w, "x", b0_patch.h);
    NoGradGuard ng;
    TargetEncoding<T> enc;
    if (!has_reference()) return enc;
    std::array<Tensor<T>, 2> out;
    for (int b = 0; b < 2; ++b) {
      if (!block_active(b)) continue;
      const Tensor<T>& feats = b == 0 ? ref_feats.block3 : ref_feats.block4;
      const BoundingBox fb = box_to_feature_coords(b0_patch, strides_[b]);
      if (has_modulation()) {
        Var<T> m = relu(ref_bn_[b].forward(
            ref_conv_[b].forward(Var<T>::constant(feats)), false));
        Var<T> pooled = prpool_op(m, box_var(fb), kRefPool);
        Var<T> row = reshape(flatten(pooled), {1, kRefPool * kRefPool * kDz});
        Var<T> c = relu(ref_fc_bn_[b].forward(ref_fc_[b].forward(row), false));
        out[b] = c.value().reshaped({kDz});
      } else {
        // Shared convs, branch FC, 5x5 pooling (same structure as test).
        Var<T> m = encode_map(b, feats, false);
        Var<T> pooled = prpool_op(m, box_var(fb), kTestPool);
        Var<T> row =
            reshape(flatten(pooled), {1, kTestPool * kTestPool * kDz});
        Var<T> r = relu(
            ref_branch_fc_bn_[b].forward(ref_branch_fc_[b].forward(row), false));
        out[b] = r.value().reshaped({kFcDim});
      }
    }
    if (variant_ == IouVariant::kSiamese) {
      // Full reference vector: per-block FC outputs concatenated.
      std::vector<T> joined;
      for (int b = 0; b < 2; ++b) {
        joined.insert(joined.end(), out[b].vec().begin(), out[b].vec().end());
      }
      enc.ref3 = Tensor<T>({static_cast<int>(joined.size())}, joined);
    } else {
      enc.ref3 = out[0];
      enc.ref4 = out[1];
    }
    return enc;
  }

  // Differentiable prediction w.r.t. the candidate box (patch pixels).
  Var<T> predict_var(const TargetEncoding<T>& target,
                     const TestEncoding<T>& test, const Var<T>& box_patch) {
    std::vector<Var<T>> rows;
    for (int b = 0; b < 2; ++b) {
      if (!block_active(b)) continue;
      const Tensor<T>& map = b == 0 ? test.map3 : test.map4;
      check(!map.empty(), "predict: test encoding missing block ", b + 3);
      Var<T> fb = to_feature_box(box_patch, strides_[b]);
      Var<T> pooled = prpool_op(Var<T>::constant(map), fb, kTestPool);
      if (has_modulation()) {
        const Tensor<T>& c = b == 0 ? target.ref3 : target.ref4;
        check(!c.empty(), "predict: missing modulation vector for block ",
              b + 3);
        pooled = modulate(pooled, Var<T>::constant(c));
      }
      Var<T> row = reshape(flatten(pooled), {1, kTestPool * kTestPool * kDz});
      rows.push_back(
          relu(test_fc_bn_[b].forward(test_fc_[b].forward(row), false)));
    }
    Var<T> fused = rows.size() == 1 ? rows[0] : concat_cols(rows);
    switch (variant_) {
      case IouVariant::kSiamese: {
        check(!target.ref3.empty(), "predict: missing reference embedding");
        Var<T> prod = dot(flatten(fused), Var<T>::constant(target.ref3));
        return smul(prod, T(1) / T(2 * kFcDim));
      }
      case IouVariant::kConcatenation: {
        check(!target.ref3.empty() && !target.ref4.empty(),
              "predict: missing reference activations");
        Var<T> r3 = reshape(Var<T>::constant(target.ref3), {1, kFcDim});
        Var<T> r4 = reshape(Var<T>::constant(target.ref4), {1, kFcDim});
        return flatten(predictor(concat_cols<T>({fused, r3, r4}), false));
      }
      default:
        return flatten(predictor(fused, false));
    }
  }

  double predict_iou(const TargetEncoding<T>& target,
                     const TestEncoding<T>& test, const BoundingBox& box) {
    check(box.valid(), "predict_iou: degenerate box");
    NoGradGuard ng;
    return static_cast<double>(
        predict_var(target, test, box_var(box)).value()[0]);
  }

  // Gradient-ascent refinement in scale-normalized coordinates: the box
  // gradient is multiplied componentwise by (w, h, w, h) before applying
  // the step length. Stops early if a dimension collapses below 1 px.
  RefineResult refine_box(const TargetEncoding<T>& target,
                          const TestEncoding<T>& test, BoundingBox box,
                          int steps = 5, double step_len = 1.0) {
    check(box.valid(), "refine_box: invalid initial box");
    RefineResult res;
    for (int s = 0; s < steps; ++s) {
      Var<T> b = Var<T>::leaf(
          Tensor<T>({4}, {static_cast<T>(box.cx), static_cast<T>(box.cy),
                          static_cast<T>(box.w), static_cast<T>(box.h)}),
          true);
      Var<T> pred = predict_var(target, test, b);
      res.iou_trace.push_back(static_cast<double>(pred.value()[0]));
      Tensor<T> g = backprop(pred, {b})[0];
      box.cx += step_len * g[0] * box.w;
      box.cy += step_len * g[1] * box.h;
      box.w += step_len * g[2] * box.w;
      box.h += step_len * g[3] * box.h;
      if (box.w < 1.0 || box.h < 1.0) {
        box.w = std::max(box.w, 1.0);
        box.h = std::max(box.h, 1.0);
        break;
      }
    }
    res.box = box;
    return res;
  }

  // ------------------------------------------------------------------
  // Offline training
  // ------------------------------------------------------------------

  struct BatchSample {
    BackboneFeatures<T> ref_feats;
    BoundingBox ref_box;  // patch coords
    BackboneFeatures<T> test_feats;
    std::vector<BoundingBox> candidates;  // patch coords
    std::vector<double> target_iou;       // [0, 1]
  };

  // Batched forward over pairs x candidates; returns predictions on the
  // normalized [-1, 1] scale, candidate-major (pair 0 candidates first).
  Var<T> forward_batch(const std::vector<BatchSample>& batch, bool training) {
    check(!batch.empty(), "forward_batch: empty batch");
    const int npairs = static_cast<int>(batch.size());
    int ncand = 0;
    for (const auto& s : batch) ncand += static_cast<int>(s.candidates.size());

    std::array<Var<T>, 2> tmaps;   // [B, H, W, Dz]
    std::array<Var<T>, 2> cvecs;   // modulation rows [B, Dz]
    std::array<Var<T>, 2> rrows;   // reference branch rows [B, kFcDim]
    for (int b = 0; b < 2; ++b) {
      if (!block_active(b)) continue;
      std::vector<Var<T>> test_stack, ref_stack;
      for (const auto& s : batch) {
        test_stack.push_back(Var<T>::constant(
            b == 0 ? s.test_feats.block3 : s.test_feats.block4));
        if (has_reference()) {
          ref_stack.push_back(Var<T>::constant(
              b == 0 ? s.ref_feats.block3 : s.ref_feats.block4));
        }
      }
      tmaps[b] = encode_map_var(b, stack0(test_stack), training);
      if (has_modulation()) {
        Var<T> rmap = relu(ref_bn_[b].forward(
            ref_conv_[b].forward(stack0(ref_stack)), training));
        std::vector<Var<T>> rows;
        for (int i = 0; i < npairs; ++i) {
          const BoundingBox fb =
              box_to_feature_coords(batch[i].ref_box, strides_[b]);
          Var<T> pooled = prpool_op(slice0(rmap, i), box_var(fb), kRefPool);
          rows.push_back(flatten(pooled));
        }
        Var<T> stacked = stack_rows(rows);
        cvecs[b] = relu(
            ref_fc_bn_[b].forward(ref_fc_[b].forward(stacked), training));
      } else if (has_reference()) {
        Var<T> rmap = encode_map_var(b, stack0(ref_stack), training);
        std::vector<Var<T>> rows;
        for (int i = 0; i < npairs; ++i) {
          const BoundingBox fb =
              box_to_feature_coords(batch[i].ref_box, strides_[b]);
          Var<T> pooled = prpool_op(slice0(rmap, i), box_var(fb), kTestPool);
          rows.push_back(flatten(pooled));
        }
        Var<T> stacked = stack_rows(rows);
        rrows[b] = relu(ref_branch_fc_bn_[b].forward(
            ref_branch_fc_[b].forward(stacked), training));
      }
    }

    // Pool every candidate, modulate, and run the per-block FC.
    std::array<Var<T>, 2> vrows;
    for (int b = 0; b < 2; ++b) {
      if (!block_active(b)) continue;
      std::vector<Var<T>> rows;
      rows.reserve(static_cast<size_t>(ncand));
      Var<T> cflat = has_modulation() ? flatten(cvecs[b]) : Var<T>();
      for (int i = 0; i < npairs; ++i) {
        Var<T> map = slice0(tmaps[b], i);
        for (const auto& cand : batch[i].candidates) {
          const BoundingBox fb = box_to_feature_coords(cand, strides_[b]);
          Var<T> pooled = prpool_op(map, box_var(fb), kTestPool);
          if (has_modulation()) {
            Var<T> c = slice1d(cflat, static_cast<int64_t>(i) * kDz, kDz);
            pooled = modulate(pooled, c);
          }
          rows.push_back(flatten(pooled));
        }
      }
      Var<T> stacked = stack_rows(rows);
      vrows[b] = relu(
          test_fc_bn_[b].forward(test_fc_[b].forward(stacked), training));
    }

    std::vector<Var<T>> fuse_parts;
    for (int b = 0; b < 2; ++b) {
      if (block_active(b)) fuse_parts.push_back(vrows[b]);
    }
    Var<T> fused =
        fuse_parts.size() == 1 ? fuse_parts[0] : concat_cols(fuse_parts);

    switch (variant_) {
      case IouVariant::kSiamese: {
        Var<T> rc = concat_cols<T>({rrows[0], rrows[1]});  // [B, 256]
        Var<T> rexp = expand_rows(rc, batch);              // [N, 256]
        Var<T> prod = mul(fused, rexp);
        Var<T> ones = Var<T>::constant(
            Tensor<T>::full({2 * kFcDim, 1}, T(1) / T(2 * kFcDim)));
        return flatten(matmul(prod, ones));
      }
      case IouVariant::kConcatenation: {
        Var<T> r3 = expand_rows(rrows[0], batch);
        Var<T> r4 = expand_rows(rrows[1], batch);
        return flatten(predictor(concat_cols<T>({fused, r3, r4}), training));
      }
      default:
        return flatten(predictor(fused, training));
    }
  }

  // MSE on the [0, 1] IoU scale over a validation set, using the same
  // eval-mode path the tracker uses.
  double validation_mse(const std::vector<BatchSample>& pairs) {
    double acc = 0;
    int n = 0;
    for (const auto& s : pairs) {
      TargetEncoding<T> target = compute_modulation_from(s);
      TestEncoding<T> test = encode_test(s.test_feats);
      for (size_t k = 0; k < s.candidates.size(); ++k) {
        const double pred01 =
            0.5 * (predict_iou(target, test, s.candidates[k]) + 1.0);
        const double d = pred01 - s.target_iou[k];
        acc += d * d;
        ++n;
      }
    }
    check(n > 0, "validation_mse: no candidates");
    return acc / n;
  }

  TargetEncoding<T> compute_modulation_from(const BatchSample& s) {
    return compute_modulation(s.ref_feats, s.ref_box);
  }

  std::vector<EpochStats> train_offline(
      const PairSampler& sampler, const std::vector<BatchSample>& val_pairs,
      const IouTrainConfig& cfg, const TinyBackbone<T>& backbone, Rng& rng) {
    std::vector<EpochStats> history;
    AdamState<T> adam;
    const int batches_per_epoch =
        std::max(1, cfg.pairs_per_epoch / cfg.batch_pairs);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      AdamConfig acfg;
      acfg.lr = cfg.lr * std::pow(cfg.lr_decay, epoch / cfg.lr_step_epochs);
      double train_acc = 0;
      for (int bi = 0; bi < batches_per_epoch; ++bi) {
        std::vector<BatchSample> batch;
        batch.reserve(static_cast<size_t>(cfg.batch_pairs));
        for (int i = 0; i < cfg.batch_pairs; ++i) {
          batch.push_back(make_sample(sampler(rng), cfg, backbone, rng));
        }
        try {
          Var<T> preds = forward_batch(batch, /*training=*/true);
          Var<T> targets = normalized_targets(batch);
          Var<T> diff = sub(preds, targets);
          Var<T> loss = smul(sum(mul(diff, diff)),
                             T(1) / static_cast<T>(preds.size()));
          train_acc += static_cast<double>(loss.value()[0]) / 4.0;
          std::vector<Tensor<T>> grads = backprop(loss, params_.list());
          std::vector<T> flat_grads;
          for (const auto& g : grads) {
            flat_grads.insert(flat_grads.end(), g.vec().begin(),
                              g.vec().end());
          }
          std::vector<T> flat = params_.flatten();
          adam_step(flat, flat_grads, adam, acfg);
          params_.assign(flat);
        } catch (const Error& e) {
          fail("train_offline: epoch ", epoch, " batch ", bi, ": ", e.what());
        }
      }
      EpochStats st;
      st.epoch = epoch;
      st.train_mse = train_acc / batches_per_epoch;
      st.val_mse = val_pairs.empty() ? 0.0 : validation_mse(val_pairs);
      st.lr = acfg.lr;
      history.push_back(st);
    }
    return history;
  }

  // Builds a training sample from a pair: augmentation, backbone features,
  // candidate generation.
  BatchSample make_sample(TrainingPair pair, const IouTrainConfig& cfg,
                          const TinyBackbone<T>& backbone, Rng& rng) {
    if (cfg.flip_augment && std::uniform_int_distribution<int>(0, 1)(rng)) {
      const int w = pair.reference_patch.shape()[1];
      pair.reference_patch = flip_horizontal(pair.reference_patch);
      pair.test_patch = flip_horizontal(pair.test_patch);
      pair.reference_box.cx = (w - 1) - pair.reference_box.cx;
      pair.test_box.cx = (w - 1) - pair.test_box.cx;
    }
    if (cfg.color_jitter > 0) {
      pair.reference_patch =
          color_jitter(pair.reference_patch, rng, cfg.color_jitter);
      pair.test_patch = color_jitter(pair.test_patch, rng, cfg.color_jitter);
    }
    BatchSample s;
    s.ref_feats = backbone.extract(pair.reference_patch);
    s.test_feats = backbone.extract(pair.test_patch);
    s.ref_box = pair.reference_box;
    CandidateSet cands =
        generate_candidates(pair.test_box, cfg.candidates, cfg.min_iou, rng);
    s.candidates = cands.boxes;
    for (const auto& c : s.candidates) {
      s.target_iou.push_back(geometric_iou(c, pair.test_box));
    }
    return s;
  }

  // Named state beyond the trainable parameters (batch-norm statistics).
  std::vector<std::pair<std::string, Tensor<T>*>> state_tensors() {
    std::vector<std::pair<std::string, Tensor<T>*>> out;
    auto add_bn = [&](const std::string& name, BatchNorm<T>& bn) {
      if (bn.scale.defined()) {
        out.emplace_back(name + ".running_mean", &bn.running_mean);
        out.emplace_back(name + ".running_var", &bn.running_var);
      }
    };
    for (int b = 0; b < 2; ++b) {
      const std::string p = "iou.b" + std::to_string(b + 3);
      add_bn(p + ".test.bn1", test_bn1_[b]);
      add_bn(p + ".test.bn2", test_bn2_[b]);
      add_bn(p + ".test.fc_bn", test_fc_bn_[b]);
      add_bn(p + ".ref.bn", ref_bn_[b]);
      add_bn(p + ".ref.fc_bn", ref_fc_bn_[b]);
      add_bn(p + ".refbr.fc_bn", ref_branch_fc_bn_[b]);
    }
    add_bn("iou.g1_bn", g1_bn_);
    add_bn("iou.g2_bn", g2_bn_);
    return out;
  }

 private:
  Var<T> box_var(const BoundingBox& b) const {
    return Var<T>::constant(
        Tensor<T>({4}, {static_cast<T>(b.cx), static_cast<T>(b.cy),
                        static_cast<T>(b.w), static_cast<T>(b.h)}));
  }

  // Differentiable patch-to-feature coordinate change for a box variable.
  Var<T> to_feature_box(const Var<T>& box_patch, int stride) const {
    const T off = static_cast<T>(0.5 * (stride - 1));
    Var<T> shift = Var<T>::constant(Tensor<T>({4}, {-off, -off, T(0), T(0)}));
    return smul(add(box_patch, shift), T(1) / static_cast<T>(stride));
  }

  Var<T> encode_map(int b, const Tensor<T>& feats, bool training) {
    return encode_map_var(b, Var<T>::constant(feats), training);
  }

  Var<T> encode_map_var(int b, const Var<T>& feats, bool training) {
    Var<T> h1 = relu(test_bn1_[b].forward(test_conv1_[b].forward(feats),
                                          training));
    return relu(test_bn2_[b].forward(test_conv2_[b].forward(h1), training));
  }

  Var<T> predictor(const Var<T>& rows, bool training) {
    Var<T> h1 = relu(g1_bn_.forward(g1_.forward(rows), training));
    Var<T> h2 = relu(g2_bn_.forward(g2_.forward(h1), training));
    return g3_.forward(h2);
  }

  // Stacks rank-1 rows into a [N, F] matrix.
  static Var<T> stack_rows(const std::vector<Var<T>>& rows) {
    return stack0(rows);
  }

  // Expands per-pair rows [B, F] to per-candidate rows [N, F].
  Var<T> expand_rows(const Var<T>& rows,
                     const std::vector<BatchSample>& batch) {
    const int f = rows.shape()[1];
    Var<T> flat = flatten(rows);
    std::vector<Var<T>> out;
    for (size_t i = 0; i < batch.size(); ++i) {
      Var<T> row = slice1d(flat, static_cast<int64_t>(i) * f, f);
      for (size_t k = 0; k < batch[i].candidates.size(); ++k) {
        out.push_back(row);
      }
    }
    return stack0(out);
  }

  Var<T> normalized_targets(const std::vector<BatchSample>& batch) const {
    std::vector<T> t;
    for (const auto& s : batch) {
      for (double v : s.target_iou) t.push_back(static_cast<T>(2 * v - 1));
    }
    return Var<T>::constant(Tensor<T>({static_cast<int>(t.size())}, t));
  }

  void register_params() {
    for (int b = 0; b < 2; ++b) {
      if (!block_active(b)) continue;
      const std::string p = "iou.b" + std::to_string(b + 3);
      test_conv1_[b].register_params(params_, p + ".test.conv1");
      test_bn1_[b].register_params(params_, p + ".test.bn1");
      test_conv2_[b].register_params(params_, p + ".test.conv2");
      test_bn2_[b].register_params(params_, p + ".test.bn2");
      test_fc_[b].register_params(params_, p + ".test.fc");
      test_fc_bn_[b].register_params(params_, p + ".test.fc_bn");
      if (has_modulation()) {
        ref_conv_[b].register_params(params_, p + ".ref.conv");
        ref_bn_[b].register_params(params_, p + ".ref.bn");
        ref_fc_[b].register_params(params_, p + ".ref.fc");
        ref_fc_bn_[b].register_params(params_, p + ".ref.fc_bn");
      }
      if (variant_ == IouVariant::kConcatenation ||
          variant_ == IouVariant::kSiamese) {
        ref_branch_fc_[b].register_params(params_, p + ".refbr.fc");
        ref_branch_fc_bn_[b].register_params(params_, p + ".refbr.fc_bn");
      }
    }
    if (variant_ != IouVariant::kSiamese) {
      g1_.register_params(params_, "iou.g1");
      g1_bn_.register_params(params_, "iou.g1_bn");
      g2_.register_params(params_, "iou.g2");
      g2_bn_.register_params(params_, "iou.g2_bn");
      g3_.register_params(params_, "iou.g3");
    }
  }

  IouVariant variant_;
  std::array<int, 2> strides_;
  std::array<Conv2dLayer<T>, 2> test_conv1_, test_conv2_, ref_conv_;
  std::array<BatchNorm<T>, 2> test_bn1_, test_bn2_, ref_bn_;
  std::array<LinearLayer<T>, 2> test_fc_, ref_fc_, ref_branch_fc_;
  std::array<BatchNorm<T>, 2> test_fc_bn_, ref_fc_bn_, ref_branch_fc_bn_;
  LinearLayer<T> g1_, g2_, g3_;
  BatchNorm<T> g1_bn_, g2_bn_;
  Params<T> params_;
};

// ------------------------------------------------------------------
// Model file glue
// ------------------------------------------------------------------

template <typename T>
void save_iou_net(const std::string& path, IouNet<T>& net,
                  uint64_t backbone_seed) {
  std::vector<ModelTensor> ts;
  ts.push_back(make_model_tensor(
      "meta.variant",
      Tensor<T>({1}, {static_cast<T>(static_cast<int>(net.variant()))})));
  ts.push_back(make_model_tensor(
      "meta.backbone_seed",
      Tensor<double>({1}, {static_cast<double>(backbone_seed)})));
  Params<T>& p = net.params();
  for (size_t i = 0; i < p.names.size(); ++i) {
    ts.push_back(make_model_tensor(p.names[i], p.vars[i]->value()));
  }
  for (auto& [name, tensor] : net.state_tensors()) {
    ts.push_back(make_model_tensor(name, *tensor));
  }
  save_model(path, ts);
}

struct IouModelInfo {
  IouVariant variant;
  uint64_t backbone_seed;
};

inline IouModelInfo peek_iou_model(const std::string& path) {
  auto ts = load_model(path);
  const ModelTensor* v = find_tensor(ts, "meta.variant");
  const ModelTensor* s = find_tensor(ts, "meta.backbone_seed");
  check(v && s, "model file ", path, " lacks meta tensors");
  return {static_cast<IouVariant>(static_cast<int>(v->values[0])),
          static_cast<uint64_t>(s->values[0])};
}

template <typename T>
void load_iou_net(const std::string& path, IouNet<T>& net) {
  auto ts = load_model(path);
  Params<T>& p = net.params();
  for (size_t i = 0; i < p.names.size(); ++i) {
    const ModelTensor* mt = find_tensor(ts, p.names[i]);
    check(mt != nullptr, "model file ", path, " is missing tensor ",
          p.names[i]);
    check(mt->dims == p.vars[i]->shape(), "model tensor ", p.names[i],
          ": shape ", shape_str(mt->dims), " does not match ",
          shape_str(p.vars[i]->shape()));
    *p.vars[i] = Var<T>::leaf(mt->to_tensor<T>(), true);
  }
  for (auto& [name, tensor] : net.state_tensors()) {
    const ModelTensor* mt = find_tensor(ts, name);
    check(mt != nullptr, "model file ", path, " is missing tensor ", name);
    *tensor = mt->to_tensor<T>();
  }
}

}  // namespace atom

#endif  // ATOM_IOU_NET_HPP_
