#ifndef ATOM_CLASSIFIER_HPP_
#define ATOM_CLASSIFIER_HPP_

#include <cmath>
#include <utility>
#include <vector>

#include "atom/imageops.hpp"
#include "atom/nn.hpp"
#include "atom/optim.hpp"

namespace atom {

// Two-layer fully convolutional classification head:
//   f(x; w) = pelu(w2 * (w1 * x)),
// a 1x1 dimensionality-reduction layer followed by a 4x4 single-channel
// layer with same padding, so the score map aligns with the feature map.
template <typename T>
struct ClassifierWeights {
  static constexpr T kPeluAlpha = T(0.05);
  static constexpr int kHidden = 64;

  Var<T> w1;  // [1, 1, D, 64]
  Var<T> w2;  // [4, 4, 64, 1]
  T lambda1 = T(1e-2);
  T lambda2 = T(1e-2);

  ClassifierWeights() = default;
  ClassifierWeights(Rng& rng, int feature_channels) {
    w1 = Var<T>::leaf(
        he_normal<T>(rng, {1, 1, feature_channels, kHidden}, feature_channels),
        true);
    w2 = Var<T>::leaf(he_normal<T>(rng, {4, 4, kHidden, 1}, 16 * kHidden),
                      true);
  }

  int feature_channels() const { return w1.value().dim(2); }
};

// Forward pass for a single feature map [H, W, D] -> score map [H, W].
template <typename T>
Var<T> classify(const Var<T>& features, const ClassifierWeights<T>& w) {
  check(features.value().rank() == 3, "classify: features must be [H, W, D]");
  check(features.shape()[2] == w.feature_channels(),
        "classify: channel mismatch, features have ", features.shape()[2],
        ", classifier expects ", w.feature_channels());
  Var<T> z1 = conv2d(features, w.w1, 1, Pad{0, 0, 0, 0});
  Var<T> z2 = conv2d(z1, w.w2, 1, Pad::same(4, 4));
  Var<T> f = pelu(z2, ClassifierWeights<T>::kPeluAlpha);
  return reshape(f, {features.shape()[0], features.shape()[1]});
}

template <typename T>
Tensor<T> classify(const Tensor<T>& features, const ClassifierWeights<T>& w) {
  NoGradGuard ng;
  return classify(Var<T>::constant(features), w).value();
}

// Gaussian label map: y[i, j] = exp(-((i-cy)^2 + (j-cx)^2) / (2 sigma^2)),
// center given at sub-cell resolution in score-map cells.
struct LabelConfig {
  double sigma = 1.5;  // in score-map cells
  double amplitude = 1.0;
};

template <typename T>
Tensor<T> make_label(double cx, double cy, const LabelConfig& cfg, int h,
                     int w) {
  check(cfg.sigma > 0, "make_label: sigma must be positive, got ", cfg.sigma);
  Tensor<T> y({h, w});
  const double inv = 1.0 / (2.0 * cfg.sigma * cfg.sigma);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      const double d2 = (i - cy) * (i - cy) + (j - cx) * (j - cx);
      y.at(i, j) = static_cast<T>(cfg.amplitude * std::exp(-d2 * inv));
    }
  }
  return y;
}

// Ordered training set of (feature map, label map, weight). Weights are
// kept normalized to sum 1; adding a sample decays existing weights by
// (1 - eta * boost) and gives the new sample eta * boost. At capacity the
// minimum-weight entry is evicted first.
template <typename T>
class SampleMemory {
 public:
  struct Entry {
    Tensor<T> features;  // [H, W, D]
    Tensor<T> label;     // [H, W]
    double weight = 0;
  };

  explicit SampleMemory(int capacity = 50, double eta = 0.01)
      : capacity_(capacity), eta_(eta) {}

  int size() const { return static_cast<int>(entries_.size()); }
  bool empty() const { return entries_.empty(); }
  int capacity() const { return capacity_; }
  double eta() const { return eta_; }
  const std::vector<Entry>& entries() const { return entries_; }

  void add(Tensor<T> features, Tensor<T> label, double boost = 1.0) {
    check_shapes(features, label);
    if (static_cast<int>(entries_.size()) == capacity_) {
      size_t min_idx = 0;
      for (size_t i = 1; i < entries_.size(); ++i) {
        if (entries_[i].weight < entries_[min_idx].weight) min_idx = i;
      }
      entries_.erase(entries_.begin() + static_cast<long>(min_idx));
    }
    const double w_new = eta_ * boost;
    if (entries_.empty()) {
      entries_.push_back({std::move(features), std::move(label), 1.0});
      return;
    }
    for (auto& e : entries_) e.weight *= (1.0 - w_new);
    entries_.push_back({std::move(features), std::move(label), w_new});
    normalize();
  }

  // Bulk insertion with uniform weights, for the first-frame samples.
  void add_initial(std::vector<std::pair<Tensor<T>, Tensor<T>>> samples) {
    for (auto& s : samples) {
      check_shapes(s.first, s.second);
      entries_.push_back(
          {std::move(s.first), std::move(s.second),
           1.0 / static_cast<double>(samples.size())});
    }
    normalize();
  }

 private:
  void check_shapes(const Tensor<T>& features, const Tensor<T>& label) const {
    check(features.rank() == 3, "memory: features must be [H, W, D]");
    check(label.rank() == 2 && label.shape()[0] == features.shape()[0] &&
              label.shape()[1] == features.shape()[1],
          "memory: label shape ", shape_str(label.shape()),
          " does not match features ", shape_str(features.shape()));
    if (!entries_.empty()) {
      check(features.same_shape(entries_[0].features),
            "memory: inconsistent feature shape ",
            shape_str(features.shape()), " vs ",
            shape_str(entries_[0].features.shape()));
    }
  }

  void normalize() {
    double sum = 0;
    for (const auto& e : entries_) sum += e.weight;
    check(sum > 0, "memory: degenerate weight normalization");
    for (auto& e : entries_) e.weight /= sum;
  }

  std::vector<Entry> entries_;
  int capacity_;
  double eta_;
};

// Residual vector of the weighted regularized L2 objective:
//   r_j = sqrt(gamma_j) (f(x_j; w) - y_j)  for the m samples,
//   r_{m+k} = sqrt(lambda_k) w_k           for the two layers.
// Built over the whole memory as one batched graph. When train_w1 is
// false the first layer enters as a constant and only w2 is trainable.
template <typename T>
Var<T> residual_vector(const SampleMemory<T>& memory,
                       const ClassifierWeights<T>& w, bool train_w1 = true,
                       bool train_w2 = true) {
  check(!memory.empty(), "residual_vector: empty sample memory");
  const auto& entries = memory.entries();
  const int m = memory.size();
  const int h = entries[0].features.shape()[0];
  const int width = entries[0].features.shape()[1];
  const int d = entries[0].features.shape()[2];

  // Stack features, labels, and per-sample sqrt-weights.
  Tensor<T> xs({m, h, width, d});
  Tensor<T> ys({m, h, width, 1});
  Tensor<T> gs({m, h, width, 1});
  const int64_t img = static_cast<int64_t>(h) * width;
  for (int j = 0; j < m; ++j) {
    const auto& e = entries[j];
    for (int64_t i = 0; i < img * d; ++i) xs[j * img * d + i] = e.features[i];
    const T sg = static_cast<T>(std::sqrt(e.weight));
    for (int64_t i = 0; i < img; ++i) {
      ys[j * img + i] = e.label[i];
      gs[j * img + i] = sg;
    }
  }

  Var<T> x = Var<T>::constant(std::move(xs));
  Var<T> labels = Var<T>::constant(std::move(ys));
  Var<T> gamma = Var<T>::constant(std::move(gs));
  Var<T> w1 = train_w1 ? w.w1 : w.w1.detach();
  Var<T> w2 = train_w2 ? w.w2 : w.w2.detach();

  Var<T> z1 = conv2d(x, w1, 1, Pad{0, 0, 0, 0});
  Var<T> z2 = conv2d(z1, w2, 1, Pad::same(4, 4));
  Var<T> f = pelu(z2, ClassifierWeights<T>::kPeluAlpha);
  Var<T> r_data = flatten(mul(sub(f, labels), gamma));
  Var<T> r_w1 = smul(flatten(w1), static_cast<T>(std::sqrt(w.lambda1)));
  Var<T> r_w2 = smul(flatten(w2), static_cast<T>(std::sqrt(w.lambda2)));
  return concat1d<T>({r_data, r_w1, r_w2});
}

// The Eq-style loss evaluated directly (oracle for the residual form).
template <typename T>
double classification_loss(const SampleMemory<T>& memory,
                           const ClassifierWeights<T>& w) {
  NoGradGuard ng;
  double loss = 0;
  for (const auto& e : memory.entries()) {
    Tensor<T> f = classify(e.features, w);
    double err = 0;
    for (int64_t i = 0; i < f.size(); ++i) {
      const double dv = f[i] - e.label[i];
      err += dv * dv;
    }
    loss += e.weight * err;
  }
  double reg = 0;
  for (int64_t i = 0; i < w.w1.size(); ++i) {
    reg += w.lambda1 * w.w1.value()[i] * w.w1.value()[i];
  }
  for (int64_t i = 0; i < w.w2.size(); ++i) {
    reg += w.lambda2 * w.w2.value()[i] * w.w2.value()[i];
  }
  return loss + reg;
}

template <typename T>
ResidualProblem<T> make_classifier_problem(const SampleMemory<T>& memory,
                                           ClassifierWeights<T>& w,
                                           bool train_w1) {
  ResidualProblem<T> problem;
  if (train_w1) {
    problem.weights = {w.w1, w.w2};
  } else {
    problem.weights = {w.w2};
  }
  ClassifierWeights<T>* wp = &w;
  const SampleMemory<T>* mp = &memory;
  problem.evaluate = [wp, mp, train_w1](const std::vector<Var<T>>& ws) {
    ClassifierWeights<T> current = *wp;
    if (train_w1) {
      current.w1 = ws[0];
      current.w2 = ws[1];
    } else {
      current.w2 = ws[0];
    }
    return residual_vector(*mp, current, train_w1, true);
  };
  return problem;
}

// First-frame optimization: both layers, N_GN = 6, N_CG = 10.
template <typename T>
LossTrace train_initial(const SampleMemory<T>& memory,
                        ClassifierWeights<T>& w) {
  ResidualProblem<T> problem = make_classifier_problem(memory, w, true);
  LossTrace trace = gauss_newton_cg(problem, GncgOptions{6, 10});
  w.w1 = problem.weights[0];
  w.w2 = problem.weights[1];
  return trace;
}

// Update optimization: final layer only, N_GN = 1, N_CG = 5.
template <typename T>
LossTrace train_update(const SampleMemory<T>& memory,
                       ClassifierWeights<T>& w) {
  ResidualProblem<T> problem = make_classifier_problem(memory, w, false);
  LossTrace trace = gauss_newton_cg(problem, GncgOptions{1, 5});
  w.w2 = problem.weights[0];
  return trace;
}

// First-frame augmentation: returns exactly n patches, the unmodified
// patch first, each with the target-center shift it introduces (pixels).
struct AugmentedPatch {
  TensorF patch;
  double shift_x = 0;
  double shift_y = 0;
};

inline std::vector<AugmentedPatch> augment_first_frame(const TensorF& patch,
                                                       int n, Rng& rng) {
  check(n >= 1, "augment_first_frame: need n >= 1");
  std::vector<AugmentedPatch> out;
  out.reserve(static_cast<size_t>(n));
  out.push_back({patch, 0.0, 0.0});
  const int side = patch.shape()[0];
  std::uniform_real_distribution<double> shift_dist(-0.08 * side, 0.08 * side);
  std::uniform_real_distribution<double> angle_dist(4.0, 18.0);
  std::uniform_real_distribution<double> blur_dist(0.8, 2.5);
  std::uniform_int_distribution<int> sign(0, 1);
  std::uniform_int_distribution<int> blocks(3, 6);
  for (int i = 1; i < n; ++i) {
    switch (i % 5) {
      case 1: {
        const double dx = shift_dist(rng), dy = shift_dist(rng);
        out.push_back({translate_image(patch, dx, dy), dx, dy});
        break;
      }
      case 2: {
        const double a = angle_dist(rng) * (sign(rng) ? 1.0 : -1.0);
        out.push_back({rotate_about_center(patch, a), 0.0, 0.0});
        break;
      }
      case 3:
        out.push_back({gaussian_blur(patch, blur_dist(rng)), 0.0, 0.0});
        break;
      case 4:
        out.push_back(
            {dropout_blocks(patch, rng, blocks(rng), side / 8), 0.0, 0.0});
        break;
      default: {
        const double dx = shift_dist(rng), dy = shift_dist(rng);
        out.push_back(
            {gaussian_blur(translate_image(patch, dx, dy), 1.2), dx, dy});
        break;
      }
    }
  }
  return out;
}

}  // namespace atom

#endif  // ATOM_CLASSIFIER_HPP_
