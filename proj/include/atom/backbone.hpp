#ifndef ATOM_BACKBONE_HPP_
#define ATOM_BACKBONE_HPP_

#include "atom/nn.hpp"
#include "atom/ops.hpp"

namespace atom {

template <typename T>
struct BackboneFeatures {
  Tensor<T> block3;  // stride 8
  Tensor<T> block4;  // stride 16
};

// Fixed, seeded 4-stage convnet standing in for a pretrained backbone.
// Weights are frozen; features are plain tensors outside any graph. The
// two exported maps mimic the usual mid/deep feature resolutions: for a
// 288x288x3 patch, block3 is 36x36x32 and block4 is 18x18x64.
template <typename T>
class TinyBackbone {
 public:
  static constexpr int kBlock3Channels = 32;
  static constexpr int kBlock4Channels = 64;
  static constexpr int kBlock3Stride = 8;
  static constexpr int kBlock4Stride = 16;

  explicit TinyBackbone(uint64_t seed = 0x7a3c0ffeeULL) {
    Rng rng(seed);
    w1_ = he_normal<T>(rng, {3, 3, 3, 16}, 27);
    w2_ = he_normal<T>(rng, {3, 3, 16, 32}, 144);
    w3_ = he_normal<T>(rng, {3, 3, 32, kBlock3Channels}, 288);
    w4_ = he_normal<T>(rng, {3, 3, kBlock3Channels, kBlock4Channels}, 288);
  }

  // patch: [S, S, 3] float image in [0, 1].
  BackboneFeatures<T> extract(const TensorF& patch) const {
    check(patch.rank() == 3 && patch.shape()[2] == 3,
          "backbone: patch must be [S, S, 3]");
    ++extract_count_;
    Tensor<T> x(patch.shape());
    for (int64_t i = 0; i < x.size(); ++i) {
      x[i] = static_cast<T>(patch[i] - 0.5f);
    }
    const Pad p = Pad::same(3, 3);
    Tensor<T> a = relu_inplace(detail::conv_forward(x, w1_, 2, p));
    Tensor<T> b = relu_inplace(detail::conv_forward(a, w2_, 2, p));
    Tensor<T> block3 = relu_inplace(detail::conv_forward(b, w3_, 2, p));
    Tensor<T> block4 = relu_inplace(detail::conv_forward(block3, w4_, 2, p));
    return {std::move(block3), std::move(block4)};
  }

  // Frame-budget instrumentation for tests.
  uint64_t extract_count() const { return extract_count_; }
  void reset_extract_count() { extract_count_ = 0; }

 private:
  static Tensor<T> relu_inplace(Tensor<T> t) {
    for (int64_t i = 0; i < t.size(); ++i) {
      if (t[i] < T(0)) t[i] = T(0);
    }
    return t;
  }

  Tensor<T> w1_, w2_, w3_, w4_;
  mutable uint64_t extract_count_ = 0;
};

}  // namespace atom

#endif  // ATOM_BACKBONE_HPP_
