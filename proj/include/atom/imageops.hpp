#ifndef ATOM_IMAGEOPS_HPP_
#define ATOM_IMAGEOPS_HPP_

#include <cmath>
#include <random>

#include "atom/tensor.hpp"

// Plain image manipulation on [H, W, C] float tensors (no gradients).
// Pixel i sits at continuous coordinate i; reads outside the image are 0.

namespace atom {

inline float sample_bilinear(const TensorF& img, double x, double y, int c) {
  const int h = img.shape()[0], w = img.shape()[1], ch = img.shape()[2];
  const int jx = static_cast<int>(std::floor(x));
  const int iy = static_cast<int>(std::floor(y));
  const double u = x - jx, v = y - iy;
  auto px = [&](int i, int j) -> double {
    if (i < 0 || i >= h || j < 0 || j >= w) return 0.0;
    return img.data()[(static_cast<int64_t>(i) * w + j) * ch + c];
  };
  return static_cast<float>((1 - u) * (1 - v) * px(iy, jx) +
                            u * (1 - v) * px(iy, jx + 1) +
                            (1 - u) * v * px(iy + 1, jx) +
                            u * v * px(iy + 1, jx + 1));
}

// Square crop of side `side` centered at (cx, cy), resampled to
// out_size x out_size. Output pixel p maps to source coordinate
// (cx - side/2) + (p + 0.5) * side/out_size - 0.5.
inline TensorF crop_resample(const TensorF& img, double cx, double cy,
                             double side, int out_size) {
  const int ch = img.shape()[2];
  TensorF out({out_size, out_size, ch});
  const double step = side / out_size;
  const double ox = cx - 0.5 * side, oy = cy - 0.5 * side;
  for (int i = 0; i < out_size; ++i) {
    const double sy = oy + (i + 0.5) * step - 0.5;
    for (int j = 0; j < out_size; ++j) {
      const double sx = ox + (j + 0.5) * step - 0.5;
      for (int c = 0; c < ch; ++c) {
        out.at(i, j, c) = sample_bilinear(img, sx, sy, c);
      }
    }
  }
  return out;
}

inline TensorF translate_image(const TensorF& img, double dx, double dy) {
  const int h = img.shape()[0], w = img.shape()[1], ch = img.shape()[2];
  TensorF out({h, w, ch});
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      for (int c = 0; c < ch; ++c) {
        out.at(i, j, c) = sample_bilinear(img, j - dx, i - dy, c);
      }
    }
  }
  return out;
}

inline TensorF rotate_about_center(const TensorF& img, double degrees) {
  const int h = img.shape()[0], w = img.shape()[1], ch = img.shape()[2];
  const double rad = degrees * 3.14159265358979323846 / 180.0;
  const double ca = std::cos(rad), sa = std::sin(rad);
  const double cx = 0.5 * (w - 1), cy = 0.5 * (h - 1);
  TensorF out({h, w, ch});
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      const double rx = j - cx, ry = i - cy;
      const double sx = cx + ca * rx + sa * ry;
      const double sy = cy - sa * rx + ca * ry;
      for (int c = 0; c < ch; ++c) {
        out.at(i, j, c) = sample_bilinear(img, sx, sy, c);
      }
    }
  }
  return out;
}

inline TensorF gaussian_blur(const TensorF& img, double sigma) {
  const int h = img.shape()[0], w = img.shape()[1], ch = img.shape()[2];
  const int radius = std::max(1, static_cast<int>(std::ceil(2.5 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double norm = 0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    norm += kernel[i + radius];
  }
  for (double& k : kernel) k /= norm;

  TensorF tmp({h, w, ch}), out({h, w, ch});
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      for (int c = 0; c < ch; ++c) {
        double acc = 0;
        for (int t = -radius; t <= radius; ++t) {
          const int jj = std::clamp(j + t, 0, w - 1);
          acc += kernel[t + radius] * img.at(i, jj, c);
        }
        tmp.at(i, j, c) = static_cast<float>(acc);
      }
    }
  }
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      for (int c = 0; c < ch; ++c) {
        double acc = 0;
        for (int t = -radius; t <= radius; ++t) {
          const int ii = std::clamp(i + t, 0, h - 1);
          acc += kernel[t + radius] * tmp.at(ii, j, c);
        }
        out.at(i, j, c) = static_cast<float>(acc);
      }
    }
  }
  return out;
}

// Zeroes n square blocks at seeded positions.
inline TensorF dropout_blocks(TensorF img, std::mt19937_64& rng, int n_blocks,
                              int block_size) {
  const int h = img.shape()[0], w = img.shape()[1], ch = img.shape()[2];
  std::uniform_int_distribution<int> dx(0, std::max(0, w - block_size));
  std::uniform_int_distribution<int> dy(0, std::max(0, h - block_size));
  for (int b = 0; b < n_blocks; ++b) {
    const int x0 = dx(rng), y0 = dy(rng);
    for (int i = y0; i < std::min(h, y0 + block_size); ++i) {
      for (int j = x0; j < std::min(w, x0 + block_size); ++j) {
        for (int c = 0; c < ch; ++c) img.at(i, j, c) = 0.0f;
      }
    }
  }
  return img;
}

inline TensorF flip_horizontal(const TensorF& img) {
  const int h = img.shape()[0], w = img.shape()[1], ch = img.shape()[2];
  TensorF out({h, w, ch});
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      for (int c = 0; c < ch; ++c) out.at(i, j, c) = img.at(i, w - 1 - j, c);
    }
  }
  return out;
}

// Per-channel multiplicative jitter, clamped back to [0, 1].
inline TensorF color_jitter(TensorF img, std::mt19937_64& rng,
                            double magnitude) {
  const int ch = img.shape()[2];
  std::uniform_real_distribution<double> dist(1.0 - magnitude, 1.0 + magnitude);
  std::vector<double> gain(ch);
  for (int c = 0; c < ch; ++c) gain[c] = dist(rng);
  for (int i = 0; i < img.shape()[0]; ++i) {
    for (int j = 0; j < img.shape()[1]; ++j) {
      for (int c = 0; c < ch; ++c) {
        img.at(i, j, c) = static_cast<float>(
            std::clamp(img.at(i, j, c) * gain[c], 0.0, 1.0));
      }
    }
  }
  return img;
}

}  // namespace atom

#endif  // ATOM_IMAGEOPS_HPP_
