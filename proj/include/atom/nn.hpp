#ifndef ATOM_NN_HPP_
#define ATOM_NN_HPP_

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "atom/ops.hpp"

namespace atom {

using Rng = std::mt19937_64;

// He-normal initialization for ReLU-style layers.
template <typename T>
Tensor<T> he_normal(Rng& rng, std::vector<int> shape, int fan_in) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  Tensor<T> t(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(dist(rng));
  return t;
}

// Named trainable parameters of a model, in registration order. The order
// defines the flat layout used by optimizers and the model file.
template <typename T>
struct Params {
  std::vector<std::string> names;
  std::vector<Var<T>*> vars;

  void add(const std::string& name, Var<T>& v) {
    names.push_back(name);
    vars.push_back(&v);
  }

  std::vector<Var<T>> list() const {
    std::vector<Var<T>> out;
    out.reserve(vars.size());
    for (auto* v : vars) out.push_back(*v);
    return out;
  }

  int64_t total_size() const {
    int64_t n = 0;
    for (auto* v : vars) n += v->size();
    return n;
  }

  std::vector<T> flatten() const {
    std::vector<T> flat;
    flat.reserve(static_cast<size_t>(total_size()));
    for (auto* v : vars) {
      flat.insert(flat.end(), v->value().vec().begin(),
                  v->value().vec().end());
    }
    return flat;
  }

  void assign(const std::vector<T>& flat) {
    check(static_cast<int64_t>(flat.size()) == total_size(),
          "Params::assign: size mismatch ", flat.size(), " vs ",
          total_size());
    size_t off = 0;
    for (auto* v : vars) {
      std::vector<T> chunk(flat.begin() + off, flat.begin() + off + v->size());
      *v = Var<T>::leaf(Tensor<T>(v->shape(), std::move(chunk)), true);
      off += static_cast<size_t>(v->size());
    }
  }
};

template <typename T>
struct Conv2dLayer {
  Var<T> weight;  // [k, k, Cin, Cout]
  Var<T> bias;    // [Cout]
  int stride = 1;
  Pad pad;

  Conv2dLayer() = default;
  Conv2dLayer(Rng& rng, int k, int cin, int cout, int stride_ = 1)
      : stride(stride_), pad(Pad::same(k, k)) {
    weight = Var<T>::leaf(he_normal<T>(rng, {k, k, cin, cout}, k * k * cin),
                          true);
    bias = Var<T>::leaf(Tensor<T>({cout}), true);
  }

  Var<T> forward(const Var<T>& x) const {
    Var<T> y = conv2d(x, weight, stride, pad);
    return add(y, broadcast_channelwise(bias, y.shape()));
  }

  void register_params(Params<T>& p, const std::string& prefix) {
    p.add(prefix + ".weight", weight);
    p.add(prefix + ".bias", bias);
  }
};

template <typename T>
struct LinearLayer {
  Var<T> weight;  // [in, out]
  Var<T> bias;    // [out]

  LinearLayer() = default;
  LinearLayer(Rng& rng, int in, int out) {
    weight = Var<T>::leaf(he_normal<T>(rng, {in, out}, in), true);
    bias = Var<T>::leaf(Tensor<T>({out}), true);
  }

  // x: [N, in] -> [N, out]
  Var<T> forward(const Var<T>& x) const {
    Var<T> y = matmul(x, weight);
    return add(y, broadcast_channelwise(bias, y.shape()));
  }

  void register_params(Params<T>& p, const std::string& prefix) {
    p.add(prefix + ".weight", weight);
    p.add(prefix + ".bias", bias);
  }
};

// Batch normalization over all axes but the channel (last) axis.
// Training mode normalizes by batch statistics and updates the running
// estimates; eval mode is the deterministic affine map defined by them.
template <typename T>
struct BatchNorm {
  Var<T> scale, shift;            // [C], trainable
  Tensor<T> running_mean, running_var;
  double momentum = 0.1;
  double epsilon = 1e-5;

  BatchNorm() = default;
  explicit BatchNorm(int channels) {
    scale = Var<T>::leaf(Tensor<T>::full({channels}, T(1)), true);
    shift = Var<T>::leaf(Tensor<T>({channels}), true);
    running_mean = Tensor<T>({channels});
    running_var = Tensor<T>::full({channels}, T(1));
  }

  int channels() const { return scale.value().dim(0); }

  Var<T> forward(const Var<T>& x, bool training) {
    const int c = channels();
    check(!x.shape().empty() && x.shape().back() == c,
          "batchnorm: channel mismatch, input ", shape_str(x.shape()),
          " has ", x.shape().back(), " channels, layer has ", c);
    if (training) {
      const T inv_rows = T(1) / static_cast<T>(x.size() / c);
      Var<T> mean = smul(sum_channelwise(x), inv_rows);
      Var<T> centered = sub(x, broadcast_channelwise(mean, x.shape()));
      Var<T> var = smul(sum_channelwise(mul(centered, centered)), inv_rows);
      Var<T> inv_std = rsqrt(
          add(var, Var<T>::constant(Tensor<T>::full({c}, T(epsilon)))));
      for (int i = 0; i < c; ++i) {
        running_mean[i] = static_cast<T>((1 - momentum) * running_mean[i] +
                                         momentum * mean.value()[i]);
        running_var[i] = static_cast<T>((1 - momentum) * running_var[i] +
                                        momentum * var.value()[i]);
      }
      Var<T> norm = mul(centered, broadcast_channelwise(inv_std, x.shape()));
      return add(mul(norm, broadcast_channelwise(scale, x.shape())),
                 broadcast_channelwise(shift, x.shape()));
    }
    // x * a + b with a = scale / sqrt(var + eps), b = shift - mean * a.
    Tensor<T> a({c}), b({c});
    for (int i = 0; i < c; ++i) {
      a[i] = static_cast<T>(scale.value()[i] /
                            std::sqrt(static_cast<double>(running_var[i]) +
                                      epsilon));
      b[i] = static_cast<T>(shift.value()[i] - running_mean[i] * a[i]);
    }
    return add(mul(x, broadcast_channelwise(Var<T>::constant(a), x.shape())),
               broadcast_channelwise(Var<T>::constant(b), x.shape()));
  }

  void register_params(Params<T>& p, const std::string& prefix) {
    p.add(prefix + ".scale", scale);
    p.add(prefix + ".shift", shift);
  }
};

// Spec-facing batchnorm entry point over explicit state.
template <typename T>
Var<T> batchnorm(const Var<T>& x, BatchNorm<T>& bn, bool training) {
  return bn.forward(x, training);
}

}  // namespace atom

#endif  // ATOM_NN_HPP_
