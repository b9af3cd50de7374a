#ifndef ATOM_TENSOR_HPP_
#define ATOM_TENSOR_HPP_

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "atom/common.hpp"

namespace atom {

// Dense N-dimensional array, row-major (last axis fastest). Image-like data
// is stored H x W x C so per-pixel channel vectors are contiguous; conv
// kernels are kh x kw x Cin x Cout. Value semantics throughout.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.assign(static_cast<size_t>(count(shape_)), T(0));
  }

  Tensor(std::vector<int> shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    check(count(shape_) == static_cast<int64_t>(data_.size()),
          "tensor shape ", shape_str(shape_), " does not match data length ",
          data_.size());
  }

  static Tensor full(std::vector<int> shape, T value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
  }

  static Tensor scalar(T value) { return Tensor({1}, {value}); }

  static int64_t count(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) {
      check(d >= 0, "negative dimension in shape ", shape_str(shape));
      n *= d;
    }
    return n;
  }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int64_t size() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  // Indexed access for the common ranks.
  T& at(int i, int j) { return data_[static_cast<size_t>(i) * shape_[1] + j]; }
  const T& at(int i, int j) const {
    return data_[static_cast<size_t>(i) * shape_[1] + j];
  }
  T& at(int i, int j, int k) {
    return data_[(static_cast<size_t>(i) * shape_[1] + j) * shape_[2] + k];
  }
  const T& at(int i, int j, int k) const {
    return data_[(static_cast<size_t>(i) * shape_[1] + j) * shape_[2] + k];
  }
  T& at(int i, int j, int k, int l) {
    return data_[((static_cast<size_t>(i) * shape_[1] + j) * shape_[2] + k) *
                     shape_[3] +
                 l];
  }
  const T& at(int i, int j, int k, int l) const {
    return data_[((static_cast<size_t>(i) * shape_[1] + j) * shape_[2] + k) *
                     shape_[3] +
                 l];
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  Tensor reshaped(std::vector<int> new_shape) const {
    check(count(new_shape) == size(), "cannot reshape ", shape_str(shape_),
          " (", size(), " values) to ", shape_str(new_shape));
    return Tensor(std::move(new_shape), data_);
  }

  bool all_finite() const {
    for (const T& v : data_) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.size());
    for (size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return Tensor<U>(shape_, std::move(out));
  }

 private:
  std::vector<int> shape_;
  std::vector<T> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace atom

#endif  // ATOM_TENSOR_HPP_
