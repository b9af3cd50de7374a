#ifndef ATOM_MODEL_IO_HPP_
#define ATOM_MODEL_IO_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "atom/tensor.hpp"

namespace atom {

// Binary model container. Layout (all integers little-endian):
//   magic "ATOMDSK1"
//   u32 tensor count
//   per tensor: u16 name length, name bytes, u8 dtype (0 = f32, 1 = f64),
//               u8 rank, rank x u32 dims, raw little-endian payload.
struct ModelTensor {
  std::string name;
  uint8_t dtype = 0;  // 0 = f32, 1 = f64
  std::vector<int> dims;
  std::vector<double> values;  // widened storage; dtype governs the file

  template <typename T>
  Tensor<T> to_tensor() const {
    std::vector<T> data(values.size());
    for (size_t i = 0; i < values.size(); ++i) {
      data[i] = static_cast<T>(values[i]);
    }
    return Tensor<T>(dims, std::move(data));
  }
};

template <typename T>
ModelTensor make_model_tensor(const std::string& name, const Tensor<T>& t) {
  ModelTensor mt;
  mt.name = name;
  mt.dtype = sizeof(T) == 4 ? 0 : 1;
  mt.dims = t.shape();
  mt.values.assign(t.vec().begin(), t.vec().end());
  return mt;
}

void save_model(const std::string& path, const std::vector<ModelTensor>& ts);
std::vector<ModelTensor> load_model(const std::string& path);

const ModelTensor* find_tensor(const std::vector<ModelTensor>& ts,
                               const std::string& name);

}  // namespace atom

#endif  // ATOM_MODEL_IO_HPP_
