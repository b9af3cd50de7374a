#include "atom/model_io.hpp"

#include <cstring>
#include <fstream>

#include "atom/common.hpp"

namespace atom {

namespace {

constexpr char kMagic[8] = {'A', 'T', 'O', 'M', 'D', 'S', 'K', '1'};

void put_u16(std::string& out, uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

void put_f64(std::string& out, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u32(out, static_cast<uint32_t>(bits & 0xffffffffULL));
  put_u32(out, static_cast<uint32_t>(bits >> 32));
}

class Reader {
 public:
  Reader(const std::string& data, const std::string& path)
      : data_(data), path_(path) {}

  const char* take(size_t n) {
    check(pos_ + n <= data_.size(), "model file ", path_,
          ": truncated (need ", n, " bytes at offset ", pos_, ")");
    const char* p = data_.data() + pos_;
    pos_ += n;
    return p;
  }
  uint16_t u16() {
    const unsigned char* p = reinterpret_cast<const unsigned char*>(take(2));
    return static_cast<uint16_t>(p[0] | (p[1] << 8));
  }
  uint32_t u32() {
    const unsigned char* p = reinterpret_cast<const unsigned char*>(take(4));
    return p[0] | (p[1] << 8) | (p[2] << 16) |
           (static_cast<uint32_t>(p[3]) << 24);
  }
  float f32() {
    const uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  double f64() {
    const uint64_t lo = u32();
    const uint64_t hi = u32();
    const uint64_t bits = lo | (hi << 32);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }

 private:
  const std::string& data_;
  std::string path_;
  size_t pos_ = 0;
};

}  // namespace

void save_model(const std::string& path, const std::vector<ModelTensor>& ts) {
  std::string out;
  out.append(kMagic, 8);
  put_u32(out, static_cast<uint32_t>(ts.size()));
  for (const auto& t : ts) {
    check(t.name.size() <= 0xffff, "tensor name too long: ", t.name);
    check(t.dtype == 0 || t.dtype == 1, "bad dtype code ", int(t.dtype),
          " for tensor ", t.name);
    put_u16(out, static_cast<uint16_t>(t.name.size()));
    out.append(t.name);
    out.push_back(static_cast<char>(t.dtype));
    out.push_back(static_cast<char>(t.dims.size()));
    int64_t n = 1;
    for (int d : t.dims) {
      check(d >= 0, "negative dim in tensor ", t.name);
      put_u32(out, static_cast<uint32_t>(d));
      n *= d;
    }
    check(n == static_cast<int64_t>(t.values.size()), "tensor ", t.name,
          ": dims give ", n, " values, payload has ", t.values.size());
    for (double v : t.values) {
      if (t.dtype == 0) {
        put_f32(out, static_cast<float>(v));
      } else {
        put_f64(out, v);
      }
    }
  }
  std::ofstream f(path, std::ios::binary);
  check(f.good(), "cannot write model file: ", path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  check(f.good(), "write failed for model file: ", path);
}

std::vector<ModelTensor> load_model(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  check(f.good(), "cannot open model file: ", path);
  std::string data((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  Reader r(data, path);
  const char* magic = r.take(8);
  check(std::memcmp(magic, kMagic, 8) == 0, "model file ", path,
        ": bad magic");
  const uint32_t count = r.u32();
  std::vector<ModelTensor> ts;
  ts.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    ModelTensor t;
    const uint16_t name_len = r.u16();
    t.name.assign(r.take(name_len), name_len);
    t.dtype = static_cast<uint8_t>(*r.take(1));
    check(t.dtype == 0 || t.dtype == 1, "model file ", path, ": tensor ",
          t.name, " has bad dtype ", int(t.dtype));
    const uint8_t rank = static_cast<uint8_t>(*r.take(1));
    int64_t n = 1;
    for (int d = 0; d < rank; ++d) {
      const uint32_t dim = r.u32();
      t.dims.push_back(static_cast<int>(dim));
      n *= dim;
    }
    t.values.resize(static_cast<size_t>(n));
    for (int64_t j = 0; j < n; ++j) {
      t.values[static_cast<size_t>(j)] = t.dtype == 0 ? r.f32() : r.f64();
    }
    ts.push_back(std::move(t));
  }
  return ts;
}

const ModelTensor* find_tensor(const std::vector<ModelTensor>& ts,
                               const std::string& name) {
  for (const auto& t : ts) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

}  // namespace atom
