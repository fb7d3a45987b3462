#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "onfire/arch.hpp"
#include "onfire/graph.hpp"
#include "onfire/weights.hpp"

namespace onfire {

// OFW1 layout, all integers little-endian:
//   "OFW1" | u16 version | u32 len + arch name | u32 tensor count |
//   per tensor: u32 len + name | u8 rank | u32 extent x rank | f32 payload
// Extents beyond the stored rank are 1; the writer drops trailing unit extents.

inline constexpr char kWeightMagic[4] = {'O', 'F', 'W', '1'};
inline constexpr std::uint16_t kWeightFormatVersion = 1;

struct WeightFile {
  std::string arch;
  WeightStore weights;
};

namespace detail {

class ByteWriter {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <typename T>
  void le(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      out_.push_back(static_cast<unsigned char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF));
    }
  }
  void str(const std::string& s) {
    le<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void f32(float f) { le<std::uint32_t>(std::bit_cast<std::uint32_t>(f)); }
  const std::vector<unsigned char>& data() const { return out_; }

 private:
  std::vector<unsigned char> out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::vector<unsigned char> data) : data_(std::move(data)) {}

  void need(std::size_t n, const char* what) const {
    if (data_.size() - pos_ < n) {
      throw std::runtime_error("weight file truncated at byte " + std::to_string(pos_) +
                               " while reading " + what + " (need " + std::to_string(n) +
                               " bytes, " + std::to_string(data_.size() - pos_) + " left)");
    }
  }
  template <typename T>
  T le(const char* what) {
    need(sizeof(T), what);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }
  std::string str(const char* what) {
    const auto n = le<std::uint32_t>(what);
    need(n, what);
    std::string s(data_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  data_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == data_.size(); }

 private:
  std::vector<unsigned char> data_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<unsigned char> encode_weights(const std::string& arch,
                                                 const WeightStore& store) {
  detail::ByteWriter w;
  w.bytes(kWeightMagic, 4);
  w.le<std::uint16_t>(kWeightFormatVersion);
  w.str(arch);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(store.size()));
  for (const auto& [name, t] : store.tensors()) {
    w.str(name);
    const Shape& s = t.shape();
    std::vector<std::uint32_t> extents{static_cast<std::uint32_t>(s.n),
                                       static_cast<std::uint32_t>(s.c),
                                       static_cast<std::uint32_t>(s.h),
                                       static_cast<std::uint32_t>(s.w)};
    while (extents.size() > 1 && extents.back() == 1) extents.pop_back();
    w.le<std::uint8_t>(static_cast<std::uint8_t>(extents.size()));
    for (auto e : extents) w.le<std::uint32_t>(e);
    for (float f : t.values()) w.f32(f);
  }
  return w.data();
}

inline WeightFile decode_weights(std::vector<unsigned char> bytes) {
  detail::ByteReader r(std::move(bytes));
  r.need(4, "magic");
  char magic[4];
  for (char& c : magic) c = static_cast<char>(r.le<std::uint8_t>("magic"));
  if (std::memcmp(magic, kWeightMagic, 4) != 0) {
    throw std::runtime_error("not an OFW1 weight file (bad magic)");
  }
  const auto version = r.le<std::uint16_t>("format version");
  if (version != kWeightFormatVersion) {
    throw std::runtime_error("unsupported OFW1 version " + std::to_string(version));
  }
  WeightFile file;
  file.arch = r.str("architecture name");
  const auto count = r.le<std::uint32_t>("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.str("tensor name");
    const auto rank = r.le<std::uint8_t>("tensor rank");
    if (rank < 1 || rank > 4) {
      throw std::runtime_error("tensor '" + name + "' has unsupported rank " + std::to_string(rank));
    }
    std::size_t ext[4] = {1, 1, 1, 1};
    for (std::uint8_t d = 0; d < rank; ++d) ext[d] = r.le<std::uint32_t>("tensor extent");
    const Shape shape{ext[0], ext[1], ext[2], ext[3]};
    r.need(shape.count() * 4, "tensor payload");
    std::vector<float> values(shape.count());
    for (float& f : values) f = std::bit_cast<float>(r.le<std::uint32_t>("tensor payload"));
    if (file.weights.contains(name)) {
      throw std::runtime_error("duplicate tensor name '" + name + "' in weight file");
    }
    file.weights.insert(name, Tensor(shape, std::move(values)));
  }
  if (!r.done()) {
    throw std::runtime_error("trailing bytes after tensor " + std::to_string(count) +
                             " at byte " + std::to_string(r.pos()));
  }
  return file;
}

inline void save_weights(const std::string& path, const std::string& arch,
                         const WeightStore& store) {
  const auto bytes = encode_weights(arch, store);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

inline void save_weights(const std::string& path, const ModelGraph& model) {
  save_weights(path, model.arch(), model.weights());
}

inline WeightFile read_weight_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open weight file '" + path + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return decode_weights(std::move(bytes));
}

/// Loads `path` into a copy of `model`. The file's architecture must describe the same
/// configuration and every tensor must match the declared shapes.
inline ModelGraph load_weights(const ModelGraph& model, const std::string& path) {
  WeightFile file = read_weight_file(path);
  if (!same_architecture(file.arch, model.arch())) {
    throw std::runtime_error("weight file is for '" + file.arch + "', model is '" +
                             model.arch() + "'");
  }
  return model.with_weights(std::move(file.weights));
}

/// Loads a weight file and builds the architecture it names.
inline ModelGraph load_model(const std::string& path) {
  WeightFile file = read_weight_file(path);
  return build_model(file.arch).with_weights(std::move(file.weights));
}

namespace detail {
/// Uniform double in [0, 1) from the top 53 bits of a 64-bit draw.
inline double unit_uniform(std::mt19937_64& gen) {
  return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}
}  // namespace detail

/// Seeded initialisation: conv/linear weights and the head bias ~ U(-s, s) with
/// s = sqrt(1 / fan_in); batch norm starts as the identity (gamma 1, beta 0, mean 0, var 1).
inline WeightStore random_weights(const ModelGraph& model, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  WeightStore store;
  for (const WeightSpec& spec : model.weight_specs()) {
    std::vector<float> v(spec.shape.count());
    const bool gamma_or_var = spec.name.ends_with(".gamma") || spec.name.ends_with(".var");
    switch (spec.role) {
      case ParamRole::kWeight:
      case ParamRole::kBias: {
        const double s = std::sqrt(1.0 / static_cast<double>(spec.fan_in));
        for (float& x : v) x = static_cast<float>((2.0 * detail::unit_uniform(gen) - 1.0) * s);
        break;
      }
      case ParamRole::kBnAffine:
      case ParamRole::kBnStatistic:
        std::fill(v.begin(), v.end(), gamma_or_var ? 1.0f : 0.0f);
        break;
    }
    store.insert(spec.name, Tensor(spec.shape, std::move(v)));
  }
  return store;
}

inline ModelGraph init_random_weights(const ModelGraph& model, std::uint64_t seed) {
  return model.with_weights(random_weights(model, seed));
}

}  // namespace onfire
