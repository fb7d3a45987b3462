#pragma once

#include <cstddef>
#include <cstring>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace onfire {

/// Extents of a 4-D tensor in batch/channel/height/width order.
struct Shape {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  constexpr std::size_t count() const { return n * c * h * w; }
  constexpr std::size_t plane() const { return h * w; }
  friend constexpr bool operator==(const Shape&, const Shape&) = default;

  std::string str() const {
    return std::to_string(n) + "x" + std::to_string(c) + "x" + std::to_string(h) + "x" +
           std::to_string(w);
  }
};

/// Dense NCHW float tensor. The payload is immutable once constructed and shared between
/// copies, so a Tensor is cheap to pass by value and safe to read from many threads.
class Tensor {
 public:
  Tensor() : data_(std::make_shared<const std::vector<float>>()) {}

  explicit Tensor(Shape shape)
      : shape_(shape), data_(std::make_shared<const std::vector<float>>(shape.count(), 0.0f)) {}

  Tensor(Shape shape, std::vector<float> values) : shape_(shape) {
    if (values.size() != shape.count()) {
      throw std::invalid_argument("tensor payload has " + std::to_string(values.size()) +
                                  " values but shape " + shape.str() + " needs " +
                                  std::to_string(shape.count()));
    }
    data_ = std::make_shared<const std::vector<float>>(std::move(values));
  }

  static Tensor filled(Shape shape, float value) {
    return Tensor(shape, std::vector<float>(shape.count(), value));
  }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_->size(); }
  bool empty() const { return data_->empty(); }
  std::span<const float> values() const { return {data_->data(), data_->size()}; }
  const float* data() const { return data_->data(); }

  std::size_t offset(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
    return ((n * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }
  float at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
    return (*data_)[offset(n, c, y, x)];
  }
  const float* channel(std::size_t n, std::size_t c) const {
    return data_->data() + offset(n, c, 0, 0);
  }

  /// True when both tensors hold the same payload object (no copy was made).
  bool shares_storage_with(const Tensor& other) const { return data_ == other.data_; }

  Tensor reshaped(Shape shape) const {
    if (shape.count() != shape_.count()) {
      throw std::invalid_argument("cannot reshape " + shape_.str() + " to " + shape.str());
    }
    Tensor t;
    t.shape_ = shape;
    t.data_ = data_;
    return t;
  }

  bool bit_equal(const Tensor& other) const {
    return shape_ == other.shape_ &&
           (size() == 0 || std::memcmp(data(), other.data(), size() * sizeof(float)) == 0);
  }

 private:
  Shape shape_{};
  std::shared_ptr<const std::vector<float>> data_;
};

}  // namespace onfire
