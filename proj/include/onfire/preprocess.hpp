#pragma once

#include <array>
#include <cstddef>
#include <stdexcept>
#include <utility>
#include <vector>

#include "onfire/image.hpp"
#include "onfire/ops.hpp"
#include "onfire/tensor.hpp"

namespace onfire {

inline constexpr std::size_t kInputSize = 224;

struct Normalization {
  std::array<double, 3> mean{0.485, 0.456, 0.406};
  std::array<double, 3> stddev{0.229, 0.224, 0.225};
};

/// 1 x 3 x H x W planar copy of `img` scaled to [0, 1].
inline Tensor image_to_unit_tensor(const RgbImage& img) {
  if (img.empty()) throw std::invalid_argument("cannot preprocess an empty image");
  const std::size_t plane = img.width * img.height;
  std::vector<float> v(3 * plane);
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) v[c * plane + i] = static_cast<float>(img.pixels[i * 3 + c] / 255.0);
  }
  return Tensor({1, 3, img.height, img.width}, std::move(v));
}

/// Resize to 224 x 224 (bilinear, half-pixel centres), scale to [0, 1], then (x - mean) / std
/// per channel.
inline Tensor preprocess(const RgbImage& img, const Normalization& norm = {}) {
  const Tensor resized = bilinear_resize(image_to_unit_tensor(img), kInputSize, kInputSize);
  const std::size_t plane = kInputSize * kInputSize;
  std::vector<float> v(resized.values().begin(), resized.values().end());
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < plane; ++i) {
      float& x = v[c * plane + i];
      x = static_cast<float>((x - norm.mean[c]) / norm.stddev[c]);
    }
  }
  return Tensor(resized.shape(), std::move(v));
}

/// Stacks 1 x C x H x W tensors into one batch.
inline Tensor stack_batch(const std::vector<Tensor>& items) {
  if (items.empty()) throw std::invalid_argument("stack_batch: no items");
  const Shape one = items.front().shape();
  std::vector<float> v;
  v.reserve(items.size() * one.count());
  for (const Tensor& t : items) {
    if (!(t.shape() == one) || one.n != 1) {
      throw std::invalid_argument("stack_batch: item shape " + t.shape().str() + " differs from " +
                                  one.str());
    }
    v.insert(v.end(), t.values().begin(), t.values().end());
  }
  return Tensor({items.size(), one.c, one.h, one.w}, std::move(v));
}

}  // namespace onfire
