#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "onfire/parallel.hpp"
#include "onfire/tensor.hpp"

namespace onfire {

struct ConvParams {
  int kernel_h = 1;
  int kernel_w = 1;
  int stride = 1;
  int padding = 0;
  int groups = 1;

  static constexpr ConvParams square(int kernel, int stride = 1, int padding = 0,
                                     int groups = 1) {
    return {kernel, kernel, stride, padding, groups};
  }
};

struct PoolParams {
  int kernel = 2;
  int stride = 2;
  int padding = 0;
};

struct BatchNormParams {
  std::vector<float> gamma;
  std::vector<float> beta;
  std::vector<float> mean;
  std::vector<float> var;
  float eps = 1e-5f;

  static BatchNormParams identity(std::size_t channels, float eps = 1e-5f) {
    return {std::vector<float>(channels, 1.0f), std::vector<float>(channels, 0.0f),
            std::vector<float>(channels, 0.0f), std::vector<float>(channels, 1.0f), eps};
  }
};

/// floor((in + 2p - k) / s) + 1, or throws when the window does not fit.
inline std::size_t output_extent(std::size_t in, int kernel, int stride, int padding,
                                 const char* what) {
  if (kernel < 1 || stride < 1 || padding < 0) {
    throw std::invalid_argument(std::string(what) + ": kernel/stride must be positive and padding "
                                "non-negative (kernel=" + std::to_string(kernel) +
                                ", stride=" + std::to_string(stride) +
                                ", padding=" + std::to_string(padding) + ")");
  }
  const long span = static_cast<long>(in) + 2L * padding - kernel;
  if (span < 0) {
    throw std::invalid_argument(std::string(what) + ": kernel " + std::to_string(kernel) +
                                " larger than padded extent " +
                                std::to_string(in + 2 * static_cast<std::size_t>(padding)));
  }
  return static_cast<std::size_t>(span / stride) + 1;
}

namespace detail {

inline void require(bool ok, const std::string& message) {
  if (!ok) throw std::invalid_argument(message);
}

/// Range of output columns whose input column ox*stride - pad + k lies inside [0, in).
inline std::pair<long, long> valid_range(long out, long in, int stride, int pad, int k) {
  long lo = 0;
  while (lo < out && lo * stride - pad + k < 0) ++lo;
  long hi = out;
  while (hi > lo && (hi - 1) * stride - pad + k >= in) --hi;
  return {lo, hi};
}

}  // namespace detail

/// Grouped 2-D convolution without bias, symmetric zero padding.
/// weight is OC x (IC/groups) x KH x KW. Each output is accumulated in double in the fixed
/// order (input channel, kernel row, kernel column).
inline Tensor conv2d(const Tensor& input, const Tensor& weight, const ConvParams& p) {
  const Shape& in = input.shape();
  const Shape& ws = weight.shape();
  using detail::require;
  require(p.groups >= 1, "conv2d: groups must be positive");
  const auto g = static_cast<std::size_t>(p.groups);
  require(in.c % g == 0, "conv2d: input channels " + std::to_string(in.c) +
                             " not divisible by groups " + std::to_string(g));
  require(ws.n % g == 0, "conv2d: output channels " + std::to_string(ws.n) +
                             " not divisible by groups " + std::to_string(g));
  require(ws.c == in.c / g, "conv2d: weight channel extent " + std::to_string(ws.c) +
                                " != input channels / groups = " + std::to_string(in.c / g));
  require(ws.h == static_cast<std::size_t>(p.kernel_h),
          "conv2d: weight height " + std::to_string(ws.h) + " != kernel_h " +
              std::to_string(p.kernel_h));
  require(ws.w == static_cast<std::size_t>(p.kernel_w),
          "conv2d: weight width " + std::to_string(ws.w) + " != kernel_w " +
              std::to_string(p.kernel_w));
  const std::size_t oh = output_extent(in.h, p.kernel_h, p.stride, p.padding, "conv2d height");
  const std::size_t ow = output_extent(in.w, p.kernel_w, p.stride, p.padding, "conv2d width");

  const Shape out_shape{in.n, ws.n, oh, ow};
  std::vector<float> out(out_shape.count());
  const std::size_t oc_per_group = ws.n / g;
  const std::size_t ic_per_group = ws.c;
  const long s = p.stride;

  parallel_for(in.n * ws.n, [&](std::size_t job) {
    const std::size_t n = job / ws.n;
    const std::size_t oc = job % ws.n;
    const std::size_t first_ic = (oc / oc_per_group) * ic_per_group;
    std::vector<double> acc(oh * ow, 0.0);
    for (std::size_t icg = 0; icg < ic_per_group; ++icg) {
      const float* src = input.channel(n, first_ic + icg);
      const float* filt = weight.data() + (oc * ic_per_group + icg) * ws.h * ws.w;
      for (int kh = 0; kh < p.kernel_h; ++kh) {
        for (int kw = 0; kw < p.kernel_w; ++kw) {
          const double wv = filt[kh * p.kernel_w + kw];
          const auto [x0, x1] = detail::valid_range(static_cast<long>(ow),
                                                    static_cast<long>(in.w), p.stride,
                                                    p.padding, kw);
          for (std::size_t oy = 0; oy < oh; ++oy) {
            const long iy = static_cast<long>(oy) * s - p.padding + kh;
            if (iy < 0 || iy >= static_cast<long>(in.h)) continue;
            const float* row = src + iy * in.w;
            double* dst = acc.data() + oy * ow;
            if (s == 1) {
              const float* r = row - p.padding + kw;
              for (long ox = x0; ox < x1; ++ox) dst[ox] += wv * r[ox];
            } else {
              for (long ox = x0; ox < x1; ++ox) dst[ox] += wv * row[ox * s - p.padding + kw];
            }
          }
        }
      }
    }
    float* o = out.data() + (n * ws.n + oc) * oh * ow;
    for (std::size_t i = 0; i < oh * ow; ++i) o[i] = static_cast<float>(acc[i]);
  });
  return Tensor(out_shape, std::move(out));
}

/// Per-channel convolution; weight is C x 1 x KH x KW.
inline Tensor depthwise_conv2d(const Tensor& input, const Tensor& weight, ConvParams p) {
  detail::require(weight.shape().n == input.shape().c && weight.shape().c == 1,
                  "depthwise_conv2d: weight " + weight.shape().str() + " must be " +
                      std::to_string(input.shape().c) + "x1xKHxKW");
  detail::require(p.groups == 1 || p.groups == static_cast<int>(input.shape().c),
                  "depthwise_conv2d: groups must equal the channel count");
  p.groups = static_cast<int>(input.shape().c);
  return conv2d(input, weight, p);
}

inline Tensor batch_norm_infer(const Tensor& input, const BatchNormParams& bn) {
  const Shape& s = input.shape();
  const std::size_t c = s.c;
  detail::require(bn.gamma.size() == c && bn.beta.size() == c && bn.mean.size() == c &&
                      bn.var.size() == c,
                  "batch_norm_infer: parameter length mismatch (channels=" + std::to_string(c) +
                      ", gamma=" + std::to_string(bn.gamma.size()) +
                      ", beta=" + std::to_string(bn.beta.size()) +
                      ", mean=" + std::to_string(bn.mean.size()) +
                      ", var=" + std::to_string(bn.var.size()) + ")");
  detail::require(bn.eps > 0.0f, "batch_norm_infer: eps must be positive");
  std::vector<double> inv_std(c);
  for (std::size_t i = 0; i < c; ++i) {
    detail::require(bn.var[i] >= 0.0f, "batch_norm_infer: negative running variance at channel " +
                                           std::to_string(i));
    inv_std[i] = 1.0 / std::sqrt(static_cast<double>(bn.var[i]) + bn.eps);
  }
  std::vector<float> out(s.count());
  const float* src = input.data();
  const std::size_t plane = s.plane();
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (n * c + ch) * plane;
      const double gamma = bn.gamma[ch], beta = bn.beta[ch], mean = bn.mean[ch];
      for (std::size_t i = 0; i < plane; ++i) {
        out[base + i] = static_cast<float>(gamma * (src[base + i] - mean) * inv_std[ch] + beta);
      }
    }
  }
  return Tensor(s, std::move(out));
}

namespace detail {

template <typename Reduce>
Tensor pool2d(const Tensor& input, const PoolParams& p, const char* what, Reduce reduce) {
  const Shape& s = input.shape();
  require(p.padding < p.kernel, std::string(what) + ": padding " + std::to_string(p.padding) +
                                    " must be smaller than kernel " + std::to_string(p.kernel));
  const std::size_t oh = output_extent(s.h, p.kernel, p.stride, p.padding, what);
  const std::size_t ow = output_extent(s.w, p.kernel, p.stride, p.padding, what);
  const Shape out_shape{s.n, s.c, oh, ow};
  std::vector<float> out(out_shape.count());
  for (std::size_t nc = 0; nc < s.n * s.c; ++nc) {
    const float* src = input.data() + nc * s.plane();
    float* dst = out.data() + nc * oh * ow;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      const long y0 = static_cast<long>(oy) * p.stride - p.padding;
      const long ya = std::max<long>(y0, 0);
      const long yb = std::min<long>(y0 + p.kernel, static_cast<long>(s.h));
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const long x0 = static_cast<long>(ox) * p.stride - p.padding;
        const long xa = std::max<long>(x0, 0);
        const long xb = std::min<long>(x0 + p.kernel, static_cast<long>(s.w));
        require(ya < yb && xa < xb, std::string(what) + ": window without valid cells");
        dst[oy * ow + ox] = reduce(src, s.w, ya, yb, xa, xb);
      }
    }
  }
  return Tensor(out_shape, std::move(out));
}

}  // namespace detail

inline Tensor max_pool2d(const Tensor& input, const PoolParams& p) {
  return detail::pool2d(input, p, "max_pool2d",
                        [](const float* src, std::size_t w, long ya, long yb, long xa, long xb) {
                          float m = -std::numeric_limits<float>::infinity();
                          for (long y = ya; y < yb; ++y)
                            for (long x = xa; x < xb; ++x) m = std::max(m, src[y * w + x]);
                          return m;
                        });
}

/// Average pooling; the divisor counts in-bounds cells only.
inline Tensor avg_pool2d(const Tensor& input, const PoolParams& p) {
  return detail::pool2d(input, p, "avg_pool2d",
                        [](const float* src, std::size_t w, long ya, long yb, long xa, long xb) {
                          double sum = 0.0;
                          for (long y = ya; y < yb; ++y)
                            for (long x = xa; x < xb; ++x) sum += src[y * w + x];
                          return static_cast<float>(sum / static_cast<double>((yb - ya) * (xb - xa)));
                        });
}

inline Tensor global_avg_pool(const Tensor& input) {
  const Shape& s = input.shape();
  detail::require(s.h >= 1 && s.w >= 1, "global_avg_pool: empty spatial extent");
  std::vector<float> out(s.n * s.c);
  for (std::size_t nc = 0; nc < s.n * s.c; ++nc) {
    const float* src = input.data() + nc * s.plane();
    double sum = 0.0;
    for (std::size_t i = 0; i < s.plane(); ++i) sum += src[i];
    out[nc] = static_cast<float>(sum / static_cast<double>(s.plane()));
  }
  return Tensor({s.n, s.c, 1, 1}, std::move(out));
}

inline Tensor relu(const Tensor& input) {
  std::vector<float> out(input.values().begin(), input.values().end());
  for (float& v : out) v = v > 0.0f ? v : 0.0f;
  return Tensor(input.shape(), std::move(out));
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require(a.shape() == b.shape(),
                  "add: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  std::vector<float> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return Tensor(a.shape(), std::move(out));
}

inline Tensor slice_channels(const Tensor& input, std::size_t first, std::size_t count) {
  const Shape& s = input.shape();
  detail::require(first + count <= s.c, "slice_channels: range exceeds channel count");
  const Shape out_shape{s.n, count, s.h, s.w};
  std::vector<float> out(out_shape.count());
  for (std::size_t n = 0; n < s.n; ++n) {
    const float* src = input.channel(n, first);
    std::copy(src, src + count * s.plane(), out.begin() + n * count * s.plane());
  }
  return Tensor(out_shape, std::move(out));
}

inline std::pair<Tensor, Tensor> channel_split(const Tensor& input, std::size_t c_left) {
  const std::size_t c = input.shape().c;
  detail::require(c_left > 0 && c_left < c, "channel_split: split point " +
                                                std::to_string(c_left) + " outside (0, " +
                                                std::to_string(c) + ")");
  return {slice_channels(input, 0, c_left), slice_channels(input, c_left, c - c_left)};
}

inline Tensor concat_channels(std::span<const Tensor> parts) {
  detail::require(!parts.empty(), "concat_channels: no inputs");
  const Shape& first = parts.front().shape();
  std::size_t channels = 0;
  for (const Tensor& t : parts) {
    const Shape& s = t.shape();
    detail::require(s.n == first.n && s.h == first.h && s.w == first.w,
                    "concat_channels: spatial/batch mismatch " + s.str() + " vs " + first.str());
    channels += s.c;
  }
  const Shape out_shape{first.n, channels, first.h, first.w};
  std::vector<float> out(out_shape.count());
  auto dst = out.begin();
  for (std::size_t n = 0; n < first.n; ++n) {
    for (const Tensor& t : parts) {
      const float* src = t.channel(n, 0);
      dst = std::copy(src, src + t.shape().c * first.plane(), dst);
    }
  }
  return Tensor(out_shape, std::move(out));
}

inline Tensor concat_channels(std::initializer_list<Tensor> parts) {
  return concat_channels(std::span<const Tensor>(parts.begin(), parts.size()));
}

/// Group-transpose channel permutation: output channel i holds input channel
/// (i mod g) * (C/g) + floor(i / g). For g = 2 this interleaves the two halves.
inline Tensor channel_shuffle(const Tensor& input, std::size_t groups) {
  const Shape& s = input.shape();
  detail::require(groups >= 1 && s.c % groups == 0,
                  "channel_shuffle: groups " + std::to_string(groups) +
                      " does not divide channel count " + std::to_string(s.c));
  const std::size_t per_group = s.c / groups;
  std::vector<float> out(s.count());
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t i = 0; i < s.c; ++i) {
      const std::size_t src_c = (i % groups) * per_group + i / groups;
      const float* src = input.channel(n, src_c);
      std::copy(src, src + s.plane(), out.begin() + input.offset(n, i, 0, 0));
    }
  }
  return Tensor(s, std::move(out));
}

/// Bilinear resize with half-pixel centres: src = (dst + 0.5) * in/out - 0.5, clamped.
inline Tensor bilinear_resize(const Tensor& image, std::size_t out_h, std::size_t out_w) {
  const Shape& s = image.shape();
  detail::require(s.count() > 0, "bilinear_resize: empty input");
  detail::require(out_h >= 1 && out_w >= 1, "bilinear_resize: output extent must be positive");
  struct Tap {
    std::size_t i0, i1;
    double frac;
  };
  auto taps = [](std::size_t in, std::size_t out) {
    std::vector<Tap> t(out);
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t d = 0; d < out; ++d) {
      double src = (static_cast<double>(d) + 0.5) * scale - 0.5;
      src = std::clamp(src, 0.0, static_cast<double>(in - 1));
      const auto i0 = static_cast<std::size_t>(std::floor(src));
      t[d] = {i0, std::min(i0 + 1, in - 1), src - static_cast<double>(i0)};
    }
    return t;
  };
  const auto ty = taps(s.h, out_h);
  const auto tx = taps(s.w, out_w);
  const Shape out_shape{s.n, s.c, out_h, out_w};
  std::vector<float> out(out_shape.count());
  for (std::size_t nc = 0; nc < s.n * s.c; ++nc) {
    const float* src = image.data() + nc * s.plane();
    float* dst = out.data() + nc * out_h * out_w;
    for (std::size_t y = 0; y < out_h; ++y) {
      const float* r0 = src + ty[y].i0 * s.w;
      const float* r1 = src + ty[y].i1 * s.w;
      const double fy = ty[y].frac;
      for (std::size_t x = 0; x < out_w; ++x) {
        const double fx = tx[x].frac;
        const double top = r0[tx[x].i0] * (1.0 - fx) + r0[tx[x].i1] * fx;
        const double bottom = r1[tx[x].i0] * (1.0 - fx) + r1[tx[x].i1] * fx;
        dst[y * out_w + x] = static_cast<float>(top * (1.0 - fy) + bottom * fy);
      }
    }
  }
  return Tensor(out_shape, std::move(out));
}

/// y = W x + b with W stored row-major as OC x IC (any trailing unit extents).
inline std::vector<float> linear(std::span<const float> features, const Tensor& weight,
                                 std::span<const float> bias) {
  const std::size_t oc = weight.shape().n;
  const std::size_t ic = weight.size() / std::max<std::size_t>(oc, 1);
  detail::require(features.size() == ic, "linear: feature length " +
                                             std::to_string(features.size()) +
                                             " != weight input extent " + std::to_string(ic));
  detail::require(bias.size() == oc, "linear: bias length " + std::to_string(bias.size()) +
                                         " != output extent " + std::to_string(oc));
  std::vector<float> out(oc);
  for (std::size_t o = 0; o < oc; ++o) {
    const float* row = weight.data() + o * ic;
    double acc = 0.0;
    for (std::size_t i = 0; i < ic; ++i) acc += static_cast<double>(row[i]) * features[i];
    out[o] = static_cast<float>(acc + bias[o]);
  }
  return out;
}

/// Picks every second row/column starting at `offset` (0 or 1); positions past the border
/// read as zero. Output extent is ceil(H/2) x ceil(W/2) for either offset.
inline Tensor subsample2(const Tensor& input, std::size_t offset) {
  const Shape& s = input.shape();
  const Shape out_shape{s.n, s.c, (s.h + 1) / 2, (s.w + 1) / 2};
  std::vector<float> out(out_shape.count(), 0.0f);
  for (std::size_t nc = 0; nc < s.n * s.c; ++nc) {
    const float* src = input.data() + nc * s.plane();
    float* dst = out.data() + nc * out_shape.plane();
    for (std::size_t y = 0; y < out_shape.h; ++y) {
      const std::size_t iy = 2 * y + offset;
      if (iy >= s.h) continue;
      for (std::size_t x = 0; x < out_shape.w; ++x) {
        const std::size_t ix = 2 * x + offset;
        if (ix < s.w) dst[y * out_shape.w + x] = src[iy * s.w + ix];
      }
    }
  }
  return Tensor(out_shape, std::move(out));
}

}  // namespace onfire
