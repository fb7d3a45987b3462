#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "onfire/graph.hpp"
#include "onfire/image.hpp"
#include "onfire/ops.hpp"
#include "onfire/parallel.hpp"
#include "onfire/preprocess.hpp"

namespace onfire {

/// CIELAB raster (D65), one L,a,b triple per pixel.
struct LabImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::array<double, 3>> pixels;

  const std::array<double, 3>& at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }
};

namespace detail {

inline double srgb_to_linear(double c) {
  return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

inline double lab_f(double t) {
  constexpr double d = 6.0 / 29.0;
  return t > d * d * d ? std::cbrt(t) : t / (3.0 * d * d) + 4.0 / 29.0;
}

}  // namespace detail

inline std::array<double, 3> rgb_to_lab(std::uint8_t r8, std::uint8_t g8, std::uint8_t b8) {
  const double r = detail::srgb_to_linear(r8 / 255.0);
  const double g = detail::srgb_to_linear(g8 / 255.0);
  const double b = detail::srgb_to_linear(b8 / 255.0);
  const double x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
  const double y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
  const double z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
  const double fx = detail::lab_f(x / 0.95047);
  const double fy = detail::lab_f(y / 1.0);
  const double fz = detail::lab_f(z / 1.08883);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

inline LabImage rgb_to_lab(const RgbImage& img) {
  LabImage lab{img.width, img.height, std::vector<std::array<double, 3>>(img.width * img.height)};
  for (std::size_t i = 0; i < lab.pixels.size(); ++i) {
    lab.pixels[i] = rgb_to_lab(img.pixels[i * 3], img.pixels[i * 3 + 1], img.pixels[i * 3 + 2]);
  }
  return lab;
}

struct SlicParams {
  std::size_t superpixels = 100;  // requested K
  double compactness = 10.0;      // m
  std::size_t iterations = 10;
  double orphan_fraction = 0.25;  // fragments below orphan_fraction * S^2 pixels are merged

  void validate() const {
    if (superpixels < 1) throw std::invalid_argument("SLIC needs at least one superpixel");
    if (!(compactness > 0.0)) throw std::invalid_argument("SLIC compactness must be positive");
    if (iterations < 1) throw std::invalid_argument("SLIC needs at least one iteration");
    if (!(orphan_fraction >= 0.0)) throw std::invalid_argument("orphan fraction must be >= 0");
  }
};

struct SuperpixelCenter {
  double l = 0, a = 0, b = 0, x = 0, y = 0;
};

struct SuperpixelMap {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<int> labels;  // row-major, values in [0, count)
  std::vector<SuperpixelCenter> centers;
  std::vector<double> residuals;          // mean D over pixels after each assignment step
  std::vector<double> squared_residuals;  // mean D^2 over pixels after each assignment step
  double grid_interval = 0.0;     // S

  std::size_t count() const { return centers.size(); }
  int at(std::size_t x, std::size_t y) const { return labels[y * width + x]; }

  std::vector<std::size_t> sizes() const {
    std::vector<std::size_t> s(count(), 0);
    for (int l : labels) ++s[static_cast<std::size_t>(l)];
    return s;
  }
};

/// SLIC distance D = sqrt(d_lab^2 + (d_xy / S)^2 * m^2).
inline double slic_distance(const std::array<double, 3>& lab, double x, double y,
                            const SuperpixelCenter& c, double S, double m) {
  const double dl = lab[0] - c.l, da = lab[1] - c.a, db = lab[2] - c.b;
  const double dx = x - c.x, dy = y - c.y;
  const double dxy2 = (dx * dx + dy * dy) / (S * S);
  return std::sqrt(dl * dl + da * da + db * db + dxy2 * m * m);
}

namespace detail {

inline double lab_gradient(const LabImage& img, std::size_t x, std::size_t y) {
  if (x == 0 || y == 0 || x + 1 >= img.width || y + 1 >= img.height) {
    return std::numeric_limits<double>::infinity();
  }
  double g = 0.0;
  const auto& r = img.at(x + 1, y);
  const auto& l = img.at(x - 1, y);
  const auto& d = img.at(x, y + 1);
  const auto& u = img.at(x, y - 1);
  for (int k = 0; k < 3; ++k) g += (r[k] - l[k]) * (r[k] - l[k]) + (d[k] - u[k]) * (d[k] - u[k]);
  return g;
}

/// Regular grid seeds: nx * ny cells with at most K centres, each moved to the lowest
/// gradient position of its 3x3 neighbourhood (only on a strict improvement).
inline std::vector<SuperpixelCenter> seed_centers(const LabImage& img, std::size_t k, double S) {
  const auto clamp_count = [](double v, std::size_t hi) {
    return std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(v)), 1, std::max<std::size_t>(1, hi));
  };
  const std::size_t nx = clamp_count(img.width / S, k);
  const std::size_t ny = clamp_count(img.height / S, k / nx);
  std::vector<SuperpixelCenter> centers;
  for (std::size_t j = 0; j < ny; ++j) {
    for (std::size_t i = 0; i < nx; ++i) {
      std::size_t x = static_cast<std::size_t>((i + 0.5) * img.width / nx);
      std::size_t y = static_cast<std::size_t>((j + 0.5) * img.height / ny);
      double best = lab_gradient(img, x, y);
      const std::size_t x0 = x, y0 = y;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const long cx = static_cast<long>(x0) + dx, cy = static_cast<long>(y0) + dy;
          if (cx < 0 || cy < 0 || cx >= static_cast<long>(img.width) ||
              cy >= static_cast<long>(img.height)) {
            continue;
          }
          const double g = lab_gradient(img, static_cast<std::size_t>(cx), static_cast<std::size_t>(cy));
          if (g < best) {
            best = g;
            x = static_cast<std::size_t>(cx);
            y = static_cast<std::size_t>(cy);
          }
        }
      }
      const auto& lab = img.at(x, y);
      centers.push_back({lab[0], lab[1], lab[2], static_cast<double>(x), static_cast<double>(y)});
    }
  }
  return centers;
}

/// Splits the label field into 4-connected components, merges components smaller than
/// `min_size` into the adjacent component sharing the longest border (ties: lower component
/// index), and relabels components in raster order of their first pixel.
inline std::vector<int> enforce_connectivity(const std::vector<int>& labels, std::size_t w,
                                             std::size_t h, double min_size) {
  const std::size_t n = w * h;
  std::vector<int> comp(n, -1);
  std::vector<std::vector<std::size_t>> members;
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < n; ++start) {
    if (comp[start] != -1) continue;
    const int id = static_cast<int>(members.size());
    members.emplace_back();
    comp[start] = id;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      members[id].push_back(p);
      const std::size_t x = p % w, y = p / w;
      const std::size_t nb[4] = {x > 0 ? p - 1 : n, x + 1 < w ? p + 1 : n, y > 0 ? p - w : n,
                                 y + 1 < h ? p + w : n};
      for (std::size_t q : nb) {
        if (q != n && comp[q] == -1 && labels[q] == labels[p]) {
          comp[q] = id;
          stack.push_back(q);
        }
      }
    }
  }

  std::vector<int> parent(members.size());
  std::iota(parent.begin(), parent.end(), 0);
  const auto find = [&](int c) {
    while (parent[c] != c) c = parent[c] = parent[parent[c]];
    return c;
  };
  for (std::size_t c = 0; c < members.size(); ++c) {
    const int root = find(static_cast<int>(c));
    if (static_cast<double>(members[root].size()) >= min_size) continue;
    std::map<int, std::size_t> border;
    for (std::size_t p : members[root]) {
      const std::size_t x = p % w, y = p / w;
      const std::size_t nb[4] = {x > 0 ? p - 1 : n, x + 1 < w ? p + 1 : n, y > 0 ? p - w : n,
                                 y + 1 < h ? p + w : n};
      for (std::size_t q : nb) {
        if (q == n) continue;
        const int other = find(comp[q]);
        if (other != root) ++border[other];
      }
    }
    if (border.empty()) continue;
    int target = border.begin()->first;
    for (const auto& [other, len] : border) {
      if (len > border[target]) target = other;
    }
    parent[root] = target;
    auto& dst = members[target];
    dst.insert(dst.end(), members[root].begin(), members[root].end());
    members[root].clear();
  }

  std::vector<int> relabel(members.size(), -1);
  std::vector<int> out(n);
  int next = 0;
  for (std::size_t p = 0; p < n; ++p) {
    const int root = find(comp[p]);
    if (relabel[root] == -1) relabel[root] = next++;
    out[p] = relabel[root];
  }
  return out;
}

inline std::vector<SuperpixelCenter> region_means(const LabImage& img, const std::vector<int>& labels,
                                                  std::size_t count) {
  std::vector<std::array<double, 6>> acc(count, {0, 0, 0, 0, 0, 0});
  for (std::size_t p = 0; p < labels.size(); ++p) {
    auto& a = acc[static_cast<std::size_t>(labels[p])];
    const auto& lab = img.pixels[p];
    a[0] += lab[0];
    a[1] += lab[1];
    a[2] += lab[2];
    a[3] += static_cast<double>(p % img.width);
    a[4] += static_cast<double>(p / img.width);
    a[5] += 1.0;
  }
  std::vector<SuperpixelCenter> out(count);
  for (std::size_t k = 0; k < count; ++k) {
    const auto& a = acc[k];
    if (a[5] > 0) out[k] = {a[0] / a[5], a[1] / a[5], a[2] / a[5], a[3] / a[5], a[4] / a[5]};
  }
  return out;
}

}  // namespace detail

/// Simple linear iterative clustering in lab-xy space with a 2S x 2S search window per
/// centre, followed by connectivity enforcement.
inline SuperpixelMap slic(const LabImage& img, const SlicParams& p) {
  p.validate();
  const std::size_t n = img.width * img.height;
  if (n == 0) throw std::invalid_argument("slic: empty image");
  if (p.superpixels > n) {
    throw std::invalid_argument("slic: " + std::to_string(p.superpixels) +
                                " superpixels requested for " + std::to_string(n) + " pixels");
  }
  const double S = std::sqrt(static_cast<double>(n) / static_cast<double>(p.superpixels));
  std::vector<SuperpixelCenter> centers = detail::seed_centers(img, p.superpixels, S);

  SuperpixelMap map;
  map.width = img.width;
  map.height = img.height;
  map.grid_interval = S;
  std::vector<int> labels(n, -1);
  std::vector<double> dist(n);
  for (std::size_t it = 0; it < p.iterations; ++it) {
    std::fill(dist.begin(), dist.end(), std::numeric_limits<double>::infinity());
    for (std::size_t q = 0; q < n; ++q) {
      if (labels[q] < 0) continue;
      dist[q] = slic_distance(img.pixels[q], static_cast<double>(q % img.width),
                              static_cast<double>(q / img.width),
                              centers[static_cast<std::size_t>(labels[q])], S, p.compactness);
    }
    for (std::size_t k = 0; k < centers.size(); ++k) {
      const auto& c = centers[k];
      const long x0 = std::max(0L, static_cast<long>(std::floor(c.x - S)));
      const long x1 = std::min(static_cast<long>(img.width) - 1, static_cast<long>(std::ceil(c.x + S)));
      const long y0 = std::max(0L, static_cast<long>(std::floor(c.y - S)));
      const long y1 = std::min(static_cast<long>(img.height) - 1, static_cast<long>(std::ceil(c.y + S)));
      for (long y = y0; y <= y1; ++y) {
        for (long x = x0; x <= x1; ++x) {
          const std::size_t q = static_cast<std::size_t>(y) * img.width + static_cast<std::size_t>(x);
          const double d = slic_distance(img.pixels[q], static_cast<double>(x), static_cast<double>(y),
                                         c, S, p.compactness);
          if (d < dist[q]) {
            dist[q] = d;
            labels[q] = static_cast<int>(k);
          }
        }
      }
    }
    for (std::size_t q = 0; q < n; ++q) {
      if (labels[q] != -1) continue;
      const double x = static_cast<double>(q % img.width), y = static_cast<double>(q / img.width);
      for (std::size_t k = 0; k < centers.size(); ++k) {
        const double d = slic_distance(img.pixels[q], x, y, centers[k], S, p.compactness);
        if (d < dist[q]) {
          dist[q] = d;
          labels[q] = static_cast<int>(k);
        }
      }
    }
    double sum = 0.0, sum_sq = 0.0;
    for (double d : dist) {
      sum += d;
      sum_sq += d * d;
    }
    map.residuals.push_back(sum / static_cast<double>(n));
    map.squared_residuals.push_back(sum_sq / static_cast<double>(n));
    const auto updated = detail::region_means(img, labels, centers.size());
    const auto sizes = [&] {
      std::vector<std::size_t> s(centers.size(), 0);
      for (int l : labels) ++s[static_cast<std::size_t>(l)];
      return s;
    }();
    for (std::size_t k = 0; k < centers.size(); ++k) {
      if (sizes[k] > 0) centers[k] = updated[k];
    }
  }

  map.labels = detail::enforce_connectivity(labels, img.width, img.height, p.orphan_fraction * S * S);
  const int count = *std::max_element(map.labels.begin(), map.labels.end()) + 1;
  map.centers = detail::region_means(img, map.labels, static_cast<std::size_t>(count));
  return map;
}

inline SuperpixelMap slic(const RgbImage& img, const SlicParams& p) { return slic(rgb_to_lab(img), p); }

/// Tight bounding-box crop of superpixel `label` with non-member pixels set to black.
struct SuperpixelCrop {
  RgbImage image;
  std::vector<bool> member;  // per crop pixel
  std::size_t x0 = 0, y0 = 0;
};

inline SuperpixelCrop extract_superpixel_crop(const RgbImage& img, const SuperpixelMap& map, int label) {
  if (img.width != map.width || img.height != map.height) {
    throw std::invalid_argument("superpixel map does not match the image size");
  }
  if (label < 0 || static_cast<std::size_t>(label) >= map.count()) {
    throw std::out_of_range("unknown superpixel label " + std::to_string(label));
  }
  std::size_t x0 = img.width, y0 = img.height, x1 = 0, y1 = 0;
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      if (map.at(x, y) != label) continue;
      x0 = std::min(x0, x);
      y0 = std::min(y0, y);
      x1 = std::max(x1, x);
      y1 = std::max(y1, y);
    }
  }
  if (x0 > x1) throw std::out_of_range("superpixel label " + std::to_string(label) + " is empty");
  SuperpixelCrop crop{RgbImage(x1 - x0 + 1, y1 - y0 + 1), {}, x0, y0};
  crop.member.assign(crop.image.width * crop.image.height, false);
  for (std::size_t y = y0; y <= y1; ++y) {
    for (std::size_t x = x0; x <= x1; ++x) {
      if (map.at(x, y) != label) continue;
      const std::size_t i = (y - y0) * crop.image.width + (x - x0);
      crop.member[i] = true;
      std::copy_n(img.at(x, y), 3, crop.image.at(x - x0, y - y0));
    }
  }
  return crop;
}

/// Classifier input for one superpixel: the masked crop, preprocessed to 1x3x224x224.
inline Tensor extract_superpixel_patch(const RgbImage& img, const SuperpixelMap& map, int label,
                                       const Normalization& norm = {}) {
  return preprocess(extract_superpixel_crop(img, map, label).image, norm);
}

struct Localization {
  SuperpixelMap map;
  std::vector<double> probabilities;  // per superpixel
  std::vector<bool> fire;             // per superpixel
  GrayImage mask;                     // 255 where fire
  RgbImage overlay;
};

inline double fire_probability(const ModelGraph& model, const Tensor& input) {
  return sigmoid(forward(model, input).at(0));
}

/// Classifies every superpixel of an existing segmentation and builds the mask and overlay.
inline Localization localize_with_map(const ModelGraph& model, const RgbImage& img, SuperpixelMap map,
                                      double threshold) {
  Localization out;
  const std::size_t k = map.count();
  out.probabilities.assign(k, 0.0);
  parallel_for(k, [&](std::size_t i) {
    out.probabilities[i] = fire_probability(model, extract_superpixel_patch(img, map, static_cast<int>(i)));
  });
  out.fire.resize(k);
  for (std::size_t i = 0; i < k; ++i) out.fire[i] = out.probabilities[i] >= threshold;

  out.mask = GrayImage(img.width, img.height);
  out.overlay = img;
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      const int l = map.at(x, y);
      const bool fire = out.fire[static_cast<std::size_t>(l)];
      out.mask.at(x, y) = fire ? 255 : 0;
      const bool boundary = (x > 0 && map.at(x - 1, y) != l) || (x + 1 < img.width && map.at(x + 1, y) != l) ||
                            (y > 0 && map.at(x, y - 1) != l) || (y + 1 < img.height && map.at(x, y + 1) != l);
      if (boundary) {
        std::uint8_t* px = out.overlay.at(x, y);
        px[0] = fire ? 0 : 255;
        px[1] = fire ? 255 : 0;
        px[2] = 0;
      }
    }
  }
  out.map = std::move(map);
  return out;
}

/// SLIC segmentation followed by per-superpixel fire classification.
inline Localization localize_fire(const ModelGraph& model, const RgbImage& img, const SlicParams& p,
                                  double threshold) {
  return localize_with_map(model, img, slic(img, p), threshold);
}

}  // namespace onfire
