#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "onfire/graph.hpp"
#include "onfire/image.hpp"
#include "onfire/parallel.hpp"
#include "onfire/preprocess.hpp"
#include "onfire/superpixel.hpp"

namespace onfire {

struct Classification {
  bool fire = false;
  double probability = 0.0;
};

/// Full-frame decision: fire iff sigmoid(logit) >= threshold.
inline Classification classify_frame(const ModelGraph& model, const RgbImage& img,
                                     double threshold = 0.5) {
  const double p = fire_probability(model, preprocess(img));
  return {p >= threshold, p};
}

struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
  void add(bool truth, bool predicted) {
    if (truth) {
      predicted ? ++tp : ++fn;
    } else {
      predicted ? ++fp : ++tn;
    }
  }
  bool operator==(const ConfusionCounts&) const = default;
};

struct MetricsReport {
  ConfusionCounts counts;
  std::optional<double> tpr, fpr, precision, f_score, accuracy;
  std::optional<double> params_millions;
  std::optional<double> ac_ratio;
  std::optional<double> fps;
};

inline double accuracy_complexity_ratio(double accuracy_percent, double params_millions) {
  if (!(params_millions > 0.0)) {
    throw std::invalid_argument("A:C ratio needs a positive parameter count");
  }
  return accuracy_percent / params_millions;
}

/// Derived rates; any metric whose denominator is zero stays undefined.
inline MetricsReport metrics_from_counts(const ConfusionCounts& c) {
  MetricsReport r;
  r.counts = c;
  const auto ratio = [](std::size_t num, std::size_t den) -> std::optional<double> {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
  };
  r.tpr = ratio(c.tp, c.tp + c.fn);
  r.fpr = ratio(c.fp, c.fp + c.tn);
  r.precision = ratio(c.tp, c.tp + c.fp);
  r.accuracy = ratio(c.tp + c.tn, c.total());
  if (r.precision && r.tpr && *r.precision + *r.tpr > 0.0) {
    r.f_score = 2.0 * *r.precision * *r.tpr / (*r.precision + *r.tpr);
  }
  return r;
}

inline void set_complexity(MetricsReport& r, std::size_t params) {
  r.params_millions = static_cast<double>(params) / 1e6;
  if (r.accuracy && params > 0) r.ac_ratio = accuracy_complexity_ratio(*r.accuracy * 100.0, *r.params_millions);
}

inline std::string format_metric(const std::optional<double>& v) {
  if (!v) return "n/a";
  std::ostringstream s;
  s.precision(6);
  s << *v;
  return s.str();
}

inline std::string metrics_csv(const MetricsReport& r) {
  std::ostringstream out;
  out << "metric,value\n"
      << "tp," << r.counts.tp << "\nfp," << r.counts.fp << "\ntn," << r.counts.tn << "\nfn,"
      << r.counts.fn << "\n"
      << "tpr," << format_metric(r.tpr) << "\nfpr," << format_metric(r.fpr) << "\nprecision,"
      << format_metric(r.precision) << "\nf_score," << format_metric(r.f_score) << "\naccuracy,"
      << format_metric(r.accuracy) << "\nparams_millions," << format_metric(r.params_millions)
      << "\nac_ratio," << format_metric(r.ac_ratio) << "\nfps," << format_metric(r.fps) << "\n";
  return out.str();
}

struct LabeledImagePath {
  std::string path;
  bool fire = false;
};

inline std::vector<std::string> list_images(const std::filesystem::path& dir) {
  std::vector<std::string> out;
  if (!std::filesystem::is_directory(dir)) return out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".ppm") out.push_back(e.path().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// `root/fire/*.ppm` (label 1) and `root/nofire/*.ppm` (label 0).
inline std::vector<LabeledImagePath> scan_dataset(const std::string& root) {
  if (!std::filesystem::is_directory(root)) {
    throw std::runtime_error("dataset root '" + root + "' is not a directory");
  }
  std::vector<LabeledImagePath> items;
  for (const auto& p : list_images(std::filesystem::path(root) / "fire")) items.push_back({p, true});
  for (const auto& p : list_images(std::filesystem::path(root) / "nofire")) items.push_back({p, false});
  if (items.empty()) throw std::runtime_error("dataset '" + root + "' has no fire/ or nofire/ PPM images");
  return items;
}

/// Confusion counts of full-frame classification over a labelled image list.
inline ConfusionCounts count_predictions(const ModelGraph& model,
                                         const std::vector<LabeledImagePath>& items,
                                         double threshold) {
  std::vector<char> predicted(items.size());
  parallel_for(items.size(), [&](std::size_t i) {
    predicted[i] = classify_frame(model, load_ppm(items[i].path), threshold).fire;
  });
  ConfusionCounts c;
  for (std::size_t i = 0; i < items.size(); ++i) c.add(items[i].fire, predicted[i] != 0);
  return c;
}

inline MetricsReport evaluate(const ModelGraph& model, const std::string& root, double threshold = 0.5) {
  MetricsReport r = metrics_from_counts(count_predictions(model, scan_dataset(root), threshold));
  set_complexity(r, param_count(model).total);
  return r;
}

enum class BenchMode { kFullFrame, kSuperpixel };

struct BenchResult {
  double fps = 0.0;
  double seconds = 0.0;
  std::size_t frames = 0;
  std::size_t superpixels = 0;  // requested K in superpixel mode
};

/// Single-stream throughput: `warmup` untimed frames, then `frames` timed ones. Superpixel
/// mode runs SLIC and classifies every superpixel of each frame.
inline BenchResult bench(const ModelGraph& model, const std::vector<RgbImage>& images, BenchMode mode,
                         std::size_t frames, std::size_t warmup, const SlicParams& slic_params = {}) {
  if (frames == 0) throw std::invalid_argument("bench needs at least one frame");
  if (images.empty()) throw std::invalid_argument("bench needs at least one image");
  const auto run = [&](std::size_t i) {
    const RgbImage& img = images[i % images.size()];
    if (mode == BenchMode::kFullFrame) {
      classify_frame(model, img);
    } else {
      localize_fire(model, img, slic_params, 0.5);
    }
  };
  for (std::size_t i = 0; i < warmup; ++i) run(i);
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t i = 0; i < frames; ++i) run(i);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  BenchResult r;
  r.frames = frames;
  r.seconds = secs;
  r.fps = static_cast<double>(frames) / std::max(secs, 1e-12);
  r.superpixels = mode == BenchMode::kSuperpixel ? slic_params.superpixels : 0;
  return r;
}

}  // namespace onfire
