#pragma once

#include <cstddef>
#include <map>
#include <mutex>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "onfire/ops.hpp"
#include "onfire/tensor.hpp"

namespace onfire {

enum class ParamRole {
  kWeight,       // convolution or linear weights
  kBias,         // linear bias
  kBnAffine,     // batch-norm gamma / beta
  kBnStatistic,  // batch-norm running mean / variance (not a trainable parameter)
};

inline bool is_trainable(ParamRole role) { return role != ParamRole::kBnStatistic; }

/// Declared name, shape and role of one tensor a graph layer needs.
struct WeightSpec {
  std::string name;
  Shape shape;
  ParamRole role = ParamRole::kWeight;
  std::size_t fan_in = 1;
};

/// Named tensor collection. Once frozen, any further mutation throws; derived stores are
/// made with copy(), which shares tensor payloads with the original.
class WeightStore {
 public:
  void insert(const std::string& name, Tensor t) {
    check_mutable(name);
    if (!tensors_.emplace(name, std::move(t)).second) {
      throw std::invalid_argument("duplicate weight name '" + name + "'");
    }
  }

  void replace(const std::string& name, Tensor t) {
    check_mutable(name);
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw std::out_of_range("unknown weight '" + name + "'");
    it->second = std::move(t);
  }

  void erase(const std::string& name) {
    check_mutable(name);
    tensors_.erase(name);
  }

  const Tensor& at(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw std::out_of_range("missing weight '" + name + "'");
    return it->second;
  }

  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
  std::size_t size() const { return tensors_.size(); }
  const std::map<std::string, Tensor>& tensors() const { return tensors_; }

  void freeze() { frozen_ = true; }
  bool frozen() const { return frozen_; }

  /// Unfrozen copy sharing every payload with this store.
  WeightStore copy() const {
    WeightStore s;
    s.tensors_ = tensors_;
    return s;
  }

 private:
  void check_mutable(const std::string& name) const {
    if (frozen_) throw std::logic_error("weight store is frozen; cannot modify '" + name + "'");
  }

  std::map<std::string, Tensor> tensors_;
  bool frozen_ = false;
};

/// Per-channel statistics observed while calibrating batch norm, keyed by BN prefix.
struct BnStatistics {
  std::vector<float> mean;
  std::vector<float> var;
};
using BnCalibration = std::map<std::string, BnStatistics>;

/// Read access to a store used by cell execution. Optionally counts every lookup so graph
/// audits can check that each weight is consumed exactly once per forward pass, and can
/// switch batch norm to batch statistics to record calibrated running statistics.
class WeightView {
 public:
  explicit WeightView(const WeightStore& store, std::map<std::string, int>* access_log = nullptr,
                      BnCalibration* calibration = nullptr)
      : store_(&store), log_(access_log), calibration_(calibration) {}

  const Tensor& get(const std::string& name) const {
    if (log_) {
      std::lock_guard lock(mutex_);
      ++(*log_)[name];
    }
    return store_->at(name);
  }

  BatchNormParams batch_norm(const std::string& prefix) const {
    auto vec = [&](const char* field) {
      auto v = get(prefix + "." + field).values();
      return std::vector<float>(v.begin(), v.end());
    };
    return {vec("gamma"), vec("beta"), vec("mean"), vec("var"), 1e-5f};
  }

  /// Applies the batch norm stored under `prefix` to `x`.
  Tensor bn(const Tensor& x, const std::string& prefix) const {
    BatchNormParams p = batch_norm(prefix);
    if (calibration_) {
      BnStatistics stats = channel_statistics(x);
      p.mean = stats.mean;
      p.var = stats.var;
      std::lock_guard lock(mutex_);
      (*calibration_)[prefix] = std::move(stats);
    }
    return batch_norm_infer(x, p);
  }

  static BnStatistics channel_statistics(const Tensor& x) {
    const Shape& s = x.shape();
    BnStatistics st{std::vector<float>(s.c), std::vector<float>(s.c)};
    const double count = static_cast<double>(s.n * s.plane());
    for (std::size_t c = 0; c < s.c; ++c) {
      double sum = 0.0, sq = 0.0;
      for (std::size_t n = 0; n < s.n; ++n) {
        const float* p = x.channel(n, c);
        for (std::size_t i = 0; i < s.plane(); ++i) sum += p[i];
      }
      const double mean = sum / count;
      for (std::size_t n = 0; n < s.n; ++n) {
        const float* p = x.channel(n, c);
        for (std::size_t i = 0; i < s.plane(); ++i) sq += (p[i] - mean) * (p[i] - mean);
      }
      st.mean[c] = static_cast<float>(mean);
      st.var[c] = static_cast<float>(sq / count);
    }
    return st;
  }

 private:
  const WeightStore* store_;
  std::map<std::string, int>* log_;
  BnCalibration* calibration_;
  mutable std::mutex mutex_;
};

/// Appends the four batch-norm tensors for `prefix`.
inline void add_bn_specs(std::vector<WeightSpec>& out, const std::string& prefix,
                         std::size_t channels) {
  out.push_back({prefix + ".gamma", {channels, 1, 1, 1}, ParamRole::kBnAffine, 1});
  out.push_back({prefix + ".beta", {channels, 1, 1, 1}, ParamRole::kBnAffine, 1});
  out.push_back({prefix + ".mean", {channels, 1, 1, 1}, ParamRole::kBnStatistic, 1});
  out.push_back({prefix + ".var", {channels, 1, 1, 1}, ParamRole::kBnStatistic, 1});
}

inline void add_conv_spec(std::vector<WeightSpec>& out, const std::string& name,
                          std::size_t out_ch, std::size_t in_ch_per_group, std::size_t kernel) {
  out.push_back({name, {out_ch, in_ch_per_group, kernel, kernel}, ParamRole::kWeight,
                 in_ch_per_group * kernel * kernel});
}

inline std::size_t trainable_count(const std::vector<WeightSpec>& specs) {
  std::size_t total = 0;
  for (const auto& s : specs)
    if (is_trainable(s.role)) total += s.shape.count();
  return total;
}

}  // namespace onfire
