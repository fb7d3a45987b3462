#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "onfire/graph.hpp"
#include "onfire/ops.hpp"
#include "onfire/parallel.hpp"

namespace onfire {

struct TrainConfig {
  double learning_rate = 0.0005;
  std::size_t epochs = 40;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
      throw std::invalid_argument("learning rate must be finite and non-negative");
    }
    if (epochs < 1) throw std::invalid_argument("epochs must be at least 1");
    if (batch_size < 1) throw std::invalid_argument("batch size must be at least 1");
  }
};

/// Penultimate feature vectors with binary labels (fire = 1, no-fire = 0).
struct LabeledFeatureSet {
  std::vector<std::vector<double>> features;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return features.empty() ? 0 : features.front().size(); }

  void add(std::vector<double> x, int y) {
    features.push_back(std::move(x));
    labels.push_back(y);
  }

  void validate() const {
    if (features.size() != labels.size()) {
      throw std::invalid_argument("feature set has " + std::to_string(features.size()) +
                                  " vectors but " + std::to_string(labels.size()) + " labels");
    }
    if (labels.empty()) throw std::invalid_argument("feature set is empty");
    const std::size_t d = dim();
    for (std::size_t i = 0; i < size(); ++i) {
      if (labels[i] != 0 && labels[i] != 1) {
        throw std::invalid_argument("label " + std::to_string(labels[i]) + " at sample " +
                                    std::to_string(i) + " is not 0 or 1");
      }
      if (features[i].size() != d) {
        throw std::invalid_argument("sample " + std::to_string(i) + " has " +
                                    std::to_string(features[i].size()) + " features, expected " +
                                    std::to_string(d));
      }
      for (double v : features[i]) {
        if (!std::isfinite(v)) {
          throw std::invalid_argument("sample " + std::to_string(i) + " has a non-finite feature");
        }
      }
    }
  }
};

/// Single-logit linear classifier p = sigmoid(w.x + b).
struct LinearHead {
  std::vector<double> weight;
  double bias = 0.0;

  double logit(const std::vector<double>& x) const {
    if (x.size() != weight.size()) {
      throw std::invalid_argument("head expects " + std::to_string(weight.size()) +
                                  " features, got " + std::to_string(x.size()));
    }
    double z = bias;
    for (std::size_t i = 0; i < x.size(); ++i) z += weight[i] * x[i];
    return z;
  }
  double probability(const std::vector<double>& x) const { return sigmoid(logit(x)); }

  bool operator==(const LinearHead&) const = default;
};

inline constexpr double kBceEpsilon = 1e-7;

/// Binary cross entropy with p clamped to [eps, 1 - eps].
inline double bce_loss(double p, int y) {
  p = std::clamp(p, kBceEpsilon, 1.0 - kBceEpsilon);
  return -(y * std::log(p) + (1 - y) * std::log(1.0 - p));
}

struct HeadGradient {
  std::vector<double> d_weight;
  double d_bias = 0.0;
};

/// Gradient of bce_loss(sigmoid(w.x + b), y) with respect to w and b.
inline HeadGradient head_gradient(const std::vector<double>& x, const LinearHead& head, int y) {
  const double dlogit = head.probability(x) - y;
  HeadGradient g{std::vector<double>(x.size()), dlogit};
  for (std::size_t i = 0; i < x.size(); ++i) g.d_weight[i] = dlogit * x[i];
  return g;
}

inline double mean_loss(const LinearHead& head, const LabeledFeatureSet& data) {
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    total += bce_loss(head.probability(data.features[i]), data.labels[i]);
  }
  return total / static_cast<double>(data.size());
}

/// Fraction of samples where (p >= 0.5) matches the label.
inline double accuracy(const LinearHead& head, const LabeledFeatureSet& data) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const int pred = head.probability(data.features[i]) >= 0.5 ? 1 : 0;
    correct += pred == data.labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

/// One plain SGD update with the gradient averaged over `batch`.
inline void sgd_step(LinearHead& head, const LabeledFeatureSet& data,
                     std::span<const std::size_t> batch, double lr) {
  if (batch.empty()) return;
  std::vector<double> dw(head.weight.size(), 0.0);
  double db = 0.0;
  for (std::size_t idx : batch) {
    const HeadGradient g = head_gradient(data.features[idx], head, data.labels[idx]);
    for (std::size_t i = 0; i < dw.size(); ++i) dw[i] += g.d_weight[i];
    db += g.d_bias;
  }
  const double scale = lr / static_cast<double>(batch.size());
  for (std::size_t i = 0; i < dw.size(); ++i) head.weight[i] -= scale * dw[i];
  head.bias -= scale * db;
}

struct EpochStats {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double train_accuracy = 0.0;
};

struct TrainResult {
  LinearHead head;
  std::vector<EpochStats> curve;
};

/// Mini-batch SGD on the head only. Sample order is reshuffled each epoch from a generator
/// seeded once with cfg.seed; the curve records full-set loss and accuracy after each epoch.
inline TrainResult finetune_head(LinearHead head, const LabeledFeatureSet& data,
                                 const TrainConfig& cfg) {
  cfg.validate();
  data.validate();
  if (head.weight.size() != data.dim()) {
    throw std::invalid_argument("head has " + std::to_string(head.weight.size()) +
                                " inputs, features have " + std::to_string(data.dim()));
  }
  std::mt19937_64 gen(cfg.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  TrainResult result;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[gen() % i]);
    }
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, order.size() - start);
      sgd_step(head, data, std::span<const std::size_t>(order.data() + start, len),
               cfg.learning_rate);
    }
    result.curve.push_back({epoch, mean_loss(head, data), accuracy(head, data)});
  }
  result.head = std::move(head);
  return result;
}

inline std::string loss_curve_csv(const std::vector<EpochStats>& curve) {
  std::ostringstream out;
  out.precision(10);
  out << "epoch,mean_loss,train_accuracy\n";
  for (const auto& e : curve) out << e.epoch << ',' << e.mean_loss << ',' << e.train_accuracy << '\n';
  return out.str();
}

inline LinearHead head_of(const ModelGraph& model) {
  const auto& layer = model.head();
  if (layer.out != 1) throw std::invalid_argument("head training needs a single-logit head");
  const auto w = model.weights().at(layer.name + ".weight").values();
  LinearHead head;
  head.weight.assign(w.begin(), w.end());
  head.bias = model.weights().at(layer.name + ".bias").values()[0];
  return head;
}

/// Copy of `model` whose head holds `head`; every other tensor is shared unchanged.
inline ModelGraph with_head(const ModelGraph& model, const LinearHead& head) {
  const auto& layer = model.head();
  if (head.weight.size() != layer.in) {
    throw std::invalid_argument("head width " + std::to_string(head.weight.size()) +
                                " does not match model feature width " + std::to_string(layer.in));
  }
  std::vector<float> w(head.weight.begin(), head.weight.end());
  WeightStore store = model.weights().copy();
  store.replace(layer.name + ".weight", Tensor({1, layer.in, 1, 1}, std::move(w)));
  store.replace(layer.name + ".bias", Tensor({1, 1, 1, 1}, {static_cast<float>(head.bias)}));
  return model.with_weights(std::move(store));
}

/// Runs the frozen backbone over preprocessed 1x3x224x224 inputs.
inline LabeledFeatureSet extract_features(const ModelGraph& model, const std::vector<Tensor>& inputs,
                                          const std::vector<int>& labels) {
  if (inputs.size() != labels.size()) {
    throw std::invalid_argument("extract_features: inputs and labels differ in length");
  }
  LabeledFeatureSet set;
  set.features.resize(inputs.size());
  set.labels = labels;
  parallel_for(inputs.size(), [&](std::size_t i) {
    const auto f = forward_features(model, inputs[i]);
    set.features[i].assign(f.at(0).begin(), f.at(0).end());
  });
  return set;
}

/// Trains only the head of `model` and returns the updated model with the training curve.
inline std::pair<ModelGraph, TrainResult> finetune_model_head(const ModelGraph& model,
                                                              const LabeledFeatureSet& data,
                                                              const TrainConfig& cfg) {
  TrainResult result = finetune_head(head_of(model), data, cfg);
  ModelGraph trained = with_head(model, result.head);
  return {std::move(trained), std::move(result)};
}

}  // namespace onfire
