#pragma once

#include <cstddef>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "onfire/cells.hpp"
#include "onfire/ops.hpp"
#include "onfire/weights.hpp"

namespace onfire {

struct ConvBnLayer {
  std::string name;
  std::size_t in = 0;
  std::size_t out = 0;
  int kernel = 1;
  int stride = 1;
  int padding = 0;
  bool relu = false;
};

struct MaxPoolLayer {
  std::string name;
  PoolParams pool;
};

struct ShuffleUnitLayer {
  std::string name;
  std::size_t in = 0;
  std::size_t out = 0;
  bool reduction = false;
};

struct NasCellLayer {
  NasCellSpec cell;
};

struct ReluLayer {
  std::string name;
};

struct GlobalPoolLayer {
  std::string name;
};

struct LinearHeadLayer {
  std::string name;
  std::size_t in = 0;
  std::size_t out = 1;
};

using Layer = std::variant<ConvBnLayer, MaxPoolLayer, ShuffleUnitLayer, NasCellLayer, ReluLayer,
                           GlobalPoolLayer, LinearHeadLayer>;

inline const std::string& layer_name(const Layer& layer) {
  return std::visit(
      [](const auto& l) -> const std::string& {
        if constexpr (std::is_same_v<std::decay_t<decltype(l)>, NasCellLayer>) {
          return l.cell.name;
        } else {
          return l.name;
        }
      },
      layer);
}

inline void layer_specs(const Layer& layer, std::vector<WeightSpec>& out) {
  std::visit(
      [&](const auto& l) {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, ConvBnLayer>) {
          conv_bn_specs(out, l.name, l.in, l.out, static_cast<std::size_t>(l.kernel));
        } else if constexpr (std::is_same_v<T, ShuffleUnitLayer>) {
          if (l.reduction) {
            shufflenet_reduction_specs(out, l.name, l.in, l.out);
          } else {
            shufflenet_normal_specs(out, l.name, l.out);
          }
        } else if constexpr (std::is_same_v<T, NasCellLayer>) {
          nas_cell_specs(out, l.cell);
        } else if constexpr (std::is_same_v<T, LinearHeadLayer>) {
          out.push_back({l.name + ".weight", {l.out, l.in, 1, 1}, ParamRole::kWeight, l.in});
          out.push_back({l.name + ".bias", {l.out, 1, 1, 1}, ParamRole::kBias, l.in});
        }
      },
      layer);
}

enum class Family { kShuffleNet, kNasNet };

/// Executable architecture: an ordered layer list plus the weight store bound to it.
/// Layers see the two most recent activations (current and previous), which is all the
/// NASNet cells need; sequential layers ignore the previous one.
class ModelGraph {
 public:
  ModelGraph(std::string arch, Family family, std::vector<Layer> layers)
      : arch_(std::move(arch)), family_(family), layers_(std::move(layers)) {
    if (layers_.empty() || !std::holds_alternative<LinearHeadLayer>(layers_.back())) {
      throw std::invalid_argument("model graph must end with a linear head");
    }
  }

  const std::string& arch() const { return arch_; }
  Family family() const { return family_; }
  const std::vector<Layer>& layers() const { return layers_; }
  const LinearHeadLayer& head() const { return std::get<LinearHeadLayer>(layers_.back()); }
  std::size_t feature_width() const { return head().in; }
  static constexpr Shape input_shape(std::size_t batch = 1) { return {batch, 3, 224, 224}; }

  std::vector<WeightSpec> weight_specs() const {
    std::vector<WeightSpec> specs;
    for (const Layer& l : layers_) layer_specs(l, specs);
    return specs;
  }

  /// Checks the store supplies every declared tensor with its exact shape and nothing else,
  /// then freezes it. Inference is refused until this succeeds.
  void bind(WeightStore store) {
    const auto specs = weight_specs();
    std::set<std::string> declared;
    for (const auto& s : specs) {
      if (!declared.insert(s.name).second) {
        throw std::logic_error("graph declares weight '" + s.name + "' twice");
      }
      if (!store.contains(s.name)) {
        throw std::invalid_argument("weights for " + arch_ + " lack '" + s.name + "'");
      }
      const Shape& got = store.at(s.name).shape();
      if (!(got == s.shape)) {
        throw std::invalid_argument("weight '" + s.name + "' has shape " + got.str() +
                                    ", architecture " + arch_ + " expects " + s.shape.str());
      }
    }
    for (const auto& [name, t] : store.tensors()) {
      if (!declared.count(name)) {
        throw std::invalid_argument("weight '" + name + "' is not used by " + arch_);
      }
    }
    store.freeze();
    weights_ = std::move(store);
    bound_ = true;
  }

  bool bound() const { return bound_; }
  const WeightStore& weights() const { return weights_; }

  /// Returns a copy of this graph bound to `store`.
  ModelGraph with_weights(WeightStore store) const {
    ModelGraph g(arch_, family_, layers_);
    g.bind(std::move(store));
    return g;
  }

 private:
  std::string arch_;
  Family family_;
  std::vector<Layer> layers_;
  WeightStore weights_;
  bool bound_ = false;
};

inline Tensor run_layer(const Layer& layer, const Tensor& cur, const Tensor& prev,
                        const WeightView& w) {
  return std::visit(
      [&](const auto& l) -> Tensor {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, ConvBnLayer>) {
          return conv_bn(cur, w, l.name, ConvParams::square(l.kernel, l.stride, l.padding), l.relu);
        } else if constexpr (std::is_same_v<T, MaxPoolLayer>) {
          return max_pool2d(cur, l.pool);
        } else if constexpr (std::is_same_v<T, ShuffleUnitLayer>) {
          return l.reduction ? shufflenet_reduction_cell(cur, w, l.name, l.out)
                             : shufflenet_normal_cell(cur, w, l.name);
        } else if constexpr (std::is_same_v<T, NasCellLayer>) {
          return nas_cell(cur, prev, w, l.cell);
        } else if constexpr (std::is_same_v<T, ReluLayer>) {
          return relu(cur);
        } else if constexpr (std::is_same_v<T, GlobalPoolLayer>) {
          return global_avg_pool(cur);
        } else {
          throw std::logic_error("run_layer: the head is applied by forward()");
        }
      },
      layer);
}

namespace detail {

inline void check_runnable(const ModelGraph& model, const Tensor& batch) {
  if (!model.bound()) throw std::logic_error(model.arch() + ": weights are not bound");
  const Shape& s = batch.shape();
  const Shape want = ModelGraph::input_shape(s.n);
  if (s.n == 0 || !(s == want)) {
    throw std::invalid_argument(model.arch() + ": input must be Nx3x224x224, got " + s.str());
  }
}

}  // namespace detail

/// Runs every layer except the head through `view`; returns N x C x 1 x 1 pooled features.
inline Tensor forward_pooled(const ModelGraph& model, const Tensor& batch, const WeightView& view) {
  detail::check_runnable(model, batch);
  Tensor cur = batch;
  Tensor prev = batch;
  const auto& layers = model.layers();
  for (std::size_t i = 0; i + 1 < layers.size(); ++i) {
    Tensor next = run_layer(layers[i], cur, prev, view);
    prev = std::move(cur);
    cur = std::move(next);
  }
  return cur;
}

inline Tensor forward_pooled(const ModelGraph& model, const Tensor& batch,
                             std::map<std::string, int>* access_log = nullptr) {
  return forward_pooled(model, batch, WeightView(model.weights(), access_log));
}

/// Penultimate activations (input of the linear head), one vector per batch item.
inline std::vector<std::vector<float>> forward_features(const ModelGraph& model,
                                                        const Tensor& batch) {
  const Tensor pooled = forward_pooled(model, batch);
  const Shape& s = pooled.shape();
  std::vector<std::vector<float>> out(s.n);
  for (std::size_t n = 0; n < s.n; ++n) {
    const float* p = pooled.channel(n, 0);
    out[n].assign(p, p + s.c * s.plane());
  }
  return out;
}

inline std::vector<float> apply_head(const ModelGraph& model, std::span<const float> features,
                                     const WeightView& w) {
  const auto& head = model.head();
  return linear(features, w.get(head.name + ".weight"), w.get(head.name + ".bias").values());
}

/// One logit per batch item.
inline std::vector<float> forward(const ModelGraph& model, const Tensor& batch,
                                  std::map<std::string, int>* access_log = nullptr) {
  const Tensor pooled = forward_pooled(model, batch, access_log);
  const WeightView view(model.weights(), access_log);
  std::vector<float> logits;
  logits.reserve(pooled.shape().n);
  for (std::size_t n = 0; n < pooled.shape().n; ++n) {
    std::span<const float> f(pooled.channel(n, 0), pooled.shape().c);
    logits.push_back(apply_head(model, f, view).at(0));
  }
  return logits;
}

/// Replaces every batch-norm running mean/variance with the statistics observed on
/// `batch` (one pass, each layer normalised by its own batch statistics). Used to give
/// randomly initialised models well-scaled activations.
inline ModelGraph calibrate_batch_norm(const ModelGraph& model, const Tensor& batch) {
  BnCalibration stats;
  forward_pooled(model, batch, WeightView(model.weights(), nullptr, &stats));
  WeightStore store = model.weights().copy();
  for (const auto& [prefix, st] : stats) {
    const Shape shape{st.mean.size(), 1, 1, 1};
    store.replace(prefix + ".mean", Tensor(shape, st.mean));
    store.replace(prefix + ".var", Tensor(shape, st.var));
  }
  return model.with_weights(std::move(store));
}

struct ParamCount {
  std::size_t total = 0;
  std::vector<std::pair<std::string, std::size_t>> per_layer;
};

/// Trainable parameters: conv/linear weights, linear bias and batch-norm gamma/beta.
/// Running statistics are excluded. Needs only the architecture, not bound weights.
inline ParamCount param_count(const ModelGraph& model) {
  ParamCount pc;
  for (const Layer& l : model.layers()) {
    std::vector<WeightSpec> specs;
    layer_specs(l, specs);
    const std::size_t n = trainable_count(specs);
    if (n == 0) continue;
    pc.per_layer.emplace_back(layer_name(l), n);
    pc.total += n;
  }
  return pc;
}

/// Structural audit: every declared weight name is unique and, when bound, the store holds
/// exactly the declared names. Returns human-readable problems (empty when clean).
inline std::vector<std::string> audit_graph(const ModelGraph& model) {
  std::vector<std::string> problems;
  std::map<std::string, int> uses;
  for (const auto& s : model.weight_specs()) ++uses[s.name];
  for (const auto& [name, n] : uses) {
    if (n != 1) problems.push_back(name + " declared " + std::to_string(n) + " times");
  }
  if (model.bound()) {
    for (const auto& [name, t] : model.weights().tensors()) {
      if (!uses.count(name)) problems.push_back(name + " stored but unused");
    }
    for (const auto& [name, n] : uses) {
      if (!model.weights().contains(name)) problems.push_back(name + " declared but missing");
    }
  }
  return problems;
}

}  // namespace onfire
