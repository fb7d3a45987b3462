#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "onfire/arch.hpp"
#include "onfire/graph.hpp"

namespace onfire {

struct PruneReport {
  std::vector<std::size_t> pruned;       // ascending filter indices
  std::vector<double> sorted_norms;      // all filter norms, ascending
  std::size_t total_before = 0;
  std::size_t total_after = 0;
  std::size_t final_conv_before = 0;
  std::size_t final_conv_after = 0;

  /// Plain-text table, columns: pruned filters, final-conv params, total params.
  std::string table() const {
    char buf[320];
    std::snprintf(buf, sizeof buf, "%-8s %14s %18s %14s\n%-8s %14d %18zu %14zu\n%-8s %14zu %18zu %14zu\n",
                  "model", "pruned_filters", "final_conv_params", "total_params", "before", 0,
                  final_conv_before, total_before, "after", pruned.size(), final_conv_after,
                  total_after);
    return buf;
  }
};

/// L2 norm of each output filter of an OC x IC x KH x KW weight.
inline std::vector<double> filter_l2_norms(const Tensor& weight) {
  const std::size_t oc = weight.shape().n;
  if (oc == 0) throw std::invalid_argument("filter_l2_norms: weight has no filters");
  const std::size_t per = weight.size() / oc;
  std::vector<double> norms(oc);
  for (std::size_t f = 0; f < oc; ++f) {
    double sq = 0.0;
    for (std::size_t i = 0; i < per; ++i) {
      const double v = weight.data()[f * per + i];
      sq += v * v;
    }
    norms[f] = std::sqrt(sq);
  }
  return norms;
}

/// Indices of the k smallest norms, ascending; equal norms prune the lower index first.
inline std::vector<std::size_t> select_prune_set(std::span<const double> norms, std::size_t k) {
  if (k >= norms.size()) {
    throw std::invalid_argument("select_prune_set: k=" + std::to_string(k) +
                                " must be below the filter count " + std::to_string(norms.size()));
  }
  std::vector<std::size_t> order(norms.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return norms[a] < norms[b]; });
  std::vector<std::size_t> chosen(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

namespace detail {

/// Keeps the listed slices along dimension 0 (rows) of a tensor.
inline Tensor keep_rows(const Tensor& t, const std::vector<std::size_t>& keep) {
  const Shape& s = t.shape();
  const std::size_t per = s.c * s.h * s.w;
  std::vector<float> out;
  out.reserve(keep.size() * per);
  for (std::size_t r : keep) {
    out.insert(out.end(), t.data() + r * per, t.data() + (r + 1) * per);
  }
  return Tensor({keep.size(), s.c, s.h, s.w}, std::move(out));
}

/// Keeps the listed columns of an OC x IC (x1x1) matrix.
inline Tensor keep_columns(const Tensor& t, const std::vector<std::size_t>& keep) {
  const Shape& s = t.shape();
  std::vector<float> out;
  out.reserve(s.n * keep.size());
  for (std::size_t r = 0; r < s.n; ++r) {
    for (std::size_t c : keep) out.push_back(t.data()[r * s.c + c]);
  }
  return Tensor({s.n, keep.size(), 1, 1}, std::move(out));
}

}  // namespace detail

/// One-shot L2-norm pruning of the final 1x1 convolution of a ShuffleNet-family model.
/// The matching batch-norm entries and head columns go with each removed filter; every
/// other tensor is shared unchanged with the input model.
inline std::pair<ModelGraph, PruneReport> prune_final_conv(const ModelGraph& model,
                                                           std::size_t k) {
  if (model.family() != Family::kShuffleNet) {
    throw std::invalid_argument("prune_final_conv: " + model.arch() +
                                " is not a ShuffleNet-family model");
  }
  if (!model.bound()) throw std::logic_error("prune_final_conv: weights are not bound");
  const WeightStore& w = model.weights();
  const Tensor& conv = w.at("final.conv.weight");
  const std::size_t filters = conv.shape().n;
  if (k >= filters) {
    throw std::invalid_argument("prune_final_conv: cannot prune " + std::to_string(k) + " of " +
                                std::to_string(filters) + " filters");
  }
  const std::vector<double> norms = filter_l2_norms(conv);
  PruneReport report;
  report.pruned = select_prune_set(norms, k);
  report.sorted_norms = norms;
  std::sort(report.sorted_norms.begin(), report.sorted_norms.end());

  std::vector<std::size_t> keep;
  keep.reserve(filters - k);
  for (std::size_t f = 0, p = 0; f < filters; ++f) {
    if (p < report.pruned.size() && report.pruned[p] == f) {
      ++p;
    } else {
      keep.push_back(f);
    }
  }

  ShuffleConfig cfg;
  cfg.final_filters = keep.size();
  ModelGraph pruned = build_shufflenet_v2_onfire(cfg, shufflenet_name_for(keep.size()));

  WeightStore store = w.copy();
  store.replace("final.conv.weight", detail::keep_rows(conv, keep));
  for (const char* field : {"gamma", "beta", "mean", "var"}) {
    const std::string name = std::string("final.bn.") + field;
    store.replace(name, detail::keep_rows(w.at(name), keep));
  }
  store.replace("head.weight", detail::keep_columns(w.at("head.weight"), keep));
  ModelGraph result = pruned.with_weights(std::move(store));

  report.total_before = param_count(model).total;
  report.total_after = param_count(result).total;
  report.final_conv_before = final_conv_params(model);
  report.final_conv_after = final_conv_params(result);
  return {std::move(result), std::move(report)};
}

}  // namespace onfire
