#pragma once

#include <array>
#include <cstddef>
#include <cstdio>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "onfire/graph.hpp"

namespace onfire {

// ---------------------------------------------------------------------------
// ShuffleNetV2 (0.5x widths) with a prunable final 1x1 convolution
// ---------------------------------------------------------------------------

struct ShuffleConfig {
  std::size_t stem_channels = 24;
  std::array<std::size_t, 3> stage_channels{48, 96, 192};
  std::array<std::size_t, 3> normal_cells{3, 7, 3};
  std::size_t final_filters = 64;

  static constexpr std::size_t kUnprunedFilters = 1024;

  static ShuffleConfig pruned(std::size_t pruned_filters) {
    if (pruned_filters >= kUnprunedFilters) {
      throw std::invalid_argument("cannot prune " + std::to_string(pruned_filters) + " of " +
                                  std::to_string(kUnprunedFilters) + " filters");
    }
    ShuffleConfig c;
    c.final_filters = kUnprunedFilters - pruned_filters;
    return c;
  }

  void validate() const {
    if (normal_cells != std::array<std::size_t, 3>{3, 7, 3}) {
      throw std::invalid_argument("ShuffleConfig: normal-cell counts must be [3, 7, 3]");
    }
    if (final_filters < 1 || final_filters > kUnprunedFilters) {
      throw std::invalid_argument("ShuffleConfig: final filter count " +
                                  std::to_string(final_filters) + " outside [1, 1024]");
    }
    for (std::size_t c : stage_channels) {
      if (c % 2 != 0) throw std::invalid_argument("ShuffleConfig: stage widths must be even");
    }
  }
};

inline ModelGraph build_shufflenet_v2_onfire(const ShuffleConfig& cfg,
                                             std::string arch = "shufflenetv2-onfire") {
  cfg.validate();
  std::vector<Layer> layers;
  layers.push_back(ConvBnLayer{"stem", 3, cfg.stem_channels, 3, 2, 1, true});
  layers.push_back(MaxPoolLayer{"maxpool", {3, 2, 1}});
  std::size_t in = cfg.stem_channels;
  for (std::size_t s = 0; s < 3; ++s) {
    const std::string stage = "stage" + std::to_string(s + 2);
    const std::size_t width = cfg.stage_channels[s];
    layers.push_back(ShuffleUnitLayer{stage + ".0", in, width, true});
    for (std::size_t i = 1; i <= cfg.normal_cells[s]; ++i) {
      layers.push_back(ShuffleUnitLayer{stage + "." + std::to_string(i), width, width, false});
    }
    in = width;
  }
  layers.push_back(ConvBnLayer{"final", in, cfg.final_filters, 1, 1, 0, true});
  layers.push_back(GlobalPoolLayer{"pool"});
  layers.push_back(LinearHeadLayer{"head", cfg.final_filters, 1});
  return ModelGraph(std::move(arch), Family::kShuffleNet, std::move(layers));
}

// ---------------------------------------------------------------------------
// NASNet-A-Mobile derived variants
// ---------------------------------------------------------------------------

struct NasConfig {
  std::size_t normal_cells = 2;  // per group for groups 1 and 2
  std::size_t group3_cells = 2;  // equal to normal_cells, or 0
  std::size_t penultimate_filters = 1056;
  std::size_t stem_filters = 32;

  std::size_t base_width() const { return penultimate_filters / 24; }

  void validate() const {
    if (normal_cells != 2 && normal_cells != 4) {
      throw std::invalid_argument("NasConfig: normal cells per group must be 2 or 4");
    }
    if (group3_cells != normal_cells && group3_cells != 0) {
      throw std::invalid_argument("NasConfig: group-3 cells must equal the group count or be 0");
    }
    if (penultimate_filters == 0 || penultimate_filters % 24 != 0) {
      throw std::invalid_argument("NasConfig: penultimate filters " +
                                  std::to_string(penultimate_filters) +
                                  " must be a positive multiple of 24");
    }
  }
};

inline ModelGraph build_nasnet_a_onfire(const NasConfig& cfg,
                                        std::string arch = "nasnet-a-onfire") {
  cfg.validate();
  const std::size_t f0 = cfg.base_width();
  std::vector<Layer> layers;
  layers.push_back(ConvBnLayer{"stem", 3, cfg.stem_filters, 3, 2, 0, false});

  NasCellSpec stem0{"cell_stem_0", true, cfg.stem_filters, cfg.stem_filters, f0 / 4,
                    PrevAdjust::kNone, true};
  NasCellSpec stem1{"cell_stem_1", true, stem0.out_channels(), cfg.stem_filters, f0 / 2,
                    PrevAdjust::kFactorized, false};
  layers.push_back(NasCellLayer{stem0});
  layers.push_back(NasCellLayer{stem1});

  std::size_t h_ch = stem1.out_channels();
  std::size_t prev_ch = stem0.out_channels();
  bool prev_is_larger = true;  // previous activation has twice the resolution
  std::size_t cell_index = 0;
  const std::array<std::size_t, 3> counts{cfg.normal_cells, cfg.normal_cells, cfg.group3_cells};
  for (std::size_t g = 0; g < 3; ++g) {
    const std::size_t width = f0 << g;
    for (std::size_t i = 0; i < counts[g]; ++i) {
      NasCellSpec cell{"cell_" + std::to_string(cell_index++), false, h_ch, prev_ch, width,
                       prev_is_larger ? PrevAdjust::kFactorized : PrevAdjust::kConv1x1, false};
      layers.push_back(NasCellLayer{cell});
      prev_ch = h_ch;
      h_ch = cell.out_channels();
      prev_is_larger = false;
    }
    if (g < 2) {
      NasCellSpec red{"reduction_cell_" + std::to_string(g), true, h_ch, prev_ch, 2 * width,
                      prev_is_larger ? PrevAdjust::kFactorized : PrevAdjust::kConv1x1, false};
      layers.push_back(NasCellLayer{red});
      prev_ch = h_ch;
      h_ch = red.out_channels();
      prev_is_larger = true;
    }
  }
  layers.push_back(ReluLayer{"relu"});
  layers.push_back(GlobalPoolLayer{"pool"});
  layers.push_back(LinearHeadLayer{"head", h_ch, 1});
  return ModelGraph(std::move(arch), Family::kNasNet, std::move(layers));
}

// ---------------------------------------------------------------------------
// Architecture names
// ---------------------------------------------------------------------------

/// Pruned-filter counts of the ShuffleNet rows v01..v09, in table order.
inline constexpr std::array<std::size_t, 9> kShufflePrunedFilters{128, 256, 384, 512, 640,
                                                                   768, 896, 960, 992};
/// NASNet rows v01..v08: (normal cells, group-3 cells, penultimate filters).
inline constexpr std::array<std::array<std::size_t, 3>, 8> kNasVariants{{{4, 4, 1056},
                                                                         {4, 0, 1056},
                                                                         {2, 2, 1056},
                                                                         {2, 0, 1056},
                                                                         {4, 4, 480},
                                                                         {4, 0, 480},
                                                                         {2, 2, 480},
                                                                         {2, 0, 480}}};

using ArchConfig = std::variant<ShuffleConfig, NasConfig>;

inline std::string variant_name(const char* family, std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s-v%02zu", family, index + 1);
  return buf;
}

/// Resolves an architecture designator. Accepted: shufflenetv2-onfire, nasnet-a-onfire,
/// shufflenet-v01..v09, nasnet-v01..v08, shufflenetv2 (unpruned, 1024 final filters) and
/// shufflenet-f<N> (N final filters).
inline ArchConfig parse_arch(const std::string& name) {
  if (name == "shufflenetv2-onfire") return ShuffleConfig{};
  if (name == "shufflenetv2") return ShuffleConfig::pruned(0);
  if (name == "nasnet-a-onfire") return NasConfig{};
  for (std::size_t i = 0; i < kShufflePrunedFilters.size(); ++i) {
    if (name == variant_name("shufflenet", i)) return ShuffleConfig::pruned(kShufflePrunedFilters[i]);
  }
  for (std::size_t i = 0; i < kNasVariants.size(); ++i) {
    if (name == variant_name("nasnet", i)) {
      const auto& v = kNasVariants[i];
      return NasConfig{v[0], v[1], v[2]};
    }
  }
  const std::string f_prefix = "shufflenet-f";
  if (name.rfind(f_prefix, 0) == 0 && name.size() > f_prefix.size()) {
    const std::string digits = name.substr(f_prefix.size());
    if (digits.find_first_not_of("0123456789") == std::string::npos && digits.size() <= 5) {
      ShuffleConfig c;
      c.final_filters = std::stoul(digits);
      c.validate();
      return c;
    }
  }
  throw std::invalid_argument("unknown architecture '" + name + "'");
}

inline ModelGraph build_model(const std::string& name) {
  const ArchConfig cfg = parse_arch(name);
  if (const auto* s = std::get_if<ShuffleConfig>(&cfg)) return build_shufflenet_v2_onfire(*s, name);
  return build_nasnet_a_onfire(std::get<NasConfig>(cfg), name);
}

/// Canonical name for a ShuffleNet width, preferring the named designators.
inline std::string shufflenet_name_for(std::size_t final_filters) {
  if (final_filters == ShuffleConfig{}.final_filters) return "shufflenetv2-onfire";
  if (final_filters == ShuffleConfig::kUnprunedFilters) return "shufflenetv2";
  for (std::size_t i = 0; i < kShufflePrunedFilters.size(); ++i) {
    if (ShuffleConfig::kUnprunedFilters - kShufflePrunedFilters[i] == final_filters) {
      return variant_name("shufflenet", i);
    }
  }
  return "shufflenet-f" + std::to_string(final_filters);
}

inline bool same_architecture(const std::string& a, const std::string& b) {
  const ArchConfig ca = parse_arch(a);
  const ArchConfig cb = parse_arch(b);
  if (ca.index() != cb.index()) return false;
  if (const auto* s = std::get_if<ShuffleConfig>(&ca)) {
    return s->final_filters == std::get<ShuffleConfig>(cb).final_filters;
  }
  const auto& na = std::get<NasConfig>(ca);
  const auto& nb = std::get<NasConfig>(cb);
  return na.normal_cells == nb.normal_cells && na.group3_cells == nb.group3_cells &&
         na.penultimate_filters == nb.penultimate_filters;
}

// ---------------------------------------------------------------------------
// Variant tables
// ---------------------------------------------------------------------------

struct ShuffleVariantRow {
  std::string name;
  std::size_t pruned_filters = 0;
  std::size_t final_conv_params = 0;
  std::size_t total_params = 0;
  std::size_t published_final_conv = 0;
  std::size_t published_total = 0;

  bool matches_published() const {
    return final_conv_params == published_final_conv && total_params == published_total;
  }
};

struct NasVariantRow {
  std::string name;
  NasConfig config;
  std::size_t penultimate_filters = 0;  // configured width that sets every cell's filters
  std::size_t feature_width = 0;        // channels reaching the head
  std::size_t total_params = 0;
};

/// Values as printed in the published pruning table, row order v01..v09.
inline constexpr std::array<std::array<std::size_t, 2>, 9> kPublishedShuffleCounts{{
    {196608, 342897},
    {147456, 292897},
    {122800, 267937},
    {98304, 242977},
    {73728, 218017},
    {49152, 193057},
    {24576, 168097},
    {12288, 155617},
    {6144, 149377},
}};

/// Weight count of the final 1x1 convolution (its batch norm excluded).
inline std::size_t final_conv_params(const ModelGraph& model) {
  for (const Layer& l : model.layers()) {
    if (const auto* c = std::get_if<ConvBnLayer>(&l); c && c->name == "final") {
      return c->in * c->out * static_cast<std::size_t>(c->kernel * c->kernel);
    }
  }
  throw std::invalid_argument(model.arch() + " has no final convolution");
}

inline std::vector<ShuffleVariantRow> shufflenet_variant_table() {
  std::vector<ShuffleVariantRow> rows;
  for (std::size_t i = 0; i < kShufflePrunedFilters.size(); ++i) {
    const std::size_t k = kShufflePrunedFilters[i];
    const ModelGraph g = build_shufflenet_v2_onfire(ShuffleConfig::pruned(k),
                                                    variant_name("shufflenet", i));
    rows.push_back({g.arch(), k, final_conv_params(g), param_count(g).total,
                    kPublishedShuffleCounts[i][0], kPublishedShuffleCounts[i][1]});
  }
  return rows;
}

inline std::vector<NasVariantRow> nasnet_variant_table() {
  std::vector<NasVariantRow> rows;
  for (std::size_t i = 0; i < kNasVariants.size(); ++i) {
    const auto& v = kNasVariants[i];
    const NasConfig cfg{v[0], v[1], v[2]};
    const ModelGraph g = build_nasnet_a_onfire(cfg, variant_name("nasnet", i));
    rows.push_back({g.arch(), cfg, cfg.penultimate_filters, g.feature_width(), param_count(g).total});
  }
  return rows;
}

}  // namespace onfire
