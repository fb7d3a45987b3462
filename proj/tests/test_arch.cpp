#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "onfire/arch.hpp"
#include "onfire/weight_file.hpp"
#include "oracles.hpp"

using namespace onfire;

namespace {

/// Random store for a spec list; batch-norm variances kept positive.
WeightStore random_store(const std::vector<WeightSpec>& specs, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  WeightStore s;
  for (const auto& spec : specs) {
    const bool is_var = spec.name.ends_with(".var");
    s.insert(spec.name, oracle::random_tensor(spec.shape, gen, is_var ? 0.2 : -1.0, is_var ? 2.0 : 1.0));
  }
  return s;
}

Tensor bn_oracle(const Tensor& x, const WeightStore& s, const std::string& p) {
  const Shape sh = x.shape();
  std::vector<float> out(sh.count());
  for (std::size_t n = 0; n < sh.n; ++n)
    for (std::size_t c = 0; c < sh.c; ++c)
      for (std::size_t i = 0; i < sh.plane(); ++i) {
        const double g = s.at(p + ".gamma").data()[c], b = s.at(p + ".beta").data()[c];
        const double m = s.at(p + ".mean").data()[c], v = s.at(p + ".var").data()[c];
        out[(n * sh.c + c) * sh.plane() + i] =
            static_cast<float>(g * (x.channel(n, c)[i] - m) / std::sqrt(v + 1e-5) + b);
      }
  return Tensor(sh, std::move(out));
}

Tensor relu_oracle(const Tensor& x) {
  std::vector<float> v(x.values().begin(), x.values().end());
  for (float& f : v) f = f > 0 ? f : 0;
  return Tensor(x.shape(), std::move(v));
}

Tensor seeded_input(std::size_t batch, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  return oracle::random_tensor(ModelGraph::input_shape(batch), gen, -2.0, 2.0);
}

}  // namespace

TEST(ShuffleNetParams, OnFireTotalMatchesPublishedCount) {
  EXPECT_EQ(param_count(build_model("shufflenetv2-onfire")).total, 155617u);
}

TEST(ShuffleNetParams, MatchesHandTallyForEveryWidth) {
  for (std::size_t f : {1u, 32u, 64u, 500u, 1024u}) {
    ShuffleConfig c;
    c.final_filters = f;
    EXPECT_EQ(param_count(build_shufflenet_v2_onfire(c)).total, oracle::shufflenet_params(f)) << f;
  }
  EXPECT_EQ(oracle::shufflenet_params(1024), 342817u);
}

TEST(ShuffleNetParams, PruningTableRows) {
  const auto rows = shufflenet_variant_table();
  ASSERT_EQ(rows.size(), 9u);
  const std::size_t published[9] = {0, 292897, 0, 242977, 218017, 193057, 168097, 155617, 149377};
  for (std::size_t i = 0; i < 9; ++i) {
    EXPECT_EQ(rows[i].final_conv_params, (1024 - rows[i].pruned_filters) * 192) << rows[i].name;
    EXPECT_EQ(rows[i].total_params, 342817 - 195 * rows[i].pruned_filters) << rows[i].name;
    if (published[i]) {
      EXPECT_EQ(rows[i].total_params, published[i]) << rows[i].name;
      EXPECT_TRUE(rows[i].matches_published()) << rows[i].name;
    }
  }
  EXPECT_EQ(rows[0].total_params, 317857u);
  EXPECT_EQ(rows[0].final_conv_params, 172032u);
  EXPECT_FALSE(rows[0].matches_published());
  EXPECT_EQ(rows[2].final_conv_params, 122880u);
  EXPECT_FALSE(rows[2].matches_published());
}

TEST(ShuffleNetParams, ConfigValidation) {
  ShuffleConfig c;
  c.final_filters = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.final_filters = 1025;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = ShuffleConfig{};
  c.normal_cells = {3, 7, 4};
  EXPECT_THROW(c.validate(), std::invalid_argument);
  EXPECT_THROW(ShuffleConfig::pruned(1024), std::invalid_argument);
}

TEST(NasNetParams, VariantFamily) {
  const auto rows = nasnet_variant_table();
  ASSERT_EQ(rows.size(), 8u);
  for (std::size_t i = 0; i < 8; ++i) {
    EXPECT_EQ(rows[i].penultimate_filters, i < 4 ? 1056u : 480u) << rows[i].name;
  }
  // The 4-cells-per-group, 1056-filter parent equals the NASNet-A-Mobile backbone.
  EXPECT_NEAR(static_cast<double>(rows[0].total_params), 4.233e6, 0.01e6);
  for (std::size_t i = 4; i < 8; ++i) EXPECT_LT(rows[i].total_params, rows[i - 4].total_params);
  EXPECT_EQ(build_model("nasnet-a-onfire").feature_width(), 1056u);
  EXPECT_EQ(param_count(build_model("nasnet-a-onfire")).total, param_count(build_model("nasnet-v03")).total);
}

TEST(NasNetParams, ConfigValidation) {
  EXPECT_THROW((NasConfig{2, 1, 1056}.validate()), std::invalid_argument);
  EXPECT_THROW((NasConfig{2, 2, 1000}.validate()), std::invalid_argument);
  EXPECT_THROW((NasConfig{0, 0, 1056}.validate()), std::invalid_argument);
}

TEST(NasNetCells, SeparableCensusFromGraphInspection) {
  for (const char* name : {"nasnet-a-onfire", "nasnet-v01", "nasnet-v08"}) {
    const ModelGraph g = build_model(name);
    std::map<std::string, std::map<std::size_t, int>> per_cell;
    std::map<std::string, bool> reduction;
    for (const Layer& l : g.layers()) {
      if (const auto* c = std::get_if<NasCellLayer>(&l)) reduction[c->cell.name] = c->cell.reduction;
    }
    for (const auto& spec : g.weight_specs()) {
      if (!spec.name.ends_with(".sep1.dw.weight")) continue;
      per_cell[spec.name.substr(0, spec.name.find('.'))][spec.shape.h]++;
    }
    ASSERT_EQ(per_cell.size(), reduction.size());
    for (const auto& [cell, census] : per_cell) {
      const std::map<std::size_t, int> want =
          reduction.at(cell) ? std::map<std::size_t, int>{{3, 1}, {5, 2}, {7, 2}}
                             : std::map<std::size_t, int>{{3, 3}, {5, 2}};
      EXPECT_EQ(census, want) << name << " " << cell;
    }
  }
  EXPECT_EQ(separable_census(nas_normal_plan()), (std::map<int, int>{{3, 3}, {5, 2}}));
  EXPECT_EQ(separable_census(nas_reduction_plan()), (std::map<int, int>{{3, 1}, {5, 2}, {7, 2}}));
}

TEST(NasNetCells, OutputWidthsAndResolution) {
  const NasCellSpec normal{"n", false, 24, 24, 8, PrevAdjust::kConv1x1, false};
  const NasCellSpec red{"r", true, 24, 24, 8, PrevAdjust::kConv1x1, false};
  std::vector<WeightSpec> specs;
  nas_cell_specs(specs, normal);
  nas_cell_specs(specs, red);
  const WeightStore store = random_store(specs, 5);
  std::mt19937_64 gen(3);
  const Tensor h = oracle::random_tensor({1, 24, 10, 10}, gen);
  const WeightView view(store);
  EXPECT_EQ(nas_cell(h, h, view, normal).shape(), (Shape{1, 48, 10, 10}));
  EXPECT_EQ(nas_cell(h, h, view, red).shape(), (Shape{1, 32, 5, 5}));
  EXPECT_THROW(nas_cell(h, oracle::random_tensor({1, 24, 6, 6}, gen), view, normal), std::logic_error);
}

TEST(ShuffleCells, NormalCellMatchesComposedOracle) {
  std::vector<WeightSpec> specs;
  shufflenet_normal_specs(specs, "u", 8);
  const WeightStore s = random_store(specs, 7);
  std::mt19937_64 gen(8);
  const Tensor x = oracle::random_tensor({2, 8, 6, 6}, gen);
  const Tensor got = shufflenet_normal_cell(x, WeightView(s), "u");

  std::vector<float> left, right;
  for (std::size_t n = 0; n < 2; ++n) {
    left.insert(left.end(), x.channel(n, 0), x.channel(n, 4));
    right.insert(right.end(), x.channel(n, 4), x.channel(n, 4) + 4 * 36);
  }
  Tensor r({2, 4, 6, 6}, right);
  r = relu_oracle(bn_oracle(oracle::conv2d(r, s.at("u.branch2.pw1.conv.weight"), 1, 1, 1, 0, 1), s, "u.branch2.pw1.bn"));
  r = bn_oracle(oracle::depthwise(r, s.at("u.branch2.dw.conv.weight"), 3, 1, 1), s, "u.branch2.dw.bn");
  r = relu_oracle(bn_oracle(oracle::conv2d(r, s.at("u.branch2.pw2.conv.weight"), 1, 1, 1, 0, 1), s, "u.branch2.pw2.bn"));
  std::vector<float> cat;
  for (std::size_t n = 0; n < 2; ++n) {
    cat.insert(cat.end(), left.begin() + n * 144, left.begin() + (n + 1) * 144);
    cat.insert(cat.end(), r.channel(n, 0), r.channel(n, 0) + 144);
  }
  const Tensor want = oracle::shuffle(Tensor({2, 8, 6, 6}, cat), 2);
  EXPECT_LE(oracle::max_rel_error(got, want), 1e-4);
}

TEST(ShuffleCells, ReductionHalvesResolutionAndRejectsOddWidths) {
  std::vector<WeightSpec> specs;
  shufflenet_reduction_specs(specs, "r", 6, 12);
  const WeightStore s = random_store(specs, 9);
  std::mt19937_64 gen(10);
  const Tensor x = oracle::random_tensor({1, 6, 9, 9}, gen);
  EXPECT_EQ(shufflenet_reduction_cell(x, WeightView(s), "r", 12).shape(), (Shape{1, 12, 5, 5}));
  EXPECT_THROW(shufflenet_reduction_cell(x, WeightView(s), "r", 11), std::invalid_argument);
  EXPECT_THROW(shufflenet_normal_cell(oracle::random_tensor({1, 5, 4, 4}, gen), WeightView(s), "r"),
               std::invalid_argument);
}

TEST(ModelGraph, FeatureWidths) {
  const ModelGraph shuffle = init_random_weights(build_model("shufflenetv2-onfire"), 1);
  const ModelGraph nas = init_random_weights(build_model("nasnet-a-onfire"), 1);
  const Tensor x = seeded_input(1, 2);
  EXPECT_EQ(forward_features(shuffle, x).at(0).size(), 64u);
  EXPECT_EQ(forward_features(nas, x).at(0).size(), 1056u);
}

TEST(ModelGraph, FeaturesComposeWithHead) {
  const ModelGraph m = calibrate_batch_norm(init_random_weights(build_model("shufflenetv2-onfire"), 3), seeded_input(1, 3));
  const Tensor x = seeded_input(1, 4);
  const auto f = forward_features(m, x).at(0);
  double z = m.weights().at("head.bias").data()[0];
  for (std::size_t i = 0; i < f.size(); ++i) z += double(m.weights().at("head.weight").data()[i]) * f[i];
  EXPECT_NEAR(forward(m, x).at(0), z, 1e-5 * std::max(1.0, std::abs(z)));
  EXPECT_EQ(forward_features(m, x), forward_features(m, x));
}

TEST(ModelGraph, BatchInvarianceAndRerunsAreBitIdentical) {
  const ModelGraph m = init_random_weights(build_model("shufflenetv2-onfire"), 5);
  const Tensor a = seeded_input(1, 6), b = seeded_input(1, 7);
  std::vector<float> both(a.values().begin(), a.values().end());
  both.insert(both.end(), b.values().begin(), b.values().end());
  const auto batched = forward(m, Tensor(ModelGraph::input_shape(2), both));
  EXPECT_EQ(batched.at(0), forward(m, a).at(0));
  EXPECT_EQ(batched.at(1), forward(m, b).at(0));
  EXPECT_EQ(forward(m, a), forward(m, a));
}

TEST(ModelGraph, EveryWeightReadExactlyOncePerForward) {
  for (const char* name : {"shufflenetv2-onfire", "nasnet-a-onfire"}) {
    const ModelGraph m = init_random_weights(build_model(name), 1);
    std::map<std::string, int> log;
    forward(m, seeded_input(1, 1), &log);
    EXPECT_EQ(log.size(), m.weights().size()) << name;
    for (const auto& [w, n] : log) EXPECT_EQ(n, 1) << name << " " << w;
    EXPECT_TRUE(audit_graph(m).empty());
  }
}

TEST(ModelGraph, BindingRejectsMissingExtraAndMisshapenWeights) {
  const ModelGraph g = build_model("shufflenetv2-onfire");
  const WeightStore full = random_weights(g, 1);
  WeightStore missing = full.copy();
  missing.erase("final.conv.weight");
  EXPECT_THROW(g.with_weights(missing), std::invalid_argument);
  WeightStore extra = full.copy();
  extra.insert("stray.weight", Tensor({1, 1, 1, 1}));
  EXPECT_THROW(g.with_weights(extra), std::invalid_argument);
  WeightStore wrong = full.copy();
  wrong.replace("head.weight", Tensor({1, 63, 1, 1}));
  EXPECT_THROW(g.with_weights(wrong), std::invalid_argument);
  EXPECT_THROW(forward(g, seeded_input(1, 1)), std::logic_error);
}

TEST(ModelGraph, BoundStoreIsFrozen) {
  const ModelGraph m = init_random_weights(build_model("shufflenetv2-onfire"), 1);
  EXPECT_TRUE(m.weights().frozen());
  WeightStore& store = const_cast<WeightStore&>(m.weights());
  EXPECT_THROW(store.replace("head.bias", Tensor({1, 1, 1, 1})), std::logic_error);
  EXPECT_THROW(store.insert("x", Tensor({1, 1, 1, 1})), std::logic_error);
}

TEST(ModelGraph, RejectsWrongInputShape) {
  const ModelGraph m = init_random_weights(build_model("shufflenetv2-onfire"), 1);
  EXPECT_THROW(forward(m, Tensor({1, 3, 200, 224})), std::invalid_argument);
  EXPECT_THROW(forward(m, Tensor({1, 1, 224, 224})), std::invalid_argument);
}

TEST(ModelGraph, CalibrationChangesOnlyRunningStatistics) {
  const ModelGraph m = init_random_weights(build_model("shufflenetv2-onfire"), 2);
  const ModelGraph c = calibrate_batch_norm(m, seeded_input(1, 9));
  for (const auto& [name, t] : m.weights().tensors()) {
    const bool stat = name.ends_with(".mean") || name.ends_with(".var");
    if (!stat) EXPECT_TRUE(c.weights().at(name).bit_equal(t)) << name;
  }
  const auto f = forward_features(c, seeded_input(1, 10)).at(0);
  double mx = 0;
  for (float v : f) mx = std::max(mx, double(std::abs(v)));
  EXPECT_GT(mx, 1e-2);
}

TEST(RandomInit, SeededUniformWithinFanInBound) {
  const ModelGraph g = build_model("shufflenetv2-onfire");
  const WeightStore a = random_weights(g, 42), b = random_weights(g, 42), c = random_weights(g, 43);
  EXPECT_TRUE(a.at("stage3.2.branch2.pw1.conv.weight").bit_equal(b.at("stage3.2.branch2.pw1.conv.weight")));
  EXPECT_FALSE(a.at("final.conv.weight").bit_equal(c.at("final.conv.weight")));
  for (const auto& spec : g.weight_specs()) {
    const Tensor& t = a.at(spec.name);
    if (spec.role == ParamRole::kWeight || spec.role == ParamRole::kBias) {
      const double s = std::sqrt(1.0 / spec.fan_in);
      for (float v : t.values()) EXPECT_LE(std::abs(v), s) << spec.name;
    } else {
      const float want = spec.name.ends_with(".gamma") || spec.name.ends_with(".var") ? 1.0f : 0.0f;
      for (float v : t.values()) EXPECT_EQ(v, want) << spec.name;
    }
  }
}

TEST(ArchNames, ParseAndCompare) {
  EXPECT_EQ(build_model("shufflenet-v08").feature_width(), 64u);
  EXPECT_EQ(build_model("shufflenet-f100").feature_width(), 100u);
  EXPECT_EQ(build_model("shufflenetv2").feature_width(), 1024u);
  EXPECT_EQ(build_model("nasnet-v05").feature_width(), 480u);
  EXPECT_TRUE(same_architecture("shufflenet-v08", "shufflenetv2-onfire"));
  EXPECT_TRUE(same_architecture("nasnet-v03", "nasnet-a-onfire"));
  EXPECT_FALSE(same_architecture("shufflenet-v07", "shufflenetv2-onfire"));
  for (const char* bad : {"resnet", "shufflenet-v10", "nasnet-v00", "shufflenet-f", "shufflenet-f0", "shufflenet-f2000"}) {
    EXPECT_THROW(build_model(bad), std::invalid_argument) << bad;
  }
}
