#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "onfire/head_trainer.hpp"
#include "onfire/pipeline.hpp"
#include "onfire/synthetic.hpp"
#include "onfire/weight_file.hpp"
#include "oracles.hpp"

using namespace onfire;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("onfire_pipeline_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<unsigned char> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

ModelGraph constant_model(double bias) {
  const ModelGraph m = init_random_weights(build_model("shufflenetv2-onfire"), 1);
  return with_head(m, LinearHead{std::vector<double>(64, 0.0), bias});
}

ModelGraph seeded(std::uint64_t seed) {
  const ModelGraph m = init_random_weights(build_model("shufflenetv2-onfire"), seed);
  return calibrate_batch_norm(m, preprocess(synthetic_frame(224, 224, seed, true)));
}

}  // namespace

TEST(Netpbm, DecodesTwoPixelExample) {
  std::string raw = "P6\n2 1\n255\n";
  raw += std::string("\xff\x00\x00\x00\x00\xff", 6);
  const RgbImage img = decode_ppm(bytes_of(raw));
  ASSERT_EQ(img.width, 2u);
  ASSERT_EQ(img.height, 1u);
  EXPECT_EQ(img.at(0, 0)[0], 255);
  EXPECT_EQ(img.at(0, 0)[2], 0);
  EXPECT_EQ(img.at(1, 0)[2], 255);
  const Tensor t = image_to_unit_tensor(img);
  EXPECT_EQ(t.shape(), (Shape{1, 3, 1, 2}));
  EXPECT_EQ(t.at(0, 0, 0, 0), 1.0f);
  EXPECT_EQ(t.at(0, 2, 0, 1), 1.0f);
  EXPECT_EQ(t.at(0, 1, 0, 0), 0.0f);
}

TEST(Netpbm, CommentsAndWhitespaceInHeader) {
  std::string raw = "P5 # gray\n# another\n3\t2\n255\n";
  raw += std::string("\x01\x02\x03\x04\x05\x06", 6);
  const GrayImage g = decode_pgm(bytes_of(raw));
  EXPECT_EQ(g.width, 3u);
  EXPECT_EQ(g.height, 2u);
  EXPECT_EQ(g.pixels, (std::vector<std::uint8_t>{1, 2, 3, 4, 5, 6}));
}

TEST(Netpbm, RejectsBadFiles) {
  EXPECT_THROW(decode_ppm(bytes_of("P6\n2 1\n65535\n")), std::runtime_error);
  EXPECT_THROW(decode_ppm(bytes_of("P3\n1 1\n255\n0 0 0")), std::runtime_error);
  EXPECT_THROW(decode_ppm(bytes_of("P6\n0 1\n255\n")), std::runtime_error);
  EXPECT_THROW(decode_ppm(bytes_of("P6\n2")), std::runtime_error);
  try {
    decode_ppm(bytes_of("P6\n2 2\n255\nabc"), "frame.ppm");
    FAIL() << "truncated payload accepted";
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("frame.ppm"), std::string::npos);
    EXPECT_NE(msg.find("truncated"), std::string::npos);
    EXPECT_NE(msg.find("byte 11"), std::string::npos);
  }
  EXPECT_THROW(load_ppm("/nonexistent/x.ppm"), std::runtime_error);
}

TEST(Netpbm, RoundTrip) {
  const fs::path dir = scratch_dir("netpbm");
  const RgbImage img = synthetic_frame(13, 7, 4, true);
  save_ppm((dir / "a.ppm").string(), img);
  EXPECT_EQ(load_ppm((dir / "a.ppm").string()), img);
  GrayImage g(5, 3);
  for (std::size_t i = 0; i < g.pixels.size(); ++i) g.pixels[i] = static_cast<std::uint8_t>(i * 17);
  save_pgm((dir / "b.pgm").string(), g);
  EXPECT_EQ(load_pgm((dir / "b.pgm").string()), g);
  EXPECT_THROW(save_ppm((dir / "c.ppm").string(), RgbImage{}), std::invalid_argument);
  fs::remove_all(dir);
}

TEST(Preprocess, ShapeAndNormalisation) {
  RgbImage img(224, 224);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<std::uint8_t>((i * 7) % 256);
  const Tensor t = preprocess(img);
  ASSERT_EQ(t.shape(), (Shape{1, 3, 224, 224}));
  const Normalization n;
  for (std::size_t y = 0; y < 224; y += 37)
    for (std::size_t x = 0; x < 224; x += 41)
      for (std::size_t c = 0; c < 3; ++c) {
        const double want = (img.at(x, y)[c] / 255.0 - n.mean[c]) / n.stddev[c];
        EXPECT_NEAR(t.at(0, c, y, x), want, 1e-5);
      }
}

TEST(Preprocess, MatchesScalarBilinearReference) {
  const RgbImage img = synthetic_frame(31, 17, 8, false);
  const Tensor unit = image_to_unit_tensor(img);
  const Tensor t = preprocess(img);
  const Normalization n;
  for (std::size_t y = 0; y < 224; y += 13)
    for (std::size_t x = 0; x < 224; x += 11)
      for (std::size_t c = 0; c < 3; ++c) {
        const double want = (oracle::bilinear_at(unit, 0, c, y, x, 224, 224) - n.mean[c]) / n.stddev[c];
        EXPECT_NEAR(t.at(0, c, y, x), want, 1e-5);
      }
  EXPECT_THROW(preprocess(RgbImage{}), std::invalid_argument);
}

TEST(Preprocess, MeanColourMapsToZero) {
  RgbImage img(5, 4);
  for (std::size_t i = 0; i < img.pixels.size(); i += 3) {
    img.pixels[i] = 124;
    img.pixels[i + 1] = 116;
    img.pixels[i + 2] = 104;
  }
  const Tensor t = preprocess(img);
  for (float v : t.values()) EXPECT_NEAR(v, 0.0, 0.01);
}

TEST(Classify, ThresholdBoundaryIsInclusive) {
  const RgbImage img = synthetic_frame(32, 32, 1, true);
  const Classification half = classify_frame(constant_model(0.0), img, 0.5);
  EXPECT_EQ(half.probability, 0.5);
  EXPECT_TRUE(half.fire);
  EXPECT_FALSE(classify_frame(constant_model(10.0), img, 1.0).fire);
  EXPECT_TRUE(classify_frame(constant_model(-10.0), img, 0.0).fire);
}

TEST(Classify, MonotoneInThreshold) {
  const ModelGraph m = seeded(3);
  std::vector<RgbImage> frames;
  for (std::uint64_t s = 0; s < 6; ++s) frames.push_back(synthetic_frame(48, 36, s, s % 2 == 0));
  std::size_t prev = frames.size() + 1;
  for (double t : {0.0, 0.2, 0.4, 0.5, 0.6, 0.8, 1.0}) {
    std::size_t fires = 0;
    for (const auto& f : frames) fires += classify_frame(m, f, t).fire;
    EXPECT_LE(fires, prev);
    prev = fires;
  }
}

TEST(Metrics, FixtureValues) {
  const ConfusionCounts c{93, 5, 95, 7};
  const MetricsReport r = metrics_from_counts(c);
  EXPECT_DOUBLE_EQ(*r.tpr, 0.93);
  EXPECT_DOUBLE_EQ(*r.fpr, 0.05);
  EXPECT_DOUBLE_EQ(*r.precision, 93.0 / 98.0);
  EXPECT_DOUBLE_EQ(*r.accuracy, 0.94);
  const double f = 2 * (93.0 / 98.0) * 0.93 / (93.0 / 98.0 + 0.93);
  EXPECT_NEAR(*r.f_score, f, 1e-12);
  EXPECT_NEAR(*r.f_score, 2.0 * 93 / (2.0 * 93 + 5 + 7), 1e-12);
}

TEST(Metrics, AllCorrectAndUndefined) {
  const MetricsReport all = metrics_from_counts({10, 0, 10, 0});
  EXPECT_EQ(*all.tpr, 1.0);
  EXPECT_EQ(*all.fpr, 0.0);
  EXPECT_EQ(*all.precision, 1.0);
  EXPECT_EQ(*all.f_score, 1.0);
  EXPECT_EQ(*all.accuracy, 1.0);
  const MetricsReport onlyneg = metrics_from_counts({0, 0, 4, 0});
  EXPECT_FALSE(onlyneg.tpr);
  EXPECT_FALSE(onlyneg.precision);
  EXPECT_FALSE(onlyneg.f_score);
  EXPECT_EQ(*onlyneg.fpr, 0.0);
  const MetricsReport empty = metrics_from_counts({});
  EXPECT_FALSE(empty.accuracy);
  const std::string csv = metrics_csv(onlyneg);
  EXPECT_NE(csv.find("tpr,n/a"), std::string::npos);
  EXPECT_NE(csv.find("precision,n/a"), std::string::npos);
  EXPECT_NE(csv.find("fps,n/a"), std::string::npos);
  EXPECT_EQ(csv.rfind("metric,value\n", 0), 0u);
}

TEST(Metrics, ConfusionCountsRecountOracle) {
  std::mt19937_64 gen(12);
  for (int t = 0; t < 50; ++t) {
    ConfusionCounts c;
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    for (int i = 0; i < 100; ++i) {
      const bool truth = gen() % 2, pred = gen() % 2;
      c.add(truth, pred);
      tp += truth && pred;
      fp += !truth && pred;
      tn += !truth && !pred;
      fn += truth && !pred;
    }
    EXPECT_EQ(c, (ConfusionCounts{tp, fp, tn, fn}));
    EXPECT_EQ(c.total(), 100u);
    const MetricsReport r = metrics_from_counts(c);
    if (r.f_score) {
      EXPECT_NEAR(*r.f_score, 2.0 * tp / (2.0 * tp + fp + fn), 1e-12);
    }
  }
}

TEST(Metrics, AccuracyComplexityRatio) {
  EXPECT_DOUBLE_EQ(accuracy_complexity_ratio(90.0, 0.5), 180.0);
  EXPECT_NEAR(accuracy_complexity_ratio(95.0, 0.155617), 95.0 / 0.155617, 1e-9);
  EXPECT_THROW(accuracy_complexity_ratio(90.0, 0.0), std::invalid_argument);
  EXPECT_THROW(accuracy_complexity_ratio(90.0, -1.0), std::invalid_argument);
  MetricsReport r = metrics_from_counts({9, 1, 8, 2});
  set_complexity(r, 155617);
  EXPECT_DOUBLE_EQ(*r.params_millions, 0.155617);
  EXPECT_NEAR(*r.ac_ratio, 85.0 / 0.155617, 1e-9);
}

TEST(Evaluate, MatchesPerImageRecountAndIgnoresOrder) {
  const fs::path dir = scratch_dir("eval");
  write_synthetic_dataset(dir.string(), 4, 20);
  const ModelGraph m = seeded(6);
  const MetricsReport r = evaluate(m, dir.string(), 0.5);
  ConfusionCounts want;
  for (const auto& item : scan_dataset(dir.string())) {
    want.add(item.fire, classify_frame(m, load_ppm(item.path), 0.5).fire);
  }
  EXPECT_EQ(r.counts, want);
  EXPECT_EQ(r.counts.total(), 8u);
  auto items = scan_dataset(dir.string());
  std::reverse(items.begin(), items.end());
  EXPECT_EQ(count_predictions(m, items, 0.5), want);
  EXPECT_DOUBLE_EQ(*r.params_millions, 0.155617);
  EXPECT_THROW(evaluate(m, (dir / "missing").string()), std::runtime_error);
  fs::create_directories(dir / "empty");
  EXPECT_THROW(scan_dataset((dir / "empty").string()), std::runtime_error);
  fs::remove_all(dir);
}

TEST(WeightFile, RoundTripIsBitExact) {
  const ModelGraph m = seeded(7);
  const fs::path dir = scratch_dir("ofw");
  save_weights((dir / "m.ofw").string(), m);
  const ModelGraph back = load_model((dir / "m.ofw").string());
  EXPECT_EQ(back.arch(), m.arch());
  for (const auto& [name, t] : m.weights().tensors()) EXPECT_TRUE(back.weights().at(name).bit_equal(t)) << name;
  EXPECT_NO_THROW(load_weights(build_model("shufflenet-v08"), (dir / "m.ofw").string()));
  EXPECT_THROW(load_weights(build_model("shufflenet-v07"), (dir / "m.ofw").string()), std::runtime_error);
  fs::remove_all(dir);
}

TEST(WeightFile, CorruptFilesAreRejected) {
  WeightStore s;
  s.insert("a", Tensor({2, 1, 1, 1}, {1.0f, 2.0f}));
  const auto good = encode_weights("shufflenetv2-onfire", s);
  EXPECT_EQ(decode_weights(good).weights.at("a").at(1, 0, 0, 0), 2.0f);

  auto bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_weights(bad_magic), std::runtime_error);
  auto bad_version = good;
  bad_version[4] = 9;
  EXPECT_THROW(decode_weights(bad_version), std::runtime_error);
  auto truncated = good;
  truncated.pop_back();
  try {
    decode_weights(truncated);
    FAIL() << "truncated file accepted";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("truncated at byte"), std::string::npos);
  }
  auto trailing = good;
  trailing.push_back(0);
  EXPECT_THROW(decode_weights(trailing), std::runtime_error);

  detail::ByteWriter w;
  w.bytes(kWeightMagic, 4);
  w.le<std::uint16_t>(kWeightFormatVersion);
  w.str("x");
  w.le<std::uint32_t>(2);
  for (int i = 0; i < 2; ++i) {
    w.str("dup");
    w.le<std::uint8_t>(1);
    w.le<std::uint32_t>(1);
    w.f32(0.5f);
  }
  EXPECT_THROW(decode_weights(w.data()), std::runtime_error);
}

TEST(Bench, ReportsPositiveThroughput) {
  const ModelGraph m = seeded(8);
  const std::vector<RgbImage> imgs{synthetic_frame(64, 48, 1, true)};
  const BenchResult full = bench(m, imgs, BenchMode::kFullFrame, 2, 0);
  EXPECT_GT(full.fps, 0.0);
  EXPECT_EQ(full.frames, 2u);
  const BenchResult sp = bench(m, imgs, BenchMode::kSuperpixel, 1, 0, SlicParams{4, 10, 10, 0.25});
  EXPECT_GT(sp.fps, 0.0);
  EXPECT_EQ(sp.superpixels, 4u);
  EXPECT_THROW(bench(m, imgs, BenchMode::kFullFrame, 0, 0), std::invalid_argument);
  EXPECT_THROW(bench(m, {}, BenchMode::kFullFrame, 1, 0), std::invalid_argument);
}
