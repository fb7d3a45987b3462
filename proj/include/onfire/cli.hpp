#pragma once

#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "onfire/arch.hpp"
#include "onfire/graph.hpp"
#include "onfire/head_trainer.hpp"
#include "onfire/image.hpp"
#include "onfire/pipeline.hpp"
#include "onfire/preprocess.hpp"
#include "onfire/pruning.hpp"
#include "onfire/superpixel.hpp"
#include "onfire/synthetic.hpp"
#include "onfire/weight_file.hpp"

namespace onfire {

inline constexpr int kExitOk = 0;
inline constexpr int kExitOperational = 1;
inline constexpr int kExitUsage = 2;

/// Seeded random weights with batch norm calibrated on one synthetic frame, so untrained
/// models still produce well-scaled activations.
inline ModelGraph seeded_model(const ModelGraph& model, std::uint64_t seed) {
  const ModelGraph init = init_random_weights(model, seed);
  return calibrate_batch_norm(init, preprocess(synthetic_frame(224, 224, seed, true)));
}

namespace detail {

struct CommonOptions {
  std::string arch = "shufflenetv2-onfire";
  std::string weights;
  double threshold = 0.5;
  std::size_t superpixels = 100;
  double compactness = 10.0;
  std::uint64_t seed = 0;
  std::string out;
};

inline void add_common(CLI::App* cmd, CommonOptions& o, bool with_slic) {
  cmd->add_option("--arch", o.arch, "architecture designator")->capture_default_str();
  cmd->add_option("--weights", o.weights, "OFW1 weight file (default: seeded random weights)");
  cmd->add_option("--threshold", o.threshold, "fire probability threshold")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  cmd->add_option("--seed", o.seed, "seed for random weights and synthetic data")->capture_default_str();
  cmd->add_option("--out", o.out, "output path");
  if (with_slic) {
    cmd->add_option("--superpixels", o.superpixels, "requested superpixel count K")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--compactness", o.compactness, "SLIC compactness m")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
  }
}

inline ModelGraph resolve_model(const CommonOptions& o, bool arch_given) {
  if (!o.weights.empty()) {
    return arch_given ? load_weights(build_model(o.arch), o.weights) : load_model(o.weights);
  }
  return seeded_model(build_model(o.arch), o.seed);
}

inline SlicParams slic_params(const CommonOptions& o) {
  SlicParams p;
  p.superpixels = o.superpixels;
  p.compactness = o.compactness;
  return p;
}

/// Expands directories into their sorted *.ppm frames.
inline std::vector<std::string> expand_inputs(const std::vector<std::string>& inputs) {
  std::vector<std::string> out;
  for (const auto& in : inputs) {
    if (std::filesystem::is_directory(in)) {
      const auto frames = list_images(in);
      if (frames.empty()) throw std::runtime_error("directory '" + in + "' has no .ppm frames");
      out.insert(out.end(), frames.begin(), frames.end());
    } else {
      out.push_back(in);
    }
  }
  return out;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  f << text;
  if (!f) throw std::runtime_error("failed writing '" + path + "'");
}

inline std::string shufflenet_table() {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-15s %14s %18s %14s\n", "model", "pruned_filters",
                "final_conv_params", "total_params");
  out << line;
  for (const auto& r : shufflenet_variant_table()) {
    std::string note;
    if (!r.matches_published()) {
      note = "published " + std::to_string(r.published_final_conv) + " / " +
             std::to_string(r.published_total) + " disagrees with the 195-per-filter law";
    }
    std::snprintf(line, sizeof line, "%-15s %14zu %18zu %14zu", r.name.c_str(), r.pruned_filters,
                  r.final_conv_params, r.total_params);
    out << line << (note.empty() ? "" : "  " + note) << '\n';
  }
  return out.str();
}

inline std::string nasnet_table() {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-12s %12s %12s %19s %13s %14s\n", "model", "normal_cells",
                "group3_cells", "penultimate_filters", "feature_width", "total_params");
  out << line;
  for (const auto& r : nasnet_variant_table()) {
    std::snprintf(line, sizeof line, "%-12s %12zu %12zu %19zu %13zu %14zu\n", r.name.c_str(),
                  r.config.normal_cells, r.config.group3_cells, r.penultimate_filters, r.feature_width,
                  r.total_params);
    out << line;
  }
  return out.str();
}

}  // namespace detail

/// Command-line entry point. Returns 0 on success, 1 on operational errors and 2 on usage
/// errors.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"Compact CNN fire detection toolkit", "onfire"};
  app.require_subcommand(1, 1);
  app.set_help_all_flag("--help-all", "expand all help");
  app.failure_message(CLI::FailureMessage::help);
  std::map<const CLI::App*, detail::CommonOptions> options;

  auto* params = app.add_subcommand("params", "print the trainable parameter count of an architecture");
  params->add_option("--arch", options[params].arch, "architecture designator")->capture_default_str();
  bool per_layer = false;
  params->add_flag("--per-layer", per_layer, "also list per-layer counts");

  auto* variants = app.add_subcommand("variants", "print the variant table of a family");
  std::string family;
  variants->add_option("family", family, "shufflenet or nasnet")
      ->required()
      ->check(CLI::IsMember({"shufflenet", "nasnet"}));

  auto* classify = app.add_subcommand("classify", "full-frame fire classification");
  detail::add_common(classify, options[classify], false);
  std::vector<std::string> classify_inputs;
  classify->add_option("inputs", classify_inputs, "PPM images or directories of frames")->required();

  auto* localize = app.add_subcommand("localize", "superpixel fire localisation of one image");
  detail::add_common(localize, options[localize], true);
  std::string localize_input;
  localize->add_option("input", localize_input, "PPM image")->required();

  auto* eval = app.add_subcommand("eval", "evaluate on a fire/ nofire/ dataset");
  detail::add_common(eval, options[eval], false);
  std::string data;
  eval->add_option("--data", data, "dataset root")->required();

  auto* bench_cmd = app.add_subcommand("bench", "single-stream throughput");
  detail::add_common(bench_cmd, options[bench_cmd], true);
  std::string mode = "fullframe";
  std::size_t frames = 10, warmup = 2;
  std::string bench_data;
  bench_cmd->add_option("--mode", mode, "fullframe or superpixel")
      ->check(CLI::IsMember({"fullframe", "superpixel"}))
      ->capture_default_str();
  bench_cmd->add_option("--frames", frames, "timed frames")->check(CLI::PositiveNumber)->capture_default_str();
  bench_cmd->add_option("--warmup", warmup, "untimed warmup frames")->capture_default_str();
  bench_cmd->add_option("--data", bench_data, "PPM image or directory of frames (default: synthetic)");

  auto* prune = app.add_subcommand("prune", "L2-norm pruning of the final convolution");
  options[prune].arch = "shufflenetv2";
  detail::add_common(prune, options[prune], false);
  std::size_t prune_filters = 960;
  prune->add_option("--filters", prune_filters, "number of filters to remove")->capture_default_str();

  auto* finetune = app.add_subcommand("finetune-head", "train the linear head on a dataset");
  detail::add_common(finetune, options[finetune], false);
  TrainConfig train;
  std::string loss_csv;
  finetune->add_option("--data", data, "dataset root")->required();
  finetune->add_option("--epochs", train.epochs, "training epochs")->check(CLI::PositiveNumber)->capture_default_str();
  finetune->add_option("--lr", train.learning_rate, "learning rate")->check(CLI::NonNegativeNumber)->capture_default_str();
  finetune->add_option("--batch-size", train.batch_size, "mini-batch size")->check(CLI::PositiveNumber)->capture_default_str();
  finetune->add_option("--loss-csv", loss_csv, "write the loss curve here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    CLI::App* cmd = app.get_subcommands().front();
    const detail::CommonOptions& common = options[cmd];
    const bool arch_given = cmd->get_option_no_throw("--arch") && cmd->count("--arch") > 0;

    if (cmd == params) {
      const ModelGraph model = build_model(common.arch);
      const ParamCount pc = param_count(model);
      if (per_layer) {
        for (const auto& [name, n] : pc.per_layer) out << name << ' ' << n << '\n';
      }
      out << model.arch() << ' ' << pc.total << '\n';
    } else if (cmd == variants) {
      out << (family == "shufflenet" ? detail::shufflenet_table() : detail::nasnet_table());
    } else if (cmd == classify) {
      const ModelGraph model = detail::resolve_model(common, arch_given);
      std::ostringstream csv;
      csv << "path,label,probability\n";
      for (const auto& path : detail::expand_inputs(classify_inputs)) {
        const Classification c = classify_frame(model, load_ppm(path), common.threshold);
        csv << path << ',' << (c.fire ? "fire" : "nofire") << ',' << c.probability << '\n';
      }
      out << csv.str();
      if (!common.out.empty()) detail::write_text(common.out, csv.str());
    } else if (cmd == localize) {
      const ModelGraph model = detail::resolve_model(common, arch_given);
      const RgbImage img = load_ppm(localize_input);
      const Localization loc = localize_fire(model, img, detail::slic_params(common), common.threshold);
      std::size_t fire_count = 0;
      std::ostringstream csv;
      csv << "superpixel,pixels,probability,label\n";
      const auto sizes = loc.map.sizes();
      for (std::size_t i = 0; i < loc.map.count(); ++i) {
        fire_count += loc.fire[i];
        csv << i << ',' << sizes[i] << ',' << loc.probabilities[i] << ','
            << (loc.fire[i] ? "fire" : "nofire") << '\n';
      }
      const std::string dir = common.out.empty() ? "." : common.out;
      std::filesystem::create_directories(dir);
      save_pgm((std::filesystem::path(dir) / "mask.pgm").string(), loc.mask);
      save_ppm((std::filesystem::path(dir) / "overlay.ppm").string(), loc.overlay);
      detail::write_text((std::filesystem::path(dir) / "superpixels.csv").string(), csv.str());
      out << "superpixels " << loc.map.count() << "\nfire_superpixels " << fire_count << "\nmask "
          << (std::filesystem::path(dir) / "mask.pgm").string() << "\noverlay "
          << (std::filesystem::path(dir) / "overlay.ppm").string() << '\n';
    } else if (cmd == eval) {
      const ModelGraph model = detail::resolve_model(common, arch_given);
      const std::string csv = metrics_csv(evaluate(model, data, common.threshold));
      out << csv;
      if (!common.out.empty()) detail::write_text(common.out, csv);
    } else if (cmd == bench_cmd) {
      const ModelGraph model = detail::resolve_model(common, arch_given);
      std::vector<RgbImage> images;
      if (bench_data.empty()) {
        for (std::uint64_t i = 0; i < 4; ++i) images.push_back(synthetic_frame(224, 224, common.seed + i, i % 2 == 0));
      } else {
        for (const auto& p : detail::expand_inputs({bench_data})) images.push_back(load_ppm(p));
      }
      const BenchMode m = mode == "fullframe" ? BenchMode::kFullFrame : BenchMode::kSuperpixel;
      const BenchResult r = bench(model, images, m, frames, warmup, detail::slic_params(common));
      out << "arch " << model.arch() << "\nmode " << mode << "\nframes " << r.frames << "\nseconds "
          << r.seconds << "\nfps " << r.fps << '\n';
      if (m == BenchMode::kSuperpixel) out << "superpixels " << r.superpixels << '\n';
    } else if (cmd == prune) {
      const ModelGraph model = detail::resolve_model(common, arch_given);
      auto [pruned, report] = prune_final_conv(model, prune_filters);
      out << "arch " << pruned.arch() << '\n' << report.table();
      if (!common.out.empty()) save_weights(common.out, pruned);
    } else if (cmd == finetune) {
      train.seed = common.seed;
      const ModelGraph model = detail::resolve_model(common, arch_given);
      const auto items = scan_dataset(data);
      std::vector<Tensor> inputs;
      std::vector<int> labels;
      for (const auto& item : items) {
        inputs.push_back(preprocess(load_ppm(item.path)));
        labels.push_back(item.fire ? 1 : 0);
      }
      const LabeledFeatureSet features = extract_features(model, inputs, labels);
      auto [trained, result] = finetune_model_head(model, features, train);
      const std::string curve = loss_curve_csv(result.curve);
      if (!loss_csv.empty()) detail::write_text(loss_csv, curve);
      if (!common.out.empty()) save_weights(common.out, trained);
      const EpochStats& last = result.curve.back();
      out << "samples " << features.size() << "\nepochs " << last.epoch << "\nfinal_loss "
          << last.mean_loss << "\ntrain_accuracy " << last.train_accuracy << '\n';
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitOperational;
  }
  return kExitOk;
}

}  // namespace onfire
