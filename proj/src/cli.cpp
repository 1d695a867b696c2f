#include "darn/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>

#include "darn/checkpoint.hpp"
#include "darn/config.hpp"
#include "darn/dataset_io.hpp"
#include "darn/errors.hpp"
#include "darn/png_io.hpp"
#include "darn/report.hpp"
#include "darn/training.hpp"

namespace darn::cli {

namespace fs = std::filesystem;

namespace {

constexpr double kProductTolerance = 1e-6;

// Settings shared by every subcommand: --config FILE, --set KEY=VALUE and
// flags that are shorthands for single keys.
struct ConfigFlags {
  std::string file;
  std::vector<std::string> sets;
  std::map<std::string, std::string> shorthands;  // key -> flag value

  void attach(CLI::App* app) {
    app->add_option("--config", file, "key = value configuration file")->check(CLI::ExistingFile);
    app->add_option("--set", sets, "override one key, as key=value")->take_all();
  }

  void shorthand(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    app->add_option_function<std::string>(
        flag, [this, key](const std::string& v) { shorthands[key] = v; }, help + " (" + key + ")");
  }

  RunConfig resolve() const {
    std::vector<Override> overrides;
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
      overrides.push_back({s.substr(0, eq), s.substr(eq + 1)});
    }
    for (const auto& [key, value] : shorthands) overrides.push_back({key, value});
    return parse_config(file, overrides, seed_from_environment());
  }
};

std::vector<Sample> pick(const std::vector<Sample>& all, const std::vector<std::size_t>& idx) {
  std::vector<Sample> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(all[i]);
  return out;
}

std::vector<std::string> ids_of(const std::vector<Sample>& samples) {
  std::vector<std::string> ids;
  for (const auto& s : samples) ids.push_back(s.id);
  return ids;
}

struct Partition {
  std::vector<Sample> train;
  std::vector<Sample> test;
};

Partition partition(const RunConfig& config) {
  const auto all = load_dataset(config.data_root);
  std::vector<std::string> scenes;
  for (const auto& s : all) scenes.push_back(s.scene);
  const auto idx = split_indices(scenes, config.split);
  return {pick(all, idx.train), pick(all, idx.test)};
}

fs::path config_path_for(const fs::path& output_file) { return output_file.string() + ".config.txt"; }

void ensure_parent(const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
}

ModelParams load_matching(const fs::path& checkpoint, const RunConfig& config) {
  ModelParams model = load_checkpoint(checkpoint);
  require_architecture(model, config.train.generator, config.train.discriminator);
  return model;
}

double max_product_error(const Image& image, const DecompositionPair& pair) {
  double worst = 0.0;
  for (std::size_t i = 0; i < image.size(); ++i) {
    worst = std::max(worst, std::abs(image.data()[i] - pair.albedo.data()[i] * pair.shading.data()[i]));
  }
  return worst;
}

double max_value(const Image& image) { return *std::max_element(image.data().begin(), image.data().end()); }

int cmd_synth(const RunConfig& config, const fs::path& out_dir, std::ostream& out) {
  const auto samples = synth_dataset(config.seed, config.synth_count, config.synth_size, config.synth);
  write_dataset(out_dir, samples);
  write_config(out_dir / "config.txt", config);
  out << "wrote " << samples.size() << " samples to " << out_dir.string() << "\n";
  return kOk;
}

int cmd_train(const RunConfig& config, const fs::path& out_dir, std::ostream& out) {
  const auto parts = partition(config);
  fs::create_directories(out_dir);
  write_config(out_dir / "config.txt", config);
  write_split_file(out_dir / "train.txt", ids_of(parts.train));
  write_split_file(out_dir / "test.txt", ids_of(parts.test));
  const auto& train_set = config.fold == 1 ? parts.train : parts.test;
  out << "training on " << train_set.size() << " samples (fold " << config.fold << ")\n";
  TrainOptions options;
  options.out_dir = out_dir;
  options.progress = [&out](const std::string& line) { out << line << "\n" << std::flush; };
  const auto result = train(config.train, train_set, options);
  out << "wrote " << result.final_checkpoint.string() << "\n";
  return kOk;
}

int cmd_eval(RunConfig config, const fs::path& checkpoint, const std::string& checkpoint2, const fs::path& csv,
             std::ostream& out) {
  if (!checkpoint2.empty()) {
    config.eval_folds = 2;
    config.values["eval.folds"] = "2";
  }
  if (config.eval_folds == 2 && checkpoint2.empty()) throw ConfigError("eval.folds = 2 needs --checkpoint2");
  const auto parts = partition(config);
  ModelParams first = load_matching(checkpoint, config);
  MetricsReport report;
  if (config.eval_folds == 2) {
    ModelParams second = load_matching(checkpoint2, config);
    report = evaluate_two_fold(first, parts.test, second, parts.train);
  } else {
    report = evaluate(first, parts.test);
  }
  ensure_parent(csv);
  write_report_csv(csv, report);
  write_config(config_path_for(csv), config);
  out << "si-MSE " << report.aggregate.si_mse.average() << "  MSE " << report.aggregate.mse.average() << "  rs-MSE "
      << report.aggregate.rs_mse << " over " << report.count() << " images\n";
  return kOk;
}

int cmd_decompose(const RunConfig& config, const fs::path& checkpoint, const fs::path& input, const fs::path& out_dir,
                  std::ostream& out) {
  ModelParams model = load_checkpoint(checkpoint);
  const Image image = load_image(input);
  DecompositionPair pair = model.generator.decompose(image, ops::NormMode::eval);
  const double error = max_product_error(image, pair);
  if (!(error <= kProductTolerance)) {
    throw NumericError("decomposition violates albedo * shading = image (max error " + std::to_string(error) + ")");
  }
  // Use the scale ambiguity to bring albedo into the storable range when the
  // shading leaves room for it.
  const double a_max = max_value(pair.albedo);
  if (a_max > 1.0 && max_value(pair.shading) * a_max <= 1.0) {
    pair.albedo = scaled(pair.albedo, 1.0 / a_max);
    pair.shading = scaled(pair.shading, a_max);
  }
  if (max_value(pair.albedo) > 1.0 || max_value(pair.shading) > 1.0) {
    out << "warning: values above 1 are clipped in the 16-bit output\n";
  }
  fs::create_directories(out_dir);
  const std::string stem = input.stem().string();
  save_image(out_dir / (stem + "_albedo.png"), pair.albedo, 16);
  save_image(out_dir / (stem + "_shading.png"), pair.shading, 16);
  write_config(out_dir / (stem + ".config.txt"), config);
  out << "wrote " << (out_dir / (stem + "_albedo.png")).string() << " and " << (out_dir / (stem + "_shading.png")).string()
      << "\n";
  return kOk;
}

// Predictions either follow the dataset layout or sit flat as
// <id>_albedo.png / <id>_shading.png.
std::map<std::string, DecompositionPair> load_predictions(const fs::path& dir, const std::vector<Sample>& gt) {
  std::map<std::string, DecompositionPair> out;
  bool flat = !gt.empty();
  for (const auto& s : gt) flat = flat && fs::exists(dir / (s.id + "_albedo.png"));
  if (flat) {
    for (const auto& s : gt) {
      out[s.id] = {load_image(dir / (s.id + "_albedo.png")), load_image(dir / (s.id + "_shading.png"))};
    }
    return out;
  }
  for (auto& s : load_dataset(dir)) out[s.id] = {std::move(s.albedo), std::move(s.shading)};
  return out;
}

int cmd_metrics(const RunConfig& config, const fs::path& pred_dir, const fs::path& gt_dir, const fs::path& csv,
                std::ostream& out) {
  const auto gt = load_dataset(gt_dir);
  const auto pred = load_predictions(pred_dir, gt);
  MetricsReport report;
  for (const auto& s : gt) {
    const auto it = pred.find(s.id);
    if (it == pred.end()) throw DataError("no prediction for '" + s.id + "' in " + pred_dir.string());
    report.rows.push_back(evaluate_prediction(s.id, s.albedo, s.shading, it->second.albedo, it->second.shading));
  }
  finalize(report);
  ensure_parent(csv);
  write_report_csv(csv, report);
  write_config(config_path_for(csv), config);
  out << "scored " << report.count() << " images\n";
  return kOk;
}

int cmd_baselines(const RunConfig& config, const fs::path& out_dir, std::ostream& out) {
  const auto parts = partition(config);
  fs::create_directories(out_dir);
  const auto shading = baseline_constant(ConstantComponent::shading, parts.test);
  const auto albedo = baseline_constant(ConstantComponent::albedo, parts.test);
  write_report_csv(out_dir / "baseline_shading_constant.csv", shading);
  write_report_csv(out_dir / "baseline_albedo_constant.csv", albedo);
  write_config(out_dir / "config.txt", config);
  out << "shading constant si-MSE " << shading.aggregate.si_mse.average() << ", albedo constant si-MSE "
      << albedo.aggregate.si_mse.average() << " over " << parts.test.size() << " images\n";
  return kOk;
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Energy-preserving albedo/shading decomposition"};
  app.name("darn");
  app.require_subcommand(1);

  std::string out_path, data_dir, checkpoint, checkpoint2, input, pred_dir, gt_dir;

  auto* synth = app.add_subcommand("synth", "write a synthetic Mondrian dataset");
  ConfigFlags synth_flags;
  synth_flags.attach(synth);
  synth->add_option("--out", out_path, "dataset directory")->required();
  synth_flags.shorthand(synth, "--seed", "seed", "master seed");
  synth_flags.shorthand(synth, "--count", "synth.count", "number of samples");
  synth_flags.shorthand(synth, "--size", "synth.size", "image side");

  auto* train_cmd = app.add_subcommand("train", "train a model");
  ConfigFlags train_flags;
  train_flags.attach(train_cmd);
  train_cmd->add_option("--out", out_path, "output directory")->required();
  train_flags.shorthand(train_cmd, "--data", "data.root", "dataset directory");
  train_flags.shorthand(train_cmd, "--seed", "seed", "master seed");
  train_flags.shorthand(train_cmd, "--lambda", "train.lambda", "adversarial weight");
  train_flags.shorthand(train_cmd, "--iterations", "train.iterations", "generator iterations");
  train_flags.shorthand(train_cmd, "--fold", "train.fold", "partition to train on");

  auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint on the held-out partition");
  ConfigFlags eval_flags;
  eval_flags.attach(eval_cmd);
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint trained on the train partition")->required();
  eval_cmd->add_option("--checkpoint2", checkpoint2, "checkpoint trained on the test partition (two-fold)");
  eval_cmd->add_option("--out", out_path, "report CSV")->required();
  eval_flags.shorthand(eval_cmd, "--data", "data.root", "dataset directory");

  auto* decompose = app.add_subcommand("decompose", "split one image into albedo and shading");
  ConfigFlags decompose_flags;
  decompose_flags.attach(decompose);
  decompose->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  decompose->add_option("--input", input, "PNG image")->required()->check(CLI::ExistingFile);
  decompose->add_option("--out", out_path, "output directory")->required();

  auto* metrics = app.add_subcommand("metrics", "score prediction directories against ground truth");
  ConfigFlags metrics_flags;
  metrics_flags.attach(metrics);
  metrics->add_option("--pred", pred_dir, "prediction directory")->required()->check(CLI::ExistingDirectory);
  metrics->add_option("--gt", gt_dir, "ground-truth dataset directory")->required()->check(CLI::ExistingDirectory);
  metrics->add_option("--out", out_path, "report CSV")->required();

  auto* baselines = app.add_subcommand("baselines", "score the constant-shading and constant-albedo baselines");
  ConfigFlags baseline_flags;
  baseline_flags.attach(baselines);
  baselines->add_option("--out", out_path, "output directory")->required();
  baseline_flags.shorthand(baselines, "--data", "data.root", "dataset directory");

  auto* config_cmd = app.add_subcommand("config", "configuration utilities");
  auto* dump = config_cmd->add_subcommand("dump", "print the fully resolved configuration");
  config_cmd->require_subcommand(1);
  ConfigFlags dump_flags;
  dump_flags.attach(dump);
  dump_flags.shorthand(dump, "--seed", "seed", "master seed");
  dump_flags.shorthand(dump, "--lambda", "train.lambda", "adversarial weight");

  std::vector<std::string> storage = args;
  std::vector<char*> argv;
  for (auto& a : storage) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  if (synth->parsed()) return cmd_synth(synth_flags.resolve(), out_path, out);
  if (train_cmd->parsed()) return cmd_train(train_flags.resolve(), out_path, out);
  if (eval_cmd->parsed()) return cmd_eval(eval_flags.resolve(), checkpoint, checkpoint2, out_path, out);
  if (decompose->parsed()) return cmd_decompose(decompose_flags.resolve(), checkpoint, input, out_path, out);
  if (metrics->parsed()) return cmd_metrics(metrics_flags.resolve(), pred_dir, gt_dir, out_path, out);
  if (baselines->parsed()) return cmd_baselines(baseline_flags.resolve(), out_path, out);
  if (dump->parsed()) {
    dump_config(out, dump_flags.resolve());
    return kOk;
  }
  err << app.help();
  return kUsage;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    return dispatch(args, out, err);
  } catch (const ConfigError& e) {
    err << "darn: configuration error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericError& e) {
    err << "darn: numeric abort: " << e.what() << "\n";
    return kNumericAbort;
  } catch (const fs::filesystem_error& e) {
    err << "darn: data error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::exception& e) {
    err << "darn: data error: " << e.what() << "\n";
    return kDataError;
  }
}

int run(int argc, char** argv) { return run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr); }

}  // namespace darn::cli
