#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "darn/checkpoint.hpp"
#include "darn/data.hpp"
#include "darn/model.hpp"
#include "darn/report.hpp"

namespace darn {

struct TrainConfig {
  std::size_t iterations = 2000;  // generator updates, warmup included
  std::size_t batch_size = 5;
  std::size_t warmup_iters = 400;
  std::size_t disc_per_gen = 3;
  double lambda = 1e-4;
  double lr_start = 1e-4;
  double lr_end = 1e-6;
  std::uint64_t seed = 0;
  GeneratorConfig generator{16, 4, Target::shading};
  DiscriminatorConfig discriminator{};  // patch must equal augment.crop
  AugmentConfig augment{};
  double checkpoint_fraction = 0.1;

  // Throws ConfigError naming the first violated constraint.
  void validate() const;
};

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct OptState {
  AdamHyper hyper;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t step = 0;

  static OptState for_params(const std::vector<NamedTensor>& params, AdamHyper hyper = {});
};

// One bias-corrected ADAM update using the gradients stored on `params`.
// Throws NumericError naming the first parameter with a non-finite gradient.
void adam_step(const std::vector<NamedTensor>& params, OptState& state, double lr);

// Log-linear interpolation from lr_start at iteration 0 to lr_end at the
// last iteration.
double lr_schedule(std::size_t iteration, const TrainConfig& config);

enum class Phase { generator_only, discriminator_update, generator_update };
std::string to_string(Phase phase);

// Phase of scheduler tick `tick`: warmup ticks are generator_only, then the
// cycle repeats disc_per_gen discriminator ticks followed by one generator tick.
Phase gan_schedule(std::size_t tick, const TrainConfig& config);

// Scheduler ticks needed to perform config.iterations generator updates.
std::size_t total_ticks(const TrainConfig& config);

struct LogRow {
  std::size_t tick = 0;
  std::size_t iteration = 0;  // generator iteration the tick belongs to
  double data = 0.0;
  double grad = 0.0;
  double adv = 0.0;
  double total = 0.0;
  double lr = 0.0;
  Phase phase = Phase::generator_only;
  double disc = 0.0;  // D_A + D_S classification loss on discriminator ticks
};

struct TrainOptions {
  std::filesystem::path out_dir;  // empty: no checkpoints or log written
  std::function<void(const std::string&)> progress;
  // Called after every tick; tests use it to observe parameter traffic.
  std::function<void(const LogRow&, ModelParams&)> observer;
};

struct TrainResult {
  ModelParams model;
  std::vector<LogRow> log;
  std::filesystem::path final_checkpoint;
};

// Warmup, then alternating discriminator/generator updates. Deterministic
// given config.seed. Throws NumericError on a non-finite loss; the last
// periodic checkpoint stays on disk.
TrainResult train(const TrainConfig& config, const std::vector<Sample>& dataset, const TrainOptions& options = {});

void write_training_log(const std::filesystem::path& path, const std::vector<LogRow>& log);

// Eval-mode decomposition of every sample, scored by the metric suite.
MetricsReport evaluate(ModelParams& model, const std::vector<Sample>& samples);

// Mean of the two reciprocal-fold reports.
MetricsReport evaluate_two_fold(ModelParams& model_a, const std::vector<Sample>& test_a, ModelParams& model_b,
                                const std::vector<Sample>& test_b);

}  // namespace darn
