#include "darn/training.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <tuple>

#include "darn/errors.hpp"
#include "darn/losses.hpp"

namespace darn {

namespace fs = std::filesystem;

namespace {

// Streams augmented batches. Sample order is epoch_order(seed, epoch); the
// augmentation seed of the k-th drawn sample is derived from (seed, k).
class BatchStream {
 public:
  BatchStream(const std::vector<Sample>& dataset, const TrainConfig& config)
      : dataset_(dataset), config_(config), order_(epoch_order(dataset.size(), order_seed(), 0)) {}

  struct Batch {
    Tensor image;
    Tensor albedo;
    Tensor shading;
  };

  Batch next() {
    std::vector<Image> img, alb, sh;
    for (std::size_t b = 0; b < config_.batch_size; ++b) {
      if (cursor_ == order_.size()) {
        ++epoch_;
        order_ = epoch_order(dataset_.size(), order_seed(), epoch_);
        cursor_ = 0;
      }
      const Sample s = augment(dataset_[order_[cursor_++]], derive_seed(config_.seed, 1000 + drawn_++), config_.augment);
      img.push_back(s.image);
      alb.push_back(s.albedo);
      sh.push_back(s.shading);
    }
    return {to_tensor(img), to_tensor(alb), to_tensor(sh)};
  }

 private:
  std::uint64_t order_seed() const { return derive_seed(config_.seed, 7); }

  const std::vector<Sample>& dataset_;
  const TrainConfig& config_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::uint64_t epoch_ = 0;
  std::uint64_t drawn_ = 0;
};

void zero_grads(const std::vector<NamedTensor>& params) {
  for (const auto& p : params) {
    Tensor t = p.tensor;
    t.zero_grad();
  }
}

bool finite(double v) { return std::isfinite(v); }

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (iterations == 0) fail("train.iterations must be positive");
  if (batch_size == 0) fail("train.batch_size must be positive");
  if (disc_per_gen == 0) fail("train.disc_per_gen must be positive");
  if (!(lambda >= 0.0)) fail("train.lambda must be non-negative");
  if (!(lr_start > 0.0) || !(lr_end > 0.0)) fail("learning rates must be positive");
  if (lr_end > lr_start) fail("train.lr_end must not exceed train.lr_start");
  if (generator.features == 0) fail("model.features must be positive");
  if (augment.crop != discriminator.patch) fail("discriminator patch must equal the training crop size");
  if (augment.crop < 3) fail("train.crop_size must be at least 3");
  if (!(augment.scale_min > 0.0) || augment.scale_max < augment.scale_min) fail("augment scale range is invalid");
  if (!(checkpoint_fraction > 0.0)) fail("checkpoint fraction must be positive");
}

OptState OptState::for_params(const std::vector<NamedTensor>& params, AdamHyper hyper) {
  OptState s;
  s.hyper = hyper;
  for (const auto& p : params) {
    s.m.emplace_back(p.tensor.numel(), 0.0);
    s.v.emplace_back(p.tensor.numel(), 0.0);
  }
  return s;
}

void adam_step(const std::vector<NamedTensor>& params, OptState& state, double lr) {
  if (state.m.size() != params.size()) throw ShapeError("adam_step: optimizer state does not match parameter list");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.m[i].size() != params[i].tensor.numel()) throw ShapeError("adam_step: moment shape mismatch for " + params[i].name);
    for (double g : params[i].tensor.grad_view()) {
      if (!finite(g)) throw NumericError("non-finite gradient in parameter '" + params[i].name + "'");
    }
  }
  ++state.step;
  const auto& h = state.hyper;
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor t = params[i].tensor;
    const auto grad = t.grad_view();
    auto values = t.mutable_values();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double g = grad.empty() ? 0.0 : grad[k];
      m[k] = h.beta1 * m[k] + (1.0 - h.beta1) * g;
      v[k] = h.beta2 * v[k] + (1.0 - h.beta2) * g * g;
      values[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + h.eps);
    }
  }
}

double lr_schedule(std::size_t iteration, const TrainConfig& config) {
  if (config.iterations <= 1) return config.lr_start;
  const double t = std::min(1.0, static_cast<double>(iteration) / static_cast<double>(config.iterations - 1));
  return config.lr_start * std::pow(config.lr_end / config.lr_start, t);
}

std::string to_string(Phase phase) {
  switch (phase) {
    case Phase::generator_only:
      return "generator_only";
    case Phase::discriminator_update:
      return "discriminator_update";
    case Phase::generator_update:
      return "generator_update";
  }
  return "?";
}

Phase gan_schedule(std::size_t tick, const TrainConfig& config) {
  if (tick < config.warmup_iters) return Phase::generator_only;
  const std::size_t k = (tick - config.warmup_iters) % (config.disc_per_gen + 1);
  return k < config.disc_per_gen ? Phase::discriminator_update : Phase::generator_update;
}

std::size_t total_ticks(const TrainConfig& config) {
  if (config.iterations <= config.warmup_iters) return config.iterations;
  return config.warmup_iters + (config.iterations - config.warmup_iters) * (config.disc_per_gen + 1);
}

TrainResult train(const TrainConfig& config, const std::vector<Sample>& dataset, const TrainOptions& options) {
  config.validate();
  if (dataset.empty()) throw DataError("training set is empty");

  TrainResult result{ModelParams::create(config.generator, config.discriminator, config.seed), {}, {}};
  ModelParams& model = result.model;
  const auto gen_params = model.generator.parameters();
  const auto da_params = model.disc_albedo.parameters();
  const auto ds_params = model.disc_shading.parameters();
  OptState gen_opt = OptState::for_params(gen_params);
  OptState da_opt = OptState::for_params(da_params);
  OptState ds_opt = OptState::for_params(ds_params);

  if (!options.out_dir.empty()) fs::create_directories(options.out_dir);
  const std::size_t ticks = total_ticks(config);
  const auto every = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(config.checkpoint_fraction * static_cast<double>(ticks))));
  fs::path last_good;
  double last_disc = 0.0;

  BatchStream stream(dataset, config);
  std::size_t gen_iteration = 0;
  for (std::size_t tick = 0; tick < ticks; ++tick) {
    const Phase phase = gan_schedule(tick, config);
    const double lr = lr_schedule(gen_iteration, config);
    const auto batch = stream.next();
    LogRow row;
    row.tick = tick;
    row.iteration = gen_iteration;
    row.lr = lr;
    row.phase = phase;

    if (phase == Phase::discriminator_update) {
      Tensor fake_albedo, fake_shading;
      {
        NoGradGuard guard;
        const auto out = model.generator.forward(batch.image, {ops::NormMode::train, false});
        fake_albedo = out.albedo;
        fake_shading = out.shading;
      }
      double disc = 0.0;
      for (auto [disc_net, params, opt, real, fake] :
           {std::tuple{&model.disc_albedo, &da_params, &da_opt, &batch.albedo, &fake_albedo},
            std::tuple{&model.disc_shading, &ds_params, &ds_opt, &batch.shading, &fake_shading}}) {
        zero_grads(*params);
        const auto loss = discriminator_loss(*real, *fake, *disc_net);
        if (!finite(loss.value.item())) {
          throw NumericError("non-finite discriminator loss at tick " + std::to_string(tick) +
                             (last_good.empty() ? std::string() : "; last good checkpoint: " + last_good.string()));
        }
        loss.value.backward();
        adam_step(*params, *opt, lr);
        disc += loss.value.item();
      }
      row.disc = disc;
      last_disc = disc;
      row.total = disc;
    } else {
      zero_grads(gen_params);
      const auto out = model.generator.forward(batch.image, {ops::NormMode::train, true});
      const Tensor data = data_loss(out.albedo, out.shading, batch.albedo, batch.shading);
      const Tensor grad = gradient_loss(out.albedo, out.shading, batch.albedo, batch.shading);
      ClampedLoss adv{Tensor::scalar(0.0), 0};
      double lambda = 0.0;
      if (phase == Phase::generator_update) {
        lambda = config.lambda;
        adv = adversarial_loss(out.albedo, out.shading, model.disc_albedo.frozen(), model.disc_shading.frozen());
      }
      const LossBreakdown loss = total_loss(data, grad, adv, lambda);
      row.data = data.item();
      row.grad = grad.item();
      row.adv = adv.value.item();
      row.total = loss.total.item();
      if (!finite(row.total)) {
        throw NumericError("non-finite generator loss at tick " + std::to_string(tick) +
                           (last_good.empty() ? std::string() : "; last good checkpoint: " + last_good.string()));
      }
      loss.total.backward();
      adam_step(gen_params, gen_opt, lr);
      ++gen_iteration;
    }
    result.log.push_back(row);
    if (options.observer) options.observer(row, model);
    if (options.progress && (tick + 1) % 100 == 0) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "tick %zu/%zu iter %zu %s data %.5f grad %.5f adv %.4f disc %.4f lr %.2e", tick + 1,
                    ticks, gen_iteration, to_string(phase).c_str(), row.data, row.grad, row.adv, last_disc, lr);
      options.progress(buf);
    }
    if (!options.out_dir.empty() && (tick + 1) % every == 0 && tick + 1 < ticks) {
      char name[48];
      std::snprintf(name, sizeof name, "checkpoint_%07zu.ckpt", tick + 1);
      last_good = options.out_dir / name;
      save_checkpoint(last_good, model);
    }
  }
  if (!options.out_dir.empty()) {
    result.final_checkpoint = options.out_dir / "model.ckpt";
    save_checkpoint(result.final_checkpoint, model);
    write_training_log(options.out_dir / "train_log.csv", result.log);
  }
  return result;
}

void write_training_log(const fs::path& path, const std::vector<LogRow>& log) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write training log " + path.string());
  out << "iteration,data,grad,adv,total,lr,phase,disc\n";
  char buf[256];
  for (const auto& r : log) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%s,%.17g\n", r.tick, r.data, r.grad, r.adv, r.total, r.lr,
                  to_string(r.phase).c_str(), r.disc);
    out << buf;
  }
}

MetricsReport evaluate(ModelParams& model, const std::vector<Sample>& samples) {
  MetricsReport report;
  for (const auto& s : samples) {
    const DecompositionPair pred = model.generator.decompose(s.image, ops::NormMode::eval);
    report.rows.push_back(evaluate_prediction(s.id, s.albedo, s.shading, pred.albedo, pred.shading));
  }
  finalize(report);
  return report;
}

MetricsReport evaluate_two_fold(ModelParams& model_a, const std::vector<Sample>& test_a, ModelParams& model_b,
                                const std::vector<Sample>& test_b) {
  return average_reports(evaluate(model_a, test_a), evaluate(model_b, test_b));
}

}  // namespace darn
