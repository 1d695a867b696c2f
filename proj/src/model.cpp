#include "darn/model.hpp"

#include <cmath>
#include <random>

#include "darn/errors.hpp"

namespace darn {

namespace {

Tensor he_normal(Shape shape, std::size_t fan_in, double gain, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(gain / static_cast<double>(fan_in)));
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = dist(rng);
  return Tensor::from(std::move(shape), std::move(v), true);
}

ConvLayer make_conv(std::size_t in, std::size_t out, std::mt19937_64& rng, double gain = 2.0) {
  return {he_normal({out, in, 3, 3}, in * 9, gain, rng), Tensor::zeros({out}, true)};
}

NormLayer make_norm(std::size_t channels) {
  return {Tensor::full({channels}, 1.0, true), Tensor::zeros({channels}, true), ops::BatchNormStats::fresh(channels)};
}

Tensor conv_same(const Tensor& x, const ConvLayer& layer) { return ops::conv2d(x, layer.kernel, layer.bias, 1); }

Tensor norm(const Tensor& x, NormLayer& layer, const ForwardOptions& options) {
  ops::BatchNormOptions bn;
  bn.update_running = options.update_running_stats;
  return ops::batch_norm(x, layer.gamma, layer.beta, options.mode, layer.stats, bn);
}

constexpr double kProjectGain = 1e-2;

std::size_t pooled_extent(std::size_t n, std::size_t stages) {
  for (std::size_t i = 0; i < stages; ++i) n = (n + 1) / 2;
  return n;
}

}  // namespace

std::string to_string(Target target) { return target == Target::shading ? "shading" : "albedo"; }

Target parse_target(const std::string& text) {
  if (text == "shading") return Target::shading;
  if (text == "albedo") return Target::albedo;
  throw ConfigError("target must be 'shading' or 'albedo', got '" + text + "'");
}

Image recompose(const DecompositionPair& pair) { return multiply(pair.albedo, pair.shading); }

Tensor positivity_map(const Tensor& raw) { return ops::softplus_shifted(raw, kPositivityFloor); }

Tensor residual_block(const Tensor& x, ResidualBlockParams& block, const ForwardOptions& options) {
  const std::size_t channels = block.conv1.kernel.dim(1);
  if (x.shape().size() != 4 || x.dim(1) != channels) {
    throw ShapeError("residual_block: expected " + std::to_string(channels) + " channels, got " +
                     shape_string(x.shape()));
  }
  Tensor h = ops::relu(norm(conv_same(x, block.conv1), block.norm1, options));
  h = norm(conv_same(h, block.conv2), block.norm2, options);
  return ops::relu(ops::add(h, x));
}

Generator::Generator(GeneratorConfig config, std::uint64_t seed) : config_(config) {
  if (config_.features == 0) throw ConfigError("generator needs at least one feature channel");
  std::mt19937_64 rng(seed);
  const std::size_t F = config_.features;
  lift_ = make_conv(Image::kChannels, F, rng);
  lift_norm_ = make_norm(F);
  for (std::size_t i = 0; i < config_.blocks; ++i) {
    ResidualBlockParams b;
    b.conv1 = make_conv(F, F, rng);
    b.norm1 = make_norm(F);
    b.conv2 = make_conv(F, F, rng);
    b.norm2 = make_norm(F);
    blocks_.push_back(std::move(b));
  }
  // Small output weights start the regressed component near softplus(0).
  project_ = make_conv(F, Image::kChannels, rng, kProjectGain);
}

Generator::Output Generator::forward(const Tensor& image, const ForwardOptions& options) {
  if (image.shape().size() != 4 || image.dim(1) != Image::kChannels) {
    throw ShapeError("generator expects [B,3,H,W], got " + shape_string(image.shape()));
  }
  if (image.dim(2) < 3 || image.dim(3) < 3) throw ShapeError("generator needs images of at least 3x3");
  for (double v : image.values()) {
    if (!std::isfinite(v)) throw NumericError("generator input contains non-finite values");
  }
  Tensor h = ops::relu(norm(conv_same(image, lift_), lift_norm_, options));
  for (auto& block : blocks_) h = residual_block(h, block, options);
  const Tensor regressed = positivity_map(conv_same(h, project_));
  const Tensor divided = ops::div(image, regressed, kPositivityFloor);
  if (config_.target == Target::shading) return {divided, regressed};
  return {regressed, divided};
}

DecompositionPair Generator::decompose(const Image& image, ops::NormMode mode) {
  NoGradGuard guard;
  const Output out = forward(to_tensor(image), {mode, false});
  return {to_images(out.albedo).front(), to_images(out.shading).front()};
}

std::vector<NamedTensor> Generator::parameters() const {
  std::vector<NamedTensor> out;
  auto conv = [&](const std::string& name, const ConvLayer& l) {
    out.push_back({name + ".kernel", l.kernel});
    out.push_back({name + ".bias", l.bias});
  };
  auto bn = [&](const std::string& name, const NormLayer& l) {
    out.push_back({name + ".gamma", l.gamma});
    out.push_back({name + ".beta", l.beta});
  };
  conv("lift", lift_);
  bn("lift_norm", lift_norm_);
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const std::string p = "block" + std::to_string(i);
    conv(p + ".conv1", blocks_[i].conv1);
    bn(p + ".norm1", blocks_[i].norm1);
    conv(p + ".conv2", blocks_[i].conv2);
    bn(p + ".norm2", blocks_[i].norm2);
  }
  conv("project", project_);
  return out;
}

std::vector<ops::BatchNormStats*> Generator::norm_stats() {
  std::vector<ops::BatchNormStats*> out{&lift_norm_.stats};
  for (auto& b : blocks_) {
    out.push_back(&b.norm1.stats);
    out.push_back(&b.norm2.stats);
  }
  return out;
}

std::vector<std::string> Generator::norm_names() const {
  std::vector<std::string> out{"lift_norm"};
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    out.push_back("block" + std::to_string(i) + ".norm1");
    out.push_back("block" + std::to_string(i) + ".norm2");
  }
  return out;
}

bool Generator::running_stats_initialized() const { return lift_norm_.stats.initialized; }

void Generator::set_running_stats_initialized(bool on) {
  for (auto* s : norm_stats()) s->initialized = on;
}

Discriminator::Discriminator(DiscriminatorConfig config, std::uint64_t seed) : config_(std::move(config)) {
  if (config_.channels.empty()) throw ConfigError("discriminator needs at least one conv stage");
  if (pooled_extent(config_.patch, config_.channels.size() - 1) < 2) {
    throw ConfigError("discriminator patch " + std::to_string(config_.patch) + " too small for " +
                      std::to_string(config_.channels.size()) + " pooling stages");
  }
  std::mt19937_64 rng(seed);
  std::size_t in = Image::kChannels;
  for (std::size_t c : config_.channels) {
    stages_.push_back(make_conv(in, c, rng));
    in = c;
  }
  const std::size_t side = pooled_extent(config_.patch, config_.channels.size());
  const std::size_t flat = in * side * side;
  hidden_ = {he_normal({flat, config_.hidden}, flat, 2.0, rng), Tensor::zeros({config_.hidden}, true)};
  output_ = {he_normal({config_.hidden, 1}, config_.hidden, 1.0, rng), Tensor::zeros({1}, true)};
}

Tensor Discriminator::forward(const Tensor& patches) const {
  if (patches.shape().size() != 4 || patches.dim(1) != Image::kChannels || patches.dim(2) != config_.patch ||
      patches.dim(3) != config_.patch) {
    throw ShapeError("discriminator expects [B,3," + std::to_string(config_.patch) + "," +
                     std::to_string(config_.patch) + "] patches, got " + shape_string(patches.shape()));
  }
  Tensor h = patches;
  for (const auto& stage : stages_) h = ops::max_pool2x2(ops::relu(conv_same(h, stage)));
  h = ops::relu(ops::affine(ops::flatten(h), hidden_.weight, hidden_.bias));
  return ops::sigmoid(ops::affine(h, output_.weight, output_.bias));
}

double Discriminator::probability(const Image& patch) const {
  NoGradGuard guard;
  return forward(to_tensor(patch)).item();
}

Discriminator Discriminator::frozen() const {
  Discriminator copy;
  copy.config_ = config_;
  for (const auto& s : stages_) copy.stages_.push_back({s.kernel.detach(), s.bias.detach()});
  copy.hidden_ = {hidden_.weight.detach(), hidden_.bias.detach()};
  copy.output_ = {output_.weight.detach(), output_.bias.detach()};
  return copy;
}

std::vector<NamedTensor> Discriminator::parameters() const {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    out.push_back({"conv" + std::to_string(i) + ".kernel", stages_[i].kernel});
    out.push_back({"conv" + std::to_string(i) + ".bias", stages_[i].bias});
  }
  out.push_back({"hidden.weight", hidden_.weight});
  out.push_back({"hidden.bias", hidden_.bias});
  out.push_back({"output.weight", output_.weight});
  out.push_back({"output.bias", output_.bias});
  return out;
}

}  // namespace darn
