#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "darn/image.hpp"
#include "darn/ops.hpp"
#include "darn/tensor.hpp"

namespace darn {

// Lower bound of the positivity map, and therefore of the divided component.
inline constexpr double kPositivityFloor = 1e-3;

enum class Target { shading, albedo };

std::string to_string(Target target);
Target parse_target(const std::string& text);

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct GeneratorConfig {
  std::size_t features = 64;
  std::size_t blocks = 10;
  Target target = Target::shading;
};

struct DiscriminatorConfig {
  std::size_t patch = 16;
  std::vector<std::size_t> channels{16, 32, 64};
  std::size_t hidden = 64;
};

struct ConvLayer {
  Tensor kernel;  // [Cout, Cin, 3, 3]
  Tensor bias;    // [Cout]
};

struct NormLayer {
  Tensor gamma;
  Tensor beta;
  ops::BatchNormStats stats;
};

struct ResidualBlockParams {
  ConvLayer conv1;
  NormLayer norm1;
  ConvLayer conv2;
  NormLayer norm2;
};

struct AffineLayer {
  Tensor weight;  // [D, K]
  Tensor bias;    // [K]
};

// Albedo and shading of one image. The component that is not regressed is
// obtained by division, so albedo * shading reproduces the input.
struct DecompositionPair {
  Image albedo;
  Image shading;
};

Image recompose(const DecompositionPair& pair);

struct ForwardOptions {
  ops::NormMode mode = ops::NormMode::train;
  bool update_running_stats = true;
};

// softplus(raw) + kPositivityFloor
Tensor positivity_map(const Tensor& raw);

// relu(bn2(conv2(relu(bn1(conv1(x))))) + x)
Tensor residual_block(const Tensor& x, ResidualBlockParams& block, const ForwardOptions& options);

// Fully convolutional residual generator with a division head.
class Generator {
 public:
  Generator(GeneratorConfig config, std::uint64_t seed);

  struct Output {
    Tensor albedo;  // [B,3,H,W]
    Tensor shading;
  };

  // `image` is [B,3,H,W]. Throws NumericError on non-finite input.
  Output forward(const Tensor& image, const ForwardOptions& options = {});
  DecompositionPair decompose(const Image& image, ops::NormMode mode = ops::NormMode::eval);

  const GeneratorConfig& config() const { return config_; }
  std::vector<NamedTensor> parameters() const;
  // Running batch-norm statistics, exported as [mean, var] named arrays.
  std::vector<ops::BatchNormStats*> norm_stats();
  std::vector<std::string> norm_names() const;

  bool running_stats_initialized() const;
  void set_running_stats_initialized(bool on);

  std::vector<ResidualBlockParams>& blocks() { return blocks_; }

 private:
  GeneratorConfig config_;
  ConvLayer lift_;
  NormLayer lift_norm_;
  std::vector<ResidualBlockParams> blocks_;
  ConvLayer project_;
};

// Patch classifier: conv+relu+maxpool stages, then two affine layers and a
// sigmoid. Outputs the probability that a patch is ground truth.
class Discriminator {
 public:
  Discriminator(DiscriminatorConfig config, std::uint64_t seed);

  // [B,3,P,P] -> [B,1] probabilities. Throws ShapeError on wrong patch size.
  Tensor forward(const Tensor& patches) const;
  double probability(const Image& patch) const;

  // Same weights as constants: gradients reach the patch but not the weights.
  Discriminator frozen() const;

  const DiscriminatorConfig& config() const { return config_; }
  std::vector<NamedTensor> parameters() const;

 private:
  Discriminator() = default;

  DiscriminatorConfig config_;
  std::vector<ConvLayer> stages_;
  AffineLayer hidden_;
  AffineLayer output_;
};

}  // namespace darn
