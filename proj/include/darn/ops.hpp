#pragma once

#include <cstddef>

#include "darn/tensor.hpp"

// Differentiable operators over `Tensor`. 4-D activations are laid out as
// [batch, channels, height, width], row-major.
namespace darn::ops {

// Smallest denominator `div` accepts by default.
inline constexpr double kDivFloor = 1e-3;

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// Throws NumericError when any denominator is below `floor`.
Tensor div(const Tensor& a, const Tensor& b, double floor = kDivFloor);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);
Tensor square(const Tensor& a);
Tensor log(const Tensor& a);
// log(max(a, floor)); the gradient is zero where the clamp is active.
Tensor clamped_log(const Tensor& a, double floor);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
// softplus(a) + shift, strictly positive and at least `shift`.
Tensor softplus_shifted(const Tensor& a, double shift);

// Stride-1 convolution. input [B,Cin,H,W], kernel [Cout,Cin,kh,kw], bias [Cout].
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t padding);

enum class NormMode { train, eval };

// Running per-channel statistics of one batch-norm layer.
struct BatchNormStats {
  std::vector<double> mean;
  std::vector<double> var;
  bool initialized = false;

  static BatchNormStats fresh(std::size_t channels);
};

struct BatchNormOptions {
  double epsilon = 1e-5;
  double momentum = 0.9;  // weight of the previous running value
  bool update_running = true;
};

// Per-channel normalization over batch and spatial axes (train) or with the
// running statistics (eval). Eval mode on uninitialized stats throws.
Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta, NormMode mode,
                  BatchNormStats& stats, const BatchNormOptions& options = {});

// 2x2 window, stride 2. Odd extents are padded right/bottom by replication.
// Gradient goes to the first maximum in scan order.
Tensor max_pool2x2(const Tensor& input);

// [B,D] x [D,K] + [K]
Tensor affine(const Tensor& input, const Tensor& weight, const Tensor& bias);

Tensor reshape(const Tensor& input, Shape shape);
// [B, ...] -> [B, prod(...)]
Tensor flatten(const Tensor& input);

Tensor sum(const Tensor& input);
Tensor mean(const Tensor& input);

// Forward difference along width (axis = 3) or height (axis = 2) of a 4-D
// tensor; the last column/row of differences is zero.
Tensor forward_diff(const Tensor& input, std::size_t axis);

}  // namespace darn::ops
