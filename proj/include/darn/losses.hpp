#pragma once

#include <utility>

#include "darn/image.hpp"
#include "darn/model.hpp"
#include "darn/tensor.hpp"

namespace darn {

// Floor applied to discriminator probabilities inside logarithms.
inline constexpr double kProbabilityFloor = 1e-7;

struct LossBreakdown {
  Tensor data;
  Tensor grad;
  Tensor adv;
  Tensor total;  // data + grad + lambda * adv
  double lambda = 0.0;
  int clamp_events = 0;
};

// mean((A_hat - A)^2) + mean((S_hat - S)^2)
Tensor data_loss(const Tensor& albedo, const Tensor& shading, const Tensor& albedo_gt, const Tensor& shading_gt);

// Forward differences along width (dx) and height (dy); the last column of
// dx and the last row of dy are zero.
std::pair<Image, Image> image_gradient(const Image& image);

// Data loss applied to the x and y forward differences of every component.
Tensor gradient_loss(const Tensor& albedo, const Tensor& shading, const Tensor& albedo_gt, const Tensor& shading_gt);

struct ClampedLoss {
  Tensor value;
  int clamp_events = 0;
};

// -log D_A(A_hat) - log D_S(S_hat), averaged over the batch. Pass frozen
// discriminators so gradients reach the generator only.
ClampedLoss adversarial_loss(const Tensor& albedo, const Tensor& shading, const Discriminator& disc_albedo,
                             const Discriminator& disc_shading);
// Same from precomputed probabilities [B,1].
ClampedLoss adversarial_loss(const Tensor& prob_albedo, const Tensor& prob_shading);

// -log D(C_gt) - log(1 - D(C_hat)), averaged over the batch. `generated`
// must already be detached from the generator graph.
ClampedLoss discriminator_loss(const Tensor& ground_truth, const Tensor& generated, const Discriminator& disc);
ClampedLoss discriminator_loss(const Tensor& prob_real, const Tensor& prob_fake);

// Requires lambda >= 0.
LossBreakdown total_loss(const Tensor& data, const Tensor& grad, const ClampedLoss& adv, double lambda);

}  // namespace darn
