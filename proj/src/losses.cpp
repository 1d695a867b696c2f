#include "darn/losses.hpp"

#include "darn/errors.hpp"
#include "darn/ops.hpp"

namespace darn {

namespace {

void require_shapes(const Tensor& a, const Tensor& b, const Tensor& c, const Tensor& d, const char* what) {
  if (a.shape() != c.shape() || b.shape() != d.shape()) throw ShapeError(std::string(what) + ": prediction/ground-truth shape mismatch");
}

int count_clamps(const Tensor& p, double floor) {
  int n = 0;
  for (double v : p.values()) n += v <= floor ? 1 : 0;
  return n;
}

Tensor batch_mean_neg_log(const Tensor& p) { return ops::scale(ops::mean(ops::clamped_log(p, kProbabilityFloor)), -1.0); }

}  // namespace

Tensor data_loss(const Tensor& albedo, const Tensor& shading, const Tensor& albedo_gt, const Tensor& shading_gt) {
  require_shapes(albedo, shading, albedo_gt, shading_gt, "data_loss");
  return ops::add(ops::mean(ops::square(ops::sub(albedo, albedo_gt))),
                  ops::mean(ops::square(ops::sub(shading, shading_gt))));
}

std::pair<Image, Image> image_gradient(const Image& image) {
  const Tensor t = to_tensor(image);
  return {to_images(ops::forward_diff(t, 3)).front(), to_images(ops::forward_diff(t, 2)).front()};
}

Tensor gradient_loss(const Tensor& albedo, const Tensor& shading, const Tensor& albedo_gt, const Tensor& shading_gt) {
  require_shapes(albedo, shading, albedo_gt, shading_gt, "gradient_loss");
  Tensor total;
  bool first = true;
  for (std::size_t axis : {std::size_t{3}, std::size_t{2}}) {
    Tensor term = data_loss(ops::forward_diff(albedo, axis), ops::forward_diff(shading, axis),
                            ops::forward_diff(albedo_gt, axis), ops::forward_diff(shading_gt, axis));
    total = first ? term : ops::add(total, term);
    first = false;
  }
  return total;
}

ClampedLoss adversarial_loss(const Tensor& prob_albedo, const Tensor& prob_shading) {
  return {ops::add(batch_mean_neg_log(prob_albedo), batch_mean_neg_log(prob_shading)),
          count_clamps(prob_albedo, kProbabilityFloor) + count_clamps(prob_shading, kProbabilityFloor)};
}

ClampedLoss adversarial_loss(const Tensor& albedo, const Tensor& shading, const Discriminator& disc_albedo,
                             const Discriminator& disc_shading) {
  return adversarial_loss(disc_albedo.forward(albedo), disc_shading.forward(shading));
}

ClampedLoss discriminator_loss(const Tensor& prob_real, const Tensor& prob_fake) {
  const Tensor not_fake = ops::add_scalar(ops::scale(prob_fake, -1.0), 1.0);
  return {ops::add(batch_mean_neg_log(prob_real), batch_mean_neg_log(not_fake)),
          count_clamps(prob_real, kProbabilityFloor) + count_clamps(not_fake, kProbabilityFloor)};
}

ClampedLoss discriminator_loss(const Tensor& ground_truth, const Tensor& generated, const Discriminator& disc) {
  if (generated.requires_grad() && !generated.node()->is_leaf()) {
    throw Error("discriminator_loss: generated batch must be detached from the generator graph");
  }
  return discriminator_loss(disc.forward(ground_truth), disc.forward(generated));
}

LossBreakdown total_loss(const Tensor& data, const Tensor& grad, const ClampedLoss& adv, double lambda) {
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
  LossBreakdown b;
  b.data = data;
  b.grad = grad;
  b.adv = adv.value;
  b.lambda = lambda;
  b.clamp_events = adv.clamp_events;
  b.total = ops::add(data, grad);
  if (lambda != 0.0) b.total = ops::add(b.total, ops::scale(adv.value, lambda));
  return b;
}

}  // namespace darn
