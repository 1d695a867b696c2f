#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "darn/tensor.hpp"

namespace darn {

struct GradCheckOptions {
  double step = 1e-4;       // central-difference half width
  double tolerance = 1e-4;  // max relative error allowed
  double abs_floor = 1e-6;  // denominator floor of the relative error
  int max_resamples = 20;
  double resample_noise = 1e-2;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  bool pass = false;
  int resamples = 0;
  std::size_t coordinates = 0;
};

// Scalar-valued function of the given inputs.
using ScalarFn = std::function<Tensor(const std::vector<Tensor>&)>;

// Compares the analytic gradient of `fn` with central finite differences on
// every coordinate of every input that requires grad. When a coordinate looks
// like a kink (one-sided slopes disagree), all inputs are jittered and the
// whole check restarts; the number of restarts is reported. The denominator
// of the relative error is floored by abs_floor and by the rounding
// resolution of the difference quotient at the current loss value.
GradCheckReport finite_diff_check(const ScalarFn& fn, std::vector<Tensor> inputs, const GradCheckOptions& options = {});

// Reduces a non-scalar output to a scalar with fixed random weights so that
// every output coordinate contributes a distinct adjoint.
Tensor random_projection(const Tensor& output, std::uint64_t seed);

}  // namespace darn
