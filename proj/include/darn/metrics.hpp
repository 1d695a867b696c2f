#pragma once

#include <cstddef>
#include <vector>

#include "darn/image.hpp"

// Error measures between a ground-truth component and its prediction. Squared
// norms run over all pixels and channels; N is the pixel count.
namespace darn::metrics {

// argmin_a ||gt - a * pred||^2 in closed form. Throws NumericError when the
// prediction is identically zero.
double optimal_scale(const Image& gt, const Image& pred);

double si_mse(const Image& gt, const Image& pred);
double mse(const Image& gt, const Image& pred);

struct Window {
  std::size_t y = 0;
  std::size_t x = 0;
  std::size_t side = 0;

  friend bool operator==(const Window&, const Window&) = default;
};

// Square windows of side round(ratio * max(H, W)) (at least 1, at most
// min(H, W)) on a grid of stride max(1, side / 2). A last row/column shifted
// flush with the border is appended when the grid leaves pixels uncovered.
std::vector<Window> patch_grid(std::size_t height, std::size_t width, double ratio = 0.1, double overlap = 0.5);

// Mean over patch_grid windows of the per-window si-MSE. A window whose
// prediction is zero contributes ||gt||^2 / N_window.
double si_lmse(const Image& gt, const Image& pred);

struct SsimOptions {
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

// Mean SSIM over valid window positions and channels. An axis shorter than
// the window uses one truncated window with renormalized weights.
double ssim(const Image& x, const Image& y, const SsimOptions& options = {});
double dssim(const Image& x, const Image& y, const SsimOptions& options = {});

struct RelativeScale {
  double alpha = 1.0;
  double objective = 0.0;  // ||A - a A_hat||^2 + ||S - S_hat / a||^2
  bool at_bracket_edge = false;
};

inline constexpr double kScaleBracketMin = 1e-3;
inline constexpr double kScaleBracketMax = 1e3;

// Joint scale a > 0 minimizing ||A - a A_hat||^2 + ||S - S_hat / a||^2.
// Golden-section search over log a in [1e-3, 1e3] around the best point of a
// coarse scan, then Newton polish on the stationarity quartic.
RelativeScale solve_relative_scale(const Image& albedo_gt, const Image& albedo, const Image& shading_gt,
                                   const Image& shading);

// Objective at the solved scale divided by 2N.
double rs_mse(const Image& albedo_gt, const Image& albedo, const Image& shading_gt, const Image& shading);

}  // namespace darn::metrics
