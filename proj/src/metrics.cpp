#include "darn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "darn/errors.hpp"

namespace darn::metrics {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// ||gt - a * pred||^2 summed over a window, using the optimal a (or a = 0
// for an all-zero prediction).
double window_si_error(const Image& gt, const Image& pred, const Window& w) {
  double gp = 0.0, pp = 0.0, gg = 0.0;
  for (std::size_t y = w.y; y < w.y + w.side; ++y) {
    for (std::size_t x = w.x; x < w.x + w.side; ++x) {
      for (std::size_t c = 0; c < Image::kChannels; ++c) {
        const double g = gt.at(y, x, c), p = pred.at(y, x, c);
        gp += g * p;
        pp += p * p;
        gg += g * g;
      }
    }
  }
  const double alpha = pp > 0.0 ? gp / pp : 0.0;
  double err = 0.0;
  for (std::size_t y = w.y; y < w.y + w.side; ++y) {
    for (std::size_t x = w.x; x < w.x + w.side; ++x) {
      for (std::size_t c = 0; c < Image::kChannels; ++c) {
        const double d = gt.at(y, x, c) - alpha * pred.at(y, x, c);
        err += d * d;
      }
    }
  }
  return pp > 0.0 ? err : gg;
}

std::vector<std::size_t> grid_positions(std::size_t extent, std::size_t side, std::size_t stride) {
  std::vector<std::size_t> pos;
  for (std::size_t p = 0; p + side <= extent; p += stride) pos.push_back(p);
  if (pos.back() + side < extent) pos.push_back(extent - side);
  return pos;
}

// Normalized Gaussian taps for a window of `length` samples.
std::vector<double> gaussian_taps(std::size_t length, double sigma) {
  std::vector<double> w(length);
  const double center = (static_cast<double>(length) - 1.0) / 2.0;
  double total = 0.0;
  for (std::size_t i = 0; i < length; ++i) {
    const double d = static_cast<double>(i) - center;
    w[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    total += w[i];
  }
  for (double& v : w) v /= total;
  return w;
}

// Separable correlation of one plane with `taps`, keeping only positions where
// the window fits ("valid").
std::vector<double> filter_valid(const std::vector<double>& plane, std::size_t H, std::size_t W,
                                 const std::vector<double>& ty, const std::vector<double>& tx) {
  const std::size_t Ho = H - ty.size() + 1, Wo = W - tx.size() + 1;
  std::vector<double> rows(H * Wo, 0.0);
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < Wo; ++x) {
      double s = 0.0;
      for (std::size_t k = 0; k < tx.size(); ++k) s += tx[k] * plane[y * W + x + k];
      rows[y * Wo + x] = s;
    }
  }
  std::vector<double> out(Ho * Wo, 0.0);
  for (std::size_t y = 0; y < Ho; ++y) {
    for (std::size_t x = 0; x < Wo; ++x) {
      double s = 0.0;
      for (std::size_t k = 0; k < ty.size(); ++k) s += ty[k] * rows[(y + k) * Wo + x];
      out[y * Wo + x] = s;
    }
  }
  return out;
}

struct ScaleSums {
  double aa, ag, sg, ss, gA, gS;

  double objective(double alpha) const {
    return gA - 2.0 * alpha * ag + alpha * alpha * aa + gS - 2.0 * sg / alpha + ss / (alpha * alpha);
  }
};

double exact_objective(const Image& a_gt, const Image& a, const Image& s_gt, const Image& s, double alpha) {
  double f = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a_gt.data()[i] - alpha * a.data()[i];
    f += d * d;
  }
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double d = s_gt.data()[i] - s.data()[i] / alpha;
    f += d * d;
  }
  return f;
}

}  // namespace

double optimal_scale(const Image& gt, const Image& pred) {
  require_same_dims(gt, pred, "optimal_scale");
  const double pp = dot(pred.data(), pred.data());
  if (pp == 0.0) throw NumericError("optimal_scale: prediction is identically zero");
  return dot(gt.data(), pred.data()) / pp;
}

double si_mse(const Image& gt, const Image& pred) {
  const double alpha = optimal_scale(gt, pred);
  double err = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const double d = gt.data()[i] - alpha * pred.data()[i];
    err += d * d;
  }
  return err / static_cast<double>(gt.pixels());
}

double mse(const Image& gt, const Image& pred) {
  require_same_dims(gt, pred, "mse");
  double err = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const double d = gt.data()[i] - pred.data()[i];
    err += d * d;
  }
  return err / static_cast<double>(gt.pixels());
}

std::vector<Window> patch_grid(std::size_t height, std::size_t width, double ratio, double overlap) {
  if (height == 0 || width == 0) throw ShapeError("patch_grid: empty image");
  std::size_t side = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(std::max(height, width))));
  side = std::clamp<std::size_t>(side, 1, std::min(height, width));
  const std::size_t stride =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(static_cast<double>(side) * (1.0 - overlap))));
  std::vector<Window> out;
  for (std::size_t y : grid_positions(height, side, stride)) {
    for (std::size_t x : grid_positions(width, side, stride)) out.push_back({y, x, side});
  }
  return out;
}

double si_lmse(const Image& gt, const Image& pred) {
  require_same_dims(gt, pred, "si_lmse");
  const auto windows = patch_grid(gt.height(), gt.width());
  double total = 0.0;
  for (const auto& w : windows) total += window_si_error(gt, pred, w) / static_cast<double>(w.side * w.side);
  return total / static_cast<double>(windows.size());
}

double ssim(const Image& x, const Image& y, const SsimOptions& opt) {
  require_same_dims(x, y, "ssim");
  const std::size_t H = x.height(), W = x.width();
  if (H == 0 || W == 0) throw ShapeError("ssim: empty image");
  const auto ty = gaussian_taps(std::min(opt.window, H), opt.sigma);
  const auto tx = gaussian_taps(std::min(opt.window, W), opt.sigma);
  const double c1 = std::pow(opt.k1 * opt.dynamic_range, 2);
  const double c2 = std::pow(opt.k2 * opt.dynamic_range, 2);

  double total = 0.0;
  std::size_t count = 0;
  std::vector<double> px(H * W), py(H * W), pxx(H * W), pyy(H * W), pxy(H * W);
  for (std::size_t c = 0; c < Image::kChannels; ++c) {
    for (std::size_t i = 0; i < H * W; ++i) {
      const double a = x.data()[i * Image::kChannels + c];
      const double b = y.data()[i * Image::kChannels + c];
      px[i] = a;
      py[i] = b;
      pxx[i] = a * a;
      pyy[i] = b * b;
      pxy[i] = a * b;
    }
    const auto mx = filter_valid(px, H, W, ty, tx);
    const auto my = filter_valid(py, H, W, ty, tx);
    const auto mxx = filter_valid(pxx, H, W, ty, tx);
    const auto myy = filter_valid(pyy, H, W, ty, tx);
    const auto mxy = filter_valid(pxy, H, W, ty, tx);
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double vx = mxx[i] - mx[i] * mx[i];
      const double vy = myy[i] - my[i] * my[i];
      const double cxy = mxy[i] - mx[i] * my[i];
      total += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cxy + c2)) /
               ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

double dssim(const Image& x, const Image& y, const SsimOptions& options) {
  return (1.0 - ssim(x, y, options)) / 2.0;
}

RelativeScale solve_relative_scale(const Image& albedo_gt, const Image& albedo, const Image& shading_gt,
                                   const Image& shading) {
  require_same_dims(albedo_gt, albedo, "solve_relative_scale");
  require_same_dims(shading_gt, shading, "solve_relative_scale");
  const ScaleSums s{dot(albedo.data(), albedo.data()),       dot(albedo_gt.data(), albedo.data()),
                    dot(shading_gt.data(), shading.data()),  dot(shading.data(), shading.data()),
                    dot(albedo_gt.data(), albedo_gt.data()), dot(shading_gt.data(), shading_gt.data())};
  if (s.aa == 0.0 || s.ss == 0.0) throw NumericError("solve_relative_scale: prediction is identically zero");

  const double lo = std::log(kScaleBracketMin), hi = std::log(kScaleBracketMax);
  auto f = [&](double u) { return s.objective(std::exp(u)); };

  constexpr int kScan = 401;
  const double du = (hi - lo) / (kScan - 1);
  int best = 0;
  double best_f = std::numeric_limits<double>::infinity();
  for (int i = 0; i < kScan; ++i) {
    const double v = f(lo + du * i);
    if (v < best_f) {
      best_f = v;
      best = i;
    }
  }
  double a = lo + du * std::max(best - 1, 0);
  double b = lo + du * std::min(best + 1, kScan - 1);

  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > 1e-10) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  std::vector<double> candidates{std::exp((a + b) / 2.0), kScaleBracketMin, kScaleBracketMax};

  // Newton on aa a^4 - ag a^3 + sg a - ss = 0.
  double alpha = candidates.front();
  bool newton_ok = true;
  for (int it = 0; it < 50; ++it) {
    const double p = ((s.aa * alpha - s.ag) * alpha * alpha) * alpha + s.sg * alpha - s.ss;
    const double dp = (4.0 * s.aa * alpha - 3.0 * s.ag) * alpha * alpha + s.sg;
    if (dp == 0.0) {
      newton_ok = false;
      break;
    }
    const double next = alpha - p / dp;
    if (!std::isfinite(next) || next < kScaleBracketMin || next > kScaleBracketMax) {
      newton_ok = false;
      break;
    }
    const bool converged = std::abs(next - alpha) <= 1e-15 * alpha;
    alpha = next;
    if (converged) break;
  }
  if (newton_ok) candidates.push_back(alpha);

  RelativeScale result;
  result.objective = std::numeric_limits<double>::infinity();
  for (double cand : candidates) {
    const double obj = exact_objective(albedo_gt, albedo, shading_gt, shading, cand);
    if (obj < result.objective) {
      result.objective = obj;
      result.alpha = cand;
    }
  }
  result.at_bracket_edge = result.alpha <= kScaleBracketMin * (1.0 + 1e-9) || result.alpha >= kScaleBracketMax * (1.0 - 1e-9);
  return result;
}

double rs_mse(const Image& albedo_gt, const Image& albedo, const Image& shading_gt, const Image& shading) {
  const RelativeScale r = solve_relative_scale(albedo_gt, albedo, shading_gt, shading);
  return r.objective / (2.0 * static_cast<double>(albedo_gt.pixels()));
}

}  // namespace darn::metrics
