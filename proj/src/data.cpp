#include "darn/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <set>

#include "darn/errors.hpp"

namespace darn {

namespace {

double quantize16(double v) { return std::nearbyint(std::clamp(v, 0.0, 1.0) * 65535.0) / 65535.0; }

std::string frame_id(const std::string& scene, int frame) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "_frame_%04d", frame);
  return scene + buf;
}

// Position of crop-frame point (px, py), relative to the transformed image
// center, in source pixel coordinates.
std::array<double, 2> to_source(const AugmentTransform& t, double cx, double cy, double px, double py) {
  if (t.mirror) px = -px;
  const double a = -t.angle_deg * std::numbers::pi / 180.0;
  const double ca = std::cos(a), sa = std::sin(a);
  return {cx + (ca * px - sa * py) / t.scale, cy + (sa * px + ca * py) / t.scale};
}

bool crop_fits(const AugmentTransform& t, std::size_t H, std::size_t W, std::size_t crop) {
  const double cx = (static_cast<double>(W) - 1.0) / 2.0, cy = (static_cast<double>(H) - 1.0) / 2.0;
  const double h = (static_cast<double>(crop) - 1.0) / 2.0;
  constexpr double tol = 1e-9;
  for (double sx : {-1.0, 1.0}) {
    for (double sy : {-1.0, 1.0}) {
      const auto [x, y] = to_source(t, cx, cy, t.offset_x + sx * h, t.offset_y + sy * h);
      if (x < -tol || y < -tol || x > W - 1.0 + tol || y > H - 1.0 + tol) return false;
    }
  }
  return true;
}

// Moves the crop center so that, without rotation and scaling, crop pixels
// land on source pixel centers.
double snap_offset(double offset, double center, double half) {
  return std::floor(center + offset - half + 0.5) - center + half;
}

double bilinear(const Image& img, double x, double y, std::size_t c) {
  const std::size_t W = img.width(), H = img.height();
  x = std::clamp(x, 0.0, static_cast<double>(W) - 1.0);
  y = std::clamp(y, 0.0, static_cast<double>(H) - 1.0);
  const std::size_t x0 = W > 1 ? std::min(static_cast<std::size_t>(x), W - 2) : 0;
  const std::size_t y0 = H > 1 ? std::min(static_cast<std::size_t>(y), H - 2) : 0;
  const double fx = W > 1 ? x - static_cast<double>(x0) : 0.0;
  const double fy = H > 1 ? y - static_cast<double>(y0) : 0.0;
  const std::size_t x1 = W > 1 ? x0 + 1 : 0, y1 = H > 1 ? y0 + 1 : 0;
  const double top = (1.0 - fx) * img.at(y0, x0, c) + fx * img.at(y0, x1, c);
  const double bottom = (1.0 - fx) * img.at(y1, x0, c) + fx * img.at(y1, x1, c);
  return (1.0 - fy) * top + fy * bottom;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Recomposition recompose(const Image& albedo, const Image& shading, double value_max) {
  require_same_dims(albedo, shading, "recompose");
  Recomposition r{Image(albedo.height(), albedo.width()), 0};
  for (std::size_t i = 0; i < albedo.size(); ++i) {
    const double a = albedo.data()[i], s = shading.data()[i];
    if (a < 0.0 || s < 0.0) throw DataError("recompose: negative albedo or shading value");
    double v = a * s;
    if (v > value_max) {
      v = value_max;
      ++r.clipped;
    }
    r.image.data()[i] = v;
  }
  return r;
}

Image synth_albedo(std::uint64_t seed, std::size_t H, std::size_t W, const SynthConfig& config) {
  if (H < 16 || W < 16) throw DataError("synthetic images must be at least 16x16");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> color(0.1, 0.9);
  Image a(H, W);
  std::array<double, 3> bg{color(rng), color(rng), color(rng)};
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      for (std::size_t c = 0; c < 3; ++c) a.at(y, x, c) = bg[c];
    }
  }
  for (std::size_t r = 0; r < config.n_rects; ++r) {
    std::uniform_int_distribution<std::size_t> x0d(0, W - 2), y0d(0, H - 2);
    const std::size_t x0 = x0d(rng), y0 = y0d(rng);
    std::uniform_int_distribution<std::size_t> wd(2, std::max<std::size_t>(2, W / 2)), hd(2, std::max<std::size_t>(2, H / 2));
    const std::size_t x1 = std::min(W, x0 + wd(rng)), y1 = std::min(H, y0 + hd(rng));
    std::array<double, 3> col{color(rng), color(rng), color(rng)};
    for (std::size_t y = y0; y < y1; ++y) {
      for (std::size_t x = x0; x < x1; ++x) {
        for (std::size_t c = 0; c < 3; ++c) a.at(y, x, c) = col[c];
      }
    }
  }
  return a;
}

Image synth_shading(std::uint64_t seed, std::size_t H, std::size_t W, const SynthConfig& config) {
  if (H < 16 || W < 16) throw DataError("synthetic images must be at least 16x16");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double M = static_cast<double>(std::max(H, W));
  std::vector<double> u(H * W, config.n_lobes == 0 ? 0.5 : 0.0);
  for (std::size_t l = 0; l < config.n_lobes; ++l) {
    const bool radial = unit(rng) < 0.6;
    const double cx = (-0.25 + 1.5 * unit(rng)) * static_cast<double>(W);
    const double cy = (-0.25 + 1.5 * unit(rng)) * static_cast<double>(H);
    const double sigma = config.min_lobe_width * (1.0 + unit(rng)) * M;
    const double phi = 2.0 * std::numbers::pi * unit(rng);
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t x = 0; x < W; ++x) {
        const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
        double v;
        if (radial) {
          v = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
        } else {
          v = std::clamp(0.5 + 0.5 * (std::cos(phi) * dx + std::sin(phi) * dy) / M, 0.0, 1.0);
        }
        u[y * W + x] += v / static_cast<double>(config.n_lobes);
      }
    }
  }
  std::array<double, 3> tint{1.0, 1.0, 1.0};
  if (config.shading_mode == ShadingMode::colored) {
    for (double& t : tint) t = 0.7 + 0.3 * unit(rng);
  }
  Image s(H, W);
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      for (std::size_t c = 0; c < 3; ++c) s.at(y, x, c) = 0.2 + 0.8 * u[y * W + x] * tint[c];
    }
  }
  return s;
}

double shading_slope_bound(std::size_t H, std::size_t W, const SynthConfig& config) {
  const double M = static_cast<double>(std::max(H, W));
  const double radial = 1.0 / (config.min_lobe_width * M * std::sqrt(std::numbers::e));
  const double linear = 0.5 / M;
  return 0.8 * std::max(radial, linear);
}

Sample synth_mondrian(std::uint64_t seed, std::size_t H, std::size_t W, const SynthConfig& config) {
  Sample s;
  s.id = frame_id("mondrian", 0);
  s.scene = "mondrian";
  s.albedo = synth_albedo(seed, H, W, config);
  s.shading = synth_shading(derive_seed(seed, 1), H, W, config);
  s.image = recompose(s.albedo, s.shading).image;
  return s;
}

std::vector<Sample> synth_dataset(std::uint64_t seed, std::size_t count, std::size_t size, const SynthConfig& config) {
  if (config.frames_per_scene == 0) throw ConfigError("frames_per_scene must be positive");
  std::vector<Sample> out;
  out.reserve(count);
  Image albedo;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t scene_index = i / config.frames_per_scene;
    const int frame = static_cast<int>(i % config.frames_per_scene);
    char scene[32];
    std::snprintf(scene, sizeof scene, "scene_%03zu", scene_index);
    if (frame == 0) {
      albedo = synth_albedo(derive_seed(seed, 2 * scene_index), size, size, config);
      for (double& v : albedo.data()) v = quantize16(v);
    }
    Sample s;
    s.scene = scene;
    s.frame = frame;
    s.id = frame_id(s.scene, frame);
    s.albedo = albedo;
    s.shading = synth_shading(derive_seed(derive_seed(seed, 2 * scene_index + 1), static_cast<std::uint64_t>(frame)), size, size, config);
    for (double& v : s.shading.data()) v = quantize16(v);
    s.image = recompose(s.albedo, s.shading).image;
    out.push_back(std::move(s));
  }
  return out;
}

AugmentTransform draw_transform(std::uint64_t seed, std::size_t H, std::size_t W, const AugmentConfig& config) {
  if (config.crop == 0) throw ConfigError("crop size must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  AugmentTransform t;
  t.scale = config.scale_min + (config.scale_max - config.scale_min) * unit(rng);
  t.angle_deg = config.max_angle_deg * (2.0 * unit(rng) - 1.0);
  t.mirror = unit(rng) < config.mirror_prob;

  const double cx = (static_cast<double>(W) - 1.0) / 2.0, cy = (static_cast<double>(H) - 1.0) / 2.0;
  const double h = (static_cast<double>(config.crop) - 1.0) / 2.0;
  const double a = t.angle_deg * std::numbers::pi / 180.0;
  const double bx = t.scale * (std::abs(std::cos(a)) * cx + std::abs(std::sin(a)) * cy);
  const double by = t.scale * (std::abs(std::sin(a)) * cx + std::abs(std::cos(a)) * cy);
  auto place = [&](double ox, double oy) {
    t.offset_x = snap_offset(ox, cx, h);
    t.offset_y = snap_offset(oy, cy, h);
    return crop_fits(t, H, W, config.crop);
  };
  if (!config.center_crop && bx > h && by > h) {
    for (int attempt = 0; attempt < 200; ++attempt) {
      const double ox = (2.0 * unit(rng) - 1.0) * (bx - h);
      const double oy = (2.0 * unit(rng) - 1.0) * (by - h);
      if (place(ox, oy)) return t;
    }
  }
  if (place(0.0, 0.0)) return t;
  // Largest square inside the worst-case (smallest, most rotated) region.
  const double worst = config.max_angle_deg * std::numbers::pi / 180.0;
  const double need = (config.crop + 1.0) * (std::cos(worst) + std::sin(worst)) / config.scale_min;
  throw DataError("crop of " + std::to_string(config.crop) + " px does not fit the transformed " + std::to_string(H) + "x" +
                  std::to_string(W) + " source; sources of at least " + std::to_string(static_cast<long>(std::ceil(need))) +
                  " px per side are required");
}

Sample apply_transform(const Sample& sample, const AugmentTransform& t, std::size_t crop) {
  const std::size_t H = sample.albedo.height(), W = sample.albedo.width();
  require_same_dims(sample.albedo, sample.shading, "augment");
  if (!crop_fits(t, H, W, crop)) throw DataError("augment: crop window leaves the valid region");
  const double cx = (static_cast<double>(W) - 1.0) / 2.0, cy = (static_cast<double>(H) - 1.0) / 2.0;
  const double h = (static_cast<double>(crop) - 1.0) / 2.0;
  Sample out;
  out.id = sample.id;
  out.scene = sample.scene;
  out.frame = sample.frame;
  out.albedo = Image(crop, crop);
  out.shading = Image(crop, crop);
  for (std::size_t i = 0; i < crop; ++i) {
    for (std::size_t j = 0; j < crop; ++j) {
      const auto [sx, sy] = to_source(t, cx, cy, t.offset_x + static_cast<double>(j) - h, t.offset_y + static_cast<double>(i) - h);
      for (std::size_t c = 0; c < 3; ++c) {
        out.albedo.at(i, j, c) = bilinear(sample.albedo, sx, sy, c);
        out.shading.at(i, j, c) = bilinear(sample.shading, sx, sy, c);
      }
    }
  }
  // Interpolating the image separately would break image == albedo * shading.
  out.image = multiply(out.albedo, out.shading);
  return out;
}

Sample augment(const Sample& sample, std::uint64_t seed, const AugmentConfig& config) {
  const auto t = draw_transform(seed, sample.albedo.height(), sample.albedo.width(), config);
  return apply_transform(sample, t, config.crop);
}

std::string to_string(SplitMode mode) { return mode == SplitMode::scene ? "scene" : "image"; }

SplitMode parse_split_mode(const std::string& text) {
  if (text == "scene") return SplitMode::scene;
  if (text == "image") return SplitMode::image;
  throw ConfigError("split mode must be 'scene' or 'image', got '" + text + "'");
}

SplitIndices split_indices(const std::vector<std::string>& scenes, const SplitSpec& spec) {
  if (!(spec.fraction > 0.0 && spec.fraction < 1.0)) throw ConfigError("split fraction must lie in (0, 1)");
  std::mt19937_64 rng(spec.seed);
  SplitIndices out;
  auto take = [&](std::size_t n) {
    const auto k = static_cast<std::size_t>(std::llround(spec.fraction * static_cast<double>(n)));
    return std::clamp<std::size_t>(k, 1, n - 1);
  };
  if (spec.mode == SplitMode::scene) {
    const std::set<std::string> ordered(scenes.begin(), scenes.end());
    std::vector<std::string> unique(ordered.begin(), ordered.end());
    if (unique.size() < 2) throw DataError("scene split needs at least 2 scenes, found " + std::to_string(unique.size()));
    std::shuffle(unique.begin(), unique.end(), rng);
    const std::set<std::string> train(unique.begin(), unique.begin() + static_cast<long>(take(unique.size())));
    for (std::size_t i = 0; i < scenes.size(); ++i) (train.count(scenes[i]) ? out.train : out.test).push_back(i);
  } else {
    if (scenes.size() < 2) throw DataError("image split needs at least 2 samples");
    std::vector<std::size_t> idx(scenes.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    const std::size_t k = take(idx.size());
    out.train.assign(idx.begin(), idx.begin() + static_cast<long>(k));
    out.test.assign(idx.begin() + static_cast<long>(k), idx.end());
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.test.begin(), out.test.end());
  }
  return out;
}

std::pair<std::vector<Sample>, std::vector<Sample>> split_dataset(const std::vector<Sample>& samples, const SplitSpec& spec) {
  std::vector<std::string> scenes;
  scenes.reserve(samples.size());
  for (const auto& s : samples) scenes.push_back(s.scene);
  const auto idx = split_indices(scenes, spec);
  std::pair<std::vector<Sample>, std::vector<Sample>> out;
  for (std::size_t i : idx.train) out.first.push_back(samples[i]);
  for (std::size_t i : idx.test) out.second.push_back(samples[i]);
  return out;
}

std::vector<std::size_t> epoch_order(std::size_t count, std::uint64_t seed, std::uint64_t epoch) {
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  std::mt19937_64 rng(derive_seed(seed, epoch));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

}  // namespace darn
