#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "darn/image.hpp"

namespace darn {

// One ground-truth triple; image == albedo * shading.
struct Sample {
  std::string id;
  std::string scene;
  int frame = 0;
  Image image;
  Image albedo;
  Image shading;
};

struct Recomposition {
  Image image;
  std::size_t clipped = 0;  // values that exceeded value_max
};

// Elementwise albedo * shading clipped to [0, value_max].
Recomposition recompose(const Image& albedo, const Image& shading, double value_max = 1.0);

enum class ShadingMode { gray, colored };

struct SynthConfig {
  std::size_t n_rects = 6;
  ShadingMode shading_mode = ShadingMode::gray;
  std::size_t n_lobes = 3;
  double min_lobe_width = 0.25;  // radial lobe sigma, as a fraction of max(H, W)
  std::size_t frames_per_scene = 5;
};

// Piecewise-constant albedo: background plus n_rects axis-aligned rectangles,
// colors in [0.1, 0.9].
Image synth_albedo(std::uint64_t seed, std::size_t height, std::size_t width, const SynthConfig& config);
// Smooth shading in [0.2, 1.0] built from n_lobes radial or linear lobes.
Image synth_shading(std::uint64_t seed, std::size_t height, std::size_t width, const SynthConfig& config);
// Upper bound on |dS/dx| and |dS/dy| (per pixel) of synth_shading output.
double shading_slope_bound(std::size_t height, std::size_t width, const SynthConfig& config);

// Standalone sample: albedo from `seed`, shading from a derived seed.
Sample synth_mondrian(std::uint64_t seed, std::size_t height, std::size_t width, const SynthConfig& config = {});

// `count` samples grouped into scenes of frames_per_scene frames. Frames of a
// scene share the albedo layout and differ in shading. Albedo and shading are
// quantized to 16 bits so the set survives a PNG round trip unchanged.
std::vector<Sample> synth_dataset(std::uint64_t seed, std::size_t count, std::size_t size, const SynthConfig& config = {});

struct AugmentConfig {
  std::size_t crop = 16;
  double scale_min = 0.8;
  double scale_max = 1.2;
  double max_angle_deg = 15.0;
  double mirror_prob = 0.5;
  bool center_crop = false;
};

struct AugmentTransform {
  double scale = 1.0;
  double angle_deg = 0.0;
  bool mirror = false;
  double offset_x = 0.0;  // crop center relative to the transformed image center
  double offset_y = 0.0;
};

// Draws scale, angle, mirror and crop position for a source of the given size.
// Throws DataError when the crop cannot fit inside the valid rotated region.
AugmentTransform draw_transform(std::uint64_t seed, std::size_t height, std::size_t width, const AugmentConfig& config);
Sample apply_transform(const Sample& sample, const AugmentTransform& transform, std::size_t crop);
// Scale, rotate (bilinear), mirror, crop; image recomputed as albedo * shading.
Sample augment(const Sample& sample, std::uint64_t seed, const AugmentConfig& config);

enum class SplitMode { scene, image };

struct SplitSpec {
  SplitMode mode = SplitMode::scene;
  std::uint64_t seed = 0;
  double fraction = 0.5;  // share of scenes (or samples) assigned to train
};

std::string to_string(SplitMode mode);
SplitMode parse_split_mode(const std::string& text);

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// Indices into `scenes` (one entry per sample), each partition ascending.
SplitIndices split_indices(const std::vector<std::string>& scenes, const SplitSpec& spec);
std::pair<std::vector<Sample>, std::vector<Sample>> split_dataset(const std::vector<Sample>& samples, const SplitSpec& spec);

// Order in which an epoch visits `count` samples; a pure function of (seed, epoch).
std::vector<std::size_t> epoch_order(std::size_t count, std::uint64_t seed, std::uint64_t epoch);

// SplitMix64 finalizer, used to derive independent seeds.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace darn
