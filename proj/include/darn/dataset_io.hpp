#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "darn/data.hpp"

// On-disk datasets in the layout
//   <root>/<scene>/{clean,albedo,shading}/frame_%04d.png
// with an optional <root>/manifest.txt listing
//   <id> <scene> <clean> <albedo> <shading>
// (paths relative to root, '#' starts a comment line). The image is always
// recomposed from albedo and shading at load time.
namespace darn {

struct ManifestEntry {
  std::string id;
  std::string scene;
  std::string clean;
  std::string albedo;
  std::string shading;
};

std::string frame_file(int frame);

// Writes all samples as 16-bit PNGs plus manifest.txt.
void write_dataset(const std::filesystem::path& root, const std::vector<Sample>& samples);

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);

// Uses manifest.txt when present, otherwise scans the directory layout.
// Samples come back sorted by (scene, frame).
std::vector<Sample> load_dataset(const std::filesystem::path& root);

// One sample id per line.
void write_split_file(const std::filesystem::path& path, const std::vector<std::string>& ids);
std::vector<std::string> read_split_file(const std::filesystem::path& path);

}  // namespace darn
