#pragma once

#include <filesystem>

#include "darn/image.hpp"

namespace darn {

// Reads an 8- or 16-bit RGB (or gray, replicated to RGB) PNG; integer v maps
// to v / (2^depth - 1).
Image load_image(const std::filesystem::path& path);

// Writes an RGB PNG of the given bit depth (8 or 16). Values are clamped to
// [0, 1] and rounded half-to-even.
void save_image(const std::filesystem::path& path, const Image& image, int bit_depth = 16);

}  // namespace darn
