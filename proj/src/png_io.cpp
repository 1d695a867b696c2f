#include "darn/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "darn/errors.hpp"

namespace darn {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void on_png_error(png_structp png, png_const_charp message) {
  auto* err = static_cast<std::string*>(png_get_error_ptr(png));
  if (err) *err = message;
  png_longjmp(png, 1);
}

void on_png_warning(png_structp, png_const_charp) {}

}  // namespace

Image load_image(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw DataError("cannot open image " + path.string());
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw DataError(path.string() + " is not a PNG file");
  }
  std::string error;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &error, on_png_error, on_png_warning);
  if (!png) throw DataError("libpng initialization failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw DataError("libpng initialization failed");
  }

  std::vector<unsigned char> bytes;
  std::vector<png_bytep> rows;
  png_uint_32 width = 0, height = 0;
  int depth = 0, color = 0;
  std::string unsupported;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("failed to decode " + path.string() + ": " + error);
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  png_get_IHDR(png, info, &width, &height, &depth, &color, nullptr, nullptr, nullptr);
  if (depth != 8 && depth != 16) {
    unsupported = "bit depth " + std::to_string(depth);
  } else if (color != PNG_COLOR_TYPE_RGB && color != PNG_COLOR_TYPE_GRAY) {
    unsupported = "color type " + std::to_string(color) + " (RGB or gray expected)";
  } else if (png_get_interlace_type(png, info) != PNG_INTERLACE_NONE) {
    unsupported = "interlaced images";
  }
  if (unsupported.empty()) {
    const std::size_t row_bytes = png_get_rowbytes(png, info);
    bytes.resize(row_bytes * height);
    rows.resize(height);
    for (png_uint_32 y = 0; y < height; ++y) rows[y] = bytes.data() + y * row_bytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
  }
  png_destroy_read_struct(&png, &info, nullptr);
  if (!unsupported.empty()) throw DataError(path.string() + ": unsupported " + unsupported);

  const std::size_t channels = color == PNG_COLOR_TYPE_RGB ? 3 : 1;
  const std::size_t sample_bytes = depth / 8;
  const double max_value = depth == 16 ? 65535.0 : 255.0;
  Image img(height, width);
  for (std::size_t y = 0; y < height; ++y) {
    const unsigned char* row = bytes.data() + y * width * channels * sample_bytes;
    for (std::size_t x = 0; x < width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        const std::size_t k = (x * channels + (channels == 3 ? c : 0)) * sample_bytes;
        const unsigned v = sample_bytes == 2 ? (unsigned{row[k]} << 8) | row[k + 1] : row[k];
        img.at(y, x, c) = static_cast<double>(v) / max_value;
      }
    }
  }
  return img;
}

void save_image(const std::filesystem::path& path, const Image& image, int bit_depth) {
  if (bit_depth != 8 && bit_depth != 16) throw DataError("unsupported bit depth " + std::to_string(bit_depth));
  if (image.empty()) throw DataError("cannot save an empty image");
  const double max_value = bit_depth == 16 ? 65535.0 : 255.0;
  const std::size_t sample_bytes = bit_depth / 8;
  const std::size_t row_bytes = image.width() * 3 * sample_bytes;
  std::vector<unsigned char> bytes(row_bytes * image.height());
  for (std::size_t i = 0; i < image.size(); ++i) {
    const double v = image.data()[i];
    if (!std::isfinite(v)) throw NumericError("cannot save non-finite pixel values to " + path.string());
    // nearbyint under the default rounding mode rounds half to even.
    const auto q = static_cast<unsigned>(std::nearbyint(std::clamp(v, 0.0, 1.0) * max_value));
    if (sample_bytes == 2) {
      bytes[2 * i] = static_cast<unsigned char>(q >> 8);
      bytes[2 * i + 1] = static_cast<unsigned char>(q & 0xff);
    } else {
      bytes[i] = static_cast<unsigned char>(q);
    }
  }
  std::vector<png_bytep> rows(image.height());
  for (std::size_t y = 0; y < image.height(); ++y) rows[y] = bytes.data() + y * row_bytes;

  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw DataError("cannot write image " + path.string());
  std::string error;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &error, on_png_error, on_png_warning);
  if (!png) throw DataError("libpng initialization failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw DataError("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("failed to encode " + path.string() + ": " + error);
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width()), static_cast<png_uint_32>(image.height()), bit_depth,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace darn
