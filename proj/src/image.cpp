#include "darn/image.hpp"

#include <cmath>
#include <string>

#include "darn/errors.hpp"

namespace darn {

Image::Image(std::size_t height, std::size_t width, double fill)
    : height_(height), width_(width), data_(height * width * kChannels, fill) {}

Image::Image(std::size_t height, std::size_t width, std::vector<double> data)
    : height_(height), width_(width), data_(std::move(data)) {
  if (data_.size() != height * width * kChannels) {
    throw ShapeError("image " + std::to_string(height) + "x" + std::to_string(width) + " cannot hold " +
                     std::to_string(data_.size()) + " values");
  }
}

Image Image::crop(std::size_t y0, std::size_t x0, std::size_t height, std::size_t width) const {
  if (y0 + height > height_ || x0 + width > width_) throw ShapeError("crop window outside image");
  Image out(height, width);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      for (std::size_t c = 0; c < kChannels; ++c) out.at(y, x, c) = at(y0 + y, x0 + x, c);
    }
  }
  return out;
}

void require_same_dims(const Image& a, const Image& b, const char* what) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw ShapeError(std::string(what) + ": image sizes differ (" + std::to_string(a.height()) + "x" +
                     std::to_string(a.width()) + " vs " + std::to_string(b.height()) + "x" +
                     std::to_string(b.width()) + ")");
  }
}

double max_abs_diff(const Image& a, const Image& b) {
  require_same_dims(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

Image multiply(const Image& a, const Image& b) {
  require_same_dims(a, b, "multiply");
  Image out(a.height(), a.width());
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
  return out;
}

Image scaled(const Image& a, double factor) {
  Image out = a;
  for (double& v : out.data()) v *= factor;
  return out;
}

Tensor to_tensor(std::span<const Image> images, bool requires_grad) {
  if (images.empty()) throw ShapeError("to_tensor: empty batch");
  const std::size_t H = images[0].height(), W = images[0].width(), C = Image::kChannels;
  std::vector<double> v(images.size() * C * H * W);
  for (std::size_t b = 0; b < images.size(); ++b) {
    require_same_dims(images[0], images[b], "to_tensor");
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < W; ++x) v[((b * C + c) * H + y) * W + x] = images[b].at(y, x, c);
      }
    }
  }
  return Tensor::from({images.size(), C, H, W}, std::move(v), requires_grad);
}

Tensor to_tensor(const Image& image, bool requires_grad) { return to_tensor(std::span<const Image>(&image, 1), requires_grad); }

std::vector<Image> to_images(const Tensor& batch) {
  if (batch.shape().size() != 4 || batch.dim(1) != Image::kChannels) {
    throw ShapeError("to_images: expected [B,3,H,W], got " + shape_string(batch.shape()));
  }
  const std::size_t B = batch.dim(0), C = Image::kChannels, H = batch.dim(2), W = batch.dim(3);
  std::vector<Image> out;
  out.reserve(B);
  const auto v = batch.values();
  for (std::size_t b = 0; b < B; ++b) {
    Image img(H, W);
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < W; ++x) img.at(y, x, c) = v[((b * C + c) * H + y) * W + x];
      }
    }
    out.push_back(std::move(img));
  }
  return out;
}

}  // namespace darn
