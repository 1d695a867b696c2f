#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "darn/tensor.hpp"

namespace darn {

// H x W x 3 intensities, interleaved (row-major, channel fastest).
class Image {
 public:
  static constexpr std::size_t kChannels = 3;

  Image() = default;
  Image(std::size_t height, std::size_t width, double fill = 0.0);
  Image(std::size_t height, std::size_t width, std::vector<double> data);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t pixels() const { return height_ * width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& at(std::size_t y, std::size_t x, std::size_t c) { return data_[(y * width_ + x) * kChannels + c]; }
  double at(std::size_t y, std::size_t x, std::size_t c) const { return data_[(y * width_ + x) * kChannels + c]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  Image crop(std::size_t y0, std::size_t x0, std::size_t height, std::size_t width) const;

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<double> data_;
};

void require_same_dims(const Image& a, const Image& b, const char* what);
double max_abs_diff(const Image& a, const Image& b);
Image multiply(const Image& a, const Image& b);
Image scaled(const Image& a, double factor);

// Stacks images (all of one size) into a [B,3,H,W] tensor and back.
Tensor to_tensor(std::span<const Image> images, bool requires_grad = false);
Tensor to_tensor(const Image& image, bool requires_grad = false);
std::vector<Image> to_images(const Tensor& batch);

}  // namespace darn
