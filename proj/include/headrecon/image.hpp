#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "headrecon/error.hpp"

namespace headrecon {

// Dense row-major image. Continuous image coordinates put the center of pixel
// (x, y) at (x + 0.5, y + 0.5); a normalized coordinate u in [0, 1] maps to
// u * width.
template <typename T>
class Image {
 public:
  using value_type = T;

  Image() = default;
  Image(int width, int height, T fill = T{})
      : width_(width), height_(height),
        data_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill) {
    if (width < 0 || height < 0) throw Error("negative image dimensions");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return data_.empty(); }
  std::size_t size() const { return data_.size(); }

  T& at(int x, int y) { return data_[index(x, y)]; }
  const T& at(int x, int y) const { return data_[index(x, y)]; }

  std::span<T> pixels() { return data_; }
  std::span<const T> pixels() const { return data_; }

  bool same_shape(const Image& other) const {
    return width_ == other.width_ && height_ == other.height_;
  }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

struct Rgb {
  float r = 0.0F;
  float g = 0.0F;
  float b = 0.0F;

  float& operator[](int c) { return c == 0 ? r : (c == 1 ? g : b); }
  float operator[](int c) const { return c == 0 ? r : (c == 1 ? g : b); }

  friend bool operator==(const Rgb&, const Rgb&) = default;
};

using GrayImage = Image<double>;
using RgbImage = Image<Rgb>;

// Pixel rectangle (left, top, width, height).
struct PixelRect {
  int left = 0;
  int top = 0;
  int width = 0;
  int height = 0;

  friend bool operator==(const PixelRect&, const PixelRect&) = default;
};

// Luma 0.299 R + 0.587 G + 0.114 B.
GrayImage to_gray(const RgbImage& image);
RgbImage gray_to_rgb(const GrayImage& image);

// Rounds every value to the nearest multiple of 1/255 after clamping to [0, 1].
GrayImage quantize8(const GrayImage& image);
RgbImage quantize8(const RgbImage& image);

// Bilinear lookup in continuous coordinates; out-of-range lookups clamp to
// the border pixels.
double sample_bilinear(const GrayImage& image, double x, double y);
Rgb sample_bilinear(const RgbImage& image, double x, double y);

GrayImage resize_bilinear(const GrayImage& image, int width, int height);
RgbImage resize_bilinear(const RgbImage& image, int width, int height);

GrayImage crop(const GrayImage& image, const PixelRect& rect);

// 8-bit PNG IO. Values are clamped to [0, 1] and rounded on write.
GrayImage load_gray_png(const std::filesystem::path& path);
RgbImage load_rgb_png(const std::filesystem::path& path);
void save_gray_png(const GrayImage& image, const std::filesystem::path& path);
void save_rgb_png(const RgbImage& image, const std::filesystem::path& path);

}  // namespace headrecon
