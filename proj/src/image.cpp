#include "headrecon/image.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

namespace headrecon {
namespace {

double quantize_value(double v) {
  return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
}

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

struct BilinearTaps {
  int x0, x1, y0, y1;
  double fx, fy;
};

// Continuous coordinate -> neighbouring pixel indices and fractions.
BilinearTaps taps(int width, int height, double x, double y) {
  const double px = std::clamp(x - 0.5, 0.0, static_cast<double>(width - 1));
  const double py = std::clamp(y - 0.5, 0.0, static_cast<double>(height - 1));
  BilinearTaps t{};
  t.x0 = static_cast<int>(std::floor(px));
  t.y0 = static_cast<int>(std::floor(py));
  t.x1 = std::min(t.x0 + 1, width - 1);
  t.y1 = std::min(t.y0 + 1, height - 1);
  t.fx = px - t.x0;
  t.fy = py - t.y0;
  return t;
}

// Written as a + f (b - a) so constant neighbourhoods interpolate exactly.
inline double lerp(double a, double b, double f) { return a + f * (b - a); }

cv::Mat read_png(const std::filesystem::path& path, int flags) {
  cv::Mat mat = cv::imread(path.string(), flags);
  if (mat.empty()) throw Error("cannot read image " + path.string());
  if (mat.depth() != CV_8U) throw Error("expected an 8-bit image: " + path.string());
  return mat;
}

void write_png(const cv::Mat& mat, const std::filesystem::path& path) {
  const std::vector<int> params{cv::IMWRITE_PNG_COMPRESSION, 3};
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), mat, params);
  } catch (const cv::Exception& e) {
    throw Error("cannot write image " + path.string() + ": " + e.what());
  }
  if (!ok) throw Error("cannot write image " + path.string());
}

}  // namespace

GrayImage to_gray(const RgbImage& image) {
  GrayImage out(image.width(), image.height());
  auto src = image.pixels();
  auto dst = out.pixels();
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i] = 0.299 * src[i].r + 0.587 * src[i].g + 0.114 * src[i].b;
  }
  return out;
}

RgbImage gray_to_rgb(const GrayImage& image) {
  RgbImage out(image.width(), image.height());
  auto src = image.pixels();
  auto dst = out.pixels();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const auto v = static_cast<float>(src[i]);
    dst[i] = {v, v, v};
  }
  return out;
}

GrayImage quantize8(const GrayImage& image) {
  GrayImage out = image;
  for (auto& v : out.pixels()) v = quantize_value(v);
  return out;
}

RgbImage quantize8(const RgbImage& image) {
  RgbImage out = image;
  for (auto& p : out.pixels()) {
    // Same arithmetic as load_rgb_png so a saved-and-reloaded image matches.
    p.r = static_cast<float>(to_byte(p.r)) / 255.0F;
    p.g = static_cast<float>(to_byte(p.g)) / 255.0F;
    p.b = static_cast<float>(to_byte(p.b)) / 255.0F;
  }
  return out;
}

double sample_bilinear(const GrayImage& image, double x, double y) {
  const auto t = taps(image.width(), image.height(), x, y);
  const double top = lerp(image.at(t.x0, t.y0), image.at(t.x1, t.y0), t.fx);
  const double bottom = lerp(image.at(t.x0, t.y1), image.at(t.x1, t.y1), t.fx);
  return lerp(top, bottom, t.fy);
}

Rgb sample_bilinear(const RgbImage& image, double x, double y) {
  const auto t = taps(image.width(), image.height(), x, y);
  Rgb out;
  for (int c = 0; c < 3; ++c) {
    const double top = lerp(image.at(t.x0, t.y0)[c], image.at(t.x1, t.y0)[c], t.fx);
    const double bottom = lerp(image.at(t.x0, t.y1)[c], image.at(t.x1, t.y1)[c], t.fx);
    out[c] = static_cast<float>(lerp(top, bottom, t.fy));
  }
  return out;
}

GrayImage resize_bilinear(const GrayImage& image, int width, int height) {
  GrayImage out(width, height);
  const double sx = static_cast<double>(image.width()) / width;
  const double sy = static_cast<double>(image.height()) / height;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      out.at(x, y) = sample_bilinear(image, (x + 0.5) * sx, (y + 0.5) * sy);
    }
  }
  return out;
}

RgbImage resize_bilinear(const RgbImage& image, int width, int height) {
  RgbImage out(width, height);
  const double sx = static_cast<double>(image.width()) / width;
  const double sy = static_cast<double>(image.height()) / height;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      out.at(x, y) = sample_bilinear(image, (x + 0.5) * sx, (y + 0.5) * sy);
    }
  }
  return out;
}

GrayImage crop(const GrayImage& image, const PixelRect& rect) {
  if (rect.width <= 0 || rect.height <= 0 || rect.left < 0 || rect.top < 0 ||
      rect.left + rect.width > image.width() || rect.top + rect.height > image.height()) {
    throw Error("crop box out of bounds");
  }
  GrayImage out(rect.width, rect.height);
  for (int y = 0; y < rect.height; ++y) {
    for (int x = 0; x < rect.width; ++x) {
      out.at(x, y) = image.at(rect.left + x, rect.top + y);
    }
  }
  return out;
}

GrayImage load_gray_png(const std::filesystem::path& path) {
  const cv::Mat mat = read_png(path, cv::IMREAD_GRAYSCALE);
  GrayImage out(mat.cols, mat.rows);
  for (int y = 0; y < mat.rows; ++y) {
    const auto* row = mat.ptr<std::uint8_t>(y);
    for (int x = 0; x < mat.cols; ++x) out.at(x, y) = row[x] / 255.0;
  }
  return out;
}

RgbImage load_rgb_png(const std::filesystem::path& path) {
  const cv::Mat mat = read_png(path, cv::IMREAD_COLOR);
  RgbImage out(mat.cols, mat.rows);
  for (int y = 0; y < mat.rows; ++y) {
    const auto* row = mat.ptr<cv::Vec3b>(y);
    for (int x = 0; x < mat.cols; ++x) {
      // OpenCV stores BGR.
      out.at(x, y) = {row[x][2] / 255.0F, row[x][1] / 255.0F, row[x][0] / 255.0F};
    }
  }
  return out;
}

void save_gray_png(const GrayImage& image, const std::filesystem::path& path) {
  cv::Mat mat(image.height(), image.width(), CV_8UC1);
  for (int y = 0; y < image.height(); ++y) {
    auto* row = mat.ptr<std::uint8_t>(y);
    for (int x = 0; x < image.width(); ++x) row[x] = to_byte(image.at(x, y));
  }
  write_png(mat, path);
}

void save_rgb_png(const RgbImage& image, const std::filesystem::path& path) {
  cv::Mat mat(image.height(), image.width(), CV_8UC3);
  for (int y = 0; y < image.height(); ++y) {
    auto* row = mat.ptr<cv::Vec3b>(y);
    for (int x = 0; x < image.width(); ++x) {
      const Rgb& p = image.at(x, y);
      row[x] = cv::Vec3b(to_byte(p.b), to_byte(p.g), to_byte(p.r));
    }
  }
  write_png(mat, path);
}

}  // namespace headrecon
