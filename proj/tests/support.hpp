#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include "headrecon/image.hpp"
#include "headrecon/mesh.hpp"

namespace testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("headrecon_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
}

inline headrecon::GrayImage random_gray(std::mt19937_64& rng, int w, int h, double lo = 0.0, double hi = 1.0) {
  headrecon::GrayImage img(w, h);
  for (auto& v : img.pixels()) v = uniform(rng, lo, hi);
  return img;
}

inline headrecon::RgbImage random_rgb(std::mt19937_64& rng, int w, int h) {
  headrecon::RgbImage img(w, h);
  for (auto& p : img.pixels()) {
    p = {static_cast<float>(uniform(rng, 0, 1)), static_cast<float>(uniform(rng, 0, 1)),
         static_cast<float>(uniform(rng, 0, 1))};
  }
  return img;
}

// Flat nx x ny grid of quads in the z = 0 plane spanning [0, nx] x [0, ny],
// front face toward +Z.
inline headrecon::HeadMesh grid_mesh(int nx, int ny, double spacing = 1.0) {
  headrecon::HeadMesh m;
  for (int y = 0; y <= ny; ++y) {
    for (int x = 0; x <= nx; ++x) {
      m.vertices.emplace_back(x * spacing, y * spacing, 0.0);
      m.uvs.emplace_back(static_cast<double>(x) / nx, 1.0 - static_cast<double>(y) / ny);
    }
  }
  auto id = [&](int x, int y) { return y * (nx + 1) + x; };
  for (int y = 0; y < ny; ++y) {
    for (int x = 0; x < nx; ++x) m.faces.push_back({id(x, y), id(x + 1, y), id(x + 1, y + 1), id(x, y + 1)});
  }
  return m;
}

}  // namespace testing
