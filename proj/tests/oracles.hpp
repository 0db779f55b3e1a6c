#pragma once

#include <cmath>
#include <vector>

#include "headrecon/image.hpp"

namespace testing {

// Straightforward SSIM: explicit 2D Gaussian window and centered moments at
// every valid placement.
inline double ssim_direct(const headrecon::GrayImage& a, const headrecon::GrayImage& b) {
  const int k = 11;
  const double sigma = 1.5;
  std::vector<double> w(k * k);
  double total = 0.0;
  for (int j = 0; j < k; ++j) {
    for (int i = 0; i < k; ++i) {
      const double dx = i - 5.0;
      const double dy = j - 5.0;
      w[j * k + i] = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      total += w[j * k + i];
    }
  }
  for (auto& v : w) v /= total;
  const double c1 = 0.01 * 0.01;
  const double c2 = 0.03 * 0.03;
  double sum = 0.0;
  int count = 0;
  for (int y = 0; y + k <= a.height(); ++y) {
    for (int x = 0; x + k <= a.width(); ++x) {
      double ma = 0.0;
      double mb = 0.0;
      for (int j = 0; j < k; ++j) {
        for (int i = 0; i < k; ++i) {
          ma += w[j * k + i] * a.at(x + i, y + j);
          mb += w[j * k + i] * b.at(x + i, y + j);
        }
      }
      double va = 0.0;
      double vb = 0.0;
      double cov = 0.0;
      for (int j = 0; j < k; ++j) {
        for (int i = 0; i < k; ++i) {
          const double da = a.at(x + i, y + j) - ma;
          const double db = b.at(x + i, y + j) - mb;
          va += w[j * k + i] * da * da;
          vb += w[j * k + i] * db * db;
          cov += w[j * k + i] * da * db;
        }
      }
      sum += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  }
  return sum / count;
}

}  // namespace testing
