#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <set>

#include "headrecon/error.hpp"
#include "headrecon/similarity.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace headrecon;

namespace {

int transitions(unsigned code, int bits) {
  int t = 0;
  for (int i = 0; i < bits; ++i) t += ((code >> i) & 1U) != ((code >> ((i + 1) % bits)) & 1U);
  return t;
}

// LBP histogram for a single cell, computed with its own neighbour sampling.
std::vector<double> lbp_single_cell(const GrayImage& img, int radius) {
  const int p_count = 8;
  std::vector<int> label(256);
  int next = 0;
  for (unsigned c = 0; c < 256; ++c) label[c] = transitions(c, 8) <= 2 ? next++ : -1;
  for (auto& l : label) if (l < 0) l = next;
  std::vector<double> hist(static_cast<std::size_t>(next + 1), 0.0);
  int n = 0;
  for (int y = radius; y < img.height() - radius; ++y) {
    for (int x = radius; x < img.width() - radius; ++x) {
      unsigned code = 0;
      for (int p = 0; p < p_count; ++p) {
        const double a = 2.0 * std::numbers::pi * p / p_count;
        const double sx = x + radius * std::cos(a);
        const double sy = y - radius * std::sin(a);
        const int x0 = static_cast<int>(std::floor(sx + 1e-12));
        const int y0 = static_cast<int>(std::floor(sy + 1e-12));
        const double fx = std::max(0.0, sx - x0);
        const double fy = std::max(0.0, sy - y0);
        const auto px = [&](int xx, int yy) {
          return img.at(std::min(xx, img.width() - 1), std::min(yy, img.height() - 1));
        };
        const double v = (1 - fx) * (1 - fy) * px(x0, y0) + fx * (1 - fy) * px(x0 + 1, y0) +
                         (1 - fx) * fy * px(x0, y0 + 1) + fx * fy * px(x0 + 1, y0 + 1);
        if (v >= img.at(x, y)) code |= 1U << p;
      }
      hist[static_cast<std::size_t>(label[code])] += 1.0;
      ++n;
    }
  }
  for (auto& h : hist) h /= n;
  return hist;
}

}  // namespace

TEST_CASE("SSIM matches a direct windowed computation") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const GrayImage a = testing::random_gray(rng, 64, 64);
    GrayImage b = a;
    for (auto& v : b.pixels()) v = std::clamp(v + testing::uniform(rng, -0.3, 0.3), 0.0, 1.0);
    CHECK(std::abs(ssim(a, b) - testing::ssim_direct(a, b)) < 1e-9);
  }
}

TEST_CASE("SSIM of an image with itself is one") {
  std::mt19937_64 rng(12);
  const GrayImage a = testing::random_gray(rng, 20, 20);
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(ssim(a, GrayImage(20, 21)), Error);
  CHECK_THROWS_AS(ssim(GrayImage(10, 10), GrayImage(10, 10)), Error);
}

TEST_CASE("uniform LBP labels: 58 uniform patterns plus one shared bin") {
  LbpConfig cfg;
  CHECK(cfg.bins() == 59);
  std::set<int> uniform_bins;
  for (unsigned c = 0; c < 256; ++c) {
    const int bin = lbp_bin(c, cfg);
    if (transitions(c, 8) <= 2) {
      CHECK(bin < 58);
      uniform_bins.insert(bin);
    } else {
      CHECK(bin == 58);
    }
  }
  CHECK(uniform_bins.size() == 58);
  cfg.uniform = false;
  CHECK(cfg.bins() == 256);
  CHECK(lbp_bin(173, cfg) == 173);
  cfg.neighbors = 16;
  cfg.uniform = true;
  CHECK(cfg.bins() == 243);
}

TEST_CASE("LBP single-cell histogram matches an independent computation") {
  std::mt19937_64 rng(13);
  LbpConfig cfg;
  cfg.grid_x = 1;
  cfg.grid_y = 1;
  for (int trial = 0; trial < 10; ++trial) {
    const GrayImage img = testing::random_gray(rng, 16, 12);
    const Eigen::VectorXd desc = lbp_descriptor(img, cfg);
    const auto oracle = lbp_single_cell(img, 1);
    REQUIRE(desc.size() == static_cast<Eigen::Index>(oracle.size()));
    for (std::size_t i = 0; i < oracle.size(); ++i) CHECK(desc[static_cast<Eigen::Index>(i)] == doctest::Approx(oracle[i]));
  }
}

TEST_CASE("LBP cells are normalized histograms") {
  std::mt19937_64 rng(14);
  const GrayImage img = testing::random_gray(rng, 40, 30);
  LbpConfig cfg;
  cfg.grid_x = 4;
  cfg.grid_y = 3;
  const Eigen::VectorXd desc = lbp_descriptor(img, cfg);
  REQUIRE(desc.size() == 12 * 59);
  for (int cell = 0; cell < 12; ++cell) CHECK(desc.segment(cell * 59, 59).sum() == doctest::Approx(1.0));
  cfg.grid_x = 20;
  CHECK_THROWS_AS(lbp_descriptor(img, cfg), Error);
}

TEST_CASE("LBP descriptor ignores a uniform brightness shift") {
  std::mt19937_64 rng(15);
  for (int trial = 0; trial < 100; ++trial) {
    const GrayImage img = testing::random_gray(rng, 32, 32, 0.0, 0.9);
    GrayImage shifted = img;
    for (auto& v : shifted.pixels()) v += 0.1;
    CHECK(lbp_descriptor(img) == lbp_descriptor(shifted));
  }
}

TEST_CASE("PCA of two samples: one component along their difference") {
  Eigen::VectorXd a(3), b(3);
  a << 1.0, 2.0, 3.0;
  b << 3.0, 1.0, 3.0;
  const std::vector<Eigen::VectorXd> samples{a, b};
  const PcaModel m = pca_fit(samples);
  REQUIRE(m.retained() == 1);
  const Eigen::VectorXd d = b - a;  // (2, -1, 0): largest entry positive already
  CHECK((m.mean - (a + b) / 2).norm() < 1e-15);
  CHECK((m.components.row(0).transpose() - d.normalized()).norm() < 1e-12);
  CHECK(m.eigenvalues[0] == doctest::Approx(d.squaredNorm() / 2.0));
  CHECK(m.training_scores(0, 0) == doctest::Approx(-d.norm() / 2));
  CHECK(m.training_scores(1, 0) == doctest::Approx(d.norm() / 2));
}

TEST_CASE("PCA at full rank reconstructs its training set") {
  std::mt19937_64 rng(16);
  std::vector<Eigen::VectorXd> samples;
  for (int i = 0; i < 12; ++i) {
    Eigen::VectorXd v(40);
    for (auto& x : v) x = testing::uniform(rng, 0, 1);
    samples.push_back(v);
  }
  PcaOptions opt;
  opt.retained = 11;
  const PcaModel m = pca_fit(samples, opt);
  CHECK(m.retained() == 11);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Eigen::VectorXd rec = m.mean + m.components.transpose() * m.training_scores.row(static_cast<Eigen::Index>(i)).transpose();
    CHECK((rec - samples[i]).cwiseAbs().maxCoeff() < 1e-6);
  }
  // Orthonormal rows, descending eigenvalues.
  const Eigen::MatrixXd gram = m.components * m.components.transpose();
  CHECK((gram - Eigen::MatrixXd::Identity(11, 11)).norm() < 1e-10);
  for (Eigen::Index k = 1; k < m.eigenvalues.size(); ++k) CHECK(m.eigenvalues[k] <= m.eigenvalues[k - 1]);
}

TEST_CASE("PCA clamps a retained count above the rank") {
  std::vector<Eigen::VectorXd> samples(3, Eigen::VectorXd::Zero(5));
  samples[1][0] = 1.0;
  samples[2][0] = 2.0;  // rank 1
  PcaOptions opt;
  opt.retained = 2;
  CHECK(pca_fit(samples, opt).retained() == 1);
}

TEST_CASE("PCA sidecar round trip and corruption detection") {
  testing::TempDir dir("pca");
  std::mt19937_64 rng(17);
  std::vector<GrayImage> images;
  for (int i = 0; i < 6; ++i) images.push_back(testing::random_gray(rng, 8, 6));
  const PcaModel m = pca_fit(std::span<const GrayImage>(images));
  save_pca_model(m, dir / "m.pca");
  const PcaModel back = load_pca_model(dir / "m.pca");
  CHECK(back.mean == m.mean);
  CHECK(back.components == m.components);
  CHECK(back.eigenvalues == m.eigenvalues);
  CHECK(back.training_scores == m.training_scores);

  {
    std::fstream f(dir / "m.pca", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(-3, std::ios::end);
    f.put('\x5a');
  }
  CHECK_THROWS_WITH_AS(load_pca_model(dir / "m.pca"), doctest::Contains("checksum"), Error);
}

TEST_CASE("inverse-error weights over the three best models") {
  const ErrorVector e{{2.0, 4.0, 8.0, 50.0}, Method::ssim};
  const WeightVector w = select_weights(e, 3);
  CHECK(std::abs(w.weights[0] - 4.0 / 7.0) < 1e-12);
  CHECK(std::abs(w.weights[1] - 2.0 / 7.0) < 1e-12);
  CHECK(std::abs(w.weights[2] - 1.0 / 7.0) < 1e-12);
  CHECK(w.weights[3] == 0.0);
  CHECK(w.support == std::vector<std::size_t>{0, 1, 2});
}

TEST_CASE("select_weights edge cases") {
  SUBCASE("a zero error takes all the weight") {
    const WeightVector w = select_weights({{0.5, 0.0, 0.2}, Method::ssim}, 3);
    CHECK(w.weights == std::vector<double>{0.0, 1.0, 0.0});
    CHECK(w.support == std::vector<std::size_t>{1});
  }
  SUBCASE("ties go to the lower id") {
    const WeightVector w = select_weights({{0.3, 0.1, 0.1, 0.1}, Method::ssim}, 2);
    CHECK(w.support == std::vector<std::size_t>{1, 2});
    CHECK(w.weights[1] == 0.5);
  }
  SUBCASE("top_n larger than the database") {
    const WeightVector w = select_weights({{1.0, 3.0}, Method::ssim}, 5);
    CHECK(w.weights[0] == doctest::Approx(0.75));
    CHECK(w.support.size() == 2);
  }
  SUBCASE("infinite errors are skipped; all infinite is an error") {
    const double inf = std::numeric_limits<double>::infinity();
    const WeightVector w = select_weights({{inf, 2.0, inf}, Method::pca}, 3);
    CHECK(w.support == std::vector<std::size_t>{1});
    CHECK_THROWS_AS(select_weights({{inf, inf}, Method::pca}, 3), Error);
  }
  SUBCASE("invalid input") {
    CHECK_THROWS_AS(select_weights({{1.0, -1.0}, Method::ssim}, 3), Error);
    CHECK_THROWS_AS(select_weights({{1.0}, Method::ssim}, 0), Error);
  }
}

TEST_CASE("select_weights properties on random error vectors") {
  std::mt19937_64 rng(18);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto n = static_cast<std::size_t>(1 + rng() % 40);
    const std::size_t top_n = 1 + rng() % 5;
    ErrorVector e;
    for (std::size_t i = 0; i < n; ++i) e.errors.push_back(std::pow(10.0, testing::uniform(rng, -3, 2)));
    const WeightVector w = select_weights(e, top_n);
    const double sum = std::accumulate(w.weights.begin(), w.weights.end(), 0.0);
    CHECK(std::abs(sum - 1.0) < 1e-12);
    CHECK(w.support.size() <= top_n);
    CHECK(std::is_sorted(w.support.begin(), w.support.end()));
    for (const std::size_t s : w.support) CHECK(w.weights[s] > 0.0);
    for (const double c : {1e-6, 1.0, 1e6}) {
      ErrorVector scaled = e;
      for (auto& v : scaled.errors) v *= c;
      const WeightVector ws = select_weights(scaled, top_n);
      CHECK(ws.weights == w.weights);
      CHECK(ws.support == w.support);
    }
  }
}

TEST_CASE("region errors route by method") {
  std::mt19937_64 rng(19);
  std::vector<GrayImage> slice;
  for (int i = 0; i < 5; ++i) slice.push_back(testing::random_gray(rng, 24, 24));
  const ErrorVector s = region_errors(Method::ssim, slice, slice[2]);
  CHECK(s.errors[2] == 0.0);
  for (const std::size_t i : {0, 1, 3, 4}) CHECK(s.errors[i] > 0.0);

  const PcaModel pca = pca_fit(std::span<const GrayImage>(slice));
  const ErrorVector p = region_errors(Method::pca, slice, slice[3], &pca);
  CHECK(p.errors[3] == 0.0);
  CHECK_THROWS_WITH_AS(region_errors(Method::pca, slice, slice[0]), doctest::Contains("method/model mismatch"), Error);

  std::vector<Eigen::VectorXd> desc;
  for (const auto& img : slice) desc.push_back(lbp_descriptor(img));
  const PcaModel lbp_model = pca_fit(desc);
  const ErrorVector l = region_errors(Method::lbp, slice, slice[1], &lbp_model);
  CHECK(l.errors[1] == 0.0);
  // An LBP model does not fit raw pixels.
  CHECK_THROWS_WITH_AS(region_errors(Method::pca, slice, slice[0], &lbp_model),
                       doctest::Contains("method/model mismatch"), Error);
}
