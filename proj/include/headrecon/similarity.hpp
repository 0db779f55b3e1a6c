#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "headrecon/image.hpp"
#include "headrecon/mesh.hpp"

namespace headrecon {

struct RenderedRegionDB;

// Principal components of a sample set. Rows of `components` are orthonormal
// and sorted by descending eigenvalue; training scores are stored per sample.
struct PcaModel {
  Eigen::VectorXd mean;
  Eigen::MatrixXd components;       // retained x dimension
  Eigen::VectorXd eigenvalues;      // retained
  Eigen::MatrixXd training_scores;  // samples x retained

  std::size_t retained() const { return static_cast<std::size_t>(components.rows()); }
  std::size_t dimension() const { return static_cast<std::size_t>(mean.size()); }
  std::size_t sample_count() const { return static_cast<std::size_t>(training_scores.rows()); }
};

struct PcaOptions {
  // Fixed component count; clamped to the data rank with a warning. When
  // empty, the smallest count explaining `variance` is used, capped at `cap`.
  std::optional<std::size_t> retained;
  double variance = 0.95;
  std::size_t cap = 50;
};

PcaModel pca_fit(std::span<const Eigen::VectorXd> samples, const PcaOptions& options = {});
PcaModel pca_fit(std::span<const GrayImage> images, const PcaOptions& options = {});

Eigen::VectorXd pca_score(const PcaModel& model, const Eigen::VectorXd& sample);
Eigen::VectorXd pca_score(const PcaModel& model, const GrayImage& image);

// Row-major pixel vector.
Eigen::VectorXd vectorize(const GrayImage& image);

// Binary sidecar: one JSON header line (dimension, retained, samples, CRC-32
// of the payload) followed by little-endian doubles.
void save_pca_model(const PcaModel& model, const std::filesystem::path& path);
PcaModel load_pca_model(const std::filesystem::path& path);

struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

// Mean SSIM over every valid placement of the Gaussian window.
double ssim(const GrayImage& a, const GrayImage& b, const SsimParams& params = {});

struct LbpConfig {
  int neighbors = 8;  // 8 or 16
  int radius = 1;
  int grid_x = 8;
  int grid_y = 8;
  bool uniform = true;  // P(P-1)+3 bins per cell instead of 2^P

  void validate() const;
  int bins() const;
};

// Per-cell normalized LBP code histograms, concatenated in row-major cell
// order. Neighbours are bilinearly sampled and a bit is set when the
// neighbour is >= the center.
Eigen::VectorXd lbp_descriptor(const GrayImage& image, const LbpConfig& cfg = {});

// Histogram bin of a raw P-bit code.
int lbp_bin(unsigned code, const LbpConfig& cfg);

enum class Method { pca, ssim, lbp };

std::string_view method_name(Method method);
Method method_from_name(std::string_view name);

// Eyes use LBP, nose and mouth SSIM, face PCA.
Method default_method(Region region);

struct ErrorVector {
  std::vector<double> errors;
  Method method = Method::ssim;
};

struct WeightVector {
  std::vector<double> weights;
  std::vector<std::size_t> support;  // ascending model ids with nonzero weight
};

// Per-model errors of `input` against a region slice of the database.
// PCA needs a model fitted on the slice pixels, LBP a model fitted on the
// slice descriptors.
ErrorVector region_errors(Method method, std::span<const GrayImage> db_slice,
                          const GrayImage& input, const PcaModel* model = nullptr,
                          const LbpConfig& lbp = {});

// Inverse-error weights over the `top_n` smallest errors (ties to the lower
// id). A zero error collapses the support to that model. Error ratios are
// snapped to a 2^-28 grid so rescaling the errors leaves the result
// bit-identical.
WeightVector select_weights(const ErrorVector& errors, std::size_t top_n);

struct SimilarityConfig {
  std::array<Method, 4> methods{Method::lbp, Method::ssim, Method::ssim, Method::pca};
  PcaOptions pca;
  LbpConfig lbp;
  std::size_t top_n = 3;

  Method method(Region r) const;
};

// PCA models for every region whose method needs one (indexed by region slot).
struct RegionModels {
  std::array<std::optional<PcaModel>, 4> models;
  LbpConfig lbp;
};

RegionModels fit_region_models(const RenderedRegionDB& db, const SimilarityConfig& cfg);
void save_region_models(const RegionModels& models, const std::filesystem::path& dir);
RegionModels load_region_models(const std::filesystem::path& dir, const SimilarityConfig& cfg);

}  // namespace headrecon
