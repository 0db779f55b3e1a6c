#include "headrecon/similarity.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <numbers>
#include <numeric>

#include <Eigen/SVD>
#include <nlohmann/json.hpp>
#include <zlib.h>

#include "headrecon/error.hpp"
#include "headrecon/render.hpp"

namespace headrecon {
namespace {

static_assert(std::endian::native == std::endian::little, "PCA sidecars assume little-endian doubles");

constexpr double kRankTolerance = 1e-10;
constexpr double kRatioGrid = 268435456.0;  // 2^28

// Gaussian window weights, normalized to sum 1.
std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> w(static_cast<std::size_t>(size));
  const double c = (size - 1) / 2.0;
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    w[i] = std::exp(-(i - c) * (i - c) / (2.0 * sigma * sigma));
    sum += w[i];
  }
  for (auto& v : w) v /= sum;
  return w;
}

// Valid-mode separable filtering: output is (W - k + 1) x (H - k + 1).
std::vector<double> filter_valid(const std::vector<double>& src, int width, int height,
                                 const std::vector<double>& kernel) {
  const int k = static_cast<int>(kernel.size());
  const int ow = width - k + 1;
  const int oh = height - k + 1;
  std::vector<double> rows(static_cast<std::size_t>(ow) * height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < k; ++i) acc += kernel[i] * src[static_cast<std::size_t>(y) * width + x + i];
      rows[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(ow) * oh);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < k; ++i) acc += kernel[i] * rows[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  }
  return out;
}

int circular_transitions(unsigned code, int bits) {
  int count = 0;
  for (int i = 0; i < bits; ++i) {
    const unsigned a = (code >> i) & 1U;
    const unsigned b = (code >> ((i + 1) % bits)) & 1U;
    count += static_cast<int>(a != b);
  }
  return count;
}

// Uniform-pattern label table: uniform codes get consecutive labels in
// ascending code order; everything else shares the last bin.
const std::vector<int>& uniform_table(int bits) {
  static const std::vector<int> table8 = [] {
    std::vector<int> t(256);
    int next = 0;
    for (unsigned c = 0; c < 256; ++c) t[c] = circular_transitions(c, 8) <= 2 ? next++ : -1;
    for (auto& v : t) if (v < 0) v = next;
    return t;
  }();
  static const std::vector<int> table16 = [] {
    std::vector<int> t(65536);
    int next = 0;
    for (unsigned c = 0; c < 65536; ++c) t[c] = circular_transitions(c, 16) <= 2 ? next++ : -1;
    for (auto& v : t) if (v < 0) v = next;
    return t;
  }();
  return bits == 8 ? table8 : table16;
}

double snap_offset(double v) {
  const double r = std::round(v);
  return std::abs(v - r) < 1e-9 ? r : v;
}

void write_doubles(std::string& buf, const double* data, std::size_t count) {
  buf.append(reinterpret_cast<const char*>(data), count * sizeof(double));
}

}  // namespace

Eigen::VectorXd vectorize(const GrayImage& image) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(image.size()));
  auto px = image.pixels();
  for (std::size_t i = 0; i < px.size(); ++i) v[static_cast<Eigen::Index>(i)] = px[i];
  return v;
}

PcaModel pca_fit(std::span<const Eigen::VectorXd> samples, const PcaOptions& options) {
  if (samples.size() < 2) throw Error("PCA needs at least two samples");
  const Eigen::Index dim = samples.front().size();
  if (dim == 0) throw Error("PCA samples are empty");
  for (const auto& s : samples) {
    if (s.size() != dim) throw Error("PCA sample dimension mismatch");
  }
  const auto n = static_cast<Eigen::Index>(samples.size());

  PcaModel model;
  model.mean = Eigen::VectorXd::Zero(dim);
  for (const auto& s : samples) model.mean += s;
  model.mean /= static_cast<double>(n);

  Eigen::MatrixXd centered(dim, n);
  for (Eigen::Index i = 0; i < n; ++i) centered.col(i) = samples[static_cast<std::size_t>(i)] - model.mean;

  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinU);
  const Eigen::VectorXd& sv = svd.singularValues();
  Eigen::Index rank = 0;
  const double top = sv.size() > 0 ? sv[0] : 0.0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (top > 0.0 && sv[i] > kRankTolerance * top) ++rank;
  }
  rank = std::min(rank, n - 1);

  Eigen::Index keep = 0;
  if (options.retained) {
    keep = static_cast<Eigen::Index>(*options.retained);
    if (keep > rank) {
      std::clog << "warning: PCA retained count " << keep << " exceeds data rank " << rank
                << "; clamped\n";
      keep = rank;
    }
  } else {
    const double total = sv.head(rank).squaredNorm();
    double acc = 0.0;
    while (keep < rank && (total <= 0.0 || acc / total < options.variance)) {
      acc += sv[keep] * sv[keep];
      ++keep;
    }
    keep = std::min<Eigen::Index>(keep, static_cast<Eigen::Index>(options.cap));
  }

  model.components = svd.matrixU().leftCols(keep).transpose();
  for (Eigen::Index k = 0; k < keep; ++k) {
    // Deterministic sign: largest-magnitude entry positive.
    Eigen::Index arg = 0;
    model.components.row(k).cwiseAbs().maxCoeff(&arg);
    if (model.components(k, arg) < 0.0) model.components.row(k) *= -1.0;
  }
  model.eigenvalues = sv.head(keep).array().square() / static_cast<double>(n - 1);
  model.training_scores.resize(n, keep);
  for (Eigen::Index i = 0; i < n; ++i) {
    model.training_scores.row(i) = pca_score(model, samples[static_cast<std::size_t>(i)]).transpose();
  }
  return model;
}

PcaModel pca_fit(std::span<const GrayImage> images, const PcaOptions& options) {
  if (images.empty()) throw Error("PCA needs at least two samples");
  std::vector<Eigen::VectorXd> samples;
  samples.reserve(images.size());
  for (const auto& img : images) {
    if (!img.same_shape(images.front())) throw Error("PCA image dimension mismatch");
    samples.push_back(vectorize(img));
  }
  return pca_fit(samples, options);
}

Eigen::VectorXd pca_score(const PcaModel& model, const Eigen::VectorXd& sample) {
  if (sample.size() != model.mean.size()) throw Error("PCA score dimension mismatch");
  return model.components * (sample - model.mean);
}

Eigen::VectorXd pca_score(const PcaModel& model, const GrayImage& image) {
  return pca_score(model, vectorize(image));
}

void save_pca_model(const PcaModel& model, const std::filesystem::path& path) {
  std::string payload;
  write_doubles(payload, model.mean.data(), static_cast<std::size_t>(model.mean.size()));
  write_doubles(payload, model.eigenvalues.data(), static_cast<std::size_t>(model.eigenvalues.size()));
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> comps = model.components;
  write_doubles(payload, comps.data(), static_cast<std::size_t>(comps.size()));
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> scores = model.training_scores;
  write_doubles(payload, scores.data(), static_cast<std::size_t>(scores.size()));

  nlohmann::json header;
  header["format"] = "headrecon-pca";
  header["version"] = 1;
  header["dimension"] = model.dimension();
  header["retained"] = model.retained();
  header["samples"] = model.sample_count();
  header["checksum"] = crc32(0L, reinterpret_cast<const Bytef*>(payload.data()),
                             static_cast<uInt>(payload.size()));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << header.dump() << '\n';
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw Error("write failed: " + path.string());
}

PcaModel load_pca_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::string header_line;
  std::getline(in, header_line);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_line);
  } catch (const nlohmann::json::exception& e) {
    throw Error(path.string() + ": malformed PCA header: " + e.what());
  }
  if (header.value("format", "") != "headrecon-pca") throw Error(path.string() + ": not a PCA sidecar");
  const auto dim = header.at("dimension").get<Eigen::Index>();
  const auto keep = header.at("retained").get<Eigen::Index>();
  const auto n = header.at("samples").get<Eigen::Index>();
  const std::string payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto expected = static_cast<std::size_t>(dim + keep + keep * dim + n * keep) * sizeof(double);
  if (payload.size() != expected) throw Error(path.string() + ": PCA payload size mismatch");
  const auto crc = crc32(0L, reinterpret_cast<const Bytef*>(payload.data()), static_cast<uInt>(payload.size()));
  if (crc != header.at("checksum").get<unsigned long>()) throw Error(path.string() + ": PCA checksum mismatch");

  const auto* data = reinterpret_cast<const double*>(payload.data());
  PcaModel model;
  model.mean = Eigen::Map<const Eigen::VectorXd>(data, dim);
  data += dim;
  model.eigenvalues = Eigen::Map<const Eigen::VectorXd>(data, keep);
  data += keep;
  model.components =
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(data, keep, dim);
  data += keep * dim;
  model.training_scores =
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(data, n, keep);
  return model;
}

double ssim(const GrayImage& a, const GrayImage& b, const SsimParams& params) {
  if (!a.same_shape(b)) throw Error("SSIM dimension mismatch");
  if (a.width() < params.window || a.height() < params.window) {
    throw Error("image smaller than the SSIM window");
  }
  const auto w = gaussian_window(params.window, params.sigma);
  const int width = a.width();
  const int height = a.height();
  const std::size_t count = a.size();
  std::vector<double> va(count), vb(count), aa(count), bb(count), ab(count);
  auto pa = a.pixels();
  auto pb = b.pixels();
  for (std::size_t i = 0; i < count; ++i) {
    va[i] = pa[i];
    vb[i] = pb[i];
    aa[i] = pa[i] * pa[i];
    bb[i] = pb[i] * pb[i];
    ab[i] = pa[i] * pb[i];
  }
  const auto mu_a = filter_valid(va, width, height, w);
  const auto mu_b = filter_valid(vb, width, height, w);
  const auto e_aa = filter_valid(aa, width, height, w);
  const auto e_bb = filter_valid(bb, width, height, w);
  const auto e_ab = filter_valid(ab, width, height, w);

  const double c1 = (params.k1 * params.dynamic_range) * (params.k1 * params.dynamic_range);
  const double c2 = (params.k2 * params.dynamic_range) * (params.k2 * params.dynamic_range);
  double sum = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma2 = mu_a[i] * mu_a[i];
    const double mb2 = mu_b[i] * mu_b[i];
    const double mab = mu_a[i] * mu_b[i];
    const double var_a = e_aa[i] - ma2;
    const double var_b = e_bb[i] - mb2;
    const double cov = e_ab[i] - mab;
    sum += ((2.0 * mab + c1) * (2.0 * cov + c2)) / ((ma2 + mb2 + c1) * (var_a + var_b + c2));
  }
  return sum / static_cast<double>(mu_a.size());
}

void LbpConfig::validate() const {
  if (neighbors != 8 && neighbors != 16) throw Error("LBP neighbours must be 8 or 16");
  if (radius < 1) throw Error("LBP radius must be >= 1");
  if (grid_x < 1 || grid_y < 1) throw Error("LBP grid must be at least 1x1");
}

int LbpConfig::bins() const {
  return uniform ? neighbors * (neighbors - 1) + 3 : 1 << neighbors;
}

int lbp_bin(unsigned code, const LbpConfig& cfg) {
  if (!cfg.uniform) return static_cast<int>(code);
  return uniform_table(cfg.neighbors).at(code);
}

Eigen::VectorXd lbp_descriptor(const GrayImage& image, const LbpConfig& cfg) {
  cfg.validate();
  const int r = cfg.radius;
  if (image.width() / cfg.grid_x < 2 * r + 1 || image.height() / cfg.grid_y < 2 * r + 1) {
    throw Error("image too small for the LBP grid");
  }
  const int cw = image.width() - 2 * r;
  const int ch = image.height() - 2 * r;
  const int p_count = cfg.neighbors;
  std::vector<double> dx(static_cast<std::size_t>(p_count)), dy(static_cast<std::size_t>(p_count));
  for (int p = 0; p < p_count; ++p) {
    const double angle = 2.0 * std::numbers::pi * p / p_count;
    dx[p] = snap_offset(r * std::cos(angle));
    dy[p] = snap_offset(-r * std::sin(angle));
  }

  const int bins = cfg.bins();
  Eigen::VectorXd desc = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(bins) * cfg.grid_x * cfg.grid_y);
  std::vector<int> cell_x(static_cast<std::size_t>(cw)), cell_y(static_cast<std::size_t>(ch));
  for (int gx = 0; gx < cfg.grid_x; ++gx) {
    const int lo = static_cast<int>(std::lround(static_cast<double>(gx) * cw / cfg.grid_x));
    const int hi = static_cast<int>(std::lround(static_cast<double>(gx + 1) * cw / cfg.grid_x));
    for (int x = lo; x < hi; ++x) cell_x[x] = gx;
  }
  for (int gy = 0; gy < cfg.grid_y; ++gy) {
    const int lo = static_cast<int>(std::lround(static_cast<double>(gy) * ch / cfg.grid_y));
    const int hi = static_cast<int>(std::lround(static_cast<double>(gy + 1) * ch / cfg.grid_y));
    for (int y = lo; y < hi; ++y) cell_y[y] = gy;
  }

  std::vector<int> cell_counts(static_cast<std::size_t>(cfg.grid_x * cfg.grid_y), 0);
  for (int y = 0; y < ch; ++y) {
    for (int x = 0; x < cw; ++x) {
      const int px = x + r;
      const int py = y + r;
      const double center = image.at(px, py);
      unsigned code = 0;
      for (int p = 0; p < p_count; ++p) {
        const double v = sample_bilinear(image, px + dx[p] + 0.5, py + dy[p] + 0.5);
        if (v >= center) code |= 1U << p;
      }
      const int cell = cell_y[y] * cfg.grid_x + cell_x[x];
      desc[static_cast<Eigen::Index>(cell) * bins + lbp_bin(code, cfg)] += 1.0;
      ++cell_counts[cell];
    }
  }
  for (int cell = 0; cell < cfg.grid_x * cfg.grid_y; ++cell) {
    if (cell_counts[cell] == 0) throw Error("image too small for the LBP grid");
    desc.segment(static_cast<Eigen::Index>(cell) * bins, bins) /= cell_counts[cell];
  }
  return desc;
}

std::string_view method_name(Method method) {
  switch (method) {
    case Method::pca: return "pca";
    case Method::ssim: return "ssim";
    case Method::lbp: return "lbp";
  }
  return "unknown";
}

Method method_from_name(std::string_view name) {
  for (const Method m : {Method::pca, Method::ssim, Method::lbp}) {
    if (method_name(m) == name) return m;
  }
  throw Error("unknown similarity method '" + std::string(name) + "'");
}

Method default_method(Region region) {
  switch (region) {
    case Region::eyes: return Method::lbp;
    case Region::nose:
    case Region::mouth: return Method::ssim;
    default: return Method::pca;
  }
}

Method SimilarityConfig::method(Region r) const { return methods.at(region_slot(r)); }

ErrorVector region_errors(Method method, std::span<const GrayImage> db_slice, const GrayImage& input,
                          const PcaModel* model, const LbpConfig& lbp) {
  ErrorVector out;
  out.method = method;
  out.errors.resize(db_slice.size());
  switch (method) {
    case Method::ssim:
      for (std::size_t m = 0; m < db_slice.size(); ++m) {
        out.errors[m] = std::max(0.0, 1.0 - ssim(db_slice[m], input));
      }
      break;
    case Method::pca:
    case Method::lbp: {
      if (model == nullptr) throw Error("method/model mismatch: no PCA model for " + std::string(method_name(method)));
      if (model->sample_count() != db_slice.size()) {
        throw Error("method/model mismatch: PCA model was fitted on a different database");
      }
      const Eigen::VectorXd sample = method == Method::pca ? vectorize(input) : lbp_descriptor(input, lbp);
      if (sample.size() != model->mean.size()) {
        throw Error("method/model mismatch: feature dimension differs from the PCA model");
      }
      const Eigen::VectorXd score = pca_score(*model, sample);
      for (std::size_t m = 0; m < db_slice.size(); ++m) {
        out.errors[m] = (model->training_scores.row(static_cast<Eigen::Index>(m)).transpose() - score).norm();
      }
      break;
    }
  }
  return out;
}

WeightVector select_weights(const ErrorVector& errors, std::size_t top_n) {
  if (top_n == 0) throw Error("top_n must be positive");
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < errors.errors.size(); ++i) {
    const double e = errors.errors[i];
    if (std::isnan(e) || e < 0.0) throw Error("errors must be non-negative");
    if (std::isfinite(e)) order.push_back(i);
  }
  if (order.empty()) throw Error("all errors are infinite");
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return errors.errors[a] < errors.errors[b];
  });
  order.resize(std::min(top_n, order.size()));

  WeightVector w;
  w.weights.assign(errors.errors.size(), 0.0);
  const double best = errors.errors[order.front()];
  if (best == 0.0) {
    w.weights[order.front()] = 1.0;
    w.support = {order.front()};
    return w;
  }
  // E_i^-1 / sum E_j^-1 rewritten as ratios to the best error.
  std::vector<double> ratio(order.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    ratio[k] = std::round(best / errors.errors[order[k]] * kRatioGrid) / kRatioGrid;
    sum += ratio[k];
  }
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (ratio[k] > 0.0) {
      w.weights[order[k]] = ratio[k] / sum;
      w.support.push_back(order[k]);
    }
  }
  std::sort(w.support.begin(), w.support.end());
  return w;
}

RegionModels fit_region_models(const RenderedRegionDB& db, const SimilarityConfig& cfg) {
  RegionModels out;
  out.lbp = cfg.lbp;
  for (const Region r : kActiveRegions) {
    const auto& slice = db.region(r);
    switch (cfg.method(r)) {
      case Method::pca:
        out.models[region_slot(r)] = pca_fit(std::span<const GrayImage>(slice), cfg.pca);
        break;
      case Method::lbp: {
        std::vector<Eigen::VectorXd> desc;
        desc.reserve(slice.size());
        for (const auto& img : slice) desc.push_back(lbp_descriptor(img, cfg.lbp));
        out.models[region_slot(r)] = pca_fit(desc, cfg.pca);
        break;
      }
      case Method::ssim:
        break;
    }
  }
  return out;
}

void save_region_models(const RegionModels& models, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const Region r : kActiveRegions) {
    const auto& m = models.models[region_slot(r)];
    if (m) save_pca_model(*m, dir / (std::string(region_name(r)) + ".pca"));
  }
}

RegionModels load_region_models(const std::filesystem::path& dir, const SimilarityConfig& cfg) {
  RegionModels out;
  out.lbp = cfg.lbp;
  for (const Region r : kActiveRegions) {
    if (cfg.method(r) == Method::ssim) continue;
    const auto path = dir / (std::string(region_name(r)) + ".pca");
    out.models[region_slot(r)] = load_pca_model(path);
  }
  return out;
}

}  // namespace headrecon
