#include "headrecon/morph.hpp"

#include <cmath>

#include <Eigen/Dense>

#include "headrecon/error.hpp"

namespace headrecon {

FeatureMask feature_mask(std::initializer_list<std::pair<int, int>> ranges) {
  FeatureMask mask;
  for (const auto& [first, last] : ranges) {
    if (first < 1 || last > kLandmarkCount || first > last) throw Error("bad feature range");
    for (int i = first; i <= last; ++i) mask.set(static_cast<std::size_t>(i - 1));
  }
  return mask;
}

std::vector<MorphPass> MorphSchedule::default_passes() {
  return {
      {1.0, feature_mask({{1, 68}})},
      {0.45, feature_mask({{18, 68}})},
      {0.2, feature_mask({{32, 36}, {37, 48}, {49, 49}, {55, 55}, {61, 61}, {65, 65}})},
  };
}

void MorphSchedule::validate() const {
  if (passes.empty()) throw Error("morph schedule needs at least one pass");
  for (const auto& pass : passes) {
    if (!(pass.k > 0.0)) throw Error("morph pass k must be positive");
    if (pass.mask.none()) throw Error("morph pass mask is empty");
  }
}

std::array<double, kLandmarkCount> default_sigmas() {
  std::array<double, kLandmarkCount> sigma{};
  for (int i = 1; i <= kLandmarkCount; ++i) {
    double s = 0.6;
    if (i <= 17) s = 2.0;
    else if (i <= 27) s = 1.2;
    else if (i <= 36) s = 0.8;
    else if (i <= 48) s = 0.5;
    sigma[static_cast<std::size_t>(i - 1)] = s;
  }
  return sigma;
}

namespace {

// awf with sigma^2 k folded into `scale`.
double awf_scaled(double distance, double scale) {
  return 1.0 - 1.0 / (1.0 + std::exp((-distance / scale + 0.5) * 7.0));
}

}  // namespace

double awf(double distance, double sigma, double k) { return awf_scaled(distance, sigma * sigma * k); }

MorphTargets landmarks_to_model_frame(const LandmarkSet& landmarks, const HeadMesh& mesh,
                                      const LandmarkVertexMap& lmap) {
  // Image y points down, model y up: p = (x, -y) before the similarity fit.
  std::array<Vec2, kLandmarkCount> src;
  std::array<Vec2, kLandmarkCount> dst;
  Vec2 src_mean = Vec2::Zero();
  Vec2 dst_mean = Vec2::Zero();
  for (std::size_t i = 0; i < kLandmarkCount; ++i) {
    src[i] = Vec2(landmarks.points[i].x(), -landmarks.points[i].y());
    dst[i] = mesh.vertices.at(static_cast<std::size_t>(lmap.vertex_index[i])).head<2>();
    src_mean += src[i];
    dst_mean += dst[i];
  }
  src_mean /= kLandmarkCount;
  dst_mean /= kLandmarkCount;

  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  double num = 0.0;
  for (std::size_t i = 0; i < kLandmarkCount; ++i) {
    const Vec2 ds = src[i] - src_mean;
    cov += ds * ds.transpose();
    num += ds.dot(dst[i] - dst_mean);
  }
  // Smaller eigenvalue of the 2x2 scatter: zero for collinear landmarks.
  const double tr = cov.trace();
  const double det = cov.determinant();
  const double disc = std::sqrt(std::max(0.0, tr * tr / 4.0 - det));
  const double minor = tr / 2.0 - disc;
  if (!(tr > 1e-14) || !(minor > 1e-9 * tr)) throw Error("degenerate landmark spread");
  const double scale = num / tr;
  if (!(scale > 0.0)) throw Error("degenerate landmark spread");
  const Vec2 shift = dst_mean - scale * src_mean;

  MorphTargets targets;
  for (std::size_t i = 0; i < kLandmarkCount; ++i) targets[i] = scale * src[i] + shift;
  return targets;
}

HeadMesh morph_pass(const HeadMesh& mesh, const MorphTargets& targets, const LandmarkVertexMap& lmap,
                    double k, const FeatureMask& mask, MorphPassStats* stats) {
  if (!(k > 0.0)) throw Error("morph pass k must be positive");
  struct Feature {
    Vec2 target;
    Vec2 offset;
    double scale;  // sigma^2 k
  };
  std::vector<Feature> features;
  double max_offset = 0.0;
  for (std::size_t i = 0; i < kLandmarkCount; ++i) {
    if (!mask.test(i)) continue;
    const Vec2 current = mesh.vertices.at(static_cast<std::size_t>(lmap.vertex_index[i])).head<2>();
    const Vec2 offset = targets[i] - current;
    features.push_back({targets[i], offset, lmap.sigma[i] * lmap.sigma[i] * k});
    max_offset = std::max(max_offset, offset.norm());
  }

  HeadMesh out = mesh;
  double max_move = 0.0;
  for (std::size_t j = 0; j < mesh.vertices.size(); ++j) {
    const Vec2 pos = mesh.vertices[j].head<2>();
    Vec2 sum = Vec2::Zero();
    double weight = 0.0;
    for (const auto& f : features) {
      const double d = (f.target - pos).norm();
      const double w = awf_scaled(d, f.scale);
      sum += w * f.offset;
      weight += w;
    }
    const Vec2 move = weight > 1.0 ? Vec2(sum / weight) : sum;
    // Skip exact zeros so -0.0 coordinates stay bit-identical.
    if (move.x() != 0.0) out.vertices[j].x() += move.x();
    if (move.y() != 0.0) out.vertices[j].y() += move.y();
    max_move = std::max(max_move, move.norm());
  }
  if (stats != nullptr) {
    stats->max_displacement = max_move;
    stats->max_feature_offset = max_offset;
  }
  return out;
}

HeadMesh morph_to_targets(const HeadMesh& mesh, const MorphTargets& targets, const LandmarkVertexMap& lmap,
                          const MorphSchedule& schedule) {
  schedule.validate();
  HeadMesh out = mesh;
  for (const auto& pass : schedule.passes) out = morph_pass(out, targets, lmap, pass.k, pass.mask);
  return out;
}

HeadMesh morph(const HeadMesh& mesh, const LandmarkSet& landmarks, const LandmarkVertexMap& lmap,
               const MorphSchedule& schedule) {
  return morph_to_targets(mesh, landmarks_to_model_frame(landmarks, mesh, lmap), lmap, schedule);
}

}  // namespace headrecon
