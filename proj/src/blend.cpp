#include "headrecon/blend.hpp"

#include <cmath>
#include <limits>

#include "headrecon/error.hpp"
#include "headrecon/render.hpp"

namespace headrecon {

void TransitionWeightParams::validate() const {
  if (!(x0 > 0.0) || !(p > 0.0)) throw Error("transition weight needs x0 > 0 and p > 0");
}

double twf_raw(double delta, const TransitionWeightParams& params) {
  if (std::isinf(delta)) return params.a;
  return params.a - params.b / (1.0 + std::pow(delta / params.x0, params.p));
}

double twf(double delta, const TransitionWeightParams& params) {
  return std::clamp(twf_raw(delta, params), 0.0, 1.0);
}

HeadMesh combine_blendshape(std::span<const HeadMesh> models, const WeightVector& weights) {
  if (models.empty()) throw Error("no models to blend");
  if (weights.weights.size() != models.size()) throw Error("weight count does not match model count");
  if (weights.support.empty()) throw Error("empty weight support");
  for (const auto& m : models) {
    if (!same_topology(m, models.front())) throw Error("blendshape topology mismatch");
  }
  HeadMesh out = models.front();
  for (auto& v : out.vertices) v.setZero();
  for (const std::size_t i : weights.support) {
    const double w = weights.weights.at(i);
    const auto& src = models[i].vertices;
    for (std::size_t v = 0; v < out.vertices.size(); ++v) out.vertices[v] += w * src[v];
  }
  return out;
}

HeadMesh attach_region(const HeadMesh& base, const HeadMesh& added, std::span<const int> added_indices,
                       std::span<const int> base_indices, const TransitionWeightParams& params,
                       SeamBlend* seam) {
  params.validate();
  if (!same_topology(base, added)) throw Error("attach_region topology mismatch");
  const auto overlap = set_intersection(added_indices, base_indices);
  if (overlap.empty()) throw Error("empty overlap between added and base regions");

  Vec3 shift = Vec3::Zero();
  for (const int i : overlap) shift += base.vertices[i] - added.vertices[i];
  shift /= static_cast<double>(overlap.size());
  const Vec3 half_shift = 0.5 * shift;

  std::vector<Vec3> shifted;
  shifted.reserve(added_indices.size());
  Vec2 lo = Vec2::Constant(std::numeric_limits<double>::infinity());
  Vec2 hi = -lo;
  Vec2 mean = Vec2::Zero();
  for (const int i : added_indices) {
    const Vec3 p = added.vertices[i] + half_shift;
    shifted.push_back(p);
    lo = lo.cwiseMin(p.head<2>());
    hi = hi.cwiseMax(p.head<2>());
    mean += p.head<2>();
  }
  mean /= static_cast<double>(added_indices.size());
  const Vec2 extents = hi - lo;
  if (!(extents.x() > 0.0) || !(extents.y() > 0.0)) throw Error("added region has zero extent");

  HeadMesh out = base;
  std::vector<double> distances(added_indices.size());
  for (std::size_t k = 0; k < added_indices.size(); ++k) {
    const int j = added_indices[k];
    const Vec2 d = (mean - shifted[k].head<2>()).cwiseQuotient(extents);
    distances[k] = d.norm();
    const double t = twf(distances[k], params);
    out.vertices[j] = base.vertices[j] + t * (shifted[k] - base.vertices[j]);
  }

  if (seam != nullptr) {
    seam->shift = shift;
    seam->extents = extents;
    seam->region_mean = mean;
    seam->distances = std::move(distances);
  }
  return out;
}

HeadMesh build_blended_model(const std::array<RegionSelection, 4>& selections, const RegionMap& regions,
                             const TransitionWeightParams& params) {
  auto blend_of = [&](Region r) {
    const auto& sel = selections.at(region_slot(r));
    return combine_blendshape(sel.models, sel.weights);
  };
  HeadMesh model = blend_of(Region::face);
  std::vector<int> covered = regions.indices(Region::face);
  // Nose overlaps eyes and mouth, so it goes first; eyes and mouth are disjoint.
  for (const Region r : {Region::nose, Region::eyes, Region::mouth}) {
    const auto& indices = regions.indices(r);
    model = attach_region(model, blend_of(r), indices, covered, params);
    covered = set_union(covered, indices);
  }
  return model;
}

}  // namespace headrecon
