#pragma once

#include <array>
#include <span>
#include <vector>

#include "headrecon/mesh.hpp"
#include "headrecon/similarity.hpp"

namespace headrecon {

// Constants of the transition weight a - b / (1 + (delta / x0)^p).
struct TransitionWeightParams {
  double a = 1.013;
  double b = 1.019;
  double x0 = 0.264;
  double p = 3.244;

  void validate() const;
};

double twf_raw(double delta, const TransitionWeightParams& params = {});
// twf_raw clamped to [0, 1].
double twf(double delta, const TransitionWeightParams& params = {});

// Seam quantities of one attach_region call.
struct SeamBlend {
  Vec3 shift = Vec3::Zero();  // mean over the overlap of (base - added)
  Vec2 extents = Vec2::Zero();  // X/Y extent of the shifted added region
  Vec2 region_mean = Vec2::Zero();  // X/Y mean of the shifted added region
  std::vector<double> distances;  // normalized delta per added-region vertex
};

// Per-vertex sum of weights[i] * models[i] over the weight support. Faces
// and UVs come from the first model.
HeadMesh combine_blendshape(std::span<const HeadMesh> models, const WeightVector& weights);

// Attaches the added region to the base: shifts the added region by half the
// mean overlap offset, then blends every added-region vertex with the base
// using twf of its normalized X/Y distance from the region mean. Vertices
// outside `added_indices` keep their base positions.
HeadMesh attach_region(const HeadMesh& base, const HeadMesh& added, std::span<const int> added_indices,
                       std::span<const int> base_indices, const TransitionWeightParams& params = {},
                       SeamBlend* seam = nullptr);

// Models and weights chosen for one region.
struct RegionSelection {
  std::span<const HeadMesh> models;
  WeightVector weights;
};

// Face blendshape as the base, then nose, eyes and mouth attached in turn.
// `selections` is indexed by region slot.
HeadMesh build_blended_model(const std::array<RegionSelection, 4>& selections, const RegionMap& regions,
                             const TransitionWeightParams& params = {});

}  // namespace headrecon
