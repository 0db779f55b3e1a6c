#pragma once

#include <array>
#include <bitset>
#include <vector>

#include "headrecon/mesh.hpp"

namespace headrecon {

using FeatureMask = std::bitset<kLandmarkCount>;
using MorphTargets = std::array<Vec2, kLandmarkCount>;

// Feature mask from 1-based inclusive ranges, e.g. {{37, 48}, {32, 36}}.
FeatureMask feature_mask(std::initializer_list<std::pair<int, int>> ranges);

struct MorphPass {
  double k = 1.0;
  FeatureMask mask;
};

// Ordered passes from broad to fine.
struct MorphSchedule {
  std::vector<MorphPass> passes = default_passes();

  // k = 1.0 with every feature, 0.45 without the jawline, 0.2 with eyes,
  // nostrils and mouth corners only.
  static std::vector<MorphPass> default_passes();
  void validate() const;
};

// Default drop-off per feature: jaw 2.0, brows 1.2, nose 0.8, eyes 0.5,
// mouth 0.6.
std::array<double, kLandmarkCount> default_sigmas();

// 1 - 1 / (1 + exp((-d / (sigma^2 k) + 0.5) * 7)).
double awf(double distance, double sigma, double k);

// Maps normalized landmarks (y down) to model X/Y (y up) with a uniform
// scale and translation fitted by least squares against the mapped
// vertices of `mesh`. Throws Error on collinear or coincident landmarks.
MorphTargets landmarks_to_model_frame(const LandmarkSet& landmarks, const HeadMesh& mesh,
                                      const LandmarkVertexMap& lmap);

// Per-pass diagnostics.
struct MorphPassStats {
  double max_displacement = 0.0;  // largest vertex move
  double max_feature_offset = 0.0;  // max |f_i| over active features
};

// One pass: every vertex moves by the awf-weighted sum of feature offsets,
// normalized when the weights sum past 1. Z is untouched.
HeadMesh morph_pass(const HeadMesh& mesh, const MorphTargets& targets, const LandmarkVertexMap& lmap,
                    double k, const FeatureMask& mask, MorphPassStats* stats = nullptr);

// Targets are fitted once on the input mesh; offsets are recomputed from the
// current mesh before each pass.
HeadMesh morph(const HeadMesh& mesh, const LandmarkSet& landmarks, const LandmarkVertexMap& lmap,
               const MorphSchedule& schedule);
HeadMesh morph_to_targets(const HeadMesh& mesh, const MorphTargets& targets, const LandmarkVertexMap& lmap,
                          const MorphSchedule& schedule);

}  // namespace headrecon
