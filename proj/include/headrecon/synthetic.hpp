#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "headrecon/image.hpp"
#include "headrecon/mesh.hpp"
#include "headrecon/render.hpp"
#include "headrecon/texture.hpp"

namespace headrecon {

// Shape coefficients of one synthetic head. Every value is a multiplier
// around 1 except jaw_taper, which narrows the lower face.
struct SyntheticHeadParams {
  double head_width = 1.0;
  double head_height = 1.0;
  double head_depth = 1.0;
  double nose_length = 1.0;
  double nose_width = 1.0;
  double eye_spacing = 1.0;
  double eye_size = 1.0;
  double mouth_width = 1.0;
  double mouth_thickness = 1.0;
  double jaw_taper = 0.1;

  // Throws Error when a coefficient leaves its sampling range.
  void validate() const;
};

// Deterministic uniform draw of every coefficient from its range.
SyntheticHeadParams sample_head_params(std::uint64_t seed);

// Template grid: 60 latitude rings of 91 vertices (the first and last column
// coincide at the back of the head) plus two poles.
inline constexpr int kTemplateRings = 60;
inline constexpr int kTemplateColumns = 91;
inline constexpr int kTemplateVertexCount = kTemplateRings * kTemplateColumns + 2;

HeadMesh make_synthetic_head(const SyntheticHeadParams& params);

// Fixed per-template data shared by every synthetic head.
LandmarkVertexMap synthetic_landmark_map();
RegionMap synthetic_region_map();
UvLandmarks synthetic_uv_landmarks();

// Procedural skin texture (smooth tone, coarse noise, darker brows, eyes and
// lips) on the shared UV map.
RgbImage synthetic_texture(std::uint64_t seed, int size = kAtlasSize);

struct SyntheticDatabase {
  std::vector<std::string> ids;
  std::vector<SyntheticHeadParams> params;
  std::vector<HeadMesh> meshes;
  std::vector<std::uint64_t> texture_seeds;
  RegionMap regions;
  LandmarkVertexMap lmap;
  UvLandmarks uv;
};

// Geometry and metadata only; textures are produced on demand from
// texture_seeds.
SyntheticDatabase make_synthetic_db(std::uint64_t seed, int count);

// Writes a database directory:
//   manifest.json, regions.json, landmark_map.json, uv_landmarks.json,
//   meshes/<id>.obj, textures/<id>.png, average_texture.png
// Same (seed, count, texture_size) gives byte-identical files.
void gen_synthetic_db(std::uint64_t seed, int count, const std::filesystem::path& dir,
                      int texture_size = kAtlasSize, int workers = 1);

// One input frame of a head: an 8-bit frame plus its projected landmarks.
struct SyntheticFrame {
  RgbImage image;
  LandmarkSet landmarks;
};

// Textured (or shading-only) render of `mesh` turned by `yaw_deg`.
SyntheticFrame render_input_frame(const HeadMesh& mesh, const LandmarkVertexMap& lmap,
                                  const RgbImage* texture, double yaw_deg, const RenderConfig& cfg,
                                  const std::string& frame_id);

// Writes frames/<id>.png and landmarks/<id>.json under `dir`.
void save_input_frames(std::span<const SyntheticFrame> frames, const std::filesystem::path& dir);

}  // namespace headrecon
