#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "headrecon/image.hpp"
#include "headrecon/mesh.hpp"

namespace headrecon {

// Directional light. `direction` is the direction the light travels (from
// the light toward the head); the shading term uses -direction.
struct DirectionalLight {
  Vec3 direction = Vec3(0.0, 0.0, -1.0);
  double intensity = 1.0;
};

// Frontal perspective camera on +Z looking at the origin.
struct RenderConfig {
  int image_size = 512;
  double fov_deg = 20.0;
  double camera_distance = 8.0;
  std::vector<DirectionalLight> lights = default_lights();
  double albedo = 1.0;

  // Front, left, right, top and a lower-front fill, all aimed at the head
  // center.
  static std::vector<DirectionalLight> default_lights();

  // Throws Error on non-unit light directions, negative intensities, a field
  // of view outside (0, 120) degrees or a non-positive image size.
  void validate() const;
};

// Continuous pixel position of a model-space point.
Vec2 project_point(const Vec3& p, const RenderConfig& cfg);

// Rotation about +Y by `yaw_deg` degrees (right-handed).
HeadMesh rotate_yaw(const HeadMesh& mesh, double yaw_deg);

// Normalized image positions of the landmark vertices of `mesh`.
LandmarkSet project_landmarks(const HeadMesh& mesh, const LandmarkVertexMap& lmap,
                              const RenderConfig& cfg, HeadRotation rotation = {},
                              std::string frame_id = "frame");

// Lambertian grayscale render with a depth buffer and back-face culling;
// background is 0. Quads are split into two triangles internally.
// Throws Error when any vertex is at or behind the camera.
GrayImage render_frontal(const HeadMesh& mesh, const RenderConfig& cfg);

// render_frontal as an 8-bit RGB frame, exactly as it reads back from PNG.
RgbImage render_frontal_frame(const HeadMesh& mesh, const RenderConfig& cfg);

// Same rasterizer, with the shading term multiplying a per-vertex-UV texture.
RgbImage render_textured(const HeadMesh& mesh, const RgbImage& texture, const RenderConfig& cfg);

inline constexpr std::size_t region_slot(Region r) { return static_cast<std::size_t>(r); }

// Pixel rectangles for the four active regions, indexed by region_slot.
struct RegionBoxes {
  std::array<PixelRect, 4> boxes{};

  const PixelRect& operator[](Region r) const { return boxes.at(region_slot(r)); }
  PixelRect& operator[](Region r) { return boxes.at(region_slot(r)); }

  friend bool operator==(const RegionBoxes&, const RegionBoxes&) = default;
};

using RegionImages = std::array<GrayImage, 4>;

RegionImages crop_regions(const GrayImage& image, const RegionBoxes& boxes);

struct RegionLayoutConfig {
  int canvas_size = 192;
  double landmark_width = 120.0;  // canvas pixels spanned by the landmark box
  // Comparison sizes (width, height) per region slot: eyes, nose, mouth, face.
  std::array<std::array<int, 2>, 4> sizes{{{128, 48}, {64, 96}, {96, 48}, {128, 128}}};
  std::optional<RegionBoxes> boxes;  // explicit override of the derived boxes
};

// Canonical canvas every face (database render or input frame) is aligned to
// before cropping, plus the fixed region boxes on that canvas.
struct RegionLayout {
  int canvas_size = 0;
  std::array<Vec2, kLandmarkCount> canonical{};  // canvas pixels
  RegionBoxes boxes;

  friend bool operator==(const RegionLayout&, const RegionLayout&) = default;
};

// Canonical landmarks are the mean of `landmarks`, scaled and centered on the
// canvas; boxes are centered on the canonical eyes/brows, nose, mouth and
// landmark box and clamped inside the canvas.
RegionLayout make_region_layout(std::span<const LandmarkSet> landmarks,
                                const RegionLayoutConfig& cfg);

// Scale + translation mapping landmark pixels onto canonical pixels
// (least squares), applied by inverse bilinear resampling.
GrayImage align_face(const GrayImage& frame, const LandmarkSet& landmarks,
                     const RegionLayout& layout);

// Grayscale conversion, alignment, crop and 8-bit quantization: the single
// path shared by database renders and input frames.
RegionImages extract_regions(const RgbImage& frame, const LandmarkSet& landmarks,
                             const RegionLayout& layout);

struct RenderedRegionDB {
  std::vector<std::string> model_ids;
  RegionLayout layout;
  std::array<std::vector<GrayImage>, 4> images;  // [region slot][model]

  std::size_t model_count() const { return model_ids.size(); }
  const std::vector<GrayImage>& region(Region r) const { return images.at(region_slot(r)); }
};

// Frontal render of every model (as an 8-bit frame), aligned with its own
// projected landmarks and cut into the four regions. Output order follows
// `meshes` regardless of `workers`.
RenderedRegionDB build_region_db(std::span<const HeadMesh> meshes,
                                 std::span<const std::string> model_ids,
                                 const LandmarkVertexMap& lmap, const RenderConfig& cfg,
                                 const RegionLayoutConfig& layout_cfg, int workers = 1);

// `<model_id>_<region>.png` per image plus render_db.json.
void save_region_db(const RenderedRegionDB& db, const std::filesystem::path& dir);
RenderedRegionDB load_region_db(const std::filesystem::path& dir);

}  // namespace headrecon
