#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "headrecon/image.hpp"
#include "headrecon/mesh.hpp"

namespace headrecon {

inline constexpr int kAtlasSize = 2048;
inline constexpr int kAnchorCount = 8;

enum class TextureSource : std::uint8_t { average, frame_left, frame_center, frame_right, blend };

// RGB texture on the shared UV map (v grows downward in the image) with a
// per-pixel record of where each value came from.
struct TextureAtlas {
  RgbImage pixels;
  std::vector<TextureSource> provenance;

  int size() const { return pixels.width(); }
};

TextureAtlas make_atlas(RgbImage pixels, TextureSource source = TextureSource::average);

// Where the 68 feature points sit on the UV map, eight border anchors that
// widen the warped area, and the skin reference polygon used for tone
// matching. All coordinates in [0, 1]^2.
struct UvLandmarks {
  std::array<Vec2, kLandmarkCount> points{};
  std::array<Vec2, kAnchorCount> anchors{};
  std::vector<Vec2> skin_region;

  void validate() const;
};

UvLandmarks load_uv_landmarks(const std::filesystem::path& path);
void save_uv_landmarks(const UvLandmarks& uv, const std::filesystem::path& path);

struct FramePickConfig {
  double side_yaw = 30.0;
  double window = 10.0;
};

// Indices into the frame list.
struct FramePick {
  std::optional<std::size_t> left;  // yaw near -side_yaw
  std::size_t center = 0;
  std::optional<std::size_t> right;  // yaw near +side_yaw
};

// Center = smallest |yaw|, which must lie within the window of 0. Sides are
// the frames closest to -/+ side_yaw inside the window; when either side has
// no candidate both are dropped and only the center is used. Ties go to the
// earlier frame.
FramePick pick_frames(std::span<const LandmarkSet> frames, const FramePickConfig& cfg = {});

// Convex hull (counter-clockwise in image coordinates), monotone chain.
std::vector<Vec2> convex_hull(std::vector<Vec2> points);
bool point_in_polygon(const Vec2& p, std::span<const Vec2> polygon);

// Per-channel lower median over pixels inside the landmark hull, excluding
// both eye polygons and the inner-mouth polygon.
Rgb median_skin_color(const RgbImage& frame, const LandmarkSet& landmarks);

// Per-channel lower median of the atlas inside a UV polygon.
Rgb polygon_median(const RgbImage& image, std::span<const Vec2> uv_polygon);

// Adds (target - median over the skin region) per channel, clamped to [0, 1].
TextureAtlas shift_average_texture(const TextureAtlas& average, std::span<const Vec2> skin_region,
                                   const Rgb& target);

// Delaunay triangulation; triangles as index triples, sorted.
std::vector<std::array<int, 3>> delaunay_triangulation(std::span<const Vec2> points);

// A frame resampled onto the UV map.
struct PartialTexture {
  RgbImage pixels;
  std::vector<std::uint8_t> mask;  // 1 where a triangle with image support covers the pixel
  double yaw = 0.0;
  TextureSource source = TextureSource::frame_center;
};

// Piecewise-affine warp of `frame` onto an atlas of `atlas_size` pixels over
// the Delaunay triangulation of the UV landmarks plus anchors. Anchor image
// positions come from the least-squares affine map UV -> image fitted on the
// 68 landmarks. Throws Error naming the triangle when its image-space
// triangle has zero area.
PartialTexture warp_to_uv(const RgbImage& frame, const LandmarkSet& landmarks, const UvLandmarks& uv,
                          int atlas_size = kAtlasSize, TextureSource source = TextureSource::frame_center);

// Merges partials center outward (per pixel, the covering frame with the
// smallest |yaw| wins; equal |yaw| goes to the lower yaw) and feathers the
// union into `base` over `feather` pixels from the coverage boundary. The
// area outside the atlas counts as uncovered.
TextureAtlas compose_texture(std::span<const PartialTexture> partials, const TextureAtlas& base,
                             int feather = 32);

// Feather weight min(1, d / feather) where d is the distance from a covered
// pixel center to the nearest uncovered one.
std::vector<double> feather_alpha(std::span<const std::uint8_t> mask, int width, int height, int feather);

}  // namespace headrecon
