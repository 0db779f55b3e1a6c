#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace headrecon {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Quad = std::array<int, 4>;

inline constexpr int kLandmarkCount = 68;

// Fixed-topology quad mesh. Frontal frame: +X right, +Y up, +Z toward the
// camera. Every mesh of one database shares the face list and UV table, and
// vertex i is the same anatomical point in all of them.
struct HeadMesh {
  std::vector<Vec3> vertices;
  std::vector<Quad> faces;
  std::vector<Vec2> uvs;  // one per vertex

  std::size_t vertex_count() const { return vertices.size(); }

  friend bool operator==(const HeadMesh&, const HeadMesh&) = default;
};

// Throws Error when faces reference missing vertices or the UV table size
// differs from the vertex count.
void check_mesh(const HeadMesh& mesh);

// True when both meshes have the same vertex count, faces and UVs.
bool same_topology(const HeadMesh& a, const HeadMesh& b);

enum class Region { eyes, nose, mouth, face, unused };

inline constexpr std::array<Region, 4> kActiveRegions{Region::eyes, Region::nose, Region::mouth,
                                                      Region::face};
inline constexpr std::array<Region, 5> kAllRegions{Region::eyes, Region::nose, Region::mouth,
                                                   Region::face, Region::unused};

std::string_view region_name(Region region);
Region region_from_name(std::string_view name);

// Sorted vertex-index sets per region.
class RegionMap {
 public:
  RegionMap() = default;

  // Sorts and deduplicates.
  void set(Region region, std::vector<int> indices);
  const std::vector<int>& indices(Region region) const {
    return sets_[static_cast<std::size_t>(region)];
  }

  // Sorted union of the given regions.
  std::vector<int> merged(std::span<const Region> regions) const;
  std::vector<int> overlap(Region a, Region b) const;

  // Fills Unused with every vertex in [0, vertex_count) outside the four
  // active regions.
  void assign_unused(std::size_t vertex_count);

  friend bool operator==(const RegionMap&, const RegionMap&) = default;

 private:
  std::array<std::vector<int>, 5> sets_;
};

std::vector<int> set_intersection(std::span<const int> a, std::span<const int> b);
std::vector<int> set_union(std::span<const int> a, std::span<const int> b);

// Mesh vertex assigned to each of the 68 feature points, with the per-feature
// drop-off used by the morph.
struct LandmarkVertexMap {
  std::array<int, kLandmarkCount> vertex_index{};
  std::array<double, kLandmarkCount> sigma{};

  friend bool operator==(const LandmarkVertexMap&, const LandmarkVertexMap&) = default;
};

struct HeadRotation {
  double yaw = 0.0;  // degrees, right-handed about +Y
  double pitch = 0.0;
  double roll = 0.0;

  friend bool operator==(const HeadRotation&, const HeadRotation&) = default;
};

// 68 feature points normalized to [0, 1] over the full frame (x right,
// y down), plus the head rotation reported for the frame.
struct LandmarkSet {
  std::array<Vec2, kLandmarkCount> points;
  HeadRotation rotation;
  std::string frame_id;

  friend bool operator==(const LandmarkSet&, const LandmarkSet&) = default;
};

// Throws Error unless every point lies in [0, 1]^2.
void check_landmarks(const LandmarkSet& landmarks);

// Mesh text format: `v x y z`, `vt u v`, `f a/a b/b c/c d/d` (1-based).
HeadMesh load_head_mesh(const std::filesystem::path& path);
HeadMesh parse_head_mesh(std::string_view text);
void save_head_mesh(const HeadMesh& mesh, const std::filesystem::path& path);
std::string format_head_mesh(const HeadMesh& mesh);

RegionMap load_region_map(const std::filesystem::path& path);
void save_region_map(const RegionMap& regions, const std::filesystem::path& path);

LandmarkVertexMap load_landmark_map(const std::filesystem::path& path);
void save_landmark_map(const LandmarkVertexMap& map, const std::filesystem::path& path);

LandmarkSet load_landmarks(const std::filesystem::path& path);
void save_landmarks(const LandmarkSet& landmarks, const std::filesystem::path& path);

struct ValidationCheck {
  std::string name;
  bool passed = true;
  std::string detail;
};

struct ValidationReport {
  std::vector<ValidationCheck> checks;

  bool ok() const;
  const ValidationCheck* find(std::string_view name) const;
};

// Database consistency checks. `names` (optional) labels meshes in failure
// messages; otherwise meshes are named by position.
ValidationReport validate_database(std::span<const HeadMesh> meshes, const RegionMap& regions,
                                   const LandmarkVertexMap& lmap,
                                   std::span<const std::string> names = {});

}  // namespace headrecon
