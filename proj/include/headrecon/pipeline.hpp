#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "headrecon/config.hpp"
#include "headrecon/mesh.hpp"
#include "headrecon/render.hpp"
#include "headrecon/similarity.hpp"
#include "headrecon/texture.hpp"

namespace headrecon {

// A database directory as written by gen_synthetic_db.
struct HeadDatabase {
  std::filesystem::path dir;
  std::vector<std::string> ids;
  std::vector<HeadMesh> meshes;
  RegionMap regions;
  LandmarkVertexMap lmap;
  UvLandmarks uv;
};

// Loads and validates the manifest, meshes and shared tables.
HeadDatabase load_database(const std::filesystem::path& dir, int workers = 1);
RgbImage load_average_texture(const HeadDatabase& db);

// Region renders plus the PCA models the configured methods need.
struct RegionDatabase {
  RenderedRegionDB renders;
  RegionModels models;
};

RegionDatabase build_region_database(const HeadDatabase& db, const PipelineConfig& cfg);
void save_region_database(const RegionDatabase& rdb, const std::filesystem::path& dir);
RegionDatabase load_region_database(const std::filesystem::path& dir, const PipelineConfig& cfg);

// Loads `dir` when it holds a rendered database, otherwise builds one in
// memory (the database directory itself is never written).
RegionDatabase obtain_region_database(const HeadDatabase& db, const PipelineConfig& cfg);

// One frame on disk: landmarks/<id>.json paired with frames/<id>.png.
struct InputFrame {
  LandmarkSet landmarks;
  std::filesystem::path image_path;
};

// Frames in ascending id order. Throws when the landmark directory is
// missing or empty, or a landmark file has no image.
std::vector<InputFrame> load_input_frames(const std::filesystem::path& frames_dir,
                                          const std::filesystem::path& landmarks_dir);

// argmin of yaw^2 + pitch^2 + roll^2; ties go to the earlier frame.
std::size_t pick_frontal(std::span<const LandmarkSet> frames);

struct RegionReport {
  Method method = Method::ssim;
  std::vector<double> errors;   // one per database model
  WeightVector weights;
  std::size_t top1 = 0;  // model with the largest weight
};

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

struct PipelineReport {
  std::vector<std::string> model_ids;
  std::string frontal_frame;
  std::array<RegionReport, 4> regions;  // by region slot
  std::string texture_center;
  std::optional<std::string> texture_left;
  std::optional<std::string> texture_right;
  std::vector<StageTiming> timings;

  // Timings are omitted when `with_timings` is false, which makes the
  // document comparable across runs.
  nlohmann::json to_json(bool with_timings = true) const;
};

struct PipelineResult {
  HeadMesh mesh;
  TextureAtlas texture;
  PipelineReport report;
};

// Full run: feature input, region selection, blend, morph, texture. Errors
// are rethrown as StageError carrying the stage name.
PipelineResult run_pipeline(const PipelineConfig& cfg, const std::vector<InputFrame>& frames);
PipelineResult run_pipeline(const PipelineConfig& cfg, const std::filesystem::path& input_dir);

// Texture stage on its own.
TextureAtlas build_texture(const HeadDatabase& db, const PipelineConfig& cfg,
                           const std::vector<InputFrame>& frames, PipelineReport* report = nullptr);

// Writes head.obj, texture.png and report.json into `out_dir`; files
// already written are removed again when a later write fails.
void write_outputs(const PipelineResult& result, const std::filesystem::path& out_dir);

// run_pipeline + write_outputs. On failure no output file is left behind.
PipelineResult fit(const PipelineConfig& cfg, const std::filesystem::path& input_dir,
                   const std::filesystem::path& out_dir);

}  // namespace headrecon
