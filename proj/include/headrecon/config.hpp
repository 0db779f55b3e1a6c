#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string_view>

#include "headrecon/blend.hpp"
#include "headrecon/morph.hpp"
#include "headrecon/render.hpp"
#include "headrecon/similarity.hpp"
#include "headrecon/texture.hpp"

namespace headrecon {

struct TextureConfig {
  int atlas_size = kAtlasSize;
  int feather = 32;
  FramePickConfig pick;
};

struct PipelineConfig {
  std::filesystem::path database;
  std::filesystem::path render_db;  // empty: <database>/render_db
  std::filesystem::path output;

  RenderConfig render;
  RegionLayoutConfig regions;
  SimilarityConfig similarity;
  TransitionWeightParams blend;
  MorphSchedule morph;
  // Per-feature drop-off overriding the database landmark map when set.
  std::optional<std::array<double, kLandmarkCount>> sigma = default_sigmas();
  TextureConfig texture;

  std::uint64_t seed = 0;
  int workers = 1;

  std::filesystem::path render_db_dir() const;

  // Parameter ranges only; paths are checked when a run starts.
  void validate() const;
};

// Reads a TOML document with the optional tables [render], [regions],
// [similarity], [blend], [morph], [texture] and [pipeline]; missing keys keep
// their defaults and unknown keys are an error.
PipelineConfig parse_config(std::string_view toml_text, std::string_view source = "config");
PipelineConfig load_config(const std::filesystem::path& path);

}  // namespace headrecon
