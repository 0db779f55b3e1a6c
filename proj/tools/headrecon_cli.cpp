// Command-line front end: database generation, region rendering, fitting and
// texturing.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "headrecon/config.hpp"
#include "headrecon/error.hpp"
#include "headrecon/pipeline.hpp"
#include "headrecon/synthetic.hpp"

namespace fs = std::filesystem;
using namespace headrecon;

namespace {

PipelineConfig config_from(const std::string& path) {
  return path.empty() ? PipelineConfig{} : load_config(path);
}

std::size_t find_model(const HeadDatabase& db, const std::string& model) {
  for (std::size_t i = 0; i < db.ids.size(); ++i) {
    if (db.ids[i] == model) return i;
  }
  try {
    const auto idx = static_cast<std::size_t>(std::stoul(model));
    if (idx < db.ids.size()) return idx;
  } catch (const std::exception&) {
  }
  throw Error("unknown model '" + model + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Region-based head reconstruction from a blendshape database"};
  app.require_subcommand(1);

  std::string config_path;
  int workers = 1;

  // gen-db
  std::uint64_t seed = 0;
  int count = 32;
  int texture_size = kAtlasSize;
  std::string out;
  auto* gen_db = app.add_subcommand("gen-db", "Generate a synthetic head database");
  gen_db->add_option("--seed", seed, "Random seed")->required();
  gen_db->add_option("--count", count, "Number of heads")->required()->check(CLI::Range(2, 100000));
  gen_db->add_option("--out", out, "Output directory")->required();
  gen_db->add_option("--texture-size", texture_size, "Texture edge length in pixels")->check(CLI::PositiveNumber);
  gen_db->add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);

  // render-db
  std::string db_dir;
  auto* render_db = app.add_subcommand("render-db", "Render region images and fit region models");
  render_db->add_option("--db", db_dir, "Database directory")->required()->check(CLI::ExistingDirectory);
  render_db->add_option("--out", out, "Output directory")->required();
  render_db->add_option("--config", config_path, "TOML config")->check(CLI::ExistingFile);
  render_db->add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);

  // gen-input
  std::string model;
  std::vector<double> yaws{-30.0, 0.0, 30.0};
  bool shading_only = false;
  auto* gen_input = app.add_subcommand("gen-input", "Render input frames and landmarks of a database head");
  gen_input->add_option("--db", db_dir, "Database directory")->required()->check(CLI::ExistingDirectory);
  gen_input->add_option("--model", model, "Model id or index")->required();
  gen_input->add_option("--out", out, "Output directory (frames/ and landmarks/)")->required();
  gen_input->add_option("--yaw", yaws, "Yaw angles in degrees")->delimiter(',');
  gen_input->add_flag("--shading-only", shading_only, "Render without the head texture");
  gen_input->add_option("--config", config_path, "TOML config")->check(CLI::ExistingFile);

  // fit
  std::string input_dir;
  std::string render_db_dir;
  std::size_t top_n = 0;
  auto* fit_cmd = app.add_subcommand("fit", "Reconstruct a head mesh and texture from input frames");
  fit_cmd->add_option("--db", db_dir, "Database directory")->required()->check(CLI::ExistingDirectory);
  fit_cmd->add_option("--input", input_dir, "Input directory with frames/ and landmarks/")->required();
  fit_cmd->add_option("--out", out, "Output directory")->required();
  fit_cmd->add_option("--top-n", top_n, "Models blended per region")->check(CLI::PositiveNumber);
  fit_cmd->add_option("--config", config_path, "TOML config")->check(CLI::ExistingFile);
  fit_cmd->add_option("--render-db", render_db_dir, "Rendered region database directory");
  fit_cmd->add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);

  // texture
  std::string frames_dir;
  std::string landmarks_dir;
  auto* texture_cmd = app.add_subcommand("texture", "Build the texture atlas only");
  texture_cmd->add_option("--frames", frames_dir, "Frame image directory")->required();
  texture_cmd->add_option("--landmarks", landmarks_dir, "Landmark file directory")->required();
  texture_cmd->add_option("--db", db_dir, "Database directory")->required()->check(CLI::ExistingDirectory);
  texture_cmd->add_option("--out", out, "Output PNG")->required();
  texture_cmd->add_option("--config", config_path, "TOML config")->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen_db->parsed()) {
      gen_synthetic_db(seed, count, out, texture_size, workers);
      std::cout << "wrote " << count << " heads to " << out << "\n";
    } else if (render_db->parsed()) {
      PipelineConfig cfg = config_from(config_path);
      cfg.database = db_dir;
      if (render_db->count("--workers") > 0) cfg.workers = workers;
      const HeadDatabase db = load_database(cfg.database, cfg.workers);
      save_region_database(build_region_database(db, cfg), out);
      std::cout << "wrote region database for " << db.ids.size() << " models to " << out << "\n";
    } else if (gen_input->parsed()) {
      const PipelineConfig cfg = config_from(config_path);
      const HeadDatabase db = load_database(db_dir);
      const std::size_t idx = find_model(db, model);
      std::optional<RgbImage> texture;
      if (!shading_only) texture = load_rgb_png(fs::path(db_dir) / "textures" / (db.ids[idx] + ".png"));
      std::vector<SyntheticFrame> frames;
      for (std::size_t i = 0; i < yaws.size(); ++i) {
        const std::string id = "frame_" + std::to_string(i);
        frames.push_back(render_input_frame(db.meshes[idx], db.lmap, texture ? &*texture : nullptr, yaws[i],
                                            cfg.render, id));
      }
      save_input_frames(frames, out);
      std::cout << "wrote " << frames.size() << " frames of " << db.ids[idx] << " to " << out << "\n";
    } else if (fit_cmd->parsed()) {
      PipelineConfig cfg = config_from(config_path);
      cfg.database = db_dir;
      if (!render_db_dir.empty()) cfg.render_db = render_db_dir;
      if (top_n > 0) cfg.similarity.top_n = top_n;
      if (fit_cmd->count("--workers") > 0) cfg.workers = workers;
      const PipelineResult result = fit(cfg, input_dir, out);
      std::cout << result.report.to_json().dump(2) << "\n";
    } else if (texture_cmd->parsed()) {
      PipelineConfig cfg = config_from(config_path);
      cfg.database = db_dir;
      const HeadDatabase db = load_database(cfg.database);
      const auto frames = load_input_frames(frames_dir, landmarks_dir);
      const TextureAtlas atlas = build_texture(db, cfg, frames);
      save_rgb_png(atlas.pixels, out);
      std::cout << "wrote " << out << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
