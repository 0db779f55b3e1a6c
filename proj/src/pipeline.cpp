#include "headrecon/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "headrecon/blend.hpp"
#include "headrecon/error.hpp"
#include "headrecon/morph.hpp"
#include "headrecon/parallel.hpp"
#include "io_util.hpp"

namespace headrecon {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kStageInput = "feature input";
constexpr const char* kStageSelect = "region selection";
constexpr const char* kStageBlend = "blend";
constexpr const char* kStageMorph = "morph";
constexpr const char* kStageTexture = "texture";
constexpr const char* kStageOutput = "output";

// Runs `fn` as a named stage: records its wall time and tags failures.
template <typename Fn>
auto stage(const char* name, std::vector<StageTiming>& timings, Fn&& fn) {
  const auto start = std::chrono::steady_clock::now();
  auto record = [&] {
    const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - start;
    timings.push_back({name, dt.count()});
  };
  try {
    if constexpr (std::is_void_v<decltype(fn())>) {
      fn();
      record();
    } else {
      auto result = fn();
      record();
      return result;
    }
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

const LandmarkSet& frame_landmarks(const InputFrame& f) { return f.landmarks; }

std::vector<LandmarkSet> landmark_list(const std::vector<InputFrame>& frames) {
  std::vector<LandmarkSet> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(frame_landmarks(f));
  return out;
}

}  // namespace

HeadDatabase load_database(const fs::path& dir, int workers) {
  if (!fs::is_directory(dir)) throw Error("database directory not found: " + dir.string());
  const json manifest = detail::read_json(dir / "manifest.json");
  HeadDatabase db;
  db.dir = dir;
  try {
    db.ids = manifest.at("models").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw Error("malformed manifest.json: " + std::string(e.what()));
  }
  if (db.ids.size() < 2) throw Error("database needs at least 2 models");
  db.meshes.resize(db.ids.size());
  parallel_for(db.ids.size(), workers,
               [&](std::size_t i) { db.meshes[i] = load_head_mesh(dir / "meshes" / (db.ids[i] + ".obj")); });
  db.regions = load_region_map(dir / "regions.json");
  db.lmap = load_landmark_map(dir / "landmark_map.json");
  db.uv = load_uv_landmarks(dir / "uv_landmarks.json");
  const auto report = validate_database(db.meshes, db.regions, db.lmap, db.ids);
  for (const auto& check : report.checks) {
    if (!check.passed) throw Error("database check '" + check.name + "' failed: " + check.detail);
  }
  return db;
}

RgbImage load_average_texture(const HeadDatabase& db) {
  RgbImage tex = load_rgb_png(db.dir / "average_texture.png");
  if (tex.width() != kAtlasSize || tex.height() != kAtlasSize) {
    throw Error("average texture must be 2048x2048");
  }
  return tex;
}

RegionDatabase build_region_database(const HeadDatabase& db, const PipelineConfig& cfg) {
  RegionDatabase out;
  out.renders = build_region_db(db.meshes, db.ids, db.lmap, cfg.render, cfg.regions, cfg.workers);
  out.models = fit_region_models(out.renders, cfg.similarity);
  return out;
}

void save_region_database(const RegionDatabase& rdb, const fs::path& dir) {
  save_region_db(rdb.renders, dir);
  save_region_models(rdb.models, dir);
}

RegionDatabase load_region_database(const fs::path& dir, const PipelineConfig& cfg) {
  RegionDatabase out;
  out.renders = load_region_db(dir);
  out.models = load_region_models(dir, cfg.similarity);
  return out;
}

RegionDatabase obtain_region_database(const HeadDatabase& db, const PipelineConfig& cfg) {
  const fs::path dir = cfg.render_db_dir();
  if (fs::exists(dir / "render_db.json")) {
    RegionDatabase rdb = load_region_database(dir, cfg);
    if (rdb.renders.model_ids != db.ids) throw Error("rendered region database does not match the model list");
    return rdb;
  }
  return build_region_database(db, cfg);
}

std::vector<InputFrame> load_input_frames(const fs::path& frames_dir, const fs::path& landmarks_dir) {
  if (!fs::is_directory(landmarks_dir)) throw Error("landmark directory not found: " + landmarks_dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(landmarks_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  if (files.empty()) throw Error("no landmark files in " + landmarks_dir.string());
  std::sort(files.begin(), files.end());
  std::vector<InputFrame> out;
  for (const auto& file : files) {
    InputFrame frame;
    frame.landmarks = load_landmarks(file);
    const std::string stem = file.stem().string();
    if (frame.landmarks.frame_id.empty()) frame.landmarks.frame_id = stem;
    frame.image_path = frames_dir / (stem + ".png");
    if (!fs::exists(frame.image_path)) throw Error("no image for landmark file " + file.filename().string());
    out.push_back(std::move(frame));
  }
  return out;
}

std::size_t pick_frontal(std::span<const LandmarkSet> frames) {
  if (frames.empty()) throw Error("no frames");
  std::size_t best = 0;
  double best_score = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto& r = frames[i].rotation;
    const double score = r.yaw * r.yaw + r.pitch * r.pitch + r.roll * r.roll;
    if (score < best_score) {
      best = i;
      best_score = score;
    }
  }
  return best;
}

json PipelineReport::to_json(bool with_timings) const {
  json j;
  j["model_ids"] = model_ids;
  j["frontal_frame"] = frontal_frame;
  json regions_json = json::object();
  for (const Region r : kActiveRegions) {
    const auto& rr = regions[region_slot(r)];
    json entry;
    entry["method"] = std::string(method_name(rr.method));
    json errors = json::array();
    for (const double e : rr.errors) errors.push_back(number_or_null(e));
    entry["errors"] = std::move(errors);
    json selected = json::array();
    for (const std::size_t m : rr.weights.support) {
      selected.push_back({{"id", model_ids.at(m)}, {"index", m}, {"weight", rr.weights.weights.at(m)}});
    }
    entry["selected"] = std::move(selected);
    entry["top1"] = model_ids.at(rr.top1);
    regions_json[std::string(region_name(r))] = std::move(entry);
  }
  j["regions"] = std::move(regions_json);
  j["texture_frames"] = {{"center", texture_center},
                         {"left", texture_left ? json(*texture_left) : json(nullptr)},
                         {"right", texture_right ? json(*texture_right) : json(nullptr)}};
  if (with_timings) {
    json t = json::object();
    double total = 0.0;
    for (const auto& s : timings) {
      t[s.stage] = s.seconds;
      total += s.seconds;
    }
    t["total"] = total;
    j["timings"] = std::move(t);
  }
  return j;
}

TextureAtlas build_texture(const HeadDatabase& db, const PipelineConfig& cfg, const std::vector<InputFrame>& frames,
                           PipelineReport* report) {
  const auto lms = landmark_list(frames);
  const FramePick pick = pick_frames(lms, cfg.texture.pick);
  const RgbImage center = load_rgb_png(frames[pick.center].image_path);
  const Rgb skin = median_skin_color(center, lms[pick.center]);
  const TextureAtlas average = make_atlas(load_average_texture(db));
  const TextureAtlas shifted = shift_average_texture(average, db.uv.skin_region, skin);

  struct Job {
    std::size_t frame;
    TextureSource source;
  };
  std::vector<Job> jobs{{pick.center, TextureSource::frame_center}};
  if (pick.left) jobs.push_back({*pick.left, TextureSource::frame_left});
  if (pick.right) jobs.push_back({*pick.right, TextureSource::frame_right});
  std::vector<PartialTexture> partials(jobs.size());
  parallel_for(jobs.size(), cfg.workers, [&](std::size_t i) {
    const auto& job = jobs[i];
    const RgbImage image = job.frame == pick.center ? center : load_rgb_png(frames[job.frame].image_path);
    partials[i] = warp_to_uv(image, lms[job.frame], db.uv, cfg.texture.atlas_size, job.source);
  });
  if (report != nullptr) {
    report->texture_center = lms[pick.center].frame_id;
    if (pick.left) report->texture_left = lms[*pick.left].frame_id;
    if (pick.right) report->texture_right = lms[*pick.right].frame_id;
  }
  return compose_texture(partials, shifted, cfg.texture.feather);
}

PipelineResult run_pipeline(const PipelineConfig& cfg, const std::vector<InputFrame>& frames) {
  cfg.validate();
  PipelineResult result;
  auto& report = result.report;
  auto& timings = report.timings;

  struct FeatureInput {
    HeadDatabase db;
    std::size_t frontal = 0;
    RgbImage frontal_image;
  };
  FeatureInput input = stage(kStageInput, timings, [&] {
    if (frames.empty()) throw Error("no input frames");
    FeatureInput in;
    in.db = load_database(cfg.database, cfg.workers);
    const auto lms = landmark_list(frames);
    in.frontal = pick_frontal(lms);
    in.frontal_image = load_rgb_png(frames[in.frontal].image_path);
    check_landmarks(lms[in.frontal]);
    return in;
  });
  const HeadDatabase& db = input.db;
  const LandmarkSet& frontal = frames[input.frontal].landmarks;
  report.model_ids = db.ids;
  report.frontal_frame = frontal.frame_id;

  std::array<WeightVector, 4> weights;
  stage(kStageSelect, timings, [&] {
    const RegionDatabase rdb = obtain_region_database(db, cfg);
    const RegionImages regions = extract_regions(input.frontal_image, frontal, rdb.renders.layout);
    parallel_for(kActiveRegions.size(), cfg.workers, [&](std::size_t k) {
      const Region r = kActiveRegions[k];
      const std::size_t slot = region_slot(r);
      const auto& model = rdb.models.models[slot];
      auto& rr = report.regions[slot];
      rr.method = cfg.similarity.method(r);
      const ErrorVector errors = region_errors(rr.method, rdb.renders.region(r), regions[slot],
                                               model ? &*model : nullptr, rdb.models.lbp);
      rr.errors = errors.errors;
      rr.weights = select_weights(errors, cfg.similarity.top_n);
      rr.top1 = rr.weights.support.front();
      for (const std::size_t m : rr.weights.support) {
        if (rr.weights.weights[m] > rr.weights.weights[rr.top1]) rr.top1 = m;
      }
      weights[slot] = rr.weights;
    });
  });

  const HeadMesh blended = stage(kStageBlend, timings, [&] {
    std::array<RegionSelection, 4> selections;
    for (const Region r : kActiveRegions) {
      selections[region_slot(r)] = {db.meshes, weights[region_slot(r)]};
    }
    return build_blended_model(selections, db.regions, cfg.blend);
  });

  result.mesh = stage(kStageMorph, timings, [&] {
    LandmarkVertexMap lmap = db.lmap;
    if (cfg.sigma) lmap.sigma = *cfg.sigma;
    return morph(blended, frontal, lmap, cfg.morph);
  });

  result.texture = stage(kStageTexture, timings, [&] { return build_texture(db, cfg, frames, &report); });
  return result;
}

PipelineResult run_pipeline(const PipelineConfig& cfg, const fs::path& input_dir) {
  std::vector<StageTiming> timings;
  const auto frames = stage(kStageInput, timings,
                            [&] { return load_input_frames(input_dir / "frames", input_dir / "landmarks"); });
  PipelineResult result = run_pipeline(cfg, frames);
  result.report.timings.front().seconds += timings.front().seconds;
  return result;
}

void write_outputs(const PipelineResult& result, const fs::path& out_dir) {
  const bool created = !fs::exists(out_dir);
  std::vector<fs::path> written;
  try {
    fs::create_directories(out_dir);
    const auto write = [&](const fs::path& path, auto&& fn) {
      written.push_back(path);
      fn(path);
    };
    write(out_dir / "head.obj", [&](const fs::path& p) { save_head_mesh(result.mesh, p); });
    write(out_dir / "texture.png", [&](const fs::path& p) { save_rgb_png(result.texture.pixels, p); });
    write(out_dir / "report.json",
          [&](const fs::path& p) { detail::write_file(p, result.report.to_json().dump(2) + "\n"); });
  } catch (const std::exception& e) {
    std::error_code ec;
    for (const auto& p : written) fs::remove(p, ec);
    if (created) fs::remove(out_dir, ec);
    throw StageError(kStageOutput, e.what());
  }
}

PipelineResult fit(const PipelineConfig& cfg, const fs::path& input_dir, const fs::path& out_dir) {
  // Nothing is written until every stage has succeeded.
  PipelineResult result = run_pipeline(cfg, input_dir);
  const auto start = std::chrono::steady_clock::now();
  write_outputs(result, out_dir);
  const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - start;
  result.report.timings.push_back({kStageOutput, dt.count()});
  return result;
}

}  // namespace headrecon
