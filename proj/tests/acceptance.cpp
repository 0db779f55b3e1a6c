// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero when any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>

#include "headrecon/blend.hpp"
#include "headrecon/config.hpp"
#include "headrecon/morph.hpp"
#include "headrecon/pipeline.hpp"
#include "headrecon/similarity.hpp"
#include "headrecon/synthetic.hpp"
#include "headrecon/texture.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace headrecon;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) detail << what;
    pass = pass && ok;
  }
};

int failures = 0;

void report(int id, const std::string& name, Outcome& o) {
  std::cout << (o.pass ? "PASS" : "FAIL") << " " << id << " " << name;
  const std::string d = o.detail.str();
  if (!d.empty()) std::cout << ": " << d;
  std::cout << std::endl;
  if (!o.pass) ++failures;
}

template <typename Fn>
void run(int id, const std::string& name, Fn&& fn) {
  Outcome o;
  try {
    fn(o);
  } catch (const std::exception& e) {
    o.require(false, std::string("exception: ") + e.what());
  }
  report(id, name, o);
}

int worker_count() { return static_cast<int>(std::max(1U, std::thread::hardware_concurrency())); }

void criterion_functions(Outcome& o) {
  o.require(std::abs(twf_raw(0.264) - 0.5035) < 1e-9, "twf(0.264)");
  o.require(std::abs(twf_raw(0.0) + 0.006) < 1e-9, "twf(0)");
  std::mt19937_64 rng(101);
  for (int i = 0; i < 100; ++i) {
    const double sigma = testing::uniform(rng, 0.05, 5.0);
    const double k = testing::uniform(rng, 0.05, 5.0);
    o.require(std::abs(awf(0.0, sigma, k) - 0.970688) < 1e-5, "awf(0)");
    o.require(std::abs(awf(0.5 * sigma * sigma * k, sigma, k) - 0.5) < 1e-9, "awf(sigma^2 k / 2)");
  }
}

void criterion_weights(Outcome& o) {
  const WeightVector w = select_weights({{2.0, 4.0, 8.0, 50.0}, Method::ssim}, 3);
  const std::array<double, 4> expected{4.0 / 7.0, 2.0 / 7.0, 1.0 / 7.0, 0.0};
  for (std::size_t i = 0; i < 4; ++i) o.require(std::abs(w.weights[i] - expected[i]) < 1e-12, "(2,4,8,50) example");

  std::mt19937_64 rng(102);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto n = static_cast<std::size_t>(1 + rng() % 64);
    const std::size_t top_n = 1 + rng() % 6;
    ErrorVector e;
    for (std::size_t i = 0; i < n; ++i) e.errors.push_back(std::pow(10.0, testing::uniform(rng, -4, 3)));
    const WeightVector base = select_weights(e, top_n);
    const double sum = std::accumulate(base.weights.begin(), base.weights.end(), 0.0);
    o.require(std::abs(sum - 1.0) < 1e-12, "weights sum to 1");
    o.require(base.support.size() <= top_n, "support within top_n");
    for (const double c : {1e-6, 1.0, 1e6}) {
      ErrorVector scaled = e;
      for (auto& v : scaled.errors) v *= c;
      const WeightVector s = select_weights(scaled, top_n);
      o.require(s.weights == base.weights && s.support == base.support, "scale invariance");
    }
  }
}

struct SharedDb {
  testing::TempDir tmp{"acceptance"};
  fs::path dir;
  HeadDatabase db;
};

void criterion_self_recovery(Outcome& o, const SharedDb& shared) {
  PipelineConfig cfg;
  cfg.database = shared.dir;
  cfg.workers = worker_count();
  cfg.render_db = shared.tmp / "render_db";
  save_region_database(build_region_database(shared.db, cfg), cfg.render_db);

  // Eight distinct heads drawn with a fixed seed.
  std::mt19937_64 rng(103);
  std::vector<std::size_t> pool(shared.db.ids.size());
  std::iota(pool.begin(), pool.end(), 0);
  std::vector<std::size_t> sampled;
  while (sampled.size() < 8) {
    const std::size_t pick = rng() % pool.size();
    sampled.push_back(pool[pick]);
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
  }

  int recovered = 0;
  double worst_ratio = 0.0;
  for (const std::size_t k : sampled) {
    const HeadMesh& source = shared.db.meshes[k];
    const fs::path in = shared.tmp / ("self_" + std::to_string(k));
    const SyntheticFrame frame = render_input_frame(source, shared.db.lmap, nullptr, 0.0, cfg.render, "frontal");
    save_input_frames(std::span(&frame, 1), in);
    const PipelineResult r = fit(cfg, in, in / "out");

    bool all_regions = true;
    for (const Region reg : kActiveRegions) all_regions = all_regions && r.report.regions[region_slot(reg)].top1 == k;
    recovered += all_regions ? 1 : 0;

    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const int v : shared.db.lmap.vertex_index) {
      lo = std::min(lo, source.vertices[static_cast<std::size_t>(v)].y());
      hi = std::max(hi, source.vertices[static_cast<std::size_t>(v)].y());
    }
    double err = 0.0;
    for (std::size_t v = 0; v < source.vertices.size(); ++v) err += (r.mesh.vertices[v] - source.vertices[v]).norm();
    err /= static_cast<double>(source.vertices.size());
    worst_ratio = std::max(worst_ratio, err / (hi - lo));
    o.require(r.texture.size() == kAtlasSize, "texture size");
  }
  o.detail << "top-1 on all regions for " << recovered << "/8 heads, worst mean vertex error "
           << worst_ratio * 100.0 << "% of face height";
  o.pass = o.pass && recovered >= 7 && worst_ratio < 0.02;
}

void criterion_blend_identity(Outcome& o, const SharedDb& shared) {
  const auto& db = shared.db;
  std::vector<int> active;
  for (const Region r : kActiveRegions) active = set_union(active, db.regions.indices(r));
  double worst = 0.0;
  for (std::size_t k = 0; k < db.meshes.size(); ++k) {
    WeightVector one;
    one.weights.assign(db.meshes.size(), 0.0);
    one.weights[k] = 1.0;
    one.support = {k};
    std::array<RegionSelection, 4> sel;
    for (auto& s : sel) s = {db.meshes, one};
    const HeadMesh out = build_blended_model(sel, db.regions);
    for (const int v : active) {
      worst = std::max(worst, (out.vertices[static_cast<std::size_t>(v)] - db.meshes[k].vertices[static_cast<std::size_t>(v)])
                                  .cwiseAbs()
                                  .maxCoeff());
    }
  }
  o.detail << "max deviation " << worst;
  o.pass = worst <= 1e-9;
}

void criterion_morph(Outcome& o, const SharedDb& shared) {
  const auto& db = shared.db;
  const MorphSchedule schedule;
  std::mt19937_64 rng(104);

  // (a) zero displacement.
  for (std::size_t k = 0; k < 4; ++k) {
    MorphTargets same;
    for (std::size_t i = 0; i < kLandmarkCount; ++i) {
      same[i] = db.meshes[k].vertices[static_cast<std::size_t>(db.lmap.vertex_index[i])].head<2>();
    }
    o.require(morph_to_targets(db.meshes[k], same, db.lmap, schedule) == db.meshes[k], "(a) zero displacement");
  }

  // (b) and (c) on randomized targets, sigmas and pass settings.
  for (int trial = 0; trial < 1000; ++trial) {
    const HeadMesh& mesh = db.meshes[rng() % db.meshes.size()];
    LandmarkVertexMap lmap = db.lmap;
    for (auto& s : lmap.sigma) s = testing::uniform(rng, 0.2, 2.5);
    MorphTargets targets;
    const double spread = testing::uniform(rng, 0.001, 0.2);
    for (std::size_t i = 0; i < kLandmarkCount; ++i) {
      targets[i] = mesh.vertices[static_cast<std::size_t>(lmap.vertex_index[i])].head<2>() +
                   Vec2(testing::uniform(rng, -spread, spread), testing::uniform(rng, -spread, spread));
    }
    FeatureMask mask;
    for (std::size_t i = 0; i < kLandmarkCount; ++i) mask.set(i, rng() % 2 == 0);
    if (mask.none()) mask.set(rng() % kLandmarkCount);
    MorphPassStats stats;
    const HeadMesh out = morph_pass(mesh, targets, lmap, testing::uniform(rng, 0.1, 1.5), mask, &stats);
    double max_move = 0.0;
    bool z_same = true;
    for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
      max_move = std::max(max_move, (out.vertices[v] - mesh.vertices[v]).norm());
      z_same = z_same && out.vertices[v].z() == mesh.vertices[v].z();
    }
    o.require(max_move <= stats.max_feature_offset * (1.0 + 1e-12), "(c) displacement bound");
    o.require(z_same, "(b) Z through a pass");
    if (trial % 50 == 0) {
      const HeadMesh full = morph_to_targets(mesh, targets, lmap, schedule);
      for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
        o.require(full.vertices[v].z() == mesh.vertices[v].z(), "(b) Z through a full morph");
      }
    }
  }

  // (d) one active feature on a sparse grid: residual falls every pass.
  const HeadMesh grid = testing::grid_mesh(11, 11, 0.5);
  LandmarkVertexMap sparse;
  for (int i = 0; i < kLandmarkCount; ++i) {
    sparse.vertex_index[static_cast<std::size_t>(i)] = i + 20;
    sparse.sigma[static_cast<std::size_t>(i)] = 0.4;
  }
  MorphTargets targets;
  for (std::size_t i = 0; i < kLandmarkCount; ++i) targets[i] = grid.vertices[i + 20].head<2>();
  targets[30] += Vec2(0.02, 0.03);
  HeadMesh mesh = grid;
  double residual = (mesh.vertices[50].head<2>() - targets[30]).norm();
  for (int pass = 0; pass < 6; ++pass) {
    mesh = morph_pass(mesh, targets, sparse, 1.0, feature_mask({{31, 31}}));
    const double next = (mesh.vertices[50].head<2>() - targets[30]).norm();
    o.require(next < residual, "(d) residual did not decrease");
    residual = next;
  }
}

void criterion_similarity(Outcome& o) {
  std::mt19937_64 rng(105);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const GrayImage a = testing::random_gray(rng, 64, 64);
    GrayImage b = a;
    for (auto& v : b.pixels()) v = std::clamp(v + testing::uniform(rng, -0.4, 0.4), 0.0, 1.0);
    worst = std::max(worst, std::abs(ssim(a, b) - testing::ssim_direct(a, b)));
  }
  o.require(worst < 1e-9, "SSIM oracle");

  std::vector<Eigen::VectorXd> samples;
  for (int i = 0; i < 20; ++i) {
    Eigen::VectorXd v(300);
    for (auto& x : v) x = testing::uniform(rng, 0, 1);
    samples.push_back(v);
  }
  PcaOptions full;
  full.retained = samples.size() - 1;
  const PcaModel m = pca_fit(samples, full);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Eigen::VectorXd rec =
        m.mean + m.components.transpose() * m.training_scores.row(static_cast<Eigen::Index>(i)).transpose();
    o.require((rec - samples[i]).cwiseAbs().maxCoeff() < 1e-6, "PCA reconstruction");
  }

  for (int i = 0; i < 100; ++i) {
    const GrayImage img = testing::random_gray(rng, 64, 64, 0.0, 0.9);
    GrayImage brighter = img;
    for (auto& v : brighter.pixels()) v += 0.1;
    o.require(lbp_descriptor(img) == lbp_descriptor(brighter), "LBP brightness invariance");
  }
}

void criterion_texture(Outcome& o, const SharedDb& shared) {
  const UvLandmarks& uv = shared.db.uv;
  std::mt19937_64 rng(106);
  const RgbImage frame = synthetic_texture(rng(), kAtlasSize);
  LandmarkSet lm;
  for (std::size_t i = 0; i < kLandmarkCount; ++i) lm.points[i] = uv.points[i];
  const PartialTexture p = warp_to_uv(frame, lm, uv);
  o.require(p.pixels.width() == kAtlasSize && p.pixels.height() == kAtlasSize, "warp atlas size");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < p.mask.size(); ++i) {
    if (p.mask[i] == 0) continue;
    for (int c = 0; c < 3; ++c) sum += std::abs(p.pixels.pixels()[i][c] - frame.pixels()[i][c]);
    n += 3;
  }
  o.require(n > 0 && sum / static_cast<double>(n) < 2.0 / 255.0, "identity warp error");

  const TextureAtlas avg = make_atlas(load_average_texture(shared.db));
  const TextureAtlas shifted = shift_average_texture(avg, uv.skin_region, {0.55F, 0.4F, 0.35F});
  const TextureAtlas composed = compose_texture({}, shifted);
  o.require(composed.size() == kAtlasSize, "compose atlas size");
  o.require(composed.pixels == shifted.pixels && composed.provenance == shifted.provenance, "empty compose");
}

void criterion_runtime(Outcome& o, const SharedDb& shared) {
  const std::size_t model = 5;
  const fs::path in = shared.tmp / "runtime";
  const RgbImage tex = load_rgb_png(shared.dir / "textures" / (shared.db.ids[model] + ".png"));
  std::vector<SyntheticFrame> frames;
  int i = 0;
  for (const double yaw : {-30.0, 0.0, 30.0}) {
    frames.push_back(render_input_frame(shared.db.meshes[model], shared.db.lmap, &tex, yaw, RenderConfig{},
                                        "frame_" + std::to_string(i++)));
  }
  save_input_frames(frames, in);

  PipelineConfig cfg;
  cfg.database = shared.dir;
  cfg.workers = 1;
  // No pre-rendered region database: region renders are part of the timing.
  const auto start = std::chrono::steady_clock::now();
  const PipelineResult r = fit(cfg, in, in / "out");
  const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - start;

  const auto timings = r.report.to_json().at("timings");
  for (const char* s : {"feature input", "region selection", "blend", "morph", "texture", "output"}) {
    o.require(timings.contains(s), std::string("missing timing for ") + s + "; ");
  }
  o.require(r.texture.size() == kAtlasSize, "texture size; ");
  o.require(r.report.texture_left.has_value() && r.report.texture_right.has_value(), "side frames unused; ");
  o.detail << "fit with texture took " << dt.count() << " s (";
  bool first = true;
  for (const auto& t : r.report.timings) {
    o.detail << (first ? "" : ", ") << t.stage << " " << t.seconds;
    first = false;
  }
  o.detail << ")";
  o.pass = o.pass && dt.count() < 60.0;
}

}  // namespace

int main() {
  run(1, "function-value anchors", criterion_functions);
  run(2, "weight correctness", criterion_weights);

  SharedDb shared;
  shared.dir = shared.tmp / "db";
  try {
    gen_synthetic_db(2024, 32, shared.dir, kAtlasSize, worker_count());
    shared.db = load_database(shared.dir, worker_count());
  } catch (const std::exception& e) {
    std::cerr << "database generation failed: " << e.what() << std::endl;
    return 1;
  }

  run(3, "self-recovery", [&](Outcome& o) { criterion_self_recovery(o, shared); });
  run(4, "blending identity", [&](Outcome& o) { criterion_blend_identity(o, shared); });
  run(5, "morph contracts", [&](Outcome& o) { criterion_morph(o, shared); });
  run(6, "similarity oracles", criterion_similarity);
  run(7, "texture contracts", [&](Outcome& o) { criterion_texture(o, shared); });
  run(8, "runtime", [&](Outcome& o) { criterion_runtime(o, shared); });
  return failures == 0 ? 0 : 1;
}
