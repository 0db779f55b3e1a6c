#include <doctest.h>

#include <cmath>

#include "headrecon/blend.hpp"
#include "headrecon/error.hpp"
#include "headrecon/morph.hpp"
#include "support.hpp"

using namespace headrecon;

TEST_CASE("transition weight anchors") {
  const TransitionWeightParams p;
  CHECK(twf_raw(0.0) == doctest::Approx(1.013 - 1.019));
  CHECK(twf(0.0) == 0.0);
  CHECK(twf(0.264) == doctest::Approx(1.013 - 1.019 / 2.0));
  CHECK(twf(std::numeric_limits<double>::infinity()) == 1.0);
  CHECK(twf(100.0) == 1.0);
  double prev = -1.0;
  for (double d = 0.0; d < 3.0; d += 0.01) {
    CHECK(twf_raw(d, p) >= prev);
    prev = twf_raw(d, p);
  }
  TransitionWeightParams bad;
  bad.x0 = 0.0;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("combine_blendshape is the weighted vertex sum") {
  std::mt19937_64 rng(21);
  std::vector<HeadMesh> models(3, testing::grid_mesh(3, 2));
  for (auto& m : models) {
    for (auto& v : m.vertices) v = Vec3(testing::uniform(rng, -1, 1), testing::uniform(rng, -1, 1), testing::uniform(rng, -1, 1));
  }
  WeightVector w{{0.25, 0.0, 0.75}, {0, 2}};
  const HeadMesh out = combine_blendshape(models, w);
  for (std::size_t v = 0; v < out.vertices.size(); ++v) {
    CHECK((out.vertices[v] - (0.25 * models[0].vertices[v] + 0.75 * models[2].vertices[v])).norm() < 1e-15);
  }
  CHECK(out.faces == models[0].faces);
  const HeadMesh one = combine_blendshape(models, {{0.0, 1.0, 0.0}, {1}});
  CHECK(one.vertices == models[1].vertices);
  HeadMesh odd = testing::grid_mesh(2, 2);
  std::vector<HeadMesh> mixed{models[0], odd, models[2]};
  CHECK_THROWS_AS(combine_blendshape(mixed, w), Error);
}

TEST_CASE("attach_region on a six-vertex strip, traced by hand") {
  // Vertices 0..5 of a 2x1 grid: (0,0) (1,0) (2,0) / (0,1) (1,1) (2,1).
  const HeadMesh base = testing::grid_mesh(2, 1);
  HeadMesh added = base;
  for (auto& v : added.vertices) v += Vec3(0.2, 0.0, 0.4);
  const std::vector<int> added_idx{0, 1, 3, 4};
  const std::vector<int> base_idx{1, 2, 4, 5};

  SeamBlend seam;
  const HeadMesh out = attach_region(base, added, added_idx, base_idx, {}, &seam);
  // Overlap {1, 4}: the mean offset is (-0.2, 0, -0.4); half of it moves the
  // added region to base + (0.1, 0, 0.2). Its X/Y mean is then (0.6, 0.5),
  // extents (1, 1), so each vertex sits at normalized distance sqrt(0.5).
  CHECK((seam.shift - Vec3(-0.2, 0.0, -0.4)).norm() < 1e-15);
  CHECK((seam.region_mean - Vec2(0.6, 0.5)).norm() < 1e-15);
  CHECK((seam.extents - Vec2(1.0, 1.0)).norm() < 1e-15);
  const double t = 1.013 - 1.019 / (1.0 + std::pow(std::sqrt(0.5) / 0.264, 3.244));
  for (const int j : added_idx) {
    const Vec3 expected = base.vertices[j] + t * Vec3(0.1, 0.0, 0.2);
    CHECK((out.vertices[j] - expected).norm() < 1e-12);
  }
  CHECK(out.vertices[2] == base.vertices[2]);
  CHECK(out.vertices[5] == base.vertices[5]);

  const std::vector<int> far{2, 5};
  const std::vector<int> none{0, 3};
  CHECK_THROWS_AS(attach_region(base, added, none, far), Error);
}

TEST_CASE("blending a model with itself returns it unchanged") {
  std::mt19937_64 rng(22);
  HeadMesh m = testing::grid_mesh(6, 6);
  for (auto& v : m.vertices) v += Vec3(testing::uniform(rng, -0.2, 0.2), testing::uniform(rng, -0.2, 0.2), testing::uniform(rng, -1, 1));
  const std::vector<HeadMesh> models{m, m, m};
  RegionMap regions;
  std::vector<int> all(m.vertices.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  regions.set(Region::face, all);
  regions.set(Region::eyes, {8, 9, 10, 15, 16, 17, 11, 12});
  regions.set(Region::nose, {17, 18, 24, 25, 31, 32});
  regions.set(Region::mouth, {30, 31, 37, 38, 39});
  regions.assign_unused(all.size());
  std::array<RegionSelection, 4> sel;
  for (auto& s : sel) s = {models, {{0.0, 1.0, 0.0}, {1}}};
  CHECK(build_blended_model(sel, regions).vertices == m.vertices);
}

namespace {

// 68 landmark vertices on a jittered grid plus spare vertices; each landmark
// i maps to vertex i.
struct MorphFixture {
  HeadMesh mesh = testing::grid_mesh(9, 9, 0.2);
  LandmarkVertexMap lmap;

  explicit MorphFixture(std::mt19937_64& rng, bool random_sigma = false) {
    for (auto& v : mesh.vertices) v += Vec3(testing::uniform(rng, -0.05, 0.05), testing::uniform(rng, -0.05, 0.05), testing::uniform(rng, -1, 1));
    for (int i = 0; i < kLandmarkCount; ++i) {
      lmap.vertex_index[static_cast<std::size_t>(i)] = i;
      lmap.sigma[static_cast<std::size_t>(i)] = random_sigma ? testing::uniform(rng, 0.3, 2.0) : 0.5;
    }
  }

  MorphTargets current() const {
    MorphTargets t;
    for (std::size_t i = 0; i < kLandmarkCount; ++i) t[i] = mesh.vertices[i].head<2>();
    return t;
  }
};

}  // namespace

TEST_CASE("attraction weight anchors") {
  CHECK(awf(0.0, 0.5, 1.0) == doctest::Approx(1.0 - 1.0 / (1.0 + std::exp(3.5))));
  CHECK(awf(0.5 * 0.25 * 0.45, 0.5, 0.45) == doctest::Approx(0.5));
  CHECK(awf(100.0, 0.5, 1.0) < 1e-12);
  CHECK(awf(0.1, 2.0, 1.0) > awf(0.1, 0.5, 1.0));
}

TEST_CASE("default schedule and sigmas") {
  const auto passes = MorphSchedule::default_passes();
  REQUIRE(passes.size() == 3);
  CHECK(passes[0].k == 1.0);
  CHECK(passes[0].mask.count() == 68);
  CHECK(passes[1].k == 0.45);
  CHECK(passes[1].mask.count() == 51);
  CHECK_FALSE(passes[1].mask.test(16));
  CHECK(passes[2].k == 0.2);
  CHECK(passes[2].mask.count() == 5 + 12 + 4);
  const auto s = default_sigmas();
  CHECK(s[0] == 2.0);
  CHECK(s[17] == 1.2);
  CHECK(s[30] == 0.8);
  CHECK(s[40] == 0.5);
  CHECK(s[60] == 0.6);
  CHECK_THROWS_AS(feature_mask({{0, 3}}), Error);
}

TEST_CASE("morphing to the current landmark positions changes nothing") {
  std::mt19937_64 rng(23);
  const MorphFixture fx(rng);
  const HeadMesh out = morph_to_targets(fx.mesh, fx.current(), fx.lmap, MorphSchedule{});
  CHECK(out == fx.mesh);
}

TEST_CASE("morph passes keep Z and never move a vertex further than the largest feature offset") {
  std::mt19937_64 rng(24);
  for (int trial = 0; trial < 1000; ++trial) {
    const MorphFixture fx(rng, true);
    MorphTargets targets = fx.current();
    const double spread = testing::uniform(rng, 0.001, 0.5);
    for (auto& t : targets) t += Vec2(testing::uniform(rng, -spread, spread), testing::uniform(rng, -spread, spread));
    FeatureMask mask;
    for (std::size_t i = 0; i < kLandmarkCount; ++i) mask.set(i, rng() % 3 != 0);
    if (mask.none()) mask.set(0);
    MorphPassStats stats;
    const HeadMesh out = morph_pass(fx.mesh, targets, fx.lmap, testing::uniform(rng, 0.1, 1.5), mask, &stats);
    CHECK(stats.max_displacement <= stats.max_feature_offset * (1.0 + 1e-12));
    for (std::size_t v = 0; v < out.vertices.size(); ++v) {
      REQUIRE(out.vertices[v].z() == fx.mesh.vertices[v].z());
      REQUIRE((out.vertices[v] - fx.mesh.vertices[v]).norm() <= stats.max_feature_offset * (1.0 + 1e-12));
    }
  }
}

TEST_CASE("a single active feature converges onto its target") {
  std::mt19937_64 rng(25);
  const MorphFixture fx(rng);
  MorphTargets targets = fx.current();
  targets[40] += Vec2(0.03, -0.02);
  const FeatureMask mask = feature_mask({{41, 41}});
  HeadMesh mesh = fx.mesh;
  double residual = (mesh.vertices[40].head<2>() - targets[40]).norm();
  for (int pass = 0; pass < 5; ++pass) {
    mesh = morph_pass(mesh, targets, fx.lmap, 1.0, mask);
    const double next = (mesh.vertices[40].head<2>() - targets[40]).norm();
    CHECK(next < residual);
    residual = next;
  }
  CHECK(residual < 1e-6);
  // A vertex far from the feature does not move.
  CHECK(mesh.vertices[99] == fx.mesh.vertices[99]);
}

TEST_CASE("landmark frame fit recovers an exact similarity transform") {
  std::mt19937_64 rng(26);
  const MorphFixture fx(rng);
  LandmarkSet lm;
  // Image coordinates: x' = 0.3 + 0.4 x, y' = 0.7 - 0.4 y.
  for (std::size_t i = 0; i < kLandmarkCount; ++i) {
    const Vec3& v = fx.mesh.vertices[i];
    lm.points[i] = Vec2(0.3 + 0.4 * v.x(), 0.7 - 0.4 * v.y());
  }
  const MorphTargets t = landmarks_to_model_frame(lm, fx.mesh, fx.lmap);
  for (std::size_t i = 0; i < kLandmarkCount; ++i) CHECK((t[i] - fx.mesh.vertices[i].head<2>()).norm() < 1e-12);

  LandmarkSet line;
  for (std::size_t i = 0; i < kLandmarkCount; ++i) line.points[i] = Vec2(0.2 + 0.005 * i, 0.5);
  CHECK_THROWS_WITH_AS(landmarks_to_model_frame(line, fx.mesh, fx.lmap), doctest::Contains("degenerate"), Error);
  LandmarkSet point;
  point.points.fill(Vec2(0.4, 0.4));
  CHECK_THROWS_AS(landmarks_to_model_frame(point, fx.mesh, fx.lmap), Error);
}
