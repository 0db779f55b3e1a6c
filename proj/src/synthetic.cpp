#include "headrecon/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <mutex>
#include <numbers>
#include <random>
#include <sstream>

#include "headrecon/error.hpp"
#include "headrecon/morph.hpp"
#include "headrecon/parallel.hpp"
#include "io_util.hpp"

namespace headrecon {
namespace {

using nlohmann::json;

constexpr double kDeg = std::numbers::pi / 180.0;

// Column/ring spacing: denser toward the front of the face.
constexpr double kThetaLinear = 0.4;
constexpr double kPhiLinear = 0.45;

// Base ellipsoid radii before the per-head multipliers.
constexpr double kRadiusX = 0.75;
constexpr double kRadiusY = 0.86;
constexpr double kRadiusZ = 0.85;

struct Range {
  double lo;
  double hi;
};

constexpr Range kHeadWidth{0.92, 1.08};
constexpr Range kHeadHeight{0.92, 1.08};
constexpr Range kHeadDepth{0.90, 1.10};
constexpr Range kNoseLength{0.80, 1.20};
constexpr Range kNoseWidth{0.80, 1.25};
constexpr Range kEyeSpacing{0.90, 1.10};
constexpr Range kEyeSize{0.85, 1.20};
constexpr Range kMouthWidth{0.85, 1.20};
constexpr Range kMouthThickness{0.75, 1.30};
constexpr Range kJawTaper{0.0, 0.22};

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

// Uniform in [0, 1) from the top 53 bits; portable across standard libraries.
double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double uniform(std::mt19937_64& rng, Range r) { return r.lo + (r.hi - r.lo) * unit(rng); }

double theta_of_s(double s) { return std::numbers::pi * (kThetaLinear * s + (1.0 - kThetaLinear) * s * s * s); }
double phi_of_t(double t) { return 0.5 * std::numbers::pi * (kPhiLinear * t + (1.0 - kPhiLinear) * t * t * t); }

// Inverse of a monotone odd map on [-1, 1] by bisection.
template <typename F>
double invert(F f, double value) {
  double lo = -1.0;
  double hi = 1.0;
  for (int i = 0; i < 80; ++i) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) < value ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// Template angles in degrees: theta around the head (0 = front, + toward +X),
// phi latitude (+ up).
struct Angles {
  double theta;
  double phi;
};

Angles grid_angles(int ring, int column) {
  const double s = (column - (kTemplateColumns - 1) / 2.0) / ((kTemplateColumns - 1) / 2.0);
  const double t = 1.0 - 2.0 * (ring + 1) / (kTemplateRings + 1.0);
  return {theta_of_s(s) / kDeg, phi_of_t(t) / kDeg};
}

std::vector<Angles> template_angles() {
  std::vector<Angles> out;
  out.reserve(kTemplateVertexCount);
  for (int r = 0; r < kTemplateRings; ++r) {
    for (int c = 0; c < kTemplateColumns; ++c) out.push_back(grid_angles(r, c));
  }
  out.push_back({0.0, 90.0});
  out.push_back({0.0, -90.0});
  return out;
}

Vec2 template_uv(const Angles& a) {
  const double s = invert(theta_of_s, a.theta * kDeg);
  const double t = invert(phi_of_t, a.phi * kDeg);
  return {(s + 1.0) / 2.0, (1.0 - t) / 2.0};
}

double gauss(double dx, double dy, double sx, double sy) {
  return std::exp(-(dx * dx / (2.0 * sx * sx) + dy * dy / (2.0 * sy * sy)));
}

Angles warp(const Angles& a, const SyntheticHeadParams& p) {
  double dtheta = 0.0;
  double dphi = 0.0;
  for (const double side : {-1.0, 1.0}) {
    const double ec = side * 20.0;
    const double g = gauss(a.theta - ec, a.phi - 12.0, 13.0, 9.0);
    dtheta += g * (ec * (p.eye_spacing - 1.0) + (a.theta - ec) * (p.eye_size - 1.0));
    dphi += g * (a.phi - 12.0) * (p.eye_size - 1.0);
  }
  const double gn = gauss(a.theta, a.phi + 1.0, 12.0, 14.0);
  dphi += gn * (a.phi - 14.0) * (p.nose_length - 1.0) * 0.5;
  dtheta += gn * a.theta * (p.nose_width - 1.0);
  const double gm = gauss(a.theta, a.phi + 30.0, 22.0, 9.0);
  dtheta += gm * a.theta * (p.mouth_width - 1.0);
  dphi += gm * (a.phi + 30.0) * (p.mouth_thickness - 1.0);
  return {a.theta + dtheta, a.phi + dphi};
}

double nose_relief(const Angles& a, const SyntheticHeadParams& p) {
  const double t = std::clamp((14.0 - a.phi) / 26.0, 0.0, 1.0);
  const double width = (3.5 + 3.5 * t) * p.nose_width;
  const double profile = 0.04 + 0.14 * p.nose_length * std::pow(t, 1.6);
  double fade = 1.0;
  if (a.phi > 14.0) fade = std::exp(-std::pow((a.phi - 14.0) / 6.0, 2.0));
  if (a.phi < -12.0) fade = std::exp(-std::pow((a.phi + 12.0) / 2.5, 2.0));
  return profile * std::exp(-a.theta * a.theta / (2.0 * width * width)) * fade;
}

// Outward offset along the surface normal, in model units.
double relief(const Angles& a, const SyntheticHeadParams& p) {
  double h = nose_relief(a, p);
  for (const double side : {-1.0, 1.0}) {
    h += 0.05 * gauss(a.theta - side * 8.0 * p.nose_width, a.phi + 12.0, 4.0, 3.0);
    h -= 0.06 * gauss(a.theta - side * 20.0, a.phi - 12.0, 11.0, 6.0);
    h += 0.035 * p.eye_size * gauss(a.theta - side * 20.0, a.phi - 12.0, 7.0 * p.eye_size, 3.5 * p.eye_size);
    h += 0.04 * gauss(a.theta - side * 22.0, a.phi - 21.0, 14.0, 3.5);
    h += 0.03 * gauss(a.theta - side * 40.0, a.phi, 12.0, 8.0);
  }
  h += 0.04 * gauss(a.theta, a.phi + 26.5, 14.0 * p.mouth_width, 2.5 * p.mouth_thickness);
  h += 0.045 * gauss(a.theta, a.phi + 33.5, 12.0 * p.mouth_width, 3.0 * p.mouth_thickness);
  h -= 0.02 * gauss(a.theta, a.phi + 30.0, 16.0 * p.mouth_width, 1.0);
  h += 0.05 * gauss(a.theta, a.phi + 50.0, 12.0, 6.0);
  return h;
}

Vec3 surface_point(const Angles& template_angles, const SyntheticHeadParams& p) {
  const Angles w = warp(template_angles, p);
  const double th = w.theta * kDeg;
  const double ph = w.phi * kDeg;
  const double rx = kRadiusX * p.head_width;
  const double ry = kRadiusY * p.head_height;
  const double rz = kRadiusZ * p.head_depth;
  Vec3 pos(rx * std::sin(th) * std::cos(ph), ry * std::sin(ph), rz * std::cos(th) * std::cos(ph));
  const Vec3 normal = Vec3(pos.x() / (rx * rx), pos.y() / (ry * ry), pos.z() / (rz * rz)).normalized();
  pos += relief(template_angles, p) * normal;
  const double below = std::max(0.0, -std::sin(ph));
  pos.x() *= 1.0 - p.jaw_taper * std::pow(below, 1.5);
  return pos;
}

int vertex_id(int ring, int column) { return ring * kTemplateColumns + column; }

HeadMesh template_topology() {
  HeadMesh mesh;
  const int top = kTemplateRings * kTemplateColumns;
  const int bottom = top + 1;
  for (int r = 0; r + 1 < kTemplateRings; ++r) {
    for (int c = 0; c + 1 < kTemplateColumns; ++c) {
      mesh.faces.push_back({vertex_id(r, c), vertex_id(r + 1, c), vertex_id(r + 1, c + 1), vertex_id(r, c + 1)});
    }
  }
  const int last = kTemplateRings - 1;
  for (int c = 0; c + 2 < kTemplateColumns; c += 2) {
    mesh.faces.push_back({top, vertex_id(0, c), vertex_id(0, c + 1), vertex_id(0, c + 2)});
    mesh.faces.push_back({bottom, vertex_id(last, c + 2), vertex_id(last, c + 1), vertex_id(last, c)});
  }
  mesh.uvs.reserve(kTemplateVertexCount);
  for (int r = 0; r < kTemplateRings; ++r) {
    for (int c = 0; c < kTemplateColumns; ++c) {
      mesh.uvs.emplace_back(static_cast<double>(c) / (kTemplateColumns - 1),
                            (r + 1.0) / (kTemplateRings + 1.0));
    }
  }
  mesh.uvs.emplace_back(0.5, 0.0);
  mesh.uvs.emplace_back(0.5, 1.0);
  return mesh;
}

// Landmark positions in template degrees, dlib 68-point order.
std::array<Angles, kLandmarkCount> landmark_angles() {
  std::array<Angles, kLandmarkCount> out{};
  auto set = [&](int id, double theta, double phi) { out[static_cast<std::size_t>(id - 1)] = {theta, phi}; };
  const double pi = std::numbers::pi;
  for (int i = 0; i < 17; ++i) {
    const double t = i / 16.0;
    set(i + 1, -70.0 * std::cos(pi * t), 5.0 - 57.0 * std::sin(pi * t));
  }
  for (int i = 0; i < 5; ++i) {
    const double t = i / 4.0;
    const double lift = 20.0 + 4.0 * std::sin(pi * t);
    set(18 + i, -38.0 + 30.0 * t, lift);
    set(23 + i, 8.0 + 30.0 * t, 20.0 + 4.0 * std::sin(pi * (1.0 - t)));
  }
  const std::array<double, 4> bridge{14.0, 6.0, -2.0, -10.0};
  for (int i = 0; i < 4; ++i) set(28 + i, 0.0, bridge[static_cast<std::size_t>(i)]);
  for (int i = 0; i < 5; ++i) set(32 + i, -9.0 + 4.5 * i, -15.0);
  // Eye contours: outer corner, two upper, inner corner, two lower.
  const std::array<Angles, 6> right_eye{{{-29, 12}, {-23, 15.5}, {-17, 15.5}, {-11, 12}, {-17, 8.5}, {-23, 8.5}}};
  const std::array<Angles, 6> left_eye{{{11, 12}, {17, 15.5}, {23, 15.5}, {29, 12}, {23, 8.5}, {17, 8.5}}};
  for (int i = 0; i < 6; ++i) {
    out[static_cast<std::size_t>(36 + i)] = right_eye[static_cast<std::size_t>(i)];
    out[static_cast<std::size_t>(42 + i)] = left_eye[static_cast<std::size_t>(i)];
  }
  for (int k = 0; k < 12; ++k) {
    const double a = pi * k / 6.0;
    set(49 + k, -18.0 * std::cos(a), -30.0 + 4.5 * std::sin(a));
  }
  for (int k = 0; k < 8; ++k) {
    const double a = pi * k / 4.0;
    set(61 + k, -13.0 * std::cos(a), -30.0 + 1.5 * std::sin(a));
  }
  return out;
}

std::array<int, kLandmarkCount> landmark_vertices() {
  const auto angles = template_angles();
  const auto targets = landmark_angles();
  std::vector<bool> used(angles.size(), false);
  std::array<int, kLandmarkCount> out{};
  for (std::size_t i = 0; i < kLandmarkCount; ++i) {
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    // Grid vertices only; the poles never carry a landmark.
    for (int v = 0; v < kTemplateRings * kTemplateColumns; ++v) {
      if (used[static_cast<std::size_t>(v)]) continue;
      const double dt = angles[static_cast<std::size_t>(v)].theta - targets[i].theta;
      const double dp = angles[static_cast<std::size_t>(v)].phi - targets[i].phi;
      const double d = dt * dt + dp * dp;
      if (d < best_d) {
        best_d = d;
        best = v;
      }
    }
    used[static_cast<std::size_t>(best)] = true;
    out[i] = best;
  }
  return out;
}

void check_range(double value, Range r, const char* name) {
  if (!(value >= r.lo && value <= r.hi)) {
    throw Error(std::string("synthetic head parameter out of range: ") + name);
  }
}

std::string model_id(int index, int count) {
  const int digits = std::max(3, static_cast<int>(std::to_string(count - 1).size()));
  std::ostringstream ss;
  ss << "head_" << std::setw(digits) << std::setfill('0') << index;
  return ss.str();
}

json params_json(const SyntheticHeadParams& p) {
  return {{"head_width", p.head_width},   {"head_height", p.head_height},
          {"head_depth", p.head_depth},   {"nose_length", p.nose_length},
          {"nose_width", p.nose_width},   {"eye_spacing", p.eye_spacing},
          {"eye_size", p.eye_size},       {"mouth_width", p.mouth_width},
          {"mouth_thickness", p.mouth_thickness}, {"jaw_taper", p.jaw_taper}};
}

// Multiplicative color patch on the UV map.
struct Patch {
  Vec2 center;  // uv
  Vec2 sigma;   // uv
  Rgb tint;     // color multiplier at the patch center
};

Vec2 uv_centroid(const UvLandmarks& uv, int first, int last) {
  Vec2 sum = Vec2::Zero();
  for (int i = first; i <= last; ++i) sum += uv.points[static_cast<std::size_t>(i - 1)];
  return sum / (last - first + 1);
}

Vec2 uv_extent(const UvLandmarks& uv, int first, int last) {
  Vec2 lo = uv.points[static_cast<std::size_t>(first - 1)];
  Vec2 hi = lo;
  for (int i = first; i <= last; ++i) {
    lo = lo.cwiseMin(uv.points[static_cast<std::size_t>(i - 1)]);
    hi = hi.cwiseMax(uv.points[static_cast<std::size_t>(i - 1)]);
  }
  return hi - lo;
}

}  // namespace

void SyntheticHeadParams::validate() const {
  check_range(head_width, kHeadWidth, "head_width");
  check_range(head_height, kHeadHeight, "head_height");
  check_range(head_depth, kHeadDepth, "head_depth");
  check_range(nose_length, kNoseLength, "nose_length");
  check_range(nose_width, kNoseWidth, "nose_width");
  check_range(eye_spacing, kEyeSpacing, "eye_spacing");
  check_range(eye_size, kEyeSize, "eye_size");
  check_range(mouth_width, kMouthWidth, "mouth_width");
  check_range(mouth_thickness, kMouthThickness, "mouth_thickness");
  check_range(jaw_taper, kJawTaper, "jaw_taper");
}

SyntheticHeadParams sample_head_params(std::uint64_t seed) {
  auto rng = make_rng(seed, 1, 0);
  SyntheticHeadParams p;
  p.head_width = uniform(rng, kHeadWidth);
  p.head_height = uniform(rng, kHeadHeight);
  p.head_depth = uniform(rng, kHeadDepth);
  p.nose_length = uniform(rng, kNoseLength);
  p.nose_width = uniform(rng, kNoseWidth);
  p.eye_spacing = uniform(rng, kEyeSpacing);
  p.eye_size = uniform(rng, kEyeSize);
  p.mouth_width = uniform(rng, kMouthWidth);
  p.mouth_thickness = uniform(rng, kMouthThickness);
  p.jaw_taper = uniform(rng, kJawTaper);
  return p;
}

HeadMesh make_synthetic_head(const SyntheticHeadParams& params) {
  params.validate();
  HeadMesh mesh = template_topology();
  const auto angles = template_angles();
  mesh.vertices.reserve(angles.size());
  for (const auto& a : angles) mesh.vertices.push_back(surface_point(a, params));
  // The seam columns share a position; copy so they match bit for bit.
  for (int r = 0; r < kTemplateRings; ++r) {
    mesh.vertices[static_cast<std::size_t>(vertex_id(r, kTemplateColumns - 1))].x() =
        -mesh.vertices[static_cast<std::size_t>(vertex_id(r, 0))].x();
  }
  return mesh;
}

LandmarkVertexMap synthetic_landmark_map() {
  LandmarkVertexMap map;
  map.vertex_index = landmark_vertices();
  map.sigma = default_sigmas();
  return map;
}

RegionMap synthetic_region_map() {
  const auto angles = template_angles();
  std::array<std::vector<int>, 4> sets;
  for (int v = 0; v < kTemplateRings * kTemplateColumns; ++v) {
    const auto& a = angles[static_cast<std::size_t>(v)];
    const bool eyes = (std::abs(a.theta - 20.0) <= 16.0 || std::abs(a.theta + 20.0) <= 16.0) && a.phi >= 2.0 &&
                      a.phi <= 28.0;
    const bool nose = std::abs(a.theta) <= 13.0 && a.phi >= -22.0 && a.phi <= 20.0;
    const bool mouth = std::abs(a.theta) <= 26.0 && a.phi >= -42.0 && a.phi <= -20.0;
    const bool face = std::abs(a.theta) <= 80.0 && a.phi >= -62.0 && a.phi <= 40.0;
    if (eyes) sets[region_slot(Region::eyes)].push_back(v);
    if (nose) sets[region_slot(Region::nose)].push_back(v);
    if (mouth) sets[region_slot(Region::mouth)].push_back(v);
    if (face) sets[region_slot(Region::face)].push_back(v);
  }
  RegionMap map;
  for (const Region r : kActiveRegions) map.set(r, std::move(sets[region_slot(r)]));
  map.assign_unused(kTemplateVertexCount);
  return map;
}

UvLandmarks synthetic_uv_landmarks() {
  const HeadMesh topo = template_topology();
  const auto vertices = landmark_vertices();
  UvLandmarks uv;
  Vec2 lo = Vec2::Ones();
  Vec2 hi = Vec2::Zero();
  for (std::size_t i = 0; i < kLandmarkCount; ++i) {
    uv.points[i] = topo.uvs[static_cast<std::size_t>(vertices[i])];
    lo = lo.cwiseMin(uv.points[i]);
    hi = hi.cwiseMax(uv.points[i]);
  }
  // The landmarks stop at the brows, so the box grows mostly upward over the
  // forehead; the jawline already traces the sides and the chin.
  const Vec2 ext = hi - lo;
  const Vec2 a = (lo - Vec2(0.06 * ext.x(), 0.3 * ext.y())).cwiseMax(Vec2::Constant(0.005));
  const Vec2 b = (hi + Vec2(0.06 * ext.x(), 0.04 * ext.y())).cwiseMin(Vec2::Constant(0.995));
  const Vec2 mid = 0.5 * (a + b);
  // Corners pulled in to follow the rounded forehead and chin.
  const double top_in = 0.2 * ext.x();
  const double bottom_in = 0.22 * ext.x();
  uv.anchors = {Vec2(a.x() + top_in, a.y()),    Vec2(mid.x(), a.y()), Vec2(b.x() - top_in, a.y()),
                Vec2(b.x(), mid.y()),           Vec2(b.x() - bottom_in, b.y()), Vec2(mid.x(), b.y()),
                Vec2(a.x() + bottom_in, b.y()), Vec2(a.x(), mid.y())};
  // Forehead patch between the brows and the hairline.
  const Vec2 p0 = template_uv({-20.0, 36.0});
  const Vec2 p1 = template_uv({20.0, 28.0});
  uv.skin_region = {p0, Vec2(p1.x(), p0.y()), p1, Vec2(p0.x(), p1.y())};
  uv.validate();
  return uv;
}

RgbImage synthetic_texture(std::uint64_t seed, int size) {
  if (size <= 0) throw Error("texture size must be positive");
  auto rng = make_rng(seed, 2, 0);
  const double red = 0.68 + 0.18 * unit(rng);
  const Rgb tone{static_cast<float>(red), static_cast<float>(red * (0.70 + 0.10 * unit(rng))),
                 static_cast<float>(red * (0.56 + 0.12 * unit(rng)))};
  constexpr int kNoise = 9;
  std::array<double, kNoise * kNoise> noise{};
  for (auto& n : noise) n = 0.05 * (2.0 * unit(rng) - 1.0);

  const UvLandmarks uv = synthetic_uv_landmarks();
  const double brow = 0.45 + 0.2 * unit(rng);
  const double eye = 0.35 + 0.2 * unit(rng);
  const double lip = 0.75 + 0.1 * unit(rng);
  std::vector<Patch> patches;
  for (const auto& [first, last] : {std::pair{18, 22}, std::pair{23, 27}}) {
    const Vec2 ext = uv_extent(uv, first, last);
    patches.push_back({uv_centroid(uv, first, last), Vec2(0.45 * ext.x(), 0.004), {float(brow), float(brow), float(brow)}});
  }
  for (const auto& [first, last] : {std::pair{37, 42}, std::pair{43, 48}}) {
    const Vec2 ext = uv_extent(uv, first, last);
    patches.push_back({uv_centroid(uv, first, last), Vec2(0.35 * ext.x(), 0.45 * ext.y()), {float(eye), float(eye), float(eye * 1.05)}});
  }
  {
    const Vec2 ext = uv_extent(uv, 49, 60);
    patches.push_back({uv_centroid(uv, 49, 60), Vec2(0.4 * ext.x(), 0.4 * ext.y()), {0.95F, float(lip), float(lip)}});
  }

  RgbImage image(size, size);
  for (int y = 0; y < size; ++y) {
    const double v = (y + 0.5) / size;
    const double gy = v * (kNoise - 1);
    const int iy = std::min(static_cast<int>(gy), kNoise - 2);
    double fy = gy - iy;
    fy = fy * fy * (3.0 - 2.0 * fy);
    for (int x = 0; x < size; ++x) {
      const double u = (x + 0.5) / size;
      const double gx = u * (kNoise - 1);
      const int ix = std::min(static_cast<int>(gx), kNoise - 2);
      double fx = gx - ix;
      fx = fx * fx * (3.0 - 2.0 * fx);
      auto at = [&](int a, int b) { return noise[static_cast<std::size_t>(b * kNoise + a)]; };
      const double n0 = at(ix, iy) + fx * (at(ix + 1, iy) - at(ix, iy));
      const double n1 = at(ix, iy + 1) + fx * (at(ix + 1, iy + 1) - at(ix, iy + 1));
      const double scale = (1.0 + 0.06 * (0.5 - v)) * (1.0 + n0 + fy * (n1 - n0));
      Rgb px{static_cast<float>(tone.r * scale), static_cast<float>(tone.g * scale),
             static_cast<float>(tone.b * scale)};
      for (const auto& patch : patches) {
        const double du = u - patch.center.x();
        const double dv = v - patch.center.y();
        if (std::abs(du) > 4.0 * patch.sigma.x() || std::abs(dv) > 4.0 * patch.sigma.y()) continue;
        const double g = gauss(du, dv, patch.sigma.x(), patch.sigma.y());
        for (int c = 0; c < 3; ++c) px[c] = static_cast<float>(px[c] * (1.0 - g * (1.0 - patch.tint[c])));
      }
      for (int c = 0; c < 3; ++c) px[c] = std::clamp(px[c], 0.0F, 1.0F);
      image.at(x, y) = px;
    }
  }
  return image;
}

SyntheticDatabase make_synthetic_db(std::uint64_t seed, int count) {
  if (count < 2) throw Error("synthetic database needs at least 2 heads");
  SyntheticDatabase db;
  db.regions = synthetic_region_map();
  db.lmap = synthetic_landmark_map();
  db.uv = synthetic_uv_landmarks();
  auto rng = make_rng(seed, 0, 0);
  for (int i = 0; i < count; ++i) {
    db.ids.push_back(model_id(i, count));
    db.params.push_back(sample_head_params(rng()));
    db.texture_seeds.push_back(rng());
    db.meshes.push_back(make_synthetic_head(db.params.back()));
  }
  return db;
}

void gen_synthetic_db(std::uint64_t seed, int count, const std::filesystem::path& dir, int texture_size,
                      int workers) {
  const SyntheticDatabase db = make_synthetic_db(seed, count);
  const auto report = validate_database(db.meshes, db.regions, db.lmap, db.ids);
  if (!report.ok()) {
    for (const auto& check : report.checks) {
      if (!check.passed) throw Error("synthetic database failed validation: " + check.name + ": " + check.detail);
    }
  }

  namespace fs = std::filesystem;
  fs::create_directories(dir / "meshes");
  fs::create_directories(dir / "textures");
  save_region_map(db.regions, dir / "regions.json");
  save_landmark_map(db.lmap, dir / "landmark_map.json");
  save_uv_landmarks(db.uv, dir / "uv_landmarks.json");

  json manifest;
  manifest["format"] = "headrecon-db";
  manifest["version"] = 1;
  manifest["seed"] = seed;
  manifest["count"] = count;
  manifest["texture_size"] = texture_size;
  manifest["models"] = db.ids;
  json params = json::array();
  for (const auto& p : db.params) params.push_back(params_json(p));
  manifest["params"] = std::move(params);
  detail::write_file(dir / "manifest.json", manifest.dump(2) + "\n");

  // Eight-bit sums keep the average independent of the worker schedule.
  const auto pixel_count = static_cast<std::size_t>(texture_size) * static_cast<std::size_t>(texture_size);
  std::vector<std::uint32_t> sum(pixel_count * 3, 0);
  std::mutex sum_mutex;
  parallel_for(static_cast<std::size_t>(count), workers, [&](std::size_t i) {
    save_head_mesh(db.meshes[i], dir / "meshes" / (db.ids[i] + ".obj"));
    const RgbImage tex = quantize8(synthetic_texture(db.texture_seeds[i], texture_size));
    save_rgb_png(tex, dir / "textures" / (db.ids[i] + ".png"));
    const auto px = tex.pixels();
    std::lock_guard lock(sum_mutex);
    for (std::size_t k = 0; k < pixel_count; ++k) {
      for (int c = 0; c < 3; ++c) sum[k * 3 + static_cast<std::size_t>(c)] += static_cast<std::uint32_t>(std::lround(px[k][c] * 255.0F));
    }
  });

  RgbImage average(texture_size, texture_size);
  auto avg_px = average.pixels();
  for (std::size_t k = 0; k < pixel_count; ++k) {
    for (int c = 0; c < 3; ++c) {
      avg_px[k][c] = static_cast<float>(sum[k * 3 + static_cast<std::size_t>(c)] / (255.0 * count));
    }
  }
  save_rgb_png(average, dir / "average_texture.png");
}

SyntheticFrame render_input_frame(const HeadMesh& mesh, const LandmarkVertexMap& lmap, const RgbImage* texture,
                                  double yaw_deg, const RenderConfig& cfg, const std::string& frame_id) {
  const HeadMesh turned = rotate_yaw(mesh, yaw_deg);
  SyntheticFrame frame;
  frame.image = texture != nullptr ? quantize8(render_textured(turned, *texture, cfg))
                                   : render_frontal_frame(turned, cfg);
  frame.landmarks = project_landmarks(turned, lmap, cfg, HeadRotation{yaw_deg, 0.0, 0.0}, frame_id);
  return frame;
}

void save_input_frames(std::span<const SyntheticFrame> frames, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "frames");
  std::filesystem::create_directories(dir / "landmarks");
  for (const auto& f : frames) {
    save_rgb_png(f.image, dir / "frames" / (f.landmarks.frame_id + ".png"));
    save_landmarks(f.landmarks, dir / "landmarks" / (f.landmarks.frame_id + ".json"));
  }
}

}  // namespace headrecon
