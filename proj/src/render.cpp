#include "headrecon/render.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

#include <Eigen/Geometry>
#include <nlohmann/json.hpp>

#include "headrecon/error.hpp"
#include "headrecon/parallel.hpp"

namespace headrecon {
namespace {

using nlohmann::json;

constexpr double kNearPlane = 1e-3;

struct ViewVertex {
  Vec3 view;     // camera-relative position, camera looks down -Z
  double inv_w;  // 1 / depth
  double sx, sy; // continuous pixel position
};

ViewVertex to_view(const Vec3& p, const RenderConfig& cfg, double focal) {
  ViewVertex v;
  v.view = Vec3(p.x(), p.y(), p.z() - cfg.camera_distance);
  const double w = -v.view.z();
  if (w <= kNearPlane) throw Error("degenerate camera: mesh vertex at or behind the camera");
  v.inv_w = 1.0 / w;
  const double size = cfg.image_size;
  v.sx = (focal * v.view.x() * v.inv_w + 1.0) * 0.5 * size;
  v.sy = (1.0 - focal * v.view.y() * v.inv_w) * 0.5 * size;
  return v;
}

std::vector<Vec3> vertex_normals(const HeadMesh& mesh) {
  std::vector<Vec3> normals(mesh.vertex_count(), Vec3::Zero());
  for (const Quad& q : mesh.faces) {
    const Vec3& a = mesh.vertices[q[0]];
    const Vec3& b = mesh.vertices[q[1]];
    const Vec3& c = mesh.vertices[q[2]];
    const Vec3& d = mesh.vertices[q[3]];
    // Sum of the two triangle cross products: twice the area-weighted normal.
    const Vec3 n = (b - a).cross(c - a) + (c - a).cross(d - a);
    for (const int idx : q) normals[idx] += n;
  }
  for (auto& n : normals) {
    const double len = n.norm();
    if (len > 0.0) n /= len;
  }
  return normals;
}

double lambert(const Vec3& normal, const RenderConfig& cfg) {
  double sum = 0.0;
  for (const auto& light : cfg.lights) {
    sum += light.intensity * std::max(0.0, normal.dot(-light.direction));
  }
  return sum * cfg.albedo;
}

// Depth-buffered triangle rasterization. `shade(tri, b0, b1, b2, x, y)` is
// called with perspective-correct barycentrics for every visible pixel.
template <typename Shade>
void rasterize(const HeadMesh& mesh, const RenderConfig& cfg, Shade&& shade) {
  cfg.validate();
  const double focal = 1.0 / std::tan(cfg.fov_deg * std::numbers::pi / 360.0);
  std::vector<ViewVertex> view;
  view.reserve(mesh.vertex_count());
  for (const Vec3& p : mesh.vertices) view.push_back(to_view(p, cfg, focal));

  const int size = cfg.image_size;
  std::vector<double> depth(static_cast<std::size_t>(size) * size,
                            std::numeric_limits<double>::infinity());

  auto draw = [&](int i0, int i1, int i2) {
    const ViewVertex& a = view[i0];
    const ViewVertex& b = view[i1];
    const ViewVertex& c = view[i2];
    const Vec3 geo_normal = (b.view - a.view).cross(c.view - a.view);
    if (geo_normal.dot(-a.view) <= 0.0) return;  // back-facing
    const double area = (b.sx - a.sx) * (c.sy - a.sy) - (b.sy - a.sy) * (c.sx - a.sx);
    if (area == 0.0) return;
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min({a.sx, b.sx, c.sx}))));
    const int x1 = std::min(size - 1, static_cast<int>(std::ceil(std::max({a.sx, b.sx, c.sx}))));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min({a.sy, b.sy, c.sy}))));
    const int y1 = std::min(size - 1, static_cast<int>(std::ceil(std::max({a.sy, b.sy, c.sy}))));
    const double inv_area = 1.0 / area;
    for (int y = y0; y <= y1; ++y) {
      const double py = y + 0.5;
      for (int x = x0; x <= x1; ++x) {
        const double px = x + 0.5;
        const double e0 = ((b.sx - px) * (c.sy - py) - (b.sy - py) * (c.sx - px)) * inv_area;
        const double e1 = ((c.sx - px) * (a.sy - py) - (c.sy - py) * (a.sx - px)) * inv_area;
        const double e2 = 1.0 - e0 - e1;
        if (e0 < 0.0 || e1 < 0.0 || e2 < 0.0) continue;
        const double inv_w = e0 * a.inv_w + e1 * b.inv_w + e2 * c.inv_w;
        const double w = 1.0 / inv_w;
        auto& slot = depth[static_cast<std::size_t>(y) * size + x];
        if (!(w < slot)) continue;
        slot = w;
        shade(i0, i1, i2, e0 * a.inv_w * w, e1 * b.inv_w * w, e2 * c.inv_w * w, x, y);
      }
    }
  };

  for (const Quad& q : mesh.faces) {
    draw(q[0], q[1], q[2]);
    draw(q[0], q[2], q[3]);
  }
}

json rect_json(const PixelRect& r) { return json::array({r.left, r.top, r.width, r.height}); }

PixelRect rect_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) throw Error("region box must be [left, top, width, height]");
  return {j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
}

Vec2 centroid(const std::array<Vec2, kLandmarkCount>& pts, std::initializer_list<std::pair<int, int>> ranges) {
  Vec2 sum = Vec2::Zero();
  int count = 0;
  for (const auto& [first, last] : ranges) {
    for (int i = first; i <= last; ++i) {
      sum += pts[static_cast<std::size_t>(i - 1)];
      ++count;
    }
  }
  return sum / count;
}

PixelRect box_around(const Vec2& center, int width, int height, int canvas) {
  if (width > canvas || height > canvas) throw Error("region size exceeds the canvas");
  const int left = std::clamp(static_cast<int>(std::lround(center.x() - width / 2.0)), 0, canvas - width);
  const int top = std::clamp(static_cast<int>(std::lround(center.y() - height / 2.0)), 0, canvas - height);
  return {left, top, width, height};
}

}  // namespace

std::vector<DirectionalLight> RenderConfig::default_lights() {
  const double s60 = std::sin(std::numbers::pi / 3.0);
  const double c60 = std::cos(std::numbers::pi / 3.0);
  const double s45 = std::sin(std::numbers::pi / 4.0);
  const double c45 = std::cos(std::numbers::pi / 4.0);
  return {
      {Vec3(0.0, 0.0, -1.0), 0.5},
      {Vec3(s60, 0.0, -c60), 0.25},
      {Vec3(-s60, 0.0, -c60), 0.25},
      {Vec3(0.0, -s45, -c45), 0.2},  // from above
      {Vec3(0.0, s45, -c45), 0.1},   // lower fill
  };
}

void RenderConfig::validate() const {
  if (image_size <= 0) throw Error("render image size must be positive");
  if (!(fov_deg > 0.0 && fov_deg < 120.0)) throw Error("field of view must be in (0, 120) degrees");
  if (!(camera_distance > 0.0)) throw Error("camera distance must be positive");
  for (const auto& light : lights) {
    if (std::abs(light.direction.norm() - 1.0) > 1e-9) throw Error("light direction is not a unit vector");
    if (!(light.intensity >= 0.0)) throw Error("light intensity must be non-negative");
  }
}

Vec2 project_point(const Vec3& p, const RenderConfig& cfg) {
  const double focal = 1.0 / std::tan(cfg.fov_deg * std::numbers::pi / 360.0);
  const auto v = to_view(p, cfg, focal);
  return {v.sx, v.sy};
}

HeadMesh rotate_yaw(const HeadMesh& mesh, double yaw_deg) {
  HeadMesh out = mesh;
  const double a = yaw_deg * std::numbers::pi / 180.0;
  const double c = std::cos(a);
  const double s = std::sin(a);
  for (Vec3& v : out.vertices) {
    const double x = v.x();
    const double z = v.z();
    v.x() = x * c + z * s;
    v.z() = -x * s + z * c;
  }
  return out;
}

LandmarkSet project_landmarks(const HeadMesh& mesh, const LandmarkVertexMap& lmap,
                              const RenderConfig& cfg, HeadRotation rotation, std::string frame_id) {
  LandmarkSet set;
  set.rotation = rotation;
  set.frame_id = std::move(frame_id);
  const double size = cfg.image_size;
  for (std::size_t i = 0; i < kLandmarkCount; ++i) {
    const Vec2 px = project_point(mesh.vertices.at(static_cast<std::size_t>(lmap.vertex_index[i])), cfg);
    set.points[i] = px / size;
  }
  check_landmarks(set);
  return set;
}

GrayImage render_frontal(const HeadMesh& mesh, const RenderConfig& cfg) {
  check_mesh(mesh);
  const auto normals = vertex_normals(mesh);
  GrayImage image(cfg.image_size, cfg.image_size, 0.0);
  rasterize(mesh, cfg, [&](int i0, int i1, int i2, double b0, double b1, double b2, int x, int y) {
    Vec3 n = b0 * normals[i0] + b1 * normals[i1] + b2 * normals[i2];
    const double len = n.norm();
    if (len > 0.0) n /= len;
    image.at(x, y) = std::clamp(lambert(n, cfg), 0.0, 1.0);
  });
  return image;
}

RgbImage render_frontal_frame(const HeadMesh& mesh, const RenderConfig& cfg) {
  return quantize8(gray_to_rgb(render_frontal(mesh, cfg)));
}

RgbImage render_textured(const HeadMesh& mesh, const RgbImage& texture, const RenderConfig& cfg) {
  check_mesh(mesh);
  if (texture.empty()) throw Error("empty texture");
  const auto normals = vertex_normals(mesh);
  RgbImage image(cfg.image_size, cfg.image_size);
  const double tw = texture.width();
  const double th = texture.height();
  rasterize(mesh, cfg, [&](int i0, int i1, int i2, double b0, double b1, double b2, int x, int y) {
    Vec3 n = b0 * normals[i0] + b1 * normals[i1] + b2 * normals[i2];
    const double len = n.norm();
    if (len > 0.0) n /= len;
    const double shade = std::clamp(lambert(n, cfg), 0.0, 1.0);
    const Vec2 uv = b0 * mesh.uvs[i0] + b1 * mesh.uvs[i1] + b2 * mesh.uvs[i2];
    const Rgb albedo = sample_bilinear(texture, uv.x() * tw, uv.y() * th);
    image.at(x, y) = {static_cast<float>(albedo.r * shade), static_cast<float>(albedo.g * shade),
                      static_cast<float>(albedo.b * shade)};
  });
  return image;
}

RegionImages crop_regions(const GrayImage& image, const RegionBoxes& boxes) {
  RegionImages out;
  for (const Region r : kActiveRegions) {
    try {
      out[region_slot(r)] = crop(image, boxes[r]);
    } catch (const Error&) {
      throw Error(std::string(region_name(r)) + " box is out of the image bounds");
    }
  }
  return out;
}

RegionLayout make_region_layout(std::span<const LandmarkSet> landmarks,
                                const RegionLayoutConfig& cfg) {
  if (landmarks.empty()) throw Error("region layout needs at least one landmark set");
  if (cfg.canvas_size <= 0 || !(cfg.landmark_width > 0.0)) throw Error("invalid region layout config");
  std::array<Vec2, kLandmarkCount> mean;
  mean.fill(Vec2::Zero());
  for (const auto& set : landmarks) {
    for (std::size_t i = 0; i < kLandmarkCount; ++i) mean[i] += set.points[i];
  }
  Vec2 lo = Vec2::Constant(std::numeric_limits<double>::infinity());
  Vec2 hi = -lo;
  for (auto& p : mean) {
    p /= static_cast<double>(landmarks.size());
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double width = hi.x() - lo.x();
  if (!(width > 0.0)) throw Error("degenerate landmark spread");
  const double scale = cfg.landmark_width / width;
  const Vec2 canvas_center = Vec2::Constant(cfg.canvas_size / 2.0);
  const Vec2 box_center = 0.5 * (lo + hi);

  RegionLayout layout;
  layout.canvas_size = cfg.canvas_size;
  for (std::size_t i = 0; i < kLandmarkCount; ++i) {
    layout.canonical[i] = canvas_center + scale * (mean[i] - box_center);
  }
  if (cfg.boxes) {
    layout.boxes = *cfg.boxes;
  } else {
    const auto& c = layout.canonical;
    const std::array<Vec2, 4> centers{
        centroid(c, {{18, 27}, {37, 48}}),
        centroid(c, {{28, 36}}),
        centroid(c, {{49, 68}}),
        canvas_center,
    };
    for (std::size_t s = 0; s < 4; ++s) {
      layout.boxes.boxes[s] = box_around(centers[s], cfg.sizes[s][0], cfg.sizes[s][1], cfg.canvas_size);
    }
  }
  for (const Region r : kActiveRegions) {
    const PixelRect& b = layout.boxes[r];
    if (b.left < 0 || b.top < 0 || b.width <= 0 || b.height <= 0 ||
        b.left + b.width > cfg.canvas_size || b.top + b.height > cfg.canvas_size) {
      throw Error(std::string(region_name(r)) + " box lies outside the canvas");
    }
  }
  return layout;
}

GrayImage align_face(const GrayImage& frame, const LandmarkSet& landmarks, const RegionLayout& layout) {
  if (frame.empty()) throw Error("empty frame");
  const Vec2 dims(frame.width(), frame.height());
  Vec2 p_mean = Vec2::Zero();
  Vec2 q_mean = Vec2::Zero();
  for (std::size_t i = 0; i < kLandmarkCount; ++i) {
    p_mean += landmarks.points[i].cwiseProduct(dims);
    q_mean += layout.canonical[i];
  }
  p_mean /= kLandmarkCount;
  q_mean /= kLandmarkCount;
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < kLandmarkCount; ++i) {
    const Vec2 dp = landmarks.points[i].cwiseProduct(dims) - p_mean;
    num += dp.dot(layout.canonical[i] - q_mean);
    den += dp.squaredNorm();
  }
  if (!(den > 1e-12) || !(num > 0.0)) throw Error("degenerate landmark spread for alignment");
  const double scale = num / den;
  const Vec2 shift = q_mean - scale * p_mean;

  GrayImage out(layout.canvas_size, layout.canvas_size);
  for (int y = 0; y < layout.canvas_size; ++y) {
    for (int x = 0; x < layout.canvas_size; ++x) {
      const Vec2 src = (Vec2(x + 0.5, y + 0.5) - shift) / scale;
      out.at(x, y) = sample_bilinear(frame, src.x(), src.y());
    }
  }
  return out;
}

RegionImages extract_regions(const RgbImage& frame, const LandmarkSet& landmarks,
                             const RegionLayout& layout) {
  auto regions = crop_regions(align_face(to_gray(frame), landmarks, layout), layout.boxes);
  for (auto& img : regions) img = quantize8(img);
  return regions;
}

RenderedRegionDB build_region_db(std::span<const HeadMesh> meshes,
                                 std::span<const std::string> model_ids,
                                 const LandmarkVertexMap& lmap, const RenderConfig& cfg,
                                 const RegionLayoutConfig& layout_cfg, int workers) {
  if (meshes.empty()) throw Error("empty database");
  if (model_ids.size() != meshes.size()) throw Error("model id count does not match mesh count");
  cfg.validate();

  std::vector<LandmarkSet> landmarks(meshes.size());
  for (std::size_t m = 0; m < meshes.size(); ++m) {
    landmarks[m] = project_landmarks(meshes[m], lmap, cfg, {}, model_ids[m]);
  }

  RenderedRegionDB db;
  db.model_ids.assign(model_ids.begin(), model_ids.end());
  db.layout = make_region_layout(landmarks, layout_cfg);
  for (auto& slot : db.images) slot.resize(meshes.size());

  parallel_for(meshes.size(), workers, [&](std::size_t m) {
    const auto regions = extract_regions(render_frontal_frame(meshes[m], cfg), landmarks[m], db.layout);
    for (std::size_t s = 0; s < 4; ++s) db.images[s][m] = regions[s];
  });
  return db;
}

void save_region_db(const RenderedRegionDB& db, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json meta;
  meta["model_ids"] = db.model_ids;
  meta["canvas_size"] = db.layout.canvas_size;
  json canon = json::array();
  for (const Vec2& p : db.layout.canonical) canon.push_back({p.x(), p.y()});
  meta["canonical_landmarks"] = std::move(canon);
  json boxes;
  for (const Region r : kActiveRegions) boxes[std::string(region_name(r))] = rect_json(db.layout.boxes[r]);
  meta["boxes"] = std::move(boxes);

  for (const Region r : kActiveRegions) {
    const auto& images = db.region(r);
    for (std::size_t m = 0; m < db.model_count(); ++m) {
      save_gray_png(images.at(m), dir / (db.model_ids[m] + "_" + std::string(region_name(r)) + ".png"));
    }
  }
  std::ofstream out(dir / "render_db.json", std::ios::trunc);
  out << meta.dump(2) << "\n";
  if (!out) throw Error("cannot write " + (dir / "render_db.json").string());
}

RenderedRegionDB load_region_db(const std::filesystem::path& dir) {
  std::ifstream in(dir / "render_db.json");
  if (!in) throw Error("missing " + (dir / "render_db.json").string());
  json meta;
  try {
    meta = json::parse(in);
  } catch (const json::exception& e) {
    throw Error("malformed render_db.json: " + std::string(e.what()));
  }
  RenderedRegionDB db;
  db.model_ids = meta.at("model_ids").get<std::vector<std::string>>();
  db.layout.canvas_size = meta.at("canvas_size").get<int>();
  const auto& canon = meta.at("canonical_landmarks");
  if (canon.size() != kLandmarkCount) throw Error("render_db.json: expected 68 canonical landmarks");
  for (std::size_t i = 0; i < kLandmarkCount; ++i) {
    db.layout.canonical[i] = Vec2(canon[i][0].get<double>(), canon[i][1].get<double>());
  }
  for (const Region r : kActiveRegions) {
    db.layout.boxes[r] = rect_from_json(meta.at("boxes").at(std::string(region_name(r))));
    auto& images = db.images[region_slot(r)];
    for (const auto& id : db.model_ids) {
      auto img = load_gray_png(dir / (id + "_" + std::string(region_name(r)) + ".png"));
      const PixelRect& box = db.layout.boxes[r];
      if (img.width() != box.width || img.height() != box.height) {
        throw Error("region image " + id + "_" + std::string(region_name(r)) + " has the wrong size");
      }
      images.push_back(std::move(img));
    }
  }
  return db;
}

}  // namespace headrecon
