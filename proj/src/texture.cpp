#include "headrecon/texture.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <string>

#include <Eigen/Dense>
#include <opencv2/imgproc.hpp>

#include "headrecon/error.hpp"
#include "io_util.hpp"

namespace headrecon {

using nlohmann::json;

TextureAtlas make_atlas(RgbImage pixels, TextureSource source) {
  if (pixels.width() != pixels.height() || pixels.empty()) throw Error("texture atlas must be square");
  TextureAtlas atlas;
  atlas.provenance.assign(pixels.size(), source);
  atlas.pixels = std::move(pixels);
  return atlas;
}

namespace {

bool in_unit_square(const Vec2& p) {
  return p.x() >= 0.0 && p.x() <= 1.0 && p.y() >= 0.0 && p.y() <= 1.0;
}

json points_json(std::span<const Vec2> pts) {
  json arr = json::array();
  for (const auto& p : pts) arr.push_back({p.x(), p.y()});
  return arr;
}

std::vector<Vec2> points_from_json(const json& arr, const std::string& what) {
  if (!arr.is_array()) throw Error("uv landmarks: '" + what + "' must be an array");
  std::vector<Vec2> out;
  for (const auto& p : arr) {
    if (!p.is_array() || p.size() != 2) throw Error("uv landmarks: '" + what + "' entries must be [u, v]");
    out.emplace_back(p[0].get<double>(), p[1].get<double>());
  }
  return out;
}

float lower_median(std::vector<float>& values) {
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>((values.size() - 1) / 2);
  std::nth_element(values.begin(), mid, values.end());
  return *mid;
}

// Collects pixels whose centers satisfy `inside`, scanning only `bounds`.
template <typename Pred>
Rgb masked_median(const RgbImage& image, double x0, double y0, double x1, double y1, Pred inside) {
  const int left = std::max(0, static_cast<int>(std::floor(x0)));
  const int top = std::max(0, static_cast<int>(std::floor(y0)));
  const int right = std::min(image.width() - 1, static_cast<int>(std::ceil(x1)));
  const int bottom = std::min(image.height() - 1, static_cast<int>(std::ceil(y1)));
  std::array<std::vector<float>, 3> channels;
  for (int y = top; y <= bottom; ++y) {
    for (int x = left; x <= right; ++x) {
      if (!inside(Vec2(x + 0.5, y + 0.5))) continue;
      const Rgb& px = image.at(x, y);
      for (int c = 0; c < 3; ++c) channels[static_cast<std::size_t>(c)].push_back(px[c]);
    }
  }
  if (channels[0].empty()) throw Error("empty skin mask");
  Rgb out;
  for (int c = 0; c < 3; ++c) out[c] = lower_median(channels[static_cast<std::size_t>(c)]);
  return out;
}

double cross(const Vec2& o, const Vec2& a, const Vec2& b) {
  return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

}  // namespace

void UvLandmarks::validate() const {
  std::vector<std::pair<double, double>> all;
  for (const auto& p : points) {
    if (!in_unit_square(p)) throw Error("uv landmark outside [0,1]^2");
    all.emplace_back(p.x(), p.y());
  }
  for (const auto& p : anchors) {
    if (!in_unit_square(p)) throw Error("uv anchor outside [0,1]^2");
    all.emplace_back(p.x(), p.y());
  }
  std::sort(all.begin(), all.end());
  if (std::adjacent_find(all.begin(), all.end()) != all.end()) throw Error("duplicate uv landmark positions");
  if (skin_region.size() < 3) throw Error("skin region polygon needs at least 3 points");
  for (const auto& p : skin_region) {
    if (!in_unit_square(p)) throw Error("skin region point outside [0,1]^2");
  }
}

UvLandmarks load_uv_landmarks(const std::filesystem::path& path) {
  const json j = detail::read_json(path);
  UvLandmarks uv;
  try {
    const auto pts = points_from_json(j.at("points"), "points");
    const auto anchors = points_from_json(j.at("anchors"), "anchors");
    if (pts.size() != kLandmarkCount) throw Error("uv landmarks: expected 68 points");
    if (anchors.size() != kAnchorCount) throw Error("uv landmarks: expected 8 anchors");
    std::copy(pts.begin(), pts.end(), uv.points.begin());
    std::copy(anchors.begin(), anchors.end(), uv.anchors.begin());
    uv.skin_region = points_from_json(j.at("skin_region"), "skin_region");
  } catch (const json::exception& e) {
    throw Error("malformed uv landmarks " + path.string() + ": " + e.what());
  }
  uv.validate();
  return uv;
}

void save_uv_landmarks(const UvLandmarks& uv, const std::filesystem::path& path) {
  json j;
  j["points"] = points_json(uv.points);
  j["anchors"] = points_json(uv.anchors);
  j["skin_region"] = points_json(uv.skin_region);
  detail::write_file(path, j.dump() + "\n");
}

FramePick pick_frames(std::span<const LandmarkSet> frames, const FramePickConfig& cfg) {
  auto closest = [&](double target) -> std::optional<std::size_t> {
    std::optional<std::size_t> best;
    double best_gap = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < frames.size(); ++i) {
      const double gap = std::abs(frames[i].rotation.yaw - target);
      if (gap < cfg.window && gap < best_gap) {
        best = i;
        best_gap = gap;
      }
    }
    return best;
  };
  const auto center = closest(0.0);
  if (!center) throw Error("no near-frontal frame");
  FramePick pick;
  pick.center = *center;
  const auto left = closest(-cfg.side_yaw);
  const auto right = closest(cfg.side_yaw);
  if (left && right) {
    pick.left = left;
    pick.right = right;
  }
  return pick;
}

std::vector<Vec2> convex_hull(std::vector<Vec2> points) {
  std::sort(points.begin(), points.end(), [](const Vec2& a, const Vec2& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  points.erase(std::unique(points.begin(), points.end()), points.end());
  if (points.size() < 3) return points;
  std::vector<Vec2> hull(2 * points.size());
  std::size_t k = 0;
  for (const auto& p : points) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0.0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = points.size() - 1, lower = k + 1; i-- > 0;) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], points[i]) <= 0.0) --k;
    hull[k++] = points[i];
  }
  hull.resize(k - 1);
  return hull;
}

bool point_in_polygon(const Vec2& p, std::span<const Vec2> polygon) {
  bool inside = false;
  for (std::size_t i = 0, j = polygon.size() - 1; i < polygon.size(); j = i++) {
    const Vec2& a = polygon[i];
    const Vec2& b = polygon[j];
    if ((a.y() > p.y()) != (b.y() > p.y())) {
      const double x = a.x() + (p.y() - a.y()) * (b.x() - a.x()) / (b.y() - a.y());
      if (p.x() < x) inside = !inside;
    }
  }
  return inside;
}

Rgb median_skin_color(const RgbImage& frame, const LandmarkSet& landmarks) {
  std::vector<Vec2> px;
  px.reserve(kLandmarkCount);
  for (const auto& p : landmarks.points) px.emplace_back(p.x() * frame.width(), p.y() * frame.height());
  auto slice = [&](int first, int last) {
    return std::vector<Vec2>(px.begin() + (first - 1), px.begin() + last);
  };
  const std::vector<Vec2> hull = convex_hull(px);
  const std::array<std::vector<Vec2>, 3> excluded{slice(37, 42), slice(43, 48), slice(61, 68)};
  if (hull.size() < 3) throw Error("empty skin mask");

  Vec2 lo = hull.front();
  Vec2 hi = hull.front();
  for (const auto& p : hull) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  return masked_median(frame, lo.x(), lo.y(), hi.x(), hi.y(), [&](const Vec2& c) {
    if (!point_in_polygon(c, hull)) return false;
    return std::none_of(excluded.begin(), excluded.end(),
                        [&](const auto& poly) { return point_in_polygon(c, poly); });
  });
}

Rgb polygon_median(const RgbImage& image, std::span<const Vec2> uv_polygon) {
  if (uv_polygon.size() < 3) throw Error("skin region polygon needs at least 3 points");
  std::vector<Vec2> poly;
  Vec2 lo = Vec2::Constant(std::numeric_limits<double>::infinity());
  Vec2 hi = -lo;
  for (const auto& p : uv_polygon) {
    poly.emplace_back(p.x() * image.width(), p.y() * image.height());
    lo = lo.cwiseMin(poly.back());
    hi = hi.cwiseMax(poly.back());
  }
  return masked_median(image, lo.x(), lo.y(), hi.x(), hi.y(),
                       [&](const Vec2& c) { return point_in_polygon(c, poly); });
}

TextureAtlas shift_average_texture(const TextureAtlas& average, std::span<const Vec2> skin_region,
                                   const Rgb& target) {
  const Rgb median = polygon_median(average.pixels, skin_region);
  std::array<double, 3> shift{};
  for (int c = 0; c < 3; ++c) {
    shift[static_cast<std::size_t>(c)] = static_cast<double>(target[c]) - static_cast<double>(median[c]);
  }
  RgbImage out = average.pixels;
  for (auto& px : out.pixels()) {
    for (int c = 0; c < 3; ++c) {
      px[c] = static_cast<float>(std::clamp(px[c] + shift[static_cast<std::size_t>(c)], 0.0, 1.0));
    }
  }
  return make_atlas(std::move(out), TextureSource::average);
}

std::vector<std::array<int, 3>> delaunay_triangulation(std::span<const Vec2> points) {
  if (points.size() < 3) throw Error("triangulation needs at least 3 points");
  Vec2 lo = points.front();
  Vec2 hi = points.front();
  for (const auto& p : points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double span = std::max(hi.x() - lo.x(), hi.y() - lo.y());
  if (!(span > 0.0)) throw Error("triangulation points are coincident");
  // Work in a fixed float range so the precision does not depend on units.
  const double scale = 4096.0 / span;
  cv::Subdiv2D subdiv(cv::Rect(-8, -8, 4096 + 16, 4096 + 16));
  std::map<std::pair<float, float>, int> index_of;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const cv::Point2f q(static_cast<float>((points[i].x() - lo.x()) * scale),
                        static_cast<float>((points[i].y() - lo.y()) * scale));
    if (!index_of.emplace(std::pair{q.x, q.y}, static_cast<int>(i)).second) {
      throw Error("duplicate triangulation points");
    }
    subdiv.insert(q);
  }
  std::vector<cv::Vec6f> raw;
  subdiv.getTriangleList(raw);

  std::vector<std::array<int, 3>> tris;
  for (const auto& t : raw) {
    std::array<int, 3> tri{};
    bool real = true;
    for (int k = 0; k < 3 && real; ++k) {
      const auto it = index_of.find({t[2 * k], t[2 * k + 1]});
      if (it == index_of.end()) real = false;
      else tri[static_cast<std::size_t>(k)] = it->second;
    }
    if (!real) continue;
    const Vec2& a = points[static_cast<std::size_t>(tri[0])];
    const Vec2& b = points[static_cast<std::size_t>(tri[1])];
    const Vec2& c = points[static_cast<std::size_t>(tri[2])];
    if (cross(a, b, c) < 0.0) std::swap(tri[1], tri[2]);
    std::rotate(tri.begin(), std::min_element(tri.begin(), tri.end()), tri.end());
    tris.push_back(tri);
  }
  std::sort(tris.begin(), tris.end());
  tris.erase(std::unique(tris.begin(), tris.end()), tris.end());
  return tris;
}

namespace {

std::string point_label(int index) {
  if (index < kLandmarkCount) return "landmark " + std::to_string(index + 1);
  return "anchor " + std::to_string(index - kLandmarkCount + 1);
}

// Least-squares affine map from UV landmarks to image pixels.
Eigen::Matrix<double, 3, 2> fit_affine(const UvLandmarks& uv, std::span<const Vec2> image_pts) {
  Eigen::Matrix<double, kLandmarkCount, 3> a;
  Eigen::Matrix<double, kLandmarkCount, 2> b;
  for (int i = 0; i < kLandmarkCount; ++i) {
    const auto k = static_cast<std::size_t>(i);
    a.row(i) << uv.points[k].x(), uv.points[k].y(), 1.0;
    b.row(i) << image_pts[k].x(), image_pts[k].y();
  }
  return a.colPivHouseholderQr().solve(b);
}

}  // namespace

PartialTexture warp_to_uv(const RgbImage& frame, const LandmarkSet& landmarks, const UvLandmarks& uv,
                          int atlas_size, TextureSource source) {
  if (atlas_size <= 0) throw Error("atlas size must be positive");
  if (frame.empty()) throw Error("empty frame");
  uv.validate();

  // Correspondences: 68 landmarks, then the anchors mapped by the global fit.
  std::vector<Vec2> uv_pts;
  std::vector<Vec2> img_pts;
  for (const auto& p : uv.points) uv_pts.push_back(p);
  for (const auto& p : uv.anchors) uv_pts.push_back(p);
  for (const auto& p : landmarks.points) img_pts.emplace_back(p.x() * frame.width(), p.y() * frame.height());
  const auto global = fit_affine(uv, img_pts);
  for (const auto& p : uv.anchors) {
    img_pts.push_back((Eigen::RowVector3d(p.x(), p.y(), 1.0) * global).transpose());
  }

  const double s = atlas_size;
  PartialTexture out;
  out.pixels = RgbImage(atlas_size, atlas_size);
  out.mask.assign(static_cast<std::size_t>(atlas_size) * static_cast<std::size_t>(atlas_size), 0);
  out.yaw = landmarks.rotation.yaw;
  out.source = source;

  const auto tris = delaunay_triangulation(uv_pts);
  const double w = frame.width();
  const double h = frame.height();
  for (std::size_t t = 0; t < tris.size(); ++t) {
    const auto& [i0, i1, i2] = tris[t];
    const Vec2 a = uv_pts[static_cast<std::size_t>(i0)] * s;
    const Vec2 b = uv_pts[static_cast<std::size_t>(i1)] * s;
    const Vec2 c = uv_pts[static_cast<std::size_t>(i2)] * s;
    const Vec2& ia = img_pts[static_cast<std::size_t>(i0)];
    const Vec2& ib = img_pts[static_cast<std::size_t>(i1)];
    const Vec2& ic = img_pts[static_cast<std::size_t>(i2)];
    if (std::abs(cross(ia, ib, ic)) < 1e-9) {
      throw Error("degenerate triangle " + std::to_string(t) + " (" + point_label(i0) + ", " +
                  point_label(i1) + ", " + point_label(i2) + ")");
    }
    const double area = cross(a, b, c);
    if (!(area > 0.0)) continue;

    const int x0 = std::max(0, static_cast<int>(std::floor(std::min({a.x(), b.x(), c.x()}))));
    const int x1 = std::min(atlas_size - 1, static_cast<int>(std::ceil(std::max({a.x(), b.x(), c.x()}))));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min({a.y(), b.y(), c.y()}))));
    const int y1 = std::min(atlas_size - 1, static_cast<int>(std::ceil(std::max({a.y(), b.y(), c.y()}))));
    const double eps = -1e-9 * area;
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const Vec2 p(x + 0.5, y + 0.5);
        const double wa = cross(b, c, p);
        const double wb = cross(c, a, p);
        const double wc = cross(a, b, p);
        if (wa < eps || wb < eps || wc < eps) continue;
        const Vec2 q = (wa * ia + wb * ib + wc * ic) / area;
        if (q.x() < 0.0 || q.y() < 0.0 || q.x() > w || q.y() > h) continue;
        out.pixels.at(x, y) = sample_bilinear(frame, q.x(), q.y());
        out.mask[static_cast<std::size_t>(y) * static_cast<std::size_t>(atlas_size) + static_cast<std::size_t>(x)] = 1;
      }
    }
  }
  return out;
}

std::vector<double> feather_alpha(std::span<const std::uint8_t> mask, int width, int height, int feather) {
  if (feather < 0) throw Error("feather width must be non-negative");
  if (mask.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
    throw Error("mask size does not match atlas");
  }
  std::vector<double> alpha(mask.size(), 0.0);
  if (feather == 0) {
    for (std::size_t i = 0; i < mask.size(); ++i) alpha[i] = mask[i] != 0 ? 1.0 : 0.0;
    return alpha;
  }
  // One-pixel uncovered border stands in for everything outside the atlas.
  cv::Mat padded = cv::Mat::zeros(height + 2, width + 2, CV_8U);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (mask[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)] != 0) {
        padded.at<std::uint8_t>(y + 1, x + 1) = 1;
      }
    }
  }
  cv::Mat dist;
  cv::distanceTransform(padded, dist, cv::DIST_L2, cv::DIST_MASK_PRECISE, CV_32F);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double d = dist.at<float>(y + 1, x + 1);
      alpha[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)] =
          std::min(1.0, d / feather);
    }
  }
  return alpha;
}

TextureAtlas compose_texture(std::span<const PartialTexture> partials, const TextureAtlas& base, int feather) {
  const int n = base.size();
  if (base.pixels.height() != n || base.provenance.size() != base.pixels.size()) {
    throw Error("malformed base atlas");
  }
  if (feather < 0) throw Error("feather width must be non-negative");
  for (const auto& p : partials) {
    if (p.pixels.width() != n || p.pixels.height() != n || p.mask.size() != base.pixels.size()) {
      throw Error("partial texture does not match the atlas size");
    }
  }
  TextureAtlas out = base;
  if (partials.empty()) return out;

  // Center outward: smaller |yaw| first, then the lower yaw.
  std::vector<std::size_t> order(partials.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double ya = partials[a].yaw;
    const double yb = partials[b].yaw;
    return std::abs(ya) < std::abs(yb) || (std::abs(ya) == std::abs(yb) && ya < yb);
  });

  const auto count = base.pixels.size();
  std::vector<std::uint8_t> covered(count, 0);
  std::vector<int> winner(count, -1);
  for (std::size_t idx = 0; idx < count; ++idx) {
    for (const std::size_t k : order) {
      if (partials[k].mask[idx] == 0) continue;
      covered[idx] = 1;
      winner[idx] = static_cast<int>(k);
      break;
    }
  }

  const auto alpha = feather_alpha(covered, n, n, feather);
  auto out_px = out.pixels.pixels();
  for (std::size_t i = 0; i < count; ++i) {
    if (winner[i] < 0 || alpha[i] <= 0.0) continue;
    const auto& p = partials[static_cast<std::size_t>(winner[i])];
    const Rgb& src = p.pixels.pixels()[i];
    const Rgb& dst = base.pixels.pixels()[i];
    const double a = alpha[i];
    if (a >= 1.0) {
      for (int c = 0; c < 3; ++c) out_px[i][c] = std::clamp(src[c], 0.0F, 1.0F);
      out.provenance[i] = p.source;
      continue;
    }
    for (int c = 0; c < 3; ++c) {
      out_px[i][c] = static_cast<float>(std::clamp(dst[c] + a * (src[c] - dst[c]), 0.0, 1.0));
    }
    out.provenance[i] = TextureSource::blend;
  }
  return out;
}

}  // namespace headrecon
