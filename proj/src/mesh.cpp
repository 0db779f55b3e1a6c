#include "headrecon/mesh.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "headrecon/error.hpp"
#include "io_util.hpp"

namespace headrecon {
namespace {

using nlohmann::json;

using detail::read_file;
using detail::read_json;
using detail::write_file;

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const auto start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

double parse_double(std::string_view token, int line_no) {
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc{} || ptr != token.data() + token.size()) {
    throw Error("line " + std::to_string(line_no) + ": bad number '" + std::string(token) + "'");
  }
  return value;
}

long parse_index(std::string_view token, int line_no) {
  long value = 0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc{} || ptr != token.data() + token.size()) {
    throw Error("line " + std::to_string(line_no) + ": bad index '" + std::string(token) + "'");
  }
  return value;
}

void append_double(std::string& out, double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw Error("number formatting failed");
  out.append(buf, ptr);
}

}  // namespace

void check_mesh(const HeadMesh& mesh) {
  const auto n = static_cast<long>(mesh.vertices.size());
  if (mesh.uvs.size() != mesh.vertices.size()) {
    throw Error("UV count " + std::to_string(mesh.uvs.size()) + " does not match vertex count " +
                std::to_string(n));
  }
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    for (const int idx : mesh.faces[f]) {
      if (idx < 0 || idx >= n) {
        throw Error("face " + std::to_string(f) + " references vertex " + std::to_string(idx) +
                    " out of range");
      }
    }
  }
}

bool same_topology(const HeadMesh& a, const HeadMesh& b) {
  return a.vertices.size() == b.vertices.size() && a.faces == b.faces && a.uvs == b.uvs;
}

std::string_view region_name(Region region) {
  switch (region) {
    case Region::eyes: return "eyes";
    case Region::nose: return "nose";
    case Region::mouth: return "mouth";
    case Region::face: return "face";
    case Region::unused: return "unused";
  }
  return "unknown";
}

Region region_from_name(std::string_view name) {
  for (const Region r : kAllRegions) {
    if (region_name(r) == name) return r;
  }
  throw Error("unknown region '" + std::string(name) + "'");
}

void RegionMap::set(Region region, std::vector<int> indices) {
  std::sort(indices.begin(), indices.end());
  indices.erase(std::unique(indices.begin(), indices.end()), indices.end());
  sets_[static_cast<std::size_t>(region)] = std::move(indices);
}

std::vector<int> RegionMap::merged(std::span<const Region> regions) const {
  std::vector<int> out;
  for (const Region r : regions) out = set_union(out, indices(r));
  return out;
}

std::vector<int> RegionMap::overlap(Region a, Region b) const {
  return set_intersection(indices(a), indices(b));
}

void RegionMap::assign_unused(std::size_t vertex_count) {
  const auto active = merged(kActiveRegions);
  std::vector<int> unused;
  std::size_t k = 0;
  for (int v = 0; v < static_cast<int>(vertex_count); ++v) {
    while (k < active.size() && active[k] < v) ++k;
    if (k < active.size() && active[k] == v) continue;
    unused.push_back(v);
  }
  set(Region::unused, std::move(unused));
}

std::vector<int> set_intersection(std::span<const int> a, std::span<const int> b) {
  std::vector<int> out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

std::vector<int> set_union(std::span<const int> a, std::span<const int> b) {
  std::vector<int> out;
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

void check_landmarks(const LandmarkSet& landmarks) {
  for (int i = 0; i < kLandmarkCount; ++i) {
    const Vec2& p = landmarks.points[static_cast<std::size_t>(i)];
    if (!(p.x() >= 0.0 && p.x() <= 1.0 && p.y() >= 0.0 && p.y() <= 1.0)) {
      throw Error("landmark " + std::to_string(i + 1) + " of frame '" + landmarks.frame_id +
                  "' is outside [0,1]^2");
    }
  }
}

HeadMesh parse_head_mesh(std::string_view text) {
  HeadMesh mesh;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    const auto tokens = split_ws(line);
    if (tokens.empty() || tokens[0].starts_with('#')) {
      if (end == text.size()) break;
      continue;
    }
    const auto& tag = tokens[0];
    if (tag == "v") {
      if (tokens.size() != 4) throw Error("line " + std::to_string(line_no) + ": expected 'v x y z'");
      mesh.vertices.emplace_back(parse_double(tokens[1], line_no), parse_double(tokens[2], line_no),
                                 parse_double(tokens[3], line_no));
    } else if (tag == "vt") {
      if (tokens.size() != 3) throw Error("line " + std::to_string(line_no) + ": expected 'vt u v'");
      mesh.uvs.emplace_back(parse_double(tokens[1], line_no), parse_double(tokens[2], line_no));
    } else if (tag == "f") {
      if (tokens.size() != 5) {
        throw Error("line " + std::to_string(line_no) + ": non-quadrilateral face with " +
                    std::to_string(tokens.size() - 1) + " corners");
      }
      Quad quad{};
      for (std::size_t c = 0; c < 4; ++c) {
        const auto corner = tokens[c + 1];
        const auto slash = corner.find('/');
        if (slash == std::string_view::npos) {
          throw Error("line " + std::to_string(line_no) + ": face corner must be 'i/i'");
        }
        const long vi = parse_index(corner.substr(0, slash), line_no);
        const long ti = parse_index(corner.substr(slash + 1), line_no);
        if (vi != ti) {
          throw Error("line " + std::to_string(line_no) +
                      ": vertex and UV index differ (per-vertex UVs required)");
        }
        if (vi < 1) throw Error("line " + std::to_string(line_no) + ": index out of range");
        quad[c] = static_cast<int>(vi - 1);
      }
      mesh.faces.push_back(quad);
    } else {
      throw Error("line " + std::to_string(line_no) + ": unknown record '" + std::string(tag) + "'");
    }
    if (end == text.size()) break;
  }
  check_mesh(mesh);
  return mesh;
}

HeadMesh load_head_mesh(const std::filesystem::path& path) {
  try {
    return parse_head_mesh(read_file(path));
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

std::string format_head_mesh(const HeadMesh& mesh) {
  check_mesh(mesh);
  std::string out;
  out.reserve(mesh.vertices.size() * 64 + mesh.faces.size() * 40);
  for (const Vec3& v : mesh.vertices) {
    out += "v ";
    append_double(out, v.x());
    out += ' ';
    append_double(out, v.y());
    out += ' ';
    append_double(out, v.z());
    out += '\n';
  }
  for (const Vec2& t : mesh.uvs) {
    out += "vt ";
    append_double(out, t.x());
    out += ' ';
    append_double(out, t.y());
    out += '\n';
  }
  for (const Quad& q : mesh.faces) {
    out += 'f';
    for (const int idx : q) {
      const auto s = std::to_string(idx + 1);
      out += ' ';
      out += s;
      out += '/';
      out += s;
    }
    out += '\n';
  }
  return out;
}

void save_head_mesh(const HeadMesh& mesh, const std::filesystem::path& path) {
  write_file(path, format_head_mesh(mesh));
}

RegionMap load_region_map(const std::filesystem::path& path) {
  const json j = read_json(path);
  RegionMap regions;
  for (const Region r : kAllRegions) {
    const auto key = std::string(region_name(r));
    if (!j.contains(key)) throw Error(path.string() + ": missing region '" + key + "'");
    regions.set(r, j.at(key).get<std::vector<int>>());
  }
  return regions;
}

void save_region_map(const RegionMap& regions, const std::filesystem::path& path) {
  json j = json::object();
  for (const Region r : kAllRegions) j[std::string(region_name(r))] = regions.indices(r);
  write_file(path, j.dump() + "\n");
}

LandmarkVertexMap load_landmark_map(const std::filesystem::path& path) {
  const json j = read_json(path);
  const auto idx = j.at("vertex_index").get<std::vector<int>>();
  const auto sigma = j.at("sigma").get<std::vector<double>>();
  if (idx.size() != kLandmarkCount || sigma.size() != kLandmarkCount) {
    throw Error(path.string() + ": landmark map needs 68 indices and 68 sigmas");
  }
  LandmarkVertexMap map;
  std::copy(idx.begin(), idx.end(), map.vertex_index.begin());
  std::copy(sigma.begin(), sigma.end(), map.sigma.begin());
  return map;
}

void save_landmark_map(const LandmarkVertexMap& map, const std::filesystem::path& path) {
  json j;
  j["vertex_index"] = map.vertex_index;
  j["sigma"] = map.sigma;
  write_file(path, j.dump() + "\n");
}

LandmarkSet load_landmarks(const std::filesystem::path& path) {
  const json j = read_json(path);
  LandmarkSet set;
  try {
    set.frame_id = j.at("frame_id").is_string() ? j.at("frame_id").get<std::string>()
                                                : j.at("frame_id").dump();
    set.rotation.yaw = j.at("yaw").get<double>();
    set.rotation.pitch = j.at("pitch").get<double>();
    set.rotation.roll = j.at("roll").get<double>();
    const auto& pts = j.at("points");
    if (!pts.is_array() || pts.size() != kLandmarkCount) {
      throw Error("expected exactly 68 points");
    }
    for (std::size_t i = 0; i < kLandmarkCount; ++i) {
      const auto& p = pts[i];
      if (!p.is_array() || p.size() != 2) throw Error("point " + std::to_string(i + 1) + " is not [x,y]");
      set.points[i] = Vec2(p[0].get<double>(), p[1].get<double>());
    }
  } catch (const json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
  check_landmarks(set);
  return set;
}

void save_landmarks(const LandmarkSet& landmarks, const std::filesystem::path& path) {
  json j;
  j["frame_id"] = landmarks.frame_id;
  j["yaw"] = landmarks.rotation.yaw;
  j["pitch"] = landmarks.rotation.pitch;
  j["roll"] = landmarks.rotation.roll;
  json pts = json::array();
  for (const Vec2& p : landmarks.points) pts.push_back({p.x(), p.y()});
  j["points"] = std::move(pts);
  write_file(path, j.dump() + "\n");
}

bool ValidationReport::ok() const {
  return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
}

const ValidationCheck* ValidationReport::find(std::string_view name) const {
  for (const auto& c : checks) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

ValidationReport validate_database(std::span<const HeadMesh> meshes, const RegionMap& regions,
                                   const LandmarkVertexMap& lmap,
                                   std::span<const std::string> names) {
  ValidationReport report;
  auto name_of = [&](std::size_t i) {
    return i < names.size() ? names[i] : "mesh #" + std::to_string(i);
  };
  auto fail = [](ValidationCheck& check, const std::string& msg) {
    check.passed = false;
    if (!check.detail.empty()) check.detail += "; ";
    check.detail += msg;
  };

  ValidationCheck nonempty{"nonempty", !meshes.empty(), meshes.empty() ? "no meshes" : ""};
  report.checks.push_back(nonempty);
  if (meshes.empty()) return report;

  const HeadMesh& ref = meshes.front();
  const std::size_t vcount = ref.vertex_count();

  ValidationCheck vertex_check{"vertex count", true, ""};
  ValidationCheck face_check{"face list", true, ""};
  ValidationCheck uv_check{"uv coords", true, ""};
  for (std::size_t i = 0; i < meshes.size(); ++i) {
    const HeadMesh& m = meshes[i];
    if (m.vertex_count() != vcount) {
      fail(vertex_check, name_of(i) + " has " + std::to_string(m.vertex_count()) +
                             " vertices, expected " + std::to_string(vcount));
    }
    if (m.faces != ref.faces) fail(face_check, name_of(i) + " has a different face list");
    bool quads_ok = true;
    for (const Quad& q : m.faces) {
      for (const int idx : q) quads_ok = quads_ok && idx >= 0 && idx < static_cast<int>(m.vertex_count());
    }
    if (!quads_ok) fail(face_check, name_of(i) + " has face indices out of range");
    if (m.uvs != ref.uvs) fail(uv_check, name_of(i) + " has a different UV table");
  }
  report.checks.push_back(vertex_check);
  report.checks.push_back(face_check);
  report.checks.push_back(uv_check);

  ValidationCheck region_range{"region indices", true, ""};
  for (const Region r : kAllRegions) {
    for (const int idx : regions.indices(r)) {
      if (idx < 0 || idx >= static_cast<int>(vcount)) {
        fail(region_range, std::string(region_name(r)) + " index " + std::to_string(idx) +
                               " out of range");
        break;
      }
    }
  }
  report.checks.push_back(region_range);

  ValidationCheck cover{"region cover", true, ""};
  const auto active = regions.merged(kActiveRegions);
  const auto all = set_union(active, regions.indices(Region::unused));
  if (all.size() != vcount || (!all.empty() && (all.front() != 0 || all.back() != static_cast<int>(vcount) - 1))) {
    fail(cover, "regions cover " + std::to_string(all.size()) + " of " + std::to_string(vcount) +
                    " vertices");
  }
  if (!set_intersection(active, regions.indices(Region::unused)).empty()) {
    fail(cover, "unused region overlaps the active regions");
  }
  if (!regions.overlap(Region::eyes, Region::mouth).empty()) {
    fail(cover, "eyes and mouth share vertices");
  }
  report.checks.push_back(cover);

  ValidationCheck lm_check{"landmark indices", true, ""};
  std::set<int> seen;
  for (int i = 0; i < kLandmarkCount; ++i) {
    const int idx = lmap.vertex_index[static_cast<std::size_t>(i)];
    if (idx < 0 || idx >= static_cast<int>(vcount)) {
      fail(lm_check, "landmark " + std::to_string(i + 1) + " index " + std::to_string(idx) +
                         " out of range");
    } else if (!seen.insert(idx).second) {
      fail(lm_check, "landmark " + std::to_string(i + 1) + " reuses vertex " + std::to_string(idx));
    }
  }
  report.checks.push_back(lm_check);

  ValidationCheck sigma_check{"landmark sigma", true, ""};
  for (int i = 0; i < kLandmarkCount; ++i) {
    if (!(lmap.sigma[static_cast<std::size_t>(i)] > 0.0)) {
      fail(sigma_check, "sigma of landmark " + std::to_string(i + 1) + " is not positive");
    }
  }
  report.checks.push_back(sigma_check);
  return report;
}

}  // namespace headrecon
