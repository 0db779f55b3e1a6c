#include "headrecon/config.hpp"

#include <set>
#include <sstream>
#include <string>

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

#include "headrecon/error.hpp"
#include "io_util.hpp"

namespace headrecon {
namespace {

// One TOML table; remembers which keys were read so leftovers can be
// reported as typos.
class Section {
 public:
  Section(const toml::table* table, std::string name) : table_(table), name_(std::move(name)) {}

  template <typename T>
  void read(std::string_view key, T& out) {
    const toml::node* node = find(key);
    if (node == nullptr) return;
    if constexpr (std::is_same_v<T, bool>) {
      out = require(node->value<bool>(), key, "a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      out = static_cast<T>(require(node->value<std::int64_t>(), key, "an integer"));
    } else if constexpr (std::is_floating_point_v<T>) {
      out = static_cast<T>(require(node->value<double>(), key, "a number"));
    } else {
      out = T(require(node->value<std::string>(), key, "a string"));
    }
  }

  const toml::array* array(std::string_view key) {
    const toml::node* node = find(key);
    if (node == nullptr) return nullptr;
    if (!node->is_array()) throw Error(where(key) + " must be an array");
    return node->as_array();
  }

  const toml::table* table(std::string_view key) {
    const toml::node* node = find(key);
    if (node == nullptr) return nullptr;
    if (!node->is_table()) throw Error(where(key) + " must be a table");
    return node->as_table();
  }

  void finish() const {
    if (table_ == nullptr) return;
    for (const auto& [key, _] : *table_) {
      if (!used_.contains(std::string(key.str()))) throw Error("unknown config key " + where(key.str()));
    }
  }

  std::string where(std::string_view key) const { return name_ + "." + std::string(key); }

 private:
  const toml::node* find(std::string_view key) {
    if (table_ == nullptr) return nullptr;
    used_.insert(std::string(key));
    return table_->get(key);
  }

  template <typename V>
  V require(std::optional<V> value, std::string_view key, const char* kind) {
    if (!value) throw Error(where(key) + " must be " + kind);
    return *value;
  }

  const toml::table* table_;
  std::string name_;
  std::set<std::string> used_;
};

std::vector<double> numbers(const toml::array& arr, const std::string& what) {
  std::vector<double> out;
  for (const auto& item : arr) {
    const auto v = item.value<double>();
    if (!v) throw Error(what + " must contain numbers");
    out.push_back(*v);
  }
  return out;
}

std::array<int, 2> int_pair(const toml::array& arr, const std::string& what) {
  const auto v = numbers(arr, what);
  if (v.size() != 2) throw Error(what + " must be [width, height]");
  return {static_cast<int>(v[0]), static_cast<int>(v[1])};
}

void read_render(Section s, RenderConfig& cfg) {
  s.read("image_size", cfg.image_size);
  s.read("fov_deg", cfg.fov_deg);
  s.read("camera_distance", cfg.camera_distance);
  s.read("albedo", cfg.albedo);
  if (const auto* lights = s.array("lights")) {
    cfg.lights.clear();
    for (const auto& item : *lights) {
      const auto* t = item.as_table();
      if (t == nullptr) throw Error("render.lights entries must be tables");
      Section light(t, "render.lights");
      DirectionalLight l;
      if (const auto* dir = light.array("direction")) {
        const auto v = numbers(*dir, "render.lights.direction");
        if (v.size() != 3) throw Error("render.lights.direction must have 3 components");
        l.direction = Vec3(v[0], v[1], v[2]);
      }
      light.read("intensity", l.intensity);
      light.finish();
      cfg.lights.push_back(l);
    }
  }
  s.finish();
}

void read_regions(Section s, RegionLayoutConfig& cfg) {
  s.read("canvas_size", cfg.canvas_size);
  s.read("landmark_width", cfg.landmark_width);
  for (const Region r : kActiveRegions) {
    if (const auto* size = s.array(region_name(r))) {
      cfg.sizes[region_slot(r)] = int_pair(*size, s.where(region_name(r)));
    }
  }
  s.finish();
}

void read_similarity(Section s, SimilarityConfig& cfg) {
  for (const Region r : kActiveRegions) {
    std::string method(method_name(cfg.methods[region_slot(r)]));
    s.read(region_name(r), method);
    cfg.methods[region_slot(r)] = method_from_name(method);
  }
  s.read("top_n", cfg.top_n);
  s.read("pca_variance", cfg.pca.variance);
  s.read("pca_max_components", cfg.pca.cap);
  std::int64_t retained = 0;
  s.read("pca_components", retained);
  if (retained > 0) cfg.pca.retained = static_cast<std::size_t>(retained);
  s.read("lbp_neighbors", cfg.lbp.neighbors);
  s.read("lbp_radius", cfg.lbp.radius);
  s.read("lbp_uniform", cfg.lbp.uniform);
  if (const auto* grid = s.array("lbp_grid")) {
    const auto g = int_pair(*grid, "similarity.lbp_grid");
    cfg.lbp.grid_x = g[0];
    cfg.lbp.grid_y = g[1];
  }
  s.finish();
}

void read_blend(Section s, TransitionWeightParams& p) {
  s.read("a", p.a);
  s.read("b", p.b);
  s.read("x0", p.x0);
  s.read("p", p.p);
  s.finish();
}

FeatureMask mask_from_ranges(const toml::array& arr) {
  FeatureMask mask;
  for (const auto& item : arr) {
    const auto* pair = item.as_array();
    if (pair == nullptr) throw Error("morph.passes.features entries must be [first, last]");
    const auto v = numbers(*pair, "morph.passes.features");
    if (v.size() != 2) throw Error("morph.passes.features entries must be [first, last]");
    mask |= feature_mask({{static_cast<int>(v[0]), static_cast<int>(v[1])}});
  }
  return mask;
}

void read_morph(Section s, PipelineConfig& cfg) {
  if (const auto* passes = s.array("passes")) {
    cfg.morph.passes.clear();
    for (const auto& item : *passes) {
      const auto* t = item.as_table();
      if (t == nullptr) throw Error("morph.passes entries must be tables");
      Section pass(t, "morph.passes");
      MorphPass mp;
      pass.read("k", mp.k);
      const auto* features = pass.array("features");
      if (features == nullptr) throw Error("morph.passes entries need 'features'");
      mp.mask = mask_from_ranges(*features);
      pass.finish();
      cfg.morph.passes.push_back(mp);
    }
  }
  if (const auto* sigma = s.table("sigma")) {
    Section group(sigma, "morph.sigma");
    std::array<double, 5> values{2.0, 1.2, 0.8, 0.5, 0.6};
    const std::array<std::string_view, 5> names{"jaw", "brows", "nose", "eyes", "mouth"};
    for (std::size_t i = 0; i < names.size(); ++i) group.read(names[i], values[i]);
    group.finish();
    std::array<double, kLandmarkCount> sig{};
    for (int i = 1; i <= kLandmarkCount; ++i) {
      std::size_t g = 4;
      if (i <= 17) g = 0;
      else if (i <= 27) g = 1;
      else if (i <= 36) g = 2;
      else if (i <= 48) g = 3;
      sig[static_cast<std::size_t>(i - 1)] = values[g];
    }
    cfg.sigma = sig;
  }
  bool use_database_sigma = false;
  s.read("use_database_sigma", use_database_sigma);
  if (use_database_sigma) cfg.sigma.reset();
  s.finish();
}

void read_texture(Section s, TextureConfig& cfg) {
  s.read("atlas_size", cfg.atlas_size);
  s.read("feather", cfg.feather);
  s.read("side_yaw", cfg.pick.side_yaw);
  s.read("window", cfg.pick.window);
  s.finish();
}

void read_pipeline(Section s, PipelineConfig& cfg) {
  std::string path;
  s.read("database", path);
  if (!path.empty()) cfg.database = path;
  path.clear();
  s.read("render_db", path);
  if (!path.empty()) cfg.render_db = path;
  path.clear();
  s.read("output", path);
  if (!path.empty()) cfg.output = path;
  s.read("seed", cfg.seed);
  s.read("workers", cfg.workers);
  s.finish();
}

}  // namespace

std::filesystem::path PipelineConfig::render_db_dir() const {
  return render_db.empty() ? database / "render_db" : render_db;
}

void PipelineConfig::validate() const {
  render.validate();
  if (regions.canvas_size <= 0) throw Error("regions.canvas_size must be positive");
  if (!(regions.landmark_width > 0.0 && regions.landmark_width <= regions.canvas_size)) {
    throw Error("regions.landmark_width must be in (0, canvas_size]");
  }
  for (const auto& size : regions.sizes) {
    if (size[0] <= 0 || size[1] <= 0 || size[0] > regions.canvas_size || size[1] > regions.canvas_size) {
      throw Error("region sizes must be positive and fit the canvas");
    }
  }
  if (similarity.top_n < 1) throw Error("similarity.top_n must be at least 1");
  if (!(similarity.pca.variance > 0.0 && similarity.pca.variance <= 1.0)) {
    throw Error("similarity.pca_variance must be in (0, 1]");
  }
  if (similarity.pca.cap < 1) throw Error("similarity.pca_max_components must be at least 1");
  similarity.lbp.validate();
  blend.validate();
  morph.validate();
  if (sigma) {
    for (const double s : *sigma) {
      if (!(s > 0.0)) throw Error("morph sigma values must be positive");
    }
  }
  if (texture.atlas_size != kAtlasSize) throw Error("texture.atlas_size must be 2048");
  if (texture.feather < 0) throw Error("texture.feather must be non-negative");
  if (!(texture.pick.window > 0.0) || !(texture.pick.side_yaw > texture.pick.window)) {
    throw Error("texture.window must be positive and smaller than texture.side_yaw");
  }
  if (workers < 1) throw Error("pipeline.workers must be at least 1");
}

PipelineConfig parse_config(std::string_view toml_text, std::string_view source) {
  toml::table root;
  try {
    root = toml::parse(toml_text, source);
  } catch (const toml::parse_error& e) {
    std::ostringstream ss;
    ss << "config parse error in " << source << ": " << e.description() << " (line " << e.source().begin.line
       << ")";
    throw Error(ss.str());
  }
  PipelineConfig cfg;
  Section top(&root, std::string(source));
  auto sub = [&](std::string_view name) { return Section(top.table(name), std::string(name)); };
  read_render(sub("render"), cfg.render);
  read_regions(sub("regions"), cfg.regions);
  read_similarity(sub("similarity"), cfg.similarity);
  read_blend(sub("blend"), cfg.blend);
  read_morph(sub("morph"), cfg);
  read_texture(sub("texture"), cfg.texture);
  read_pipeline(sub("pipeline"), cfg);
  top.finish();
  cfg.validate();
  return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  return parse_config(detail::read_file(path), path.string());
}

}  // namespace headrecon
