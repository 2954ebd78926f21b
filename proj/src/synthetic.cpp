#include "dpf/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>

#include "dpf/netpbm.hpp"
#include "dpf/rng.hpp"

namespace dpf::io {

using geometry::GridSpec;
using nlohmann::json;

const char* task_name(Task t) noexcept { return t == Task::parsing ? "parsing" : "intrinsic"; }

Task parse_task(const std::string& s) {
  if (s == "parsing") return Task::parsing;
  if (s == "intrinsic") return Task::intrinsic;
  throw ContractError("unknown task '" + s + "' (expected parsing or intrinsic)");
}

void SyntheticConfig::validate() const {
  require(resolution >= 1 && guidance_resolution >= 1 && gt_resolution >= 1, "SyntheticConfig: resolutions must be positive");
  require(regions >= 2, "SyntheticConfig: need at least two regions");
  require(supersample >= 1, "SyntheticConfig: supersample must be >= 1");
  require(noise >= 0.0 && label_noise >= 0.0 && label_noise <= 1.0, "SyntheticConfig: noise rates out of range");
  if (task == Task::parsing) {
    require(classes >= 2, "SyntheticConfig: parsing needs at least two classes");
    require(points >= 0, "SyntheticConfig: points must be non-negative");
  } else {
    require(!levels.empty(), "SyntheticConfig: intrinsic scenes need reflectance levels");
    for (double l : levels) require(l > 0.0 && l <= 1.0, "SyntheticConfig: reflectance levels must lie in (0, 1]");
    require(pairs >= 0, "SyntheticConfig: pairs must be non-negative");
  }
}

namespace {

using Rgb = std::array<double, 3>;

struct Scene {
  std::vector<std::array<double, 2>> sites;
  std::vector<int> region_class;
  std::vector<Rgb> region_color;
  std::vector<double> region_level;
  std::array<double, 3> amp{}, fx{}, fy{}, phase{};

  int region_at(double x, double y) const {
    int best = 0;
    double bd = 1e300;
    for (std::size_t k = 0; k < sites.size(); ++k) {
      const double dx = sites[k][0] - x, dy = sites[k][1] - y;
      const double d = dx * dx + dy * dy;
      if (d < bd) {
        bd = d;
        best = static_cast<int>(k);
      }
    }
    return best;
  }

  double shading(double x, double y) const {
    double f = 0.0;
    for (std::size_t m = 0; m < 3; ++m) f += amp[m] * std::sin(fx[m] * x + fy[m] * y + phase[m]);
    return 0.6 + 0.4 * f;
  }
};

std::vector<Rgb> class_palette(const SyntheticConfig& cfg) {
  Rng rng = Rng::substream(cfg.seed, "palette");
  std::vector<Rgb> palette;
  int attempts = 0;
  while (static_cast<int>(palette.size()) < cfg.classes) {
    const Rgb c{rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)};
    bool ok = true;
    for (const auto& p : palette) {
      const double d = std::hypot(c[0] - p[0], c[1] - p[1], c[2] - p[2]);
      ok = ok && (d > 0.3 || attempts > 2000);
    }
    ++attempts;
    if (ok) palette.push_back(c);
  }
  return palette;
}

Scene make_scene(const SyntheticConfig& cfg, std::uint64_t seed) {
  Rng rng = Rng::substream(seed, "scene");
  Scene s;
  int attempts = 0;
  while (static_cast<int>(s.sites.size()) < cfg.regions) {
    const std::array<double, 2> p{rng.uniform(-0.95, 0.95), rng.uniform(-0.95, 0.95)};
    bool ok = true;
    for (const auto& q : s.sites) ok = ok && (std::hypot(p[0] - q[0], p[1] - q[1]) > 0.35 || attempts > 500);
    ++attempts;
    if (ok) s.sites.push_back(p);
  }
  if (cfg.task == Task::parsing) {
    const auto palette = class_palette(cfg);
    for (int k = 0; k < cfg.regions; ++k) {
      // With K == c every class appears exactly once.
      const int cls = cfg.regions == cfg.classes ? k : static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.classes)));
      Rgb col = palette[static_cast<std::size_t>(cls)];
      for (auto& v : col) v = std::clamp(v + rng.uniform(-0.04, 0.04), 0.0, 1.0);
      s.region_class.push_back(cls);
      s.region_color.push_back(col);
    }
  } else {
    for (int k = 0; k < cfg.regions; ++k) {
      s.region_level.push_back(cfg.levels[rng.below(cfg.levels.size())]);
    }
    double total = 0.0;
    for (std::size_t m = 0; m < 3; ++m) {
      s.amp[m] = rng.uniform(0.2, 1.0);
      total += s.amp[m];
      s.fx[m] = rng.uniform(-2.0, 2.0);
      s.fy[m] = rng.uniform(-2.0, 2.0);
      s.phase[m] = rng.uniform(0.0, 2.0 * std::numbers::pi);
    }
    for (auto& a : s.amp) a /= total;
  }
  return s;
}

Rgb scene_color(const SyntheticConfig& cfg, const Scene& s, double x, double y) {
  const int r = s.region_at(x, y);
  if (cfg.task == Task::parsing) return s.region_color[static_cast<std::size_t>(r)];
  const double v = s.region_level[static_cast<std::size_t>(r)] * s.shading(x, y);
  return {v, v, v};
}

// Renders into 8-bit precision so in-memory and on-disk datasets agree exactly.
nn::Tensor render_scene(const SyntheticConfig& cfg, const Scene& s, int n, int supersample, double noise,
                        std::uint64_t seed) {
  Rng rng = Rng::substream(seed, "noise/" + std::to_string(n));
  const auto un = static_cast<std::size_t>(n);
  nn::Tensor t(nn::Shape{3, un, un});
  for (int row = 0; row < n; ++row) {
    for (int col = 0; col < n; ++col) {
      Rgb acc{0.0, 0.0, 0.0};
      for (int a = 0; a < supersample; ++a) {
        for (int b = 0; b < supersample; ++b) {
          const double x = -1.0 + 2.0 * (col + (b + 0.5) / supersample) / n;
          const double y = -1.0 + 2.0 * (row + (a + 0.5) / supersample) / n;
          const Rgb c = scene_color(cfg, s, x, y);
          for (std::size_t ch = 0; ch < 3; ++ch) acc[ch] += c[ch];
        }
      }
      for (std::size_t ch = 0; ch < 3; ++ch) {
        double v = acc[ch] / (supersample * supersample);
        if (noise > 0.0) v += rng.uniform(-noise, noise);
        const double byte = std::round(std::clamp(v, 0.0, 1.0) * 255.0);
        t.at(ch, static_cast<std::size_t>(row), static_cast<std::size_t>(col)) = static_cast<float>(byte / 127.5 - 1.0);
      }
    }
  }
  return t;
}

std::vector<int> region_map(const Scene& s, GridSpec grid) {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(grid.height) * grid.width);
  for (int row = 0; row < grid.height; ++row)
    for (int col = 0; col < grid.width; ++col) {
      const auto c = geometry::pixel_center({row, col}, grid);
      out.push_back(s.region_at(c.x, c.y));
    }
  return out;
}

SceneSample base_sample(const SyntheticConfig& cfg, const Scene& s, std::uint64_t seed) {
  SceneSample out;
  out.image = render_scene(cfg, s, cfg.resolution, cfg.supersample, cfg.noise, seed);
  out.guidance = render_scene(cfg, s, cfg.guidance_resolution, cfg.supersample, cfg.noise, seed);
  out.gt_grid = GridSpec(cfg.gt_resolution, cfg.gt_resolution);
  return out;
}

}  // namespace

SceneSample gen_synthetic_parsing(const SyntheticConfig& cfg_in, std::uint64_t seed) {
  SyntheticConfig cfg = cfg_in;
  cfg.task = Task::parsing;
  cfg.validate();
  const Scene s = make_scene(cfg, seed);
  SceneSample out = base_sample(cfg, s, seed);
  const std::vector<int> regions = region_map(s, out.gt_grid);
  out.gt_labels.reserve(regions.size());
  for (int r : regions) out.gt_labels.push_back(s.region_class[static_cast<std::size_t>(r)]);

  std::vector<std::vector<int>> pixels(static_cast<std::size_t>(cfg.regions));
  for (std::size_t i = 0; i < regions.size(); ++i) pixels[static_cast<std::size_t>(regions[i])].push_back(static_cast<int>(i));
  std::vector<int> order;
  for (int k = 0; k < cfg.regions; ++k)
    if (!pixels[static_cast<std::size_t>(k)].empty()) order.push_back(k);

  Rng rng = Rng::substream(seed, "points");
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  for (int k = 0; k < cfg.points && !order.empty(); ++k) {
    const auto& px = pixels[static_cast<std::size_t>(order[static_cast<std::size_t>(k) % order.size()])];
    const int flat = px[rng.below(px.size())];
    supervision::PointLabel p{flat / cfg.gt_resolution, flat % cfg.gt_resolution, out.gt_labels[static_cast<std::size_t>(flat)]};
    if (cfg.label_noise > 0.0 && rng.coin(cfg.label_noise)) {
      p.label = (p.label + 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.classes - 1)))) % cfg.classes;
    }
    out.annotations.points.push_back(p);
  }
  return out;
}

SceneSample gen_synthetic_intrinsic(const SyntheticConfig& cfg_in, std::uint64_t seed) {
  SyntheticConfig cfg = cfg_in;
  cfg.task = Task::intrinsic;
  cfg.validate();
  const Scene s = make_scene(cfg, seed);
  SceneSample out = base_sample(cfg, s, seed);
  const std::vector<int> regions = region_map(s, out.gt_grid);
  out.gt_reflectance.reserve(regions.size());
  for (int r : regions) out.gt_reflectance.push_back(static_cast<float>(s.region_level[static_cast<std::size_t>(r)]));

  Rng rng = Rng::substream(seed, "pairs");
  const auto n = static_cast<std::uint64_t>(cfg.gt_resolution);
  for (int k = 0; k < cfg.pairs; ++k) {
    const auto r1 = static_cast<int>(rng.below(n)), c1 = static_cast<int>(rng.below(n));
    const auto r2 = static_cast<int>(rng.below(n)), c2 = static_cast<int>(rng.below(n));
    const double a = out.gt_reflectance[static_cast<std::size_t>(r1 * cfg.gt_resolution + c1)];
    const double b = out.gt_reflectance[static_cast<std::size_t>(r2 * cfg.gt_resolution + c2)];
    supervision::ComparisonPair p;
    p.x1 = (c1 + 0.5) / cfg.gt_resolution;
    p.y1 = (r1 + 0.5) / cfg.gt_resolution;
    p.x2 = (c2 + 0.5) / cfg.gt_resolution;
    p.y2 = (r2 + 0.5) / cfg.gt_resolution;
    p.relation = supervision::classify_pair(a, b, 0.1);
    p.weight = 1.0;
    out.annotations.comparisons.push_back(p);
  }
  return out;
}

SceneSample gen_synthetic(const SyntheticConfig& cfg, std::uint64_t seed) {
  return cfg.task == Task::parsing ? gen_synthetic_parsing(cfg, seed) : gen_synthetic_intrinsic(cfg, seed);
}

std::vector<int> parsing_color_oracle(const SyntheticConfig& cfg_in, std::uint64_t seed) {
  SyntheticConfig cfg = cfg_in;
  cfg.task = Task::parsing;
  cfg.validate();
  const Scene s = make_scene(cfg, seed);
  const nn::Tensor img = render_scene(cfg, s, cfg.gt_resolution, 1, 0.0, seed);
  const auto n = static_cast<std::size_t>(cfg.gt_resolution);
  std::vector<int> out;
  for (std::size_t row = 0; row < n; ++row)
    for (std::size_t col = 0; col < n; ++col) {
      std::size_t best = 0;
      double bd = 1e300;
      for (std::size_t k = 0; k < s.region_color.size(); ++k) {
        double d = 0.0;
        for (std::size_t ch = 0; ch < 3; ++ch) {
          const double v = (img.at(ch, row, col) + 1.0) / 2.0 - s.region_color[k][ch];
          d += v * v;
        }
        if (d < bd) {
          bd = d;
          best = k;
        }
      }
      out.push_back(s.region_class[best]);
    }
  return out;
}

Dataset gen_synthetic_dataset(const SyntheticConfig& cfg, int n) {
  require(n >= 1, "gen_synthetic_dataset: need at least one scene");
  Dataset ds;
  ds.task = cfg.task;
  ds.classes = cfg.task == Task::parsing ? cfg.classes : 1;
  for (int id = 1; id <= n; ++id) {
    const std::uint64_t scene_seed = Rng::substream(cfg.seed, "scene/" + std::to_string(id)).next_u64();
    SceneSample s = gen_synthetic(cfg, scene_seed);
    s.id = id;
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

namespace {

std::string stem_of(std::int64_t id) {
  std::string s = std::to_string(id);
  return std::string(s.size() < 6 ? 6 - s.size() : 0, '0') + s;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace

void write_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
  json ids = json::array();
  for (const auto& s : ds.samples) {
    ids.push_back(s.id);
    const std::string stem = stem_of(s.id);
    save_image(dir / (stem + ".ppm"), s.image);
    save_image(dir / (stem + "_guide.ppm"), s.guidance);
    save_annotations(dir / (stem + ".json"), s.annotations);
    if (!s.gt_labels.empty()) {
      save_label_map(dir / (stem + "_gt.pgm"), LabelMap{s.gt_grid.width, s.gt_grid.height, s.gt_labels});
    }
    if (!s.gt_reflectance.empty()) {
      LabelMap m{s.gt_grid.width, s.gt_grid.height, {}};
      for (float r : s.gt_reflectance) m.labels.push_back(static_cast<int>(std::lround(std::clamp(r, 0.0f, 1.0f) * 255.0f)));
      save_label_map(dir / (stem + "_refl.pgm"), m);
    }
  }
  const json manifest{{"task", task_name(ds.task)}, {"classes", ds.classes}, {"ids", ids}};
  write_text(dir / "manifest.json", manifest.dump(1) + "\n");
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const auto bytes = read_file(dir / "manifest.json");
  json manifest;
  try {
    manifest = json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    throw ParseError((dir / "manifest.json").string() + ": invalid JSON: " + e.what(), e.byte);
  }
  require(manifest.is_object() && manifest.contains("task") && manifest.contains("classes") && manifest.contains("ids"),
          "manifest.json: requires task, classes and ids");
  Dataset ds;
  ds.task = parse_task(manifest["task"].get<std::string>());
  ds.classes = manifest["classes"].get<int>();
  require(ds.classes >= 1, "manifest.json: classes must be positive");
  std::vector<std::int64_t> ids = manifest["ids"].get<std::vector<std::int64_t>>();
  std::sort(ids.begin(), ids.end());
  for (auto id : ids) {
    const std::string stem = stem_of(id);
    SceneSample s;
    s.id = id;
    s.image = load_image(dir / (stem + ".ppm"), NetpbmFormat::ppm_p6);
    s.guidance = load_image(dir / (stem + "_guide.ppm"), NetpbmFormat::ppm_p6);
    s.annotations = load_annotations(dir / (stem + ".json"));
    const auto gt_path = dir / (stem + (ds.task == Task::parsing ? "_gt.pgm" : "_refl.pgm"));
    if (std::filesystem::exists(gt_path)) {
      const LabelMap m = load_label_map(gt_path);
      s.gt_grid = GridSpec(m.height, m.width);
      if (ds.task == Task::parsing) {
        s.gt_labels = m.labels;
      } else {
        for (int v : m.labels) s.gt_reflectance.push_back(static_cast<float>(std::max(v, 1)) / 255.0f);
      }
    } else {
      s.gt_grid = GridSpec(static_cast<int>(s.guidance.dim(1)), static_cast<int>(s.guidance.dim(2)));
    }
    for (const auto& p : s.annotations.points) {
      require(p.row < s.gt_grid.height && p.col < s.gt_grid.width, "dataset " + stem + ": point outside the annotation grid");
      require(p.label < ds.classes, "dataset " + stem + ": point label outside [0, classes)");
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

std::pair<std::vector<const SceneSample*>, std::vector<const SceneSample*>> split_dataset(const Dataset& ds) {
  std::vector<std::int64_t> ids;
  for (const auto& s : ds.samples) ids.push_back(s.id);
  const DatasetSplit split = split_every_fifth(ids);
  std::pair<std::vector<const SceneSample*>, std::vector<const SceneSample*>> out;
  std::size_t ti = 0;
  for (const auto& s : ds.samples) {
    if (ti < split.test.size() && split.test[ti] == s.id) {
      out.second.push_back(&s);
      ++ti;
    } else {
      out.first.push_back(&s);
    }
  }
  return out;
}

}  // namespace dpf::io
