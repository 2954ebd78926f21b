#include "dpf/config.hpp"

#include <algorithm>
#include <set>

#include "dpf/netpbm.hpp"
#include "dpf/rng.hpp"

namespace dpf::trainer {

using nlohmann::json;

void ModelConfig::validate() const {
  require(task != Task::parsing || classes >= 2, "model: parsing needs at least two classes");
  encoder().validate();
  require(pe_levels >= 0, "model: pe_levels must be non-negative");
  field().mlp().validate();
}

encoders::EncoderConfig ModelConfig::encoder() const {
  encoders::EncoderConfig e;
  e.backbone_widths = backbone_widths;
  e.downsample = downsample;
  e.head_channels = value_dim();
  e.guidance_blocks = guidance_blocks;
  e.guidance_width = use_guidance ? guidance_width : 0;
  return e;
}

field::FieldConfig ModelConfig::field() const {
  field::FieldConfig f;
  f.latent_dim = backbone_widths.empty() ? 0 : backbone_widths.back();
  f.guidance_dim = use_guidance ? guidance_width : 0;
  f.value_dim = value_dim();
  f.pe.levels = pe_levels;
  f.hidden = mlp_hidden;
  f.mode = weight_mode;
  f.squash_reflectance = task == Task::intrinsic;
  return f;
}

json ModelConfig::to_json() const {
  return json{{"task", io::task_name(task)},
              {"classes", classes},
              {"backbone_widths", backbone_widths},
              {"downsample", downsample},
              {"guidance_blocks", guidance_blocks},
              {"guidance_width", guidance_width},
              {"use_guidance", use_guidance},
              {"mlp_hidden", mlp_hidden},
              {"pe_levels", pe_levels},
              {"weight_mode", weight_mode == field::WeightMode::learned ? "learned" : "distance"}};
}

namespace {

field::WeightMode parse_weight_mode(const std::string& s) {
  if (s == "learned") return field::WeightMode::learned;
  if (s == "distance") return field::WeightMode::distance;
  throw ContractError("config: weight_mode must be 'learned' or 'distance', got '" + s + "'");
}

template <class V>
V get_as(const json& j, const std::string& key) {
  try {
    return j.at(key).get<V>();
  } catch (const json::exception& e) {
    throw ContractError("config: key '" + key + "' has the wrong type: " + e.what());
  }
}

}  // namespace

ModelConfig ModelConfig::from_json(const json& j) {
  require(j.is_object(), "model config must be a JSON object");
  require(j.size() == ModelConfig{}.to_json().size(), "model config has unexpected keys");
  ModelConfig m;
  m.task = io::parse_task(get_as<std::string>(j, "task"));
  m.classes = get_as<int>(j, "classes");
  m.backbone_widths = get_as<std::vector<int>>(j, "backbone_widths");
  m.downsample = get_as<int>(j, "downsample");
  m.guidance_blocks = get_as<int>(j, "guidance_blocks");
  m.guidance_width = get_as<int>(j, "guidance_width");
  m.use_guidance = get_as<bool>(j, "use_guidance");
  m.mlp_hidden = get_as<std::vector<int>>(j, "mlp_hidden");
  m.pe_levels = get_as<int>(j, "pe_levels");
  m.weight_mode = parse_weight_mode(get_as<std::string>(j, "weight_mode"));
  m.validate();
  return m;
}

std::uint64_t ModelConfig::digest() const { return Rng::fnv1a(to_json().dump()); }

void TrainConfig::validate() const {
  model.validate();
  require(base_lr >= 0.0, "config: base_lr must be non-negative");
  require(max_epochs >= 1, "config: max_epochs must be >= 1");
  require(power > 0.0, "config: power must be positive");
  require(momentum >= 0.0 && weight_decay >= 0.0, "config: momentum and weight_decay must be non-negative");
  require(batch_size >= 1, "config: batch_size must be >= 1");
  require(lambda_aux >= 0.0, "config: lambda_aux must be non-negative");
  require(crop >= 0, "config: crop must be non-negative");
  require(crop % model.downsample == 0, "config: crop must be a multiple of downsample");
  require(checkpoint_every >= 0 && eval_every >= 0, "config: cadences must be non-negative");
  if (synth) {
    synth->validate();
    require(synth->task == model.task, "config: synthetic task differs from model task");
    require(model.task != Task::parsing || synth->classes == model.classes, "config: synth classes differ from model classes");
    require(crop <= synth->resolution, "config: crop exceeds the image size");
    require(synth_count >= 1, "config: synth_count must be >= 1");
  }
}

json TrainConfig::to_json() const {
  json j{{"task", io::task_name(model.task)},
         {"classes", model.classes},
         {"backbone_widths", model.backbone_widths},
         {"downsample", model.downsample},
         {"guidance_blocks", model.guidance_blocks},
         {"guidance_width", model.guidance_width},
         {"use_guidance", model.use_guidance},
         {"mlp_hidden", model.mlp_hidden},
         {"pe_levels", model.pe_levels},
         {"weight_mode", model.weight_mode == field::WeightMode::learned ? "learned" : "distance"},
         {"base_lr", base_lr},
         {"max_epochs", max_epochs},
         {"power", power},
         {"momentum", momentum},
         {"weight_decay", weight_decay},
         {"batch_size", batch_size},
         {"seed", seed},
         {"lambda_aux", lambda_aux},
         {"hinge_delta", hinge.delta},
         {"hinge_eps", hinge.eps},
         {"hflip", hflip},
         {"crop", crop},
         {"checkpoint", checkpoint_path},
         {"runlog", runlog_path},
         {"checkpoint_every", checkpoint_every},
         {"eval_every", eval_every},
         {"holdout", holdout}};
  if (!data_dir.empty()) j["data_dir"] = data_dir;
  if (synth) {
    j["synth_count"] = synth_count;
    j["synth_resolution"] = synth->resolution;
    j["synth_guidance_resolution"] = synth->guidance_resolution;
    j["synth_gt_resolution"] = synth->gt_resolution;
    j["synth_regions"] = synth->regions;
    j["synth_levels"] = synth->levels;
    j["synth_points"] = synth->points;
    j["synth_pairs"] = synth->pairs;
    j["synth_noise"] = synth->noise;
    j["synth_label_noise"] = synth->label_noise;
    j["synth_supersample"] = synth->supersample;
    j["synth_seed"] = synth->seed;
  }
  if (!trend_input_res.empty()) j["trend_input_res"] = trend_input_res;
  if (!trend_guidance_res.empty()) j["trend_guidance_res"] = trend_guidance_res;
  if (!trend_seeds.empty()) j["trend_seeds"] = trend_seeds;
  if (trend_eval_res) j["trend_eval_res"] = trend_eval_res;
  return j;
}

void apply_preset(TrainConfig& cfg, const std::string& preset) {
  if (preset == "pascal-context") {
    cfg.base_lr = 0.028;
    cfg.max_epochs = 70;
  } else if (preset == "ade20k") {
    cfg.base_lr = 0.035;
    cfg.max_epochs = 60;
  } else if (preset == "iiw") {
    cfg.base_lr = 0.007;
    cfg.max_epochs = 30;
  } else {
    throw ContractError("config: unknown preset '" + preset + "' (pascal-context, ade20k, iiw)");
  }
}

TrainConfig parse_train_config(const json& j) {
  require(j.is_object(), "config: top level must be a JSON object");
  static const std::set<std::string> known{
      "task", "preset", "classes", "backbone_widths", "downsample", "guidance_blocks", "guidance_width",
      "use_guidance", "mlp_hidden", "pe_levels", "weight_mode", "base_lr", "max_epochs", "power", "momentum",
      "weight_decay", "batch_size", "seed", "lambda_aux", "hinge_delta", "hinge_eps", "hflip", "crop",
      "data_dir", "checkpoint", "runlog", "checkpoint_every", "eval_every", "holdout", "synth_count", "synth_resolution",
      "synth_guidance_resolution", "synth_gt_resolution", "synth_regions", "synth_levels", "synth_points",
      "synth_pairs", "synth_noise", "synth_label_noise", "synth_supersample", "synth_seed", "trend_input_res",
      "trend_guidance_res", "trend_seeds", "trend_eval_res"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw ContractError("config: unknown key '" + key + "'");
  }
  require(j.contains("task"), "config: 'task' is required");

  TrainConfig c;
  c.model.task = io::parse_task(get_as<std::string>(j, "task"));
  apply_preset(c, j.contains("preset") ? get_as<std::string>(j, "preset")
                                       : (c.model.task == Task::parsing ? "pascal-context" : "iiw"));
  auto opt = [&](const char* key, auto& dst) {
    if (j.contains(key)) dst = get_as<std::decay_t<decltype(dst)>>(j, key);
  };
  opt("classes", c.model.classes);
  opt("backbone_widths", c.model.backbone_widths);
  opt("downsample", c.model.downsample);
  opt("guidance_blocks", c.model.guidance_blocks);
  opt("guidance_width", c.model.guidance_width);
  opt("use_guidance", c.model.use_guidance);
  opt("mlp_hidden", c.model.mlp_hidden);
  opt("pe_levels", c.model.pe_levels);
  if (j.contains("weight_mode")) c.model.weight_mode = parse_weight_mode(get_as<std::string>(j, "weight_mode"));
  opt("base_lr", c.base_lr);
  opt("max_epochs", c.max_epochs);
  opt("power", c.power);
  opt("momentum", c.momentum);
  opt("weight_decay", c.weight_decay);
  opt("batch_size", c.batch_size);
  opt("seed", c.seed);
  opt("lambda_aux", c.lambda_aux);
  opt("hinge_delta", c.hinge.delta);
  opt("hinge_eps", c.hinge.eps);
  opt("hflip", c.hflip);
  opt("crop", c.crop);
  opt("data_dir", c.data_dir);
  opt("checkpoint", c.checkpoint_path);
  opt("runlog", c.runlog_path);
  opt("checkpoint_every", c.checkpoint_every);
  opt("eval_every", c.eval_every);
  opt("holdout", c.holdout);
  opt("trend_input_res", c.trend_input_res);
  opt("trend_guidance_res", c.trend_guidance_res);
  opt("trend_seeds", c.trend_seeds);
  opt("trend_eval_res", c.trend_eval_res);

  bool any_synth = false;
  for (const auto& [key, _] : j.items()) any_synth = any_synth || key.rfind("synth_", 0) == 0;
  if (any_synth) {
    io::SyntheticConfig s;
    s.task = c.model.task;
    s.classes = c.model.classes;
    opt("synth_count", c.synth_count);
    opt("synth_resolution", s.resolution);
    s.guidance_resolution = s.resolution * 2;
    opt("synth_guidance_resolution", s.guidance_resolution);
    s.gt_resolution = s.guidance_resolution;
    opt("synth_gt_resolution", s.gt_resolution);
    opt("synth_regions", s.regions);
    opt("synth_levels", s.levels);
    opt("synth_points", s.points);
    opt("synth_pairs", s.pairs);
    opt("synth_noise", s.noise);
    opt("synth_label_noise", s.label_noise);
    opt("synth_supersample", s.supersample);
    opt("synth_seed", s.seed);
    c.synth = s;
  }
  require(c.synth.has_value() || !c.data_dir.empty() || !c.trend_guidance_res.empty(),
          "config: provide data_dir or synth_* keys");
  c.validate();
  return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  json j;
  try {
    j = json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": invalid JSON: " + e.what(), e.byte);
  }
  return parse_train_config(j);
}

std::filesystem::path sidecar_path(const std::filesystem::path& checkpoint) {
  std::filesystem::path p = checkpoint;
  p += ".json";
  return p;
}

}  // namespace dpf::trainer
