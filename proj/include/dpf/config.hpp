#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dpf/encoders.hpp"
#include "dpf/field.hpp"
#include "dpf/supervision.hpp"
#include "dpf/synthetic.hpp"

namespace dpf::trainer {

using io::Task;

/// Everything that determines the parameter layout and forward computation.
struct ModelConfig {
  Task task = Task::parsing;
  int classes = 4;  // parsing only; intrinsic predicts one reflectance channel
  std::vector<int> backbone_widths{16, 32, 32, 64};
  int downsample = 4;
  int guidance_blocks = 4;
  int guidance_width = 16;
  bool use_guidance = true;  // false realizes v_x = f(z, x)
  std::vector<int> mlp_hidden{256, 256};
  int pe_levels = 9;
  field::WeightMode weight_mode = field::WeightMode::learned;

  void validate() const;
  int value_dim() const { return task == Task::parsing ? classes : 1; }
  encoders::EncoderConfig encoder() const;
  field::FieldConfig field() const;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);

  /// FNV-1a over the canonical JSON form.
  std::uint64_t digest() const;
};

/// Flat training configuration. Defaults for base_lr / max_epochs follow the
/// task preset (parsing: 0.028 / 70, intrinsic: 0.007 / 30) unless overridden.
struct TrainConfig {
  ModelConfig model;
  double base_lr = 0.028;
  int max_epochs = 70;
  double power = 0.9;
  double momentum = 0.9;
  double weight_decay = 0.0001;
  int batch_size = 2;
  std::uint64_t seed = 0;
  double lambda_aux = 1.0;
  supervision::HingeMargins hinge{};
  bool hflip = true;
  int crop = 0;  // square crop in input pixels, 0 disables

  std::string data_dir;                      // dataset directory, or
  std::optional<io::SyntheticConfig> synth;  // inline synthetic dataset
  int synth_count = 20;

  std::string checkpoint_path = "dpf.ckpt";
  std::string runlog_path = "runlog.json";
  int checkpoint_every = 0;
  int eval_every = 0;
  /// false: train on every scene and evaluate on the same scenes (overfit runs).
  bool holdout = true;

  // trend experiment matrix
  std::vector<int> trend_input_res;
  std::vector<int> trend_guidance_res;
  std::vector<std::uint64_t> trend_seeds;
  int trend_eval_res = 0;  // 0: largest guidance resolution

  void validate() const;
  nlohmann::json to_json() const;
};

/// Named presets: "pascal-context" (0.028, 70), "ade20k" (0.035, 60), "iiw" (0.007, 30).
void apply_preset(TrainConfig& cfg, const std::string& preset);

/// Unknown keys are rejected.
TrainConfig parse_train_config(const nlohmann::json& j);
TrainConfig load_train_config(const std::filesystem::path& path);

std::filesystem::path sidecar_path(const std::filesystem::path& checkpoint);

}  // namespace dpf::trainer
