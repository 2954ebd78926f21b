#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dpf/model.hpp"
#include "dpf/rng.hpp"

namespace dpf::trainer {

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double field_loss = 0.0;  // mean over scenes seen this epoch
  double aux_loss = 0.0;
  double total_loss = 0.0;
  std::optional<double> metric;  // test metric when evaluated this epoch
  double seconds = 0.0;          // console only; not persisted
};

/// Persisted form is bitwise reproducible for a fixed config and seed.
struct RunLog {
  std::vector<EpochRecord> epochs;
  nlohmann::json to_json() const;
};

struct EvalReport {
  Task task = Task::parsing;
  std::size_t scenes = 0;
  double field = 0.0;      // mIoU (parsing) or WHDR (intrinsic) of the dense prediction field
  double baseline = 0.0;   // same metric for the upsampled backbone head V
  std::optional<double> all_equal;  // intrinsic: WHDR of predicting "E" everywhere
  const char* metric_name() const noexcept { return task == Task::parsing ? "mIoU" : "WHDR"; }
  nlohmann::json to_json() const;
};

/// Test-split evaluation. Parsing renders at each scene's ground-truth grid.
EvalReport evaluate(const ModelConfig& cfg, nn::ParamSet& params, const std::vector<const io::SceneSample*>& scenes);

struct TrainOptions {
  bool write_outputs = true;  // checkpoint, sidecar and run log
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  nn::ParamSet params;
  RunLog log;
  std::size_t train_scenes = 0;
  std::size_t test_scenes = 0;
};

/// Deterministic SGD over the train split. A non-finite loss aborts with
/// NumericError; checkpoints already on disk are left untouched.
TrainResult train(const TrainConfig& cfg, const io::Dataset& data, const TrainOptions& opts = {});

/// Dataset from data_dir, or synthesized from the synth_* keys.
io::Dataset load_training_data(const TrainConfig& cfg);

/// Random horizontal flip and square crop, keeping annotations consistent.
/// Points falling outside a crop are dropped, as are pairs with an endpoint outside.
io::SceneSample augment(const io::SceneSample& scene, Rng& rng, bool hflip, int crop);

/// Writes the checkpoint plus a JSON sidecar (<path>.json) carrying the model config.
void save_model(const std::filesystem::path& path, const ModelConfig& cfg, const nn::ParamSet& params,
                std::uint64_t seed);

struct LoadedModel {
  ModelConfig config;
  nn::ParamSet params;
  std::uint64_t seed = 0;
};

/// Reads the sidecar, then the checkpoint with the sidecar's digest enforced.
LoadedModel load_model(const std::filesystem::path& path);

}  // namespace dpf::trainer
