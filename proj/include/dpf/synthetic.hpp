#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dpf/annotations.hpp"
#include "dpf/geometry.hpp"
#include "dpf/tensor.hpp"

namespace dpf::io {

enum class Task { parsing, intrinsic };

const char* task_name(Task t) noexcept;
Task parse_task(const std::string& s);

/// One training/evaluation scene. Dense ground truth only exists for synthetic data.
struct SceneSample {
  std::int64_t id = 0;
  nn::Tensor image;     // [3, H, W] in [-1, 1]
  nn::Tensor guidance;  // [3, Hg, Wg] in [-1, 1]
  Annotations annotations;
  geometry::GridSpec gt_grid{};     // grid of point labels and dense ground truth
  std::vector<int> gt_labels;       // parsing
  std::vector<float> gt_reflectance;  // intrinsic, in (0, 1]
};

struct SyntheticConfig {
  Task task = Task::parsing;
  int resolution = 32;           // input image, square
  int guidance_resolution = 64;  // guidance image
  int gt_resolution = 64;        // annotation / ground-truth grid
  int regions = 8;               // K Voronoi cells
  int classes = 4;               // parsing
  std::vector<double> levels{0.25, 0.5, 0.9};  // intrinsic reflectance levels
  int points = 8;                // labeled points per parsing scene
  int pairs = 64;                // comparisons per intrinsic scene
  double noise = 0.02;           // additive pixel noise amplitude in [0, 1] units
  double label_noise = 0.0;      // probability of corrupting a point label
  int supersample = 2;           // anti-aliasing samples per axis when rendering images
  std::uint64_t seed = 0;        // dataset-level seed (palette, shading families)

  void validate() const;
};

/// Voronoi scene; colors follow a class palette shared by every scene of the dataset.
SceneSample gen_synthetic_parsing(const SyntheticConfig& cfg, std::uint64_t seed);

/// Piecewise-constant reflectance times smooth shading in [0.2, 1].
SceneSample gen_synthetic_intrinsic(const SyntheticConfig& cfg, std::uint64_t seed);

SceneSample gen_synthetic(const SyntheticConfig& cfg, std::uint64_t seed);

/// Region-color oracle used to validate the parsing generator: renders the
/// scene at gt resolution without noise and maps each pixel's color back to
/// the class of the closest region color.
std::vector<int> parsing_color_oracle(const SyntheticConfig& cfg, std::uint64_t seed);

struct Dataset {
  Task task = Task::parsing;
  int classes = 1;
  std::vector<SceneSample> samples;  // ascending id order
};

/// Scenes with ids 1..n, scene seed derived from (cfg.seed, id).
Dataset gen_synthetic_dataset(const SyntheticConfig& cfg, int n);

/// Directory layout: manifest.json plus <id>.ppm, <id>_guide.ppm, <id>.json and
/// <id>_gt.pgm (class indices) or <id>_refl.pgm (reflectance * 255).
void write_dataset(const std::filesystem::path& dir, const Dataset& ds);
Dataset load_dataset(const std::filesystem::path& dir);

/// Splits a dataset with split_every_fifth over its ids.
std::pair<std::vector<const SceneSample*>, std::vector<const SceneSample*>> split_dataset(const Dataset& ds);

}  // namespace dpf::io
