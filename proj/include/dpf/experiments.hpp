#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dpf/gradcheck.hpp"
#include "dpf/trainer.hpp"

namespace dpf::trainer {

inline constexpr double kGradcheckThreshold = 1e-3;

struct GradcheckRow {
  Task task = Task::parsing;
  nn::GradCheckResult result;
  bool passed = false;
};

/// Tiny model: 8x8 input, 2x2 backbone grid, 16x16 guidance, both loss
/// terms active. Runs in double precision.
ModelConfig gradcheck_model(Task task);
io::SceneSample gradcheck_scene(Task task, std::uint64_t seed);

/// `fault_scale` multiplies the analytic gradient (1 = no fault).
GradcheckRow run_gradcheck(Task task, std::uint64_t seed = 7, std::size_t probes = 64, double fault_scale = 1.0);

std::string format_gradcheck(const std::vector<GradcheckRow>& rows);

struct TrendCell {
  int input_res = 0;
  int guidance_res = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<double> metric;  // per seed
  std::vector<double> baseline;
  double mean() const;
  double baseline_mean() const;
};

struct TrendTable {
  Task task = Task::parsing;
  int eval_res = 0;
  std::vector<TrendCell> cells;  // input-major, guidance ascending

  std::string format() const;
  nlohmann::json to_json() const;
};

/// One model per (input res, guidance res, seed); every cell shares the same
/// scenes, evaluated on a common annotation grid. Crop is disabled.
TrendTable run_trend(const TrainConfig& base, const std::function<void(const std::string&)>& progress = {});

}  // namespace dpf::trainer
