#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "dpf/autodiff.hpp"

namespace dpf::nn {

struct GradCheckOptions {
  std::size_t probes = 32;
  double eps = 1e-3;
  std::uint64_t seed = 0;
  /// Probes whose +-eps evaluation changes a piecewise branch (ReLU mask,
  /// hinge branch) are redrawn, at most this many times in total.
  std::size_t max_resamples = 1000;
  /// Fault-injection hook: multiplies the analytic gradient before comparison.
  double analytic_scale = 1.0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t probes = 0;
  std::size_t resamples = 0;
};

/// Builds the loss on a fresh tape from the current parameter values.
template <class T>
using LossClosure = std::function<Var<T>(Tape<T>&, BasicParamSet<T>&)>;

/// Central-difference check on randomly probed parameter coordinates.
/// Relative error is |g_a - g_n| / max(|g_a|, |g_n|, 1e-8).
template <class T>
GradCheckResult grad_check(const LossClosure<T>& loss, BasicParamSet<T>& params, const GradCheckOptions& opts);

}  // namespace dpf::nn
