#pragma once

#include <vector>

#include "dpf/tensor.hpp"

namespace dpf::nn {

/// Momentum buffers plus the two coefficients of classic SGD.
struct OptimState {
  double momentum = 0.9;
  double weight_decay = 0.0001;
  std::vector<Tensor> buffers;  // one per parameter, lazily created

  OptimState() = default;
  OptimState(double momentum_, double weight_decay_) : momentum(momentum_), weight_decay(weight_decay_) {}
};

/// buffer <- momentum * buffer + grad + wd * value;  value <- value - lr * buffer.
/// Gradients are left in place for the caller to zero.
void sgd_step(ParamSet& params, OptimState& state, double lr);

/// base * (1 - epoch / max_epoch)^power
double poly_lr(double base, int epoch, int max_epoch, double power = 0.9);

}  // namespace dpf::nn
