#include "dpf/optim.hpp"

#include <cmath>

namespace dpf::nn {

void sgd_step(ParamSet& params, OptimState& state, double lr) {
  if (state.buffers.empty()) {
    for (const auto& p : params) state.buffers.emplace_back(p.value.shape());
  }
  require(state.buffers.size() == params.size(), "sgd_step: optimizer state does not match the parameter set");

  std::size_t k = 0;
  for (const auto& p : params) {
    require(state.buffers[k].shape() == p.value.shape(), "sgd_step: buffer shape mismatch for '" + p.name + "'");
    if (!p.grad.all_finite()) throw NumericError("sgd_step: non-finite gradient in '" + p.name + "'");
    ++k;
  }

  const auto mom = static_cast<float>(state.momentum);
  const auto wd = static_cast<float>(state.weight_decay);
  const auto step = static_cast<float>(lr);
  k = 0;
  for (auto& p : params) {
    auto buf = state.buffers[k++].data();
    auto val = p.value.data();
    const auto grad = p.grad.data();
    for (std::size_t i = 0; i < val.size(); ++i) {
      buf[i] = mom * buf[i] + grad[i] + wd * val[i];
      val[i] -= step * buf[i];
    }
  }
}

double poly_lr(double base, int epoch, int max_epoch, double power) {
  require(max_epoch > 0, "poly_lr: max_epoch must be positive");
  require(epoch >= 0 && epoch <= max_epoch, "poly_lr: epoch outside [0, max_epoch]");
  require(power > 0.0, "poly_lr: power must be positive");
  return base * std::pow(1.0 - static_cast<double>(epoch) / max_epoch, power);
}

}  // namespace dpf::nn
