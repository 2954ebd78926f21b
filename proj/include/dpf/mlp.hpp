#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dpf/ops.hpp"

namespace dpf::nn {

enum class Activation { relu };

struct MlpConfig {
  int input_dim = 1;
  std::vector<int> hidden_dims{256, 256};
  int output_dim = 1;
  Activation activation = Activation::relu;

  void validate() const;
  std::size_t layer_count() const noexcept { return hidden_dims.size() + 1; }
  int layer_in(std::size_t i) const { return i == 0 ? input_dim : hidden_dims.at(i - 1); }
  int layer_out(std::size_t i) const { return i == hidden_dims.size() ? output_dim : hidden_dims.at(i); }
};

/// Parameter names are "<prefix>.l<i>.weight" ([in, out]) and "<prefix>.l<i>.bias".
std::string mlp_weight_name(const std::string& prefix, std::size_t layer);
std::string mlp_bias_name(const std::string& prefix, std::size_t layer);

/// Affine + ReLU for every hidden layer, affine output layer.
template <class T>
Var<T> mlp_forward(const MlpConfig& cfg, BasicParamSet<T>& params, const std::string& prefix, Var<T> input);

/// Tape-free convenience wrapper.
template <class T>
BasicTensor<T> mlp_forward(const MlpConfig& cfg, BasicParamSet<T>& params, const std::string& prefix,
                           const BasicTensor<T>& input);

/// Kaiming-uniform weights in +-sqrt(6 / fan_in), drawn from the named substream.
Tensor kaiming_uniform(Shape shape, std::size_t fan_in, std::uint64_t seed, const std::string& stream);

/// Adds the MLP's parameters (Kaiming-uniform weights, zero biases) to `params`.
void init_mlp(const MlpConfig& cfg, std::uint64_t seed, const std::string& prefix, ParamSet& params);

}  // namespace dpf::nn
