#include "dpf/mlp.hpp"

#include <cmath>

#include "dpf/rng.hpp"

namespace dpf::nn {

void MlpConfig::validate() const {
  require(!hidden_dims.empty(), "MlpConfig: at least one hidden layer is required");
  require(input_dim >= 1 && output_dim >= 1, "MlpConfig: input and output dims must be >= 1");
  for (int h : hidden_dims) require(h >= 1, "MlpConfig: hidden dims must be >= 1");
}

std::string mlp_weight_name(const std::string& prefix, std::size_t layer) {
  return prefix + ".l" + std::to_string(layer) + ".weight";
}

std::string mlp_bias_name(const std::string& prefix, std::size_t layer) {
  return prefix + ".l" + std::to_string(layer) + ".bias";
}

template <class T>
Var<T> mlp_forward(const MlpConfig& cfg, BasicParamSet<T>& params, const std::string& prefix, Var<T> input) {
  cfg.validate();
  if (input.shape().size() != 2 || input.shape()[1] != static_cast<std::size_t>(cfg.input_dim)) {
    throw ContractError("mlp_forward: expected input [batch, " + std::to_string(cfg.input_dim) + "], got " +
                        shape_str(input.shape()));
  }
  Tape<T>& tape = *input.tape;
  Var<T> h = input;
  for (std::size_t i = 0; i < cfg.layer_count(); ++i) {
    auto& w = params.get(mlp_weight_name(prefix, i));
    auto& b = params.get(mlp_bias_name(prefix, i));
    const Shape want_w{static_cast<std::size_t>(cfg.layer_in(i)), static_cast<std::size_t>(cfg.layer_out(i))};
    if (w.value.shape() != want_w || b.value.shape() != Shape{want_w[1]}) {
      throw ContractError("mlp_forward: parameter '" + w.name + "' does not match the config");
    }
    h = linear(h, tape.parameter(w), tape.parameter(b));
    if (i + 1 < cfg.layer_count()) h = relu(h);
  }
  return h;
}

template <class T>
BasicTensor<T> mlp_forward(const MlpConfig& cfg, BasicParamSet<T>& params, const std::string& prefix,
                           const BasicTensor<T>& input) {
  Tape<T> tape;
  return mlp_forward(cfg, params, prefix, tape.constant(input)).value();
}

Tensor kaiming_uniform(Shape shape, std::size_t fan_in, std::uint64_t seed, const std::string& stream) {
  require(fan_in >= 1, "kaiming_uniform: fan_in must be positive");
  Rng rng = Rng::substream(seed, stream);
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<float>(rng.uniform(-bound, bound));
  return t;
}

void init_mlp(const MlpConfig& cfg, std::uint64_t seed, const std::string& prefix, ParamSet& params) {
  cfg.validate();
  for (std::size_t i = 0; i < cfg.layer_count(); ++i) {
    const auto in = static_cast<std::size_t>(cfg.layer_in(i));
    const auto out = static_cast<std::size_t>(cfg.layer_out(i));
    const std::string wname = mlp_weight_name(prefix, i);
    params.add(wname, kaiming_uniform(Shape{in, out}, in, seed, wname));
    params.add(mlp_bias_name(prefix, i), Tensor(Shape{out}));
  }
}

template Var<float> mlp_forward(const MlpConfig&, BasicParamSet<float>&, const std::string&, Var<float>);
template Var<double> mlp_forward(const MlpConfig&, BasicParamSet<double>&, const std::string&, Var<double>);
template BasicTensor<float> mlp_forward(const MlpConfig&, BasicParamSet<float>&, const std::string&,
                                        const BasicTensor<float>&);
template BasicTensor<double> mlp_forward(const MlpConfig&, BasicParamSet<double>&, const std::string&,
                                         const BasicTensor<double>&);

}  // namespace dpf::nn
