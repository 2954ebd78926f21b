#include "dpf/encoders.hpp"

#include <bit>

#include "dpf/mlp.hpp"

namespace dpf::encoders {

using nn::Shape;

void EncoderConfig::validate() const {
  require(!backbone_widths.empty(), "EncoderConfig: backbone needs at least one stage");
  for (int w : backbone_widths) require(w >= 1, "EncoderConfig: backbone widths must be >= 1");
  require(downsample >= 1 && std::has_single_bit(static_cast<unsigned>(downsample)),
          "EncoderConfig: downsample must be a power of two");
  require(std::countr_zero(static_cast<unsigned>(downsample)) <= static_cast<int>(backbone_widths.size()),
          "EncoderConfig: not enough stages for the requested downsampling");
  require(head_channels >= 1, "EncoderConfig: head needs at least one channel");
  require(guidance_blocks >= 0 && guidance_width >= 0, "EncoderConfig: guidance sizes must be non-negative");
}

int EncoderConfig::stride_of_stage(std::size_t stage) const {
  return static_cast<int>(stage) < std::countr_zero(static_cast<unsigned>(downsample)) ? 2 : 1;
}

std::string backbone_stage_name(std::size_t stage) { return "backbone.stage" + std::to_string(stage); }

std::string guidance_block_name(std::size_t block, int conv) {
  return "guidance.block" + std::to_string(block) + ".conv" + std::to_string(conv);
}

namespace {

template <class T>
nn::Var<T> conv(nn::Tape<T>& tape, nn::BasicParamSet<T>& params, const std::string& name, nn::Var<T> x, int stride) {
  auto& w = params.get(name + ".weight");
  auto& b = params.get(name + ".bias");
  const int k = static_cast<int>(w.value.dim(2));
  return nn::conv2d(x, tape.parameter(w), tape.parameter(b), stride, k / 2);
}

void add_conv(nn::ParamSet& params, const std::string& name, std::size_t in, std::size_t out, std::size_t k,
              std::uint64_t seed) {
  params.add(name + ".weight", nn::kaiming_uniform(Shape{out, in, k, k}, in * k * k, seed, name));
  params.add(name + ".bias", nn::Tensor(Shape{out}));
}

}  // namespace

template <class T>
BackboneOutput<T> backbone_forward(const EncoderConfig& cfg, nn::BasicParamSet<T>& params, nn::Var<T> image) {
  cfg.validate();
  const auto& s = image.shape();
  if (s.size() != 3 || s[0] != 3) throw ContractError("backbone_forward: expected image [3, H, W], got " + nn::shape_str(s));
  const auto f = static_cast<std::size_t>(cfg.downsample);
  if (s[1] % f != 0 || s[2] % f != 0) {
    throw ContractError("backbone_forward: image " + nn::shape_str(s) + " is not divisible by downsample factor " +
                        std::to_string(f));
  }
  nn::Tape<T>& tape = *image.tape;
  nn::Var<T> h = image;
  for (std::size_t i = 0; i < cfg.backbone_widths.size(); ++i) {
    h = nn::relu(conv(tape, params, backbone_stage_name(i), h, cfg.stride_of_stage(i)));
  }
  nn::Var<T> v = conv(tape, params, "backbone.head", h, 1);
  return {v, h};
}

template <class T>
nn::Var<T> guidance_forward(const EncoderConfig& cfg, nn::BasicParamSet<T>& params, nn::Var<T> guide) {
  cfg.validate();
  require(cfg.guidance_width > 0, "guidance_forward: guidance encoder is disabled");
  const auto& s = guide.shape();
  if (s.size() != 3 || s[0] != 3) throw ContractError("guidance_forward: expected guide [3, H, W], got " + nn::shape_str(s));
  nn::Tape<T>& tape = *guide.tape;
  nn::Var<T> x = conv(tape, params, "guidance.stem", guide, 1);
  for (std::size_t b = 0; b < static_cast<std::size_t>(cfg.guidance_blocks); ++b) {
    nn::Var<T> r = nn::relu(conv(tape, params, guidance_block_name(b, 1), x, 1));
    r = conv(tape, params, guidance_block_name(b, 2), r, 1);
    x = nn::add(x, nn::scale(r, static_cast<T>(kResidualScale)));
  }
  return x;
}

void init_encoders(const EncoderConfig& cfg, std::uint64_t seed, nn::ParamSet& params) {
  cfg.validate();
  std::size_t in = 3;
  for (std::size_t i = 0; i < cfg.backbone_widths.size(); ++i) {
    const auto out = static_cast<std::size_t>(cfg.backbone_widths[i]);
    add_conv(params, backbone_stage_name(i), in, out, 3, seed);
    in = out;
  }
  add_conv(params, "backbone.head", in, static_cast<std::size_t>(cfg.head_channels), 1, seed);

  if (cfg.guidance_width == 0) return;
  const auto dg = static_cast<std::size_t>(cfg.guidance_width);
  add_conv(params, "guidance.stem", 3, dg, 3, seed);
  for (std::size_t b = 0; b < static_cast<std::size_t>(cfg.guidance_blocks); ++b) {
    add_conv(params, guidance_block_name(b, 1), dg, dg, 3, seed);
    add_conv(params, guidance_block_name(b, 2), dg, dg, 3, seed);
  }
}

template BackboneOutput<float> backbone_forward(const EncoderConfig&, nn::BasicParamSet<float>&, nn::Var<float>);
template BackboneOutput<double> backbone_forward(const EncoderConfig&, nn::BasicParamSet<double>&, nn::Var<double>);
template nn::Var<float> guidance_forward(const EncoderConfig&, nn::BasicParamSet<float>&, nn::Var<float>);
template nn::Var<double> guidance_forward(const EncoderConfig&, nn::BasicParamSet<double>&, nn::Var<double>);

}  // namespace dpf::encoders
