#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dpf/ops.hpp"

namespace dpf::encoders {

/// Hyperparameters of the convolutional backbone stand-in and the residual
/// guidance encoder.
struct EncoderConfig {
  std::vector<int> backbone_widths{16, 32, 32, 64};  // last entry is the latent width d_z
  int downsample = 4;                                // power of two; first log2 stages use stride 2
  int head_channels = 1;                             // channels of V
  int guidance_blocks = 4;
  int guidance_width = 16;  // d_g; 0 disables the guidance encoder

  void validate() const;
  int latent_dim() const { return backbone_widths.back(); }
  int stride_of_stage(std::size_t stage) const;
};

template <class T>
struct BackboneOutput {
  nn::Var<T> V;  // [c_out, H/s, W/s]
  nn::Var<T> z;  // [d_z, H/s, W/s]
};

/// Lower bound of the reflectance range produced by squash_reflectance.
inline constexpr double kReflectanceFloor = 1e-3;

/// Maps a raw reflectance channel into [1e-3, 1] via an affine sigmoid.
template <class T>
nn::Var<T> squash_reflectance(nn::Var<T> raw) {
  return nn::sigmoid_range(raw, static_cast<T>(kReflectanceFloor), T(1));
}

/// Conv-ReLU stages down to 1/s resolution, then a 1x1 prediction head on z.
template <class T>
BackboneOutput<T> backbone_forward(const EncoderConfig& cfg, nn::BasicParamSet<T>& params, nn::Var<T> image);

/// EDSR-style residual scaling: keeps the unnormalized block stack near the stem's magnitude.
inline constexpr double kResidualScale = 0.1;

/// Stem conv followed by stride-1 residual blocks: x + 0.1 * conv(relu(conv(x))).
template <class T>
nn::Var<T> guidance_forward(const EncoderConfig& cfg, nn::BasicParamSet<T>& params, nn::Var<T> guide);

/// Adds Kaiming-uniform conv weights and zero biases for both encoders.
void init_encoders(const EncoderConfig& cfg, std::uint64_t seed, nn::ParamSet& params);

std::string backbone_stage_name(std::size_t stage);
std::string guidance_block_name(std::size_t block, int conv);

}  // namespace dpf::encoders
