#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "dpf/config.hpp"

namespace dpf::trainer {

/// Backbone, guidance encoder and field MLP, each from its own seed substream.
nn::ParamSet init_model(const ModelConfig& cfg, std::uint64_t seed);

template <class T>
struct Encoded {
  nn::Var<T> V;  // raw head output [c, Hb, Wb]
  nn::Var<T> z;  // [d_z, Hb, Wb]
  std::optional<nn::Var<T>> g;
};

template <class T>
Encoded<T> encode(const ModelConfig& cfg, nn::BasicParamSet<T>& params, nn::Tape<T>& tape,
                  const nn::BasicTensor<T>& image, const nn::BasicTensor<T>& guidance);

template <class T>
struct LossTerms {
  nn::Var<T> field;  // loss on the interpolated field
  nn::Var<T> aux;    // same loss applied to the backbone head V
  nn::Var<T> total;  // field + lambda * aux
};

/// Per-scene objective. Returns nullopt for a scene without usable annotations.
template <class T>
std::optional<LossTerms<T>> scene_loss(const ModelConfig& cfg, nn::BasicParamSet<T>& params, nn::Tape<T>& tape,
                                       const io::SceneSample& scene, double lambda_aux,
                                       supervision::HingeMargins margins = {});

/// Tape-free forward pass.
struct Features {
  nn::Tensor V, z;
  std::optional<nn::Tensor> g;
};

Features encode_features(const ModelConfig& cfg, nn::ParamSet& params, const nn::Tensor& image,
                         const nn::Tensor& guidance);

/// Field rendered at every pixel center of `out`: logits for parsing,
/// reflectance in [1e-3, 1] for intrinsic. Shape [c, H, W].
nn::Tensor render_field(const ModelConfig& cfg, nn::ParamSet& params, const Features& f, geometry::GridSpec out);

/// Baseline: the backbone head V, bilinearly upsampled (and squashed for intrinsic).
nn::Tensor render_baseline(const ModelConfig& cfg, const Features& f, geometry::GridSpec out);

/// Per-pixel argmax over channels of a [c, H, W] map.
std::vector<int> argmax_labels(const nn::Tensor& logits);

/// Predicted reflectance at both endpoints of every pair.
std::pair<std::vector<double>, std::vector<double>> predict_pairs(const ModelConfig& cfg, nn::ParamSet& params,
                                                                   const Features& f,
                                                                   std::span<const supervision::ComparisonPair> pairs,
                                                                   bool baseline);

}  // namespace dpf::trainer
