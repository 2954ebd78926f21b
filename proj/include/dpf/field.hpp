#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dpf/geometry.hpp"
#include "dpf/mlp.hpp"

namespace dpf::field {

enum class WeightMode { learned, distance };

inline const std::string kMlpPrefix = "field.mlp";

struct FieldConfig {
  int latent_dim = 64;    // d_z
  int guidance_dim = 16;  // d_g, 0 when the guidance encoder is disabled
  int value_dim = 1;      // c
  geometry::PosEncodingConfig pe{};
  std::vector<int> hidden{256, 256};
  WeightMode mode = WeightMode::learned;
  bool squash_reflectance = false;

  /// Input: [z_i | g_i | pos_encode(delta)]; output: [weight logit | c values].
  nn::MlpConfig mlp() const;
};

/// Feature maps a field reads from. V is only consulted in distance mode.
template <class T>
struct Latents {
  nn::Var<T> z;                 // [d_z, Hb, Wb]
  std::optional<nn::Var<T>> g;  // [d_g, Hg, Wg]
  nn::Var<T> V;                 // [c, Hb, Wb]
};

/// Index math for a batch of queries, independent of any parameter values.
struct QueryPlan {
  std::vector<geometry::NeighborSet> neighbors;
  nn::TapTable z_taps;                 // Q*4 rows, one tap each
  nn::TapTable g_taps;                 // Q*4 rows, bilinear taps on the guidance grid
  nn::TapTable v_taps;                 // Q rows, bilinear taps of the query on the latent grid
  nn::BasicTensor<double> encodings;   // [Q*4, 4(l+1)]

  std::size_t size() const noexcept { return neighbors.size(); }
};

QueryPlan plan_queries(std::span<const geometry::NormCoord> coords, geometry::GridSpec latent,
                       std::optional<geometry::GridSpec> guidance, geometry::PosEncodingConfig pe);

template <class T>
struct FieldOutput {
  nn::Var<T> values;                     // [Q, c], squashed when configured
  nn::Var<T> raw_values;                 // [Q, c] before squashing
  nn::BasicTensor<T> weights;            // [Q, 4]
  nn::BasicTensor<T> neighbor_values;    // [Q, 4, c]
};

template <class T>
FieldOutput<T> query(const FieldConfig& cfg, nn::BasicParamSet<T>& params, const Latents<T>& latents,
                     const QueryPlan& plan);

/// z_i read at each neighbor index; g_i bilinearly sampled at the neighbor's
/// normalized center. Returns [4, d_z + d_g].
nn::Tensor gather_codes(const nn::Tensor& z, const nn::Tensor* g, const geometry::NeighborSet& nb);

/// One query per output pixel center; returns [c, H_out, W_out].
nn::Tensor render(const FieldConfig& cfg, nn::ParamSet& params, const nn::Tensor& z, const nn::Tensor* g,
                  const nn::Tensor& V, geometry::GridSpec out, std::size_t chunk = 4096);

struct WeightInspection {
  std::array<double, 4> weights{};
  std::array<geometry::PixelIndex, 4> indices{};
};

WeightInspection inspect_weights(const FieldConfig& cfg, nn::ParamSet& params, const nn::Tensor& z,
                                 const nn::Tensor* g, const nn::Tensor& V, geometry::NormCoord x);

/// Adds the interpolation MLP's parameters.
void init_field(const FieldConfig& cfg, std::uint64_t seed, nn::ParamSet& params);

}  // namespace dpf::field
