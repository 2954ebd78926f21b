#include "dpf/field.hpp"

#include <cmath>

#include "dpf/encoders.hpp"

namespace dpf::field {

using geometry::GridSpec;
using geometry::NormCoord;
using nn::Shape;

nn::MlpConfig FieldConfig::mlp() const {
  nn::MlpConfig m;
  m.input_dim = latent_dim + guidance_dim + pe.per_delta();
  m.hidden_dims = hidden;
  m.output_dim = value_dim + 1;
  return m;
}

namespace {

std::uint32_t flat_index(geometry::PixelIndex p, GridSpec grid) {
  return static_cast<std::uint32_t>(p.row * grid.width + p.col);
}

GridSpec grid_of(const Shape& s) {
  require(s.size() == 3, "field: feature maps must be [C, H, W], got " + nn::shape_str(s));
  return {static_cast<int>(s[1]), static_cast<int>(s[2])};
}

}  // namespace

QueryPlan plan_queries(std::span<const NormCoord> coords, GridSpec latent, std::optional<GridSpec> guidance,
                       geometry::PosEncodingConfig pe) {
  require(!coords.empty(), "plan_queries: query batch is empty");
  const std::size_t q = coords.size();
  const auto enc_width = static_cast<std::size_t>(pe.per_delta());
  QueryPlan plan;
  plan.neighbors.reserve(q);
  plan.z_taps = {q * 4, 1, {}, {}};
  plan.v_taps = {q, 4, {}, {}};
  plan.g_taps = {q * 4, 4, {}, {}};
  plan.encodings = nn::BasicTensor<double>(Shape{q * 4, enc_width});

  for (std::size_t i = 0; i < q; ++i) {
    const NormCoord x = coords[i];
    const geometry::NeighborSet nb = geometry::neighbors(x, latent);
    for (std::size_t k = 0; k < 4; ++k) {
      plan.z_taps.push(flat_index(nb.indices[k], latent), 1.0);
      geometry::pos_encode_into(nb.deltas[k], pe, std::span<double>(&plan.encodings.at(i * 4 + k, 0), enc_width));
      if (guidance) {
        const auto taps = geometry::bilinear_taps(geometry::pixel_center(nb.indices[k], latent), *guidance);
        for (std::size_t t = 0; t < 4; ++t) plan.g_taps.push(flat_index(taps.indices[t], *guidance), taps.weights[t]);
      }
    }
    const auto vt = geometry::bilinear_taps(x, latent);
    for (std::size_t t = 0; t < 4; ++t) plan.v_taps.push(flat_index(vt.indices[t], latent), vt.weights[t]);
    plan.neighbors.push_back(nb);
  }
  if (!guidance) plan.g_taps = {};
  return plan;
}

template <class T>
FieldOutput<T> query(const FieldConfig& cfg, nn::BasicParamSet<T>& params, const Latents<T>& latents,
                     const QueryPlan& plan) {
  const std::size_t q = plan.size();
  const auto c = static_cast<std::size_t>(cfg.value_dim);
  nn::Tape<T>& tape = *latents.z.tape;
  FieldOutput<T> out;

  if (cfg.mode == WeightMode::distance) {
    const auto& vs = latents.V.shape();
    require(vs.size() == 3 && vs[0] == c, "field::query: V must be [c, H, W] in distance mode");
    out.raw_values = nn::sample_taps(latents.V, plan.v_taps);
    out.weights = nn::BasicTensor<T>(Shape{q, 4});
    out.neighbor_values = nn::BasicTensor<T>(Shape{q, 4, c});
    const auto& vmap = latents.V.value();
    const std::size_t plane = vs[1] * vs[2];
    for (std::size_t i = 0; i < q; ++i)
      for (std::size_t k = 0; k < 4; ++k) {
        out.weights.at(i, k) = static_cast<T>(plan.v_taps.weight[i * 4 + k]);
        const std::size_t idx = plan.v_taps.index[i * 4 + k];
        for (std::size_t ch = 0; ch < c; ++ch) out.neighbor_values.at(i, k, ch) = vmap[ch * plane + idx];
      }
  } else {
    const auto& zs = latents.z.shape();
    require(zs.size() == 3 && zs[0] == static_cast<std::size_t>(cfg.latent_dim),
            "field::query: z channels do not match latent_dim");
    std::vector<nn::Var<T>> parts{nn::sample_taps(latents.z, plan.z_taps)};
    if (cfg.guidance_dim > 0) {
      require(latents.g.has_value() && !plan.g_taps.index.empty(), "field::query: guidance features required");
      require(latents.g->shape().at(0) == static_cast<std::size_t>(cfg.guidance_dim),
              "field::query: g channels do not match guidance_dim");
      parts.push_back(nn::sample_taps(*latents.g, plan.g_taps));
    }
    parts.push_back(tape.constant(plan.encodings.template cast<T>()));
    const nn::Var<T> mlp_out = nn::mlp_forward(cfg.mlp(), params, kMlpPrefix, nn::concat_cols(parts));
    if (!mlp_out.value().all_finite()) throw NumericError("field::query: non-finite MLP output");
    out.raw_values = nn::softmax_interpolate(mlp_out, 4);
    out.weights = nn::group_softmax_weights(mlp_out.value(), 4);
    out.neighbor_values = nn::BasicTensor<T>(Shape{q, 4, c});
    const auto& mv = mlp_out.value();
    for (std::size_t i = 0; i < q; ++i)
      for (std::size_t k = 0; k < 4; ++k)
        for (std::size_t ch = 0; ch < c; ++ch) out.neighbor_values.at(i, k, ch) = mv.at(i * 4 + k, 1 + ch);
  }
  out.values = cfg.squash_reflectance ? encoders::squash_reflectance(out.raw_values) : out.raw_values;
  return out;
}

nn::Tensor gather_codes(const nn::Tensor& z, const nn::Tensor* g, const geometry::NeighborSet& nb) {
  const GridSpec latent = grid_of(z.shape());
  nn::Tape<float> tape;
  nn::TapTable zt{4, 1, {}, {}};
  for (const auto& idx : nb.indices) {
    require(idx.row >= 0 && idx.row < latent.height && idx.col >= 0 && idx.col < latent.width,
            "gather_codes: neighbor index outside the latent grid");
    zt.push(flat_index(idx, latent), 1.0);
  }
  std::vector<nn::Var<float>> parts{nn::sample_taps(tape.constant(z), zt)};
  if (g != nullptr) {
    const GridSpec ggrid = grid_of(g->shape());
    nn::TapTable gt{4, 4, {}, {}};
    for (const auto& idx : nb.indices) {
      const auto taps = geometry::bilinear_taps(geometry::pixel_center(idx, latent), ggrid);
      for (std::size_t t = 0; t < 4; ++t) gt.push(flat_index(taps.indices[t], ggrid), taps.weights[t]);
    }
    parts.push_back(nn::sample_taps(tape.constant(*g), gt));
  }
  return nn::concat_cols(parts).value();
}

nn::Tensor render(const FieldConfig& cfg, nn::ParamSet& params, const nn::Tensor& z, const nn::Tensor* g,
                  const nn::Tensor& V, GridSpec out, std::size_t chunk) {
  require(chunk >= 1, "render: chunk must be positive");
  const GridSpec latent = grid_of(z.shape());
  const std::optional<GridSpec> ggrid = g ? std::optional<GridSpec>(grid_of(g->shape())) : std::nullopt;
  const auto c = static_cast<std::size_t>(cfg.value_dim);
  const std::size_t total = static_cast<std::size_t>(out.height) * static_cast<std::size_t>(out.width);
  nn::Tensor result(Shape{c, static_cast<std::size_t>(out.height), static_cast<std::size_t>(out.width)});

  std::vector<NormCoord> coords;
  for (std::size_t start = 0; start < total; start += chunk) {
    const std::size_t stop = std::min(total, start + chunk);
    coords.clear();
    for (std::size_t p = start; p < stop; ++p) {
      const auto row = static_cast<int>(p / static_cast<std::size_t>(out.width));
      const auto col = static_cast<int>(p % static_cast<std::size_t>(out.width));
      coords.push_back(geometry::pixel_center({row, col}, out));
    }
    const QueryPlan plan = plan_queries(coords, latent, cfg.guidance_dim > 0 ? ggrid : std::nullopt, cfg.pe);
    nn::Tape<float> tape;
    tape.set_grad_enabled(false);
    Latents<float> lat{tape.constant(z), std::nullopt, tape.constant(V)};
    if (g != nullptr && cfg.guidance_dim > 0) lat.g = tape.constant(*g);
    const auto& vals = query(cfg, params, lat, plan).values.value();
    for (std::size_t p = start; p < stop; ++p)
      for (std::size_t ch = 0; ch < c; ++ch) result[ch * total + p] = vals.at(p - start, ch);
  }
  return result;
}

WeightInspection inspect_weights(const FieldConfig& cfg, nn::ParamSet& params, const nn::Tensor& z,
                                 const nn::Tensor* g, const nn::Tensor& V, NormCoord x) {
  const GridSpec latent = grid_of(z.shape());
  const std::optional<GridSpec> ggrid =
      (g != nullptr && cfg.guidance_dim > 0) ? std::optional<GridSpec>(grid_of(g->shape())) : std::nullopt;
  const std::array<NormCoord, 1> coords{x};
  const QueryPlan plan = plan_queries(coords, latent, ggrid, cfg.pe);
  nn::Tape<float> tape;
  tape.set_grad_enabled(false);
  Latents<float> lat{tape.constant(z), std::nullopt, tape.constant(V)};
  if (ggrid) lat.g = tape.constant(*g);
  const FieldOutput<float> res = query(cfg, params, lat, plan);
  WeightInspection out;
  if (cfg.mode == WeightMode::distance) {
    const auto taps = geometry::bilinear_taps(x, latent);
    out.indices = taps.indices;
  } else {
    out.indices = plan.neighbors[0].indices;
  }
  for (std::size_t k = 0; k < 4; ++k) out.weights[k] = res.weights.at(0, k);
  return out;
}

void init_field(const FieldConfig& cfg, std::uint64_t seed, nn::ParamSet& params) {
  nn::init_mlp(cfg.mlp(), seed, kMlpPrefix, params);
}

template FieldOutput<float> query(const FieldConfig&, nn::BasicParamSet<float>&, const Latents<float>&,
                                  const QueryPlan&);
template FieldOutput<double> query(const FieldConfig&, nn::BasicParamSet<double>&, const Latents<double>&,
                                   const QueryPlan&);

}  // namespace dpf::field
