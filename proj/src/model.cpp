#include "dpf/model.hpp"

#include <algorithm>
#include <cmath>

#include "dpf/rng.hpp"

namespace dpf::trainer {

using geometry::GridSpec;
using geometry::NormCoord;
using nn::Shape;

nn::ParamSet init_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  nn::ParamSet params;
  encoders::init_encoders(cfg.encoder(), Rng::substream(seed, "init/encoders").next_u64(), params);
  field::init_field(cfg.field(), Rng::substream(seed, "init/field").next_u64(), params);
  return params;
}

template <class T>
Encoded<T> encode(const ModelConfig& cfg, nn::BasicParamSet<T>& params, nn::Tape<T>& tape,
                  const nn::BasicTensor<T>& image, const nn::BasicTensor<T>& guidance) {
  const auto enc = cfg.encoder();
  const auto bb = encoders::backbone_forward(enc, params, tape.constant(image));
  Encoded<T> out{bb.V, bb.z, std::nullopt};
  if (cfg.use_guidance && cfg.weight_mode == field::WeightMode::learned) {
    out.g = encoders::guidance_forward(enc, params, tape.constant(guidance));
  }
  return out;
}

namespace {

GridSpec grid_of(const Shape& s) { return {static_cast<int>(s.at(1)), static_cast<int>(s.at(2))}; }

int containing_pixel(double u, int n) {
  const int i = static_cast<int>(std::floor((u + 1.0) * 0.5 * n));
  return std::clamp(i, 0, n - 1);
}

nn::TapTable nearest_taps(std::span<const NormCoord> xs, GridSpec grid) {
  nn::TapTable t{xs.size(), 1, {}, {}};
  for (const auto& x : xs) {
    const int r = containing_pixel(x.y, grid.height);
    const int c = containing_pixel(x.x, grid.width);
    t.push(static_cast<std::uint32_t>(r * grid.width + c), 1.0);
  }
  return t;
}

nn::TapTable bilinear_table(std::span<const NormCoord> xs, GridSpec grid) {
  nn::TapTable t{xs.size(), 4, {}, {}};
  for (const auto& x : xs) {
    const auto taps = geometry::bilinear_taps(x, grid);
    for (std::size_t k = 0; k < 4; ++k)
      t.push(static_cast<std::uint32_t>(taps.indices[k].row * grid.width + taps.indices[k].col), taps.weights[k]);
  }
  return t;
}

template <class T>
field::FieldOutput<T> run_field(const ModelConfig& cfg, nn::BasicParamSet<T>& params, const Encoded<T>& e,
                                std::span<const NormCoord> xs) {
  const auto fc = cfg.field();
  const std::optional<GridSpec> ggrid = e.g ? std::optional<GridSpec>(grid_of(e.g->shape())) : std::nullopt;
  const auto plan = field::plan_queries(xs, grid_of(e.z.shape()), fc.guidance_dim > 0 ? ggrid : std::nullopt, fc.pe);
  return field::query(fc, params, field::Latents<T>{e.z, e.g, e.V}, plan);
}

}  // namespace

template <class T>
std::optional<LossTerms<T>> scene_loss(const ModelConfig& cfg, nn::BasicParamSet<T>& params, nn::Tape<T>& tape,
                                       const io::SceneSample& scene, double lambda_aux,
                                       supervision::HingeMargins margins) {
  const auto& ann = scene.annotations;
  if (cfg.task == Task::parsing ? ann.points.empty() : ann.comparisons.empty()) return std::nullopt;
  const Encoded<T> e = encode(cfg, params, tape, scene.image.template cast<T>(), scene.guidance.template cast<T>());
  const GridSpec latent = grid_of(e.z.shape());

  LossTerms<T> out;
  if (cfg.task == Task::parsing) {
    std::vector<NormCoord> xs;
    xs.reserve(ann.points.size());
    for (const auto& p : ann.points) {
      require(p.row >= 0 && p.row < scene.gt_grid.height && p.col >= 0 && p.col < scene.gt_grid.width,
              "scene_loss: point outside the annotation grid");
      xs.push_back(geometry::pixel_center({p.row, p.col}, scene.gt_grid));
    }
    out.field = supervision::point_ce_loss(run_field(cfg, params, e, xs).values, std::span(ann.points));
    out.aux = supervision::point_ce_loss(nn::sample_taps(e.V, nearest_taps(xs, latent)), std::span(ann.points));
  } else {
    std::vector<NormCoord> a, b;
    for (const auto& c : ann.comparisons) {
      a.push_back(c.p1());
      b.push_back(c.p2());
    }
    const auto pairs = std::span(ann.comparisons);
    out.field = supervision::pair_hinge_loss(run_field(cfg, params, e, a).values, run_field(cfg, params, e, b).values,
                                             pairs, margins);
    const auto va = encoders::squash_reflectance(nn::sample_taps(e.V, bilinear_table(a, latent)));
    const auto vb = encoders::squash_reflectance(nn::sample_taps(e.V, bilinear_table(b, latent)));
    out.aux = supervision::pair_hinge_loss(va, vb, pairs, margins);
  }
  out.total = supervision::total_loss(out.field, out.aux, lambda_aux);
  return out;
}

Features encode_features(const ModelConfig& cfg, nn::ParamSet& params, const nn::Tensor& image,
                         const nn::Tensor& guidance) {
  nn::Tape<float> tape;
  tape.set_grad_enabled(false);
  const auto e = encode(cfg, params, tape, image, guidance);
  Features f{e.V.value(), e.z.value(), std::nullopt};
  if (e.g) f.g = e.g->value();
  return f;
}

nn::Tensor render_field(const ModelConfig& cfg, nn::ParamSet& params, const Features& f, GridSpec out) {
  return field::render(cfg.field(), params, f.z, f.g ? &*f.g : nullptr, f.V, out);
}

nn::Tensor render_baseline(const ModelConfig& cfg, const Features& f, GridSpec out) {
  auto fc = cfg.field();
  fc.mode = field::WeightMode::distance;
  nn::ParamSet none;
  return field::render(fc, none, f.z, nullptr, f.V, out);
}

std::vector<int> argmax_labels(const nn::Tensor& logits) {
  require(logits.rank() == 3, "argmax_labels: expected [c, H, W]");
  const std::size_t c = logits.dim(0), plane = logits.dim(1) * logits.dim(2);
  std::vector<int> out(plane, 0);
  for (std::size_t p = 0; p < plane; ++p) {
    float best = logits[p];
    for (std::size_t ch = 1; ch < c; ++ch) {
      if (logits[ch * plane + p] > best) {
        best = logits[ch * plane + p];
        out[p] = static_cast<int>(ch);
      }
    }
  }
  return out;
}

std::pair<std::vector<double>, std::vector<double>> predict_pairs(const ModelConfig& cfg, nn::ParamSet& params,
                                                                   const Features& f,
                                                                   std::span<const supervision::ComparisonPair> pairs,
                                                                   bool baseline) {
  std::vector<double> r1, r2;
  if (pairs.empty()) return {r1, r2};
  std::vector<NormCoord> xs;
  for (const auto& c : pairs) xs.push_back(c.p1());
  for (const auto& c : pairs) xs.push_back(c.p2());

  auto fc = cfg.field();
  nn::ParamSet none;
  if (baseline) fc.mode = field::WeightMode::distance;
  const std::optional<GridSpec> ggrid = f.g ? std::optional<GridSpec>(grid_of(f.g->shape())) : std::nullopt;
  const auto plan = field::plan_queries(xs, grid_of(f.z.shape()), fc.guidance_dim > 0 ? ggrid : std::nullopt, fc.pe);
  nn::Tape<float> tape;
  tape.set_grad_enabled(false);
  field::Latents<float> lat{tape.constant(f.z), std::nullopt, tape.constant(f.V)};
  if (f.g && fc.guidance_dim > 0) lat.g = tape.constant(*f.g);
  const auto& vals = field::query(fc, baseline ? none : params, lat, plan).values.value();
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    r1.push_back(vals.at(k, 0));
    r2.push_back(vals.at(pairs.size() + k, 0));
  }
  return {r1, r2};
}

template Encoded<float> encode(const ModelConfig&, nn::BasicParamSet<float>&, nn::Tape<float>&,
                               const nn::BasicTensor<float>&, const nn::BasicTensor<float>&);
template Encoded<double> encode(const ModelConfig&, nn::BasicParamSet<double>&, nn::Tape<double>&,
                                const nn::BasicTensor<double>&, const nn::BasicTensor<double>&);
template std::optional<LossTerms<float>> scene_loss(const ModelConfig&, nn::BasicParamSet<float>&, nn::Tape<float>&,
                                                    const io::SceneSample&, double, supervision::HingeMargins);
template std::optional<LossTerms<double>> scene_loss(const ModelConfig&, nn::BasicParamSet<double>&,
                                                     nn::Tape<double>&, const io::SceneSample&, double,
                                                     supervision::HingeMargins);

}  // namespace dpf::trainer
