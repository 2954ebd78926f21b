#include "dpf/trainer.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

#include "dpf/checkpoint.hpp"
#include "dpf/netpbm.hpp"
#include "dpf/optim.hpp"

namespace dpf::trainer {

using nlohmann::json;
using geometry::GridSpec;
using nn::Shape;

json RunLog::to_json() const {
  json rows = json::array();
  for (const auto& e : epochs) {
    json r{{"epoch", e.epoch},
           {"lr", e.lr},
           {"field_loss", e.field_loss},
           {"aux_loss", e.aux_loss},
           {"total_loss", e.total_loss}};
    if (e.metric) r["metric"] = *e.metric;
    rows.push_back(std::move(r));
  }
  return json{{"epochs", rows}};
}

json EvalReport::to_json() const {
  json j{{"task", io::task_name(task)}, {"metric", metric_name()}, {"scenes", scenes}, {"field", field},
         {"baseline_v", baseline}};
  if (all_equal) j["all_equal"] = *all_equal;
  return j;
}

EvalReport evaluate(const ModelConfig& cfg, nn::ParamSet& params, const std::vector<const io::SceneSample*>& scenes) {
  require(!scenes.empty(), "evaluate: no scenes to evaluate");
  EvalReport rep;
  rep.task = cfg.task;
  rep.scenes = scenes.size();

  if (cfg.task == Task::parsing) {
    supervision::IouAccumulator field_acc(cfg.classes, io::kIgnoreLabel);
    supervision::IouAccumulator base_acc(cfg.classes, io::kIgnoreLabel);
    for (const auto* s : scenes) {
      std::vector<int> gt = s->gt_labels;
      if (gt.empty()) {
        // Sparse ground truth: score only the annotated points.
        gt.assign(static_cast<std::size_t>(s->gt_grid.height) * static_cast<std::size_t>(s->gt_grid.width),
                  io::kIgnoreLabel);
        for (const auto& p : s->annotations.points)
          gt[static_cast<std::size_t>(p.row) * static_cast<std::size_t>(s->gt_grid.width) +
             static_cast<std::size_t>(p.col)] = p.label;
      }
      const Features f = encode_features(cfg, params, s->image, s->guidance);
      field_acc.add(argmax_labels(render_field(cfg, params, f, s->gt_grid)), gt);
      base_acc.add(argmax_labels(render_baseline(cfg, f, s->gt_grid)), gt);
    }
    rep.field = field_acc.report().miou;
    rep.baseline = base_acc.report().miou;
    return rep;
  }

  std::vector<supervision::Relation> truth, pred_field, pred_base;
  std::vector<double> weights;
  for (const auto* s : scenes) {
    const auto& pairs = s->annotations.comparisons;
    if (pairs.empty()) continue;
    const Features f = encode_features(cfg, params, s->image, s->guidance);
    const auto [a, b] = predict_pairs(cfg, params, f, pairs, false);
    const auto [va, vb] = predict_pairs(cfg, params, f, pairs, true);
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      truth.push_back(pairs[k].relation);
      weights.push_back(pairs[k].weight);
      pred_field.push_back(supervision::classify_pair(a[k], b[k]));
      pred_base.push_back(supervision::classify_pair(va[k], vb[k]));
    }
  }
  require(!truth.empty(), "evaluate: test scenes carry no comparisons");
  rep.field = supervision::whdr(truth, weights, pred_field).whdr;
  rep.baseline = supervision::whdr(truth, weights, pred_base).whdr;
  const std::vector<supervision::Relation> eq(truth.size(), supervision::Relation::equal);
  rep.all_equal = supervision::whdr(truth, weights, eq).whdr;
  return rep;
}

namespace {

nn::Tensor flip_columns(const nn::Tensor& t) {
  nn::Tensor out(t.shape());
  const std::size_t c = t.dim(0), h = t.dim(1), w = t.dim(2);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t x = 0; x < w; ++x) out.at(ch, r, x) = t.at(ch, r, w - 1 - x);
  return out;
}

nn::Tensor crop_map(const nn::Tensor& t, std::size_t y0, std::size_t x0, std::size_t size) {
  nn::Tensor out(Shape{t.dim(0), size, size});
  for (std::size_t ch = 0; ch < t.dim(0); ++ch)
    for (std::size_t r = 0; r < size; ++r)
      for (std::size_t x = 0; x < size; ++x) out.at(ch, r, x) = t.at(ch, y0 + r, x0 + x);
  return out;
}

template <class V>
V flip_dense(const V& v, int h, int w) {
  if (v.empty()) return v;
  V out(v.size());
  for (int r = 0; r < h; ++r)
    for (int x = 0; x < w; ++x) out[static_cast<std::size_t>(r * w + x)] = v[static_cast<std::size_t>(r * w + w - 1 - x)];
  return out;
}

template <class V>
V crop_dense(const V& v, int w, int y0, int x0, int size) {
  if (v.empty()) return v;
  V out;
  out.reserve(static_cast<std::size_t>(size * size));
  for (int r = 0; r < size; ++r)
    for (int x = 0; x < size; ++x) out.push_back(v[static_cast<std::size_t>((y0 + r) * w + x0 + x)]);
  return out;
}

std::size_t integer_ratio(std::size_t big, std::size_t small, const char* what) {
  if (small == 0 || big % small != 0) {
    throw ContractError(std::string("augment: cropping needs the ") + what +
                        " resolution to be an integer multiple of the input");
  }
  return big / small;
}

}  // namespace

io::SceneSample augment(const io::SceneSample& scene, Rng& rng, bool hflip, int crop) {
  io::SceneSample out;
  out.id = scene.id;
  out.image = scene.image;
  out.guidance = scene.guidance;
  out.annotations = scene.annotations;
  out.gt_grid = scene.gt_grid;
  out.gt_labels = scene.gt_labels;
  out.gt_reflectance = scene.gt_reflectance;

  if (hflip && rng.coin(0.5)) {
    out.image = flip_columns(out.image);
    out.guidance = flip_columns(out.guidance);
    out.gt_labels = flip_dense(out.gt_labels, out.gt_grid.height, out.gt_grid.width);
    out.gt_reflectance = flip_dense(out.gt_reflectance, out.gt_grid.height, out.gt_grid.width);
    for (auto& p : out.annotations.points) p.col = out.gt_grid.width - 1 - p.col;
    for (auto& c : out.annotations.comparisons) {
      c.x1 = 1.0 - c.x1;
      c.x2 = 1.0 - c.x2;
    }
  }
  if (crop <= 0) return out;

  const std::size_t h = out.image.dim(1), w = out.image.dim(2), size = static_cast<std::size_t>(crop);
  require(size <= h && size <= w, "augment: crop " + std::to_string(crop) + " exceeds the image size");
  const std::size_t rg = integer_ratio(out.guidance.dim(2), w, "guidance");
  require(integer_ratio(out.guidance.dim(1), h, "guidance") == rg, "augment: guidance aspect differs from the input");
  const std::size_t rt = integer_ratio(static_cast<std::size_t>(out.gt_grid.width), w, "annotation");
  require(integer_ratio(static_cast<std::size_t>(out.gt_grid.height), h, "annotation") == rt,
          "augment: annotation aspect differs from the input");

  const std::size_t y0 = rng.below(h - size + 1);
  const std::size_t x0 = rng.below(w - size + 1);
  out.image = crop_map(out.image, y0, x0, size);
  out.guidance = crop_map(out.guidance, y0 * rg, x0 * rg, size * rg);
  const int gsize = static_cast<int>(size * rt);
  const int gy0 = static_cast<int>(y0 * rt), gx0 = static_cast<int>(x0 * rt);
  out.gt_labels = crop_dense(out.gt_labels, out.gt_grid.width, gy0, gx0, gsize);
  out.gt_reflectance = crop_dense(out.gt_reflectance, out.gt_grid.width, gy0, gx0, gsize);
  out.gt_grid = GridSpec(gsize, gsize);

  std::vector<supervision::PointLabel> pts;
  for (auto p : out.annotations.points) {
    p.row -= gy0;
    p.col -= gx0;
    if (p.row >= 0 && p.row < gsize && p.col >= 0 && p.col < gsize) pts.push_back(p);
  }
  out.annotations.points = std::move(pts);

  const auto remap = [&](double u, std::size_t n, std::size_t o) {
    return (u * static_cast<double>(n) - static_cast<double>(o)) / static_cast<double>(size);
  };
  const auto inside = [](double u) { return u >= 0.0 && u <= 1.0; };
  std::vector<supervision::ComparisonPair> pairs;
  for (auto c : out.annotations.comparisons) {
    c.x1 = remap(c.x1, w, x0);
    c.x2 = remap(c.x2, w, x0);
    c.y1 = remap(c.y1, h, y0);
    c.y2 = remap(c.y2, h, y0);
    if (inside(c.x1) && inside(c.x2) && inside(c.y1) && inside(c.y2)) pairs.push_back(c);
  }
  out.annotations.comparisons = std::move(pairs);
  return out;
}

io::Dataset load_training_data(const TrainConfig& cfg) {
  io::Dataset ds = cfg.synth ? io::gen_synthetic_dataset(*cfg.synth, cfg.synth_count) : io::load_dataset(cfg.data_dir);
  require(ds.task == cfg.model.task, "train: dataset task differs from the configured task");
  require(ds.task != Task::parsing || ds.classes <= cfg.model.classes,
          "train: dataset has more classes than the model predicts");
  return ds;
}

void save_model(const std::filesystem::path& path, const ModelConfig& cfg, const nn::ParamSet& params,
                std::uint64_t seed) {
  const std::uint64_t digest = cfg.digest();
  const json side{{"digest", digest}, {"seed", seed}, {"model", cfg.to_json()}};
  const std::string text = side.dump(2) + "\n";
  io::save_checkpoint(path, io::checkpoint_from_params(params, digest, seed));
  io::write_file_atomic(sidecar_path(path),
                        std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

LoadedModel load_model(const std::filesystem::path& path) {
  const auto side_path = sidecar_path(path);
  const auto bytes = io::read_file(side_path);
  json side;
  try {
    side = json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    throw ParseError(side_path.string() + ": invalid JSON: " + e.what(), e.byte);
  }
  require(side.is_object() && side.contains("model"), side_path.string() + ": missing 'model'");
  LoadedModel m;
  m.config = ModelConfig::from_json(side["model"]);
  const auto ckpt = io::load_checkpoint(path, m.config.digest());
  m.seed = ckpt.seed;
  m.params = init_model(m.config, ckpt.seed);
  io::load_params(ckpt, m.params);
  return m;
}

TrainResult train(const TrainConfig& cfg, const io::Dataset& data, const TrainOptions& opts) {
  cfg.validate();
  auto [train_set, test_set] = io::split_dataset(data);
  if (!cfg.holdout) {
    train_set.clear();
    for (const auto& s : data.samples) train_set.push_back(&s);
    test_set = train_set;
  }
  require(!train_set.empty(), "train: the train split is empty");

  TrainResult res;
  res.train_scenes = train_set.size();
  res.test_scenes = test_set.size();
  res.params = init_model(cfg.model, cfg.seed);
  nn::OptimState optim(cfg.momentum, cfg.weight_decay);
  Rng order = Rng::substream(cfg.seed, "train/order");
  Rng aug = Rng::substream(cfg.seed, "train/augment");
  const auto batch = static_cast<std::size_t>(cfg.batch_size);

  std::vector<std::size_t> perm(train_set.size());
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = nn::poly_lr(cfg.base_lr, epoch, cfg.max_epochs, cfg.power);

    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[order.below(i)]);

    std::size_t counted = 0;
    for (std::size_t b0 = 0; b0 < perm.size(); b0 += batch) {
      const std::size_t b1 = std::min(perm.size(), b0 + batch);
      res.params.zero_grad();
      for (std::size_t k = b0; k < b1; ++k) {
        const io::SceneSample& src = *train_set[perm[k]];
        const io::SceneSample scene = augment(src, aug, cfg.hflip, cfg.crop);
        nn::Tape<float> tape;
        const auto terms = scene_loss(cfg.model, res.params, tape, scene, cfg.lambda_aux, cfg.hinge);
        if (!terms) continue;
        const double total = terms->total.value()[0];
        if (!std::isfinite(total)) {
          throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) + ", scene " +
                             std::to_string(src.id));
        }
        rec.field_loss += terms->field.value()[0];
        rec.aux_loss += terms->aux.value()[0];
        rec.total_loss += total;
        ++counted;
        tape.backward(nn::scale(terms->total, 1.0f / static_cast<float>(b1 - b0)));
      }
      nn::sgd_step(res.params, optim, rec.lr);
    }
    if (counted > 0) {
      rec.field_loss /= static_cast<double>(counted);
      rec.aux_loss /= static_cast<double>(counted);
      rec.total_loss /= static_cast<double>(counted);
    }
    const bool last = epoch + 1 == cfg.max_epochs;
    if (cfg.eval_every > 0 && !test_set.empty() && ((epoch + 1) % cfg.eval_every == 0 || last)) {
      rec.metric = evaluate(cfg.model, res.params, test_set).field;
    }
    if (opts.write_outputs && cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 && !last) {
      save_model(cfg.checkpoint_path, cfg.model, res.params, cfg.seed);
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    res.log.epochs.push_back(rec);
    if (opts.on_epoch) opts.on_epoch(rec);
  }

  if (opts.write_outputs) {
    save_model(cfg.checkpoint_path, cfg.model, res.params, cfg.seed);
    const std::string text = res.log.to_json().dump(2) + "\n";
    io::write_file_atomic(cfg.runlog_path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  }
  return res;
}

}  // namespace dpf::trainer
