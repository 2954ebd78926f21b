// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include <json.hpp>

#include "dpf/annotations.hpp"
#include "dpf/checkpoint.hpp"
#include "dpf/experiments.hpp"
#include "dpf/field.hpp"
#include "dpf/netpbm.hpp"
#include "dpf/rng.hpp"
#include "dpf/supervision.hpp"
#include "dpf/trainer.hpp"

using namespace dpf;
using namespace dpf::trainer;
using json = nlohmann::json;
namespace fs = std::filesystem;
using geometry::GridSpec;
using geometry::NormCoord;
using nn::Shape;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

const fs::path kWork = fs::current_path() / "acceptance_work";

int run_cli(const std::string& args, const std::string& log) {
  const std::string cmd = std::string(DPF_CLI_PATH) + " " + args + " > " + (kWork / log).string() + " 2>&1";
  const int rc = std::system(cmd.c_str());
  return rc == -1 ? -1 : WEXITSTATUS(rc);
}

void write_json(const fs::path& p, const json& j) { std::ofstream(p) << j.dump(1) << "\n"; }

nn::Tensor random_map(std::size_t c, std::size_t h, std::size_t w, Rng& rng) {
  nn::Tensor t(Shape{c, h, w});
  for (auto& v : t.data()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return t;
}

// ---- 1 ---------------------------------------------------------------------

Outcome gradient_correctness() {
  const auto t0 = Clock::now();
  const int rc = run_cli("gradcheck", "gradcheck.txt");
  const double secs = seconds_since(t0);
  std::string detail = fmt("cli exit %d in %.1fs;", rc, secs);
  bool ok = rc == 0 && secs < 60.0;
  for (Task t : {Task::parsing, Task::intrinsic}) {
    const auto row = run_gradcheck(t);
    detail += fmt(" %s worst rel %.2e (%s)", io::task_name(t), row.result.max_rel_error, row.result.worst_param.c_str());
    ok = ok && row.passed && row.result.max_rel_error <= 1e-3;
  }
  return {ok, detail};
}

// ---- 2 ---------------------------------------------------------------------

Outcome weight_simplex() {
  Rng rng(2024);
  std::size_t queries = 0, bad_sum = 0, bad_sign = 0, bad_hull = 0;
  double worst_sum = 0;
  for (int model = 0; model < 10; ++model) {
    field::FieldConfig cfg;
    cfg.latent_dim = 4;
    cfg.guidance_dim = 3;
    cfg.value_dim = 3;
    cfg.hidden = {16, 16};
    nn::ParamSet ps;
    field::init_field(cfg, 500 + static_cast<std::uint64_t>(model), ps);
    for (auto& p : ps)
      for (auto& v : p.value.data()) v *= static_cast<float>(1.0 + model * 0.5);
    const auto z = random_map(4, 6, 7, rng);
    const auto g = random_map(3, 12, 14, rng);
    const auto V = random_map(3, 6, 7, rng);
    std::vector<NormCoord> coords;
    for (int i = 0; i < 100; ++i) coords.push_back({rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)});
    const auto plan = field::plan_queries(coords, {6, 7}, GridSpec{12, 14}, cfg.pe);
    nn::Tape<float> tape;
    const auto out =
        field::query(cfg, ps, field::Latents<float>{tape.constant(z), tape.constant(g), tape.constant(V)}, plan);
    for (std::size_t q = 0; q < coords.size(); ++q, ++queries) {
      double s = 0;
      for (std::size_t k = 0; k < 4; ++k) {
        bad_sign += out.weights.at(q, k) < 0.0f;
        s += out.weights.at(q, k);
      }
      worst_sum = std::max(worst_sum, std::abs(s - 1.0));
      bad_sum += std::abs(s - 1.0) > 1e-5;
      for (std::size_t ch = 0; ch < 3; ++ch) {
        float lo = 1e30f, hi = -1e30f;
        for (std::size_t k = 0; k < 4; ++k) {
          lo = std::min(lo, out.neighbor_values.at(q, k, ch));
          hi = std::max(hi, out.neighbor_values.at(q, k, ch));
        }
        const float v = out.values.value().at(q, ch);
        bad_hull += v < lo - 1e-5f || v > hi + 1e-5f;
      }
    }
  }
  return {queries == 1000 && bad_sum == 0 && bad_sign == 0 && bad_hull == 0,
          fmt("%zu queries; negative %zu, sum off %zu (worst %.1e), outside hull %zu", queries, bad_sign, bad_sum,
              worst_sum, bad_hull)};
}

// ---- 3 ---------------------------------------------------------------------

// Brute-force bilinear upsampling with pixel-center alignment and edge clamping.
nn::Tensor ref_upsample(const nn::Tensor& m, int oh, int ow) {
  const int h = static_cast<int>(m.dim(1)), w = static_cast<int>(m.dim(2));
  nn::Tensor out(Shape{m.dim(0), static_cast<std::size_t>(oh), static_cast<std::size_t>(ow)});
  for (std::size_t ch = 0; ch < m.dim(0); ++ch)
    for (int r = 0; r < oh; ++r)
      for (int c = 0; c < ow; ++c) {
        const double py = (r + 0.5) * h / oh - 0.5, px = (c + 0.5) * w / ow - 0.5;
        const int r0 = static_cast<int>(std::floor(py)), c0 = static_cast<int>(std::floor(px));
        const double ty = py - r0, tx = px - c0;
        auto at = [&](int y, int x) {
          return static_cast<double>(m.at(ch, std::clamp(y, 0, h - 1), std::clamp(x, 0, w - 1)));
        };
        out.at(ch, r, c) = static_cast<float>((1 - ty) * ((1 - tx) * at(r0, c0) + tx * at(r0, c0 + 1)) +
                                              ty * ((1 - tx) * at(r0 + 1, c0) + tx * at(r0 + 1, c0 + 1)));
      }
  return out;
}

Outcome bilinear_oracle() {
  field::FieldConfig cfg;
  cfg.latent_dim = 1;
  cfg.value_dim = 3;
  cfg.mode = field::WeightMode::distance;
  nn::ParamSet empty;
  Rng rng(33);
  double worst = 0;
  for (int inst = 0; inst < 100; ++inst) {
    const auto V = random_map(3, 8, 8, rng);
    const nn::Tensor z(Shape{1, 8, 8});
    const auto img = field::render(cfg, empty, z, nullptr, V, {32, 32});
    const auto ref = ref_upsample(V, 32, 32);
    for (std::size_t i = 0; i < img.numel(); ++i) worst = std::max(worst, std::abs(double(img[i]) - double(ref[i])));
  }
  return {worst <= 1e-5, fmt("100 instances 8x8 -> 32x32, max abs error %.2e", worst)};
}

// ---- 4 ---------------------------------------------------------------------

using supervision::Relation;

Relation ref_classify(double r1, double r2) {
  if (r2 / r1 > 1.1) return Relation::darker1;
  if (r1 / r2 > 1.1) return Relation::darker2;
  return Relation::equal;
}

bool ref_satisfied(double ratio, Relation j) {
  const double wide = 1.0 + 0.12 + 0.08, narrow = 1.0 + 0.12 - 0.08;
  switch (j) {
    case Relation::darker1: return ratio <= 1.0 / wide;
    case Relation::darker2: return ratio >= wide;
    case Relation::equal: return ratio >= 1.0 / narrow && ratio <= narrow;
  }
  return false;
}

Outcome whdr_oracle() {
  Rng rng(44);
  const std::size_t n = 10000;
  std::vector<supervision::ComparisonPair> pairs(n);
  std::vector<double> r1(n), r2(n);
  std::size_t class_mismatch = 0, boundary = 0;
  double wrong = 0, total = 0;
  for (std::size_t k = 0; k < n; ++k) {
    pairs[k].relation = static_cast<Relation>(rng.below(3));
    pairs[k].weight = rng.uniform(0.0, 2.0);
    r1[k] = rng.uniform(0.01, 1.0);
    r2[k] = rng.uniform(0.01, 1.0);
    if (k % 10 == 0) {
      r2[k] = r1[k] * 1.1;
      ++boundary;
    } else if (k % 10 == 1) {
      r1[k] = r2[k] * 1.1;
      ++boundary;
    }
    const Relation ref = ref_classify(r1[k], r2[k]);
    class_mismatch += supervision::classify_pair(r1[k], r2[k]) != ref;
    total += pairs[k].weight;
    if (ref != pairs[k].relation) wrong += pairs[k].weight;
  }
  const double got = supervision::whdr(pairs, r1, r2).whdr;

  std::size_t hinge_mismatch = 0;
  for (Relation j : {Relation::darker1, Relation::darker2, Relation::equal})
    for (int a = 0; a < 200; ++a)
      for (int b = 0; b < 200; ++b) {
        const double x1 = 0.05 + 0.005 * a, x2 = 0.05 + 0.005 * b;
        const double l = supervision::hinge_pair_loss(x1, x2, j);
        hinge_mismatch += l < 0.0 || (l == 0.0) != ref_satisfied(x1 / x2, j);
      }
  return {class_mismatch == 0 && got == wrong / total && hinge_mismatch == 0,
          fmt("10000 tuples (%zu at ratio 1.1): classify mismatches %zu, whdr %.6f vs %.6f; hinge grid mismatches %zu",
              boundary, class_mismatch, got, wrong / total, hinge_mismatch)};
}

// ---- 5 ---------------------------------------------------------------------

Outcome split_rule() {
  std::vector<std::int64_t> ten(10), big(5230);
  for (int i = 0; i < 10; ++i) ten[i] = i + 1;
  for (int i = 0; i < 5230; ++i) big[i] = i + 1;
  const auto a = io::split_every_fifth(ten);
  const auto b = io::split_every_fifth(big);
  const bool ok = a.test == std::vector<std::int64_t>{1, 6} && a.train.size() == 8 && b.test.size() == 1046 &&
                  b.train.size() == 4184;
  return {ok, fmt("1..10 test size %zu, 5230 ids test size %zu", a.test.size(), b.test.size())};
}

// ---- 6 ---------------------------------------------------------------------

json base_config(const char* task, double lr) {
  json j{{"task", task},          {"backbone_widths", {8, 16, 16}}, {"downsample", 2},
         {"guidance_blocks", 3},  {"guidance_width", 8},            {"mlp_hidden", {32, 32}},
         {"base_lr", lr},         {"max_epochs", 8},                {"seed", 1},
         {"synth_count", 250},    {"synth_resolution", 32},         {"synth_guidance_resolution", 64},
         {"synth_gt_resolution", 64}};
  if (std::string(task) == "parsing") j["classes"] = 4;
  return j;
}

EvalReport train_eval(TrainConfig cfg, const io::Dataset& data, std::uint64_t seed) {
  cfg.seed = seed;
  cfg.eval_every = 0;
  const auto test = io::split_dataset(data).second;
  auto r = train(cfg, data, {false, {}});
  return evaluate(cfg.model, r.params, test);
}

Outcome ablation_directions() {
  const auto t0 = Clock::now();
  std::string detail;
  bool ok = true;

  // intrinsic: full < w/o guide, both < constant
  {
    const auto full = parse_train_config(base_config("intrinsic", 0.003));
    auto noguide = full;
    noguide.model.use_guidance = false;
    const auto data = load_training_data(full);
    int order_ok = 0, const_ok = 0;
    double mf = 0, mg = 0, mc = 0;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      const auto a = train_eval(full, data, seed), b = train_eval(noguide, data, seed);
      order_ok += a.field < b.field;
      const_ok += a.field < *a.all_equal && b.field < *a.all_equal;
      mf += a.field / 3;
      mg += b.field / 3;
      mc += *a.all_equal / 3;
    }
    ok = ok && order_ok >= 2 && const_ok >= 2;
    detail += fmt("WHDR full %.4f, w/o guide %.4f, constant %.4f (order on %d/3, below constant on %d/3); ", mf, mg,
                  mc, order_ok, const_ok);
  }
  // parsing: full > w/o auxiliary
  {
    const auto full = parse_train_config(base_config("parsing", 0.01));
    auto noaux = full;
    noaux.lambda_aux = 0.0;
    const auto data = load_training_data(full);
    int order_ok = 0;
    double mf = 0, ma = 0;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      const auto a = train_eval(full, data, seed), b = train_eval(noaux, data, seed);
      order_ok += a.field > b.field;
      mf += a.field / 3;
      ma += b.field / 3;
    }
    ok = ok && order_ok >= 2;
    detail += fmt("mIoU full %.4f, w/o aux %.4f (order on %d/3); ", mf, ma, order_ok);
  }
  const double secs = seconds_since(t0);
  ok = ok && secs < 15 * 60;
  detail += fmt("%.0fs", secs);
  return {ok, detail};
}

// ---- 7 ---------------------------------------------------------------------

Outcome resolution_trend() {
  json j = base_config("parsing", 0.01);
  j.erase("synth_guidance_resolution");
  j.erase("synth_gt_resolution");
  j["synth_count"] = 125;
  j["trend_input_res"] = {32};
  j["trend_guidance_res"] = {32, 64, 128};
  j["trend_seeds"] = {1, 2, 3};
  j["trend_eval_res"] = 128;
  const auto table = run_trend(parse_train_config(j));
  std::string detail = "mean mIoU by guidance";
  bool ok = table.cells.size() == 3;
  for (std::size_t i = 0; i < table.cells.size(); ++i) {
    detail += fmt(" %d: %.4f", table.cells[i].guidance_res, table.cells[i].mean());
    if (i > 0) ok = ok && table.cells[i].mean() >= table.cells[i - 1].mean();
  }
  return {ok, detail};
}

// ---- 8 ---------------------------------------------------------------------

json tiny_cli_config(const fs::path& dir) {
  return json{{"task", "parsing"},         {"classes", 4},
              {"backbone_widths", {4, 8}}, {"downsample", 2},
              {"guidance_blocks", 1},      {"guidance_width", 4},
              {"mlp_hidden", {16}},        {"base_lr", 0.01},
              {"max_epochs", 3},           {"seed", 5},
              {"synth_count", 10},         {"synth_resolution", 16},
              {"synth_guidance_resolution", 32},
              {"crop", 8},                 {"eval_every", 1},
              {"checkpoint", (dir / "model.ckpt").string()},
              {"runlog", (dir / "runlog.json").string()}};
}

Outcome knots_and_resolution() {
  // distance mode at the backbone grid gives V back exactly
  ModelConfig mc = parse_train_config(tiny_cli_config(kWork)).model;
  mc.weight_mode = field::WeightMode::distance;
  auto params = init_model(mc, 8);
  Rng rng(8);
  const auto image = random_map(3, 16, 16, rng), guidance = random_map(3, 32, 32, rng);
  const auto f = encode_features(mc, params, image, guidance);
  const bool knots = render_field(mc, params, f, {8, 8}) == f.V;

  const fs::path dir = kWork / "render";
  fs::create_directories(dir);
  write_json(dir / "train.json", tiny_cli_config(dir));
  bool ok = knots && run_cli("train --config " + (dir / "train.json").string(), "render_train.txt") == 0 &&
            run_cli("synth --task parsing --out " + (dir / "data").string() + " --seed 9 --n 2 --resolution 16",
                    "render_synth.txt") == 0;
  std::string detail = fmt("knots exact: %s;", knots ? "yes" : "no");
  if (!ok) return {false, detail + " cli setup failed"};

  const auto manifest = json::parse(std::ifstream(dir / "data" / "manifest.json"));
  std::string stem = std::to_string(manifest["ids"][0].get<std::int64_t>());
  stem = std::string(6 - std::min<std::size_t>(6, stem.size()), '0') + stem;
  const auto guide_path = dir / "data" / (stem + "_guide.ppm");
  const auto guide = io::read_netpbm(guide_path);
  for (double scale : {0.5, 1.0, 4.0}) {
    const int h = static_cast<int>(guide.height * scale), w = static_cast<int>(guide.width * scale);
    const auto out = dir / fmt("render_%dx%d.pgm", h, w);
    const int rc = run_cli("render --checkpoint " + (dir / "model.ckpt").string() + " --image " +
                               (dir / "data" / (stem + ".ppm")).string() + " --guidance " + guide_path.string() +
                               " --out " + out.string() + " --res " + fmt("%dx%d", h, w),
                           "render.txt");
    bool cell = rc == 0;
    if (cell) {
      const auto img = io::read_netpbm(out, io::NetpbmFormat::pgm_p5);
      cell = img.width == w && img.height == h && img.channels == 1 &&
             img.pixels.size() == static_cast<std::size_t>(w * h) &&
             std::all_of(img.pixels.begin(), img.pixels.end(), [](std::uint8_t l) { return l < 4; });
    }
    detail += fmt(" %gx -> %dx%d %s;", scale, h, w, cell ? "ok" : "bad");
    ok = ok && cell;
  }
  return {ok, detail};
}

// ---- 9 ---------------------------------------------------------------------

Outcome determinism() {
  std::vector<std::vector<std::uint8_t>> ckpts, logs;
  for (const char* run : {"a", "b"}) {
    const fs::path dir = kWork / "determinism" / run;
    fs::create_directories(dir);
    write_json(dir / "train.json", tiny_cli_config(dir));
    if (run_cli("train --config " + (dir / "train.json").string(), std::string("train_") + run + ".txt") != 0)
      return {false, std::string("dpf train failed for run ") + run};
    ckpts.push_back(io::read_file(dir / "model.ckpt"));
    logs.push_back(io::read_file(dir / "runlog.json"));
  }
  const fs::path first = kWork / "determinism" / "a" / "model.ckpt";
  const bool same_ckpt = ckpts[0] == ckpts[1], same_log = logs[0] == logs[1];

  // checkpoint decode/encode and model reload/resave both reproduce the bytes
  const bool codec = io::encode_checkpoint(io::load_checkpoint(first)) == ckpts[0];
  const auto model = load_model(first);
  const fs::path again = kWork / "determinism" / "resaved.ckpt";
  save_model(again, model.config, model.params, model.seed);
  const bool resave = io::read_file(again) == ckpts[0];
  return {same_ckpt && same_log && codec && resave,
          fmt("checkpoints identical: %s (%zu bytes), runlogs identical: %s, round trip: %s/%s",
              same_ckpt ? "yes" : "no", ckpts[0].size(), same_log ? "yes" : "no", codec ? "yes" : "no",
              resave ? "yes" : "no")};
}

// ---- 10 --------------------------------------------------------------------

Outcome overfit() {
  const auto t0 = Clock::now();
  const json j{{"task", "parsing"},        {"classes", 4},        {"backbone_widths", {8, 16, 16}},
               {"downsample", 2},          {"guidance_blocks", 3}, {"guidance_width", 8},
               {"mlp_hidden", {32, 32}},   {"max_epochs", 200},    {"seed", 1},
               {"holdout", false},         {"hflip", false},       {"synth_count", 1},
               {"synth_resolution", 16},   {"synth_guidance_resolution", 32},
               {"synth_gt_resolution", 32}};
  const auto cfg = parse_train_config(j);  // preset learning rate
  auto data = load_training_data(cfg);
  auto& s = data.samples[0];
  // annotate every pixel of the one image
  s.annotations.points.clear();
  for (int r = 0; r < s.gt_grid.height; ++r)
    for (int c = 0; c < s.gt_grid.width; ++c)
      s.annotations.points.push_back({r, c, s.gt_labels[static_cast<std::size_t>(r * s.gt_grid.width + c)]});
  auto res = train(cfg, data, {false, {}});
  const auto rep = evaluate(cfg.model, res.params, {&s});
  const double secs = seconds_since(t0);
  return {rep.field >= 0.99 && secs < 120, fmt("mIoU %.4f after 200 epochs in %.1fs", rep.field, secs)};
}

}  // namespace

int main() {
  fs::remove_all(kWork);
  fs::create_directories(kWork);
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"gradient correctness", gradient_correctness},
      {"weight simplex", weight_simplex},
      {"bilinear oracle", bilinear_oracle},
      {"whdr and hinge oracle", whdr_oracle},
      {"split rule", split_rule},
      {"ablation directions", ablation_directions},
      {"guidance resolution trend", resolution_trend},
      {"knots and arbitrary resolution", knots_and_resolution},
      {"determinism", determinism},
      {"single-image overfit", overfit},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    const auto t0 = Clock::now();
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s  %2zu %-32s %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
