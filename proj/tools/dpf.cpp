// dpf: train, evaluate and render dense prediction fields.
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "dpf/experiments.hpp"
#include "dpf/netpbm.hpp"

namespace {

using namespace dpf;
using trainer::Task;

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const IoError*>(&e)) return 2;
  return 1;
}

geometry::GridSpec parse_res(const std::string& s) {
  const auto x = s.find('x');
  if (x == std::string::npos) throw ContractError("--res must look like HxW, got '" + s + "'");
  try {
    std::size_t a = 0, b = 0;
    const int h = std::stoi(s.substr(0, x), &a);
    const int w = std::stoi(s.substr(x + 1), &b);
    if (a != x || b != s.size() - x - 1) throw std::invalid_argument(s);
    return {h, w};
  } catch (const std::logic_error&) {
    throw ContractError("--res must look like HxW, got '" + s + "'");
  }
}

void write_text(const std::string& path, const std::string& text) {
  io::write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void print_report(const trainer::EvalReport& r) {
  std::printf("%-10s %-6s %zu scenes\n", io::task_name(r.task), r.metric_name(), r.scenes);
  std::printf("  %-12s %.4f\n", "dpf", r.field);
  std::printf("  %-12s %.4f\n", "baseline_v", r.baseline);
  if (r.all_equal) std::printf("  %-12s %.4f\n", "all_equal", *r.all_equal);
}

int cmd_train(const std::string& config_path) {
  const auto cfg = trainer::load_train_config(config_path);
  const auto data = trainer::load_training_data(cfg);
  trainer::TrainOptions opts;
  opts.on_epoch = [](const trainer::EpochRecord& e) {
    std::printf("epoch %3d  lr %.6f  field %.5f  aux %.5f  total %.5f", e.epoch, e.lr, e.field_loss, e.aux_loss,
                e.total_loss);
    if (e.metric) std::printf("  metric %.4f", *e.metric);
    std::printf("  (%.2fs)\n", e.seconds);
    std::fflush(stdout);
  };
  auto res = trainer::train(cfg, data, opts);
  std::printf("checkpoint %s\nrunlog %s\n", cfg.checkpoint_path.c_str(), cfg.runlog_path.c_str());
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data_dir, bool all, const std::string& json_out) {
  auto model = trainer::load_model(ckpt);
  const auto data = io::load_dataset(data_dir);
  if (data.task != model.config.task) {
    throw ContractError(std::string("eval: checkpoint task '") + io::task_name(model.config.task) +
                        "' differs from dataset task '" + io::task_name(data.task) + "'");
  }
  if (data.task == Task::parsing && data.classes > model.config.classes)
    throw ContractError("eval: dataset has more classes than the checkpoint predicts");
  std::vector<const io::SceneSample*> scenes;
  if (all) {
    for (const auto& s : data.samples) scenes.push_back(&s);
  } else {
    scenes = io::split_dataset(data).second;
  }
  const auto rep = trainer::evaluate(model.config, model.params, scenes);
  print_report(rep);
  if (!json_out.empty()) write_text(json_out, rep.to_json().dump(2) + "\n");
  return 0;
}

int cmd_render(const std::string& ckpt, const std::string& image, const std::string& guidance,
               const std::string& out, const std::string& res) {
  auto model = trainer::load_model(ckpt);
  const auto img = io::load_image(image, io::NetpbmFormat::ppm_p6);
  const auto guide = io::load_image(guidance, io::NetpbmFormat::ppm_p6);
  const geometry::GridSpec grid =
      res.empty() ? geometry::GridSpec(static_cast<int>(guide.dim(1)), static_cast<int>(guide.dim(2))) : parse_res(res);
  const auto feats = trainer::encode_features(model.config, model.params, img, guide);
  const auto map = trainer::render_field(model.config, model.params, feats, grid);
  io::RawImage raw;
  raw.width = grid.width;
  raw.height = grid.height;
  raw.channels = 1;
  if (model.config.task == Task::parsing) {
    for (int label : trainer::argmax_labels(map)) raw.pixels.push_back(static_cast<std::uint8_t>(label));
  } else {
    for (std::size_t i = 0; i < map.numel(); ++i) {
      const double v = std::clamp(static_cast<double>(map[i]), 0.0, 1.0) * 255.0;
      raw.pixels.push_back(static_cast<std::uint8_t>(std::lround(v)));
    }
  }
  io::write_netpbm(out, raw);
  std::printf("wrote %s (%dx%d)\n", out.c_str(), grid.height, grid.width);
  return 0;
}

int cmd_gradcheck(const std::string& task, std::uint64_t seed, std::size_t probes, double fault) {
  std::vector<trainer::GradcheckRow> rows;
  for (Task t : {Task::parsing, Task::intrinsic}) {
    if (task.empty() || io::parse_task(task) == t) rows.push_back(trainer::run_gradcheck(t, seed, probes, fault));
  }
  std::fputs(trainer::format_gradcheck(rows).c_str(), stdout);
  bool ok = true;
  for (const auto& r : rows) {
    if (!r.passed) {
      ok = false;
      std::fprintf(stderr, "gradcheck %s failed: worst parameter %s[%zu] (analytic %.6e, numeric %.6e)\n",
                   io::task_name(r.task), r.result.worst_param.c_str(), r.result.worst_index, r.result.worst_analytic,
                   r.result.worst_numeric);
    }
  }
  return ok ? 0 : 1;
}

int cmd_synth(const std::string& task, const std::string& out, std::uint64_t seed, int n, int res, int guide_res,
              int gt_res) {
  io::SyntheticConfig cfg;
  cfg.task = io::parse_task(task);
  cfg.seed = seed;
  cfg.resolution = res;
  cfg.guidance_resolution = guide_res > 0 ? guide_res : 2 * res;
  cfg.gt_resolution = gt_res > 0 ? gt_res : cfg.guidance_resolution;
  const auto ds = io::gen_synthetic_dataset(cfg, n);
  io::write_dataset(out, ds);
  std::printf("wrote %d %s scenes to %s\n", n, task.c_str(), out.c_str());
  return 0;
}

int cmd_trend(const std::string& config_path, const std::string& json_out) {
  const auto cfg = trainer::load_train_config(config_path);
  const auto table = trainer::run_trend(cfg, [](const std::string& line) {
    std::printf("%s\n", line.c_str());
    std::fflush(stdout);
  });
  std::fputs(table.format().c_str(), stdout);
  if (!json_out.empty()) write_text(json_out, table.to_json().dump(2) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dense prediction fields: train, evaluate, render"};
  app.require_subcommand(1);

  std::string config, ckpt, data_dir, image, guidance, out, res, task, json_out;
  bool all = false;
  std::uint64_t seed = 7;
  std::size_t probes = 64;
  double fault = 1.0;
  int n = 20, synth_res = 32, synth_guide = 0, synth_gt = 0;

  auto* train = app.add_subcommand("train", "Train a model from a JSON config");
  train->add_option("--config", config, "Config file")->required();

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset's test split");
  eval->add_option("--checkpoint", ckpt)->required();
  eval->add_option("--data", data_dir)->required();
  eval->add_flag("--all", all, "Evaluate every scene instead of the test split");
  eval->add_option("--json", json_out, "Also write the report as JSON");

  auto* render = app.add_subcommand("render", "Render a prediction map at any resolution");
  render->add_option("--checkpoint", ckpt)->required();
  render->add_option("--image", image)->required();
  render->add_option("--guidance", guidance)->required();
  render->add_option("--out", out)->required();
  render->add_option("--res", res, "Output HxW (default: guidance resolution)");

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of the full loss");
  grad->add_option("--task", task)->check(CLI::IsMember({"parsing", "intrinsic"}));
  grad->add_option("--seed", seed);
  grad->add_option("--probes", probes);
  grad->add_option("--inject-fault", fault, "Scale applied to analytic gradients (test hook)");

  auto* synth = app.add_subcommand("synth", "Write a synthetic dataset");
  synth->add_option("--task", task)->required()->check(CLI::IsMember({"parsing", "intrinsic"}));
  synth->add_option("--out", out)->required();
  synth->add_option("--seed", seed)->required();
  synth->add_option("--n", n)->check(CLI::PositiveNumber);
  synth->add_option("--resolution", synth_res)->check(CLI::PositiveNumber);
  synth->add_option("--guidance-res", synth_guide);
  synth->add_option("--gt-res", synth_gt);

  auto* trend = app.add_subcommand("trend", "Train and evaluate over a resolution matrix");
  trend->add_option("--config", config)->required();
  trend->add_option("--json", json_out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*train) return cmd_train(config);
    if (*eval) return cmd_eval(ckpt, data_dir, all, json_out);
    if (*render) return cmd_render(ckpt, image, guidance, out, res);
    if (*grad) return cmd_gradcheck(task, seed, probes, fault);
    if (*synth) return cmd_synth(task, out, seed, n, synth_res, synth_guide, synth_gt);
    if (*trend) return cmd_trend(config, json_out);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "dpf: %s\n", e.what());
    return exit_code_for(e);
  }
  return 1;
}
