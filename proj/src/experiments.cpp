#include "dpf/experiments.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace dpf::trainer {

ModelConfig gradcheck_model(Task task) {
  ModelConfig m;
  m.task = task;
  m.classes = 3;
  m.backbone_widths = {4, 6};
  m.downsample = 4;
  m.guidance_blocks = 1;
  m.guidance_width = 4;
  m.mlp_hidden = {8};
  m.pe_levels = 9;
  return m;
}

io::SceneSample gradcheck_scene(Task task, std::uint64_t seed) {
  io::SyntheticConfig s;
  s.task = task;
  s.resolution = 8;
  s.guidance_resolution = 16;
  s.gt_resolution = 16;
  s.regions = 4;
  s.classes = 3;
  s.points = 6;
  s.pairs = 16;
  s.supersample = 1;
  s.seed = seed;
  return io::gen_synthetic(s, seed);
}

GradcheckRow run_gradcheck(Task task, std::uint64_t seed, std::size_t probes, double fault_scale) {
  const ModelConfig cfg = gradcheck_model(task);
  const io::SceneSample scene = gradcheck_scene(task, seed);
  auto params = init_model(cfg, seed).cast<double>();
  const nn::LossClosure<double> loss = [&](nn::Tape<double>& tape, nn::BasicParamSet<double>& p) {
    const auto terms = scene_loss(cfg, p, tape, scene, 1.0);
    require(terms.has_value(), "gradcheck: scene has no annotations");
    return terms->total;
  };
  nn::GradCheckOptions opts;
  opts.probes = probes;
  opts.seed = seed;
  opts.analytic_scale = fault_scale;
  GradcheckRow row;
  row.task = task;
  row.result = nn::grad_check(loss, params, opts);
  row.passed = row.result.max_rel_error <= kGradcheckThreshold;
  return row;
}

std::string format_gradcheck(const std::vector<GradcheckRow>& rows) {
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-10s %-6s %14s %7s %9s  %s\n", "task", "status", "max_rel_error", "probes",
                "resampled", "worst_param");
  os << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-10s %-6s %14.3e %7zu %9zu  %s[%zu]\n", io::task_name(r.task),
                  r.passed ? "PASS" : "FAIL", r.result.max_rel_error, r.result.probes, r.result.resamples,
                  r.result.worst_param.c_str(), r.result.worst_index);
    os << buf;
  }
  return os.str();
}

double TrendCell::mean() const {
  return metric.empty() ? 0.0 : std::accumulate(metric.begin(), metric.end(), 0.0) / static_cast<double>(metric.size());
}

double TrendCell::baseline_mean() const {
  return baseline.empty() ? 0.0
                          : std::accumulate(baseline.begin(), baseline.end(), 0.0) / static_cast<double>(baseline.size());
}

std::string TrendTable::format() const {
  const char* name = task == Task::parsing ? "mIoU" : "WHDR";
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-6s %-9s %-9s %-9s  per-seed\n", "input", "guidance", name, "baseline");
  os << buf;
  for (const auto& c : cells) {
    std::snprintf(buf, sizeof buf, "%-6d %-9d %-9.4f %-9.4f ", c.input_res, c.guidance_res, c.mean(),
                  c.baseline_mean());
    os << buf;
    for (std::size_t i = 0; i < c.metric.size(); ++i) {
      std::snprintf(buf, sizeof buf, " %llu:%.4f", static_cast<unsigned long long>(c.seeds[i]), c.metric[i]);
      os << buf;
    }
    os << '\n';
  }
  return os.str();
}

nlohmann::json TrendTable::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& c : cells) {
    rows.push_back({{"input_res", c.input_res},
                    {"guidance_res", c.guidance_res},
                    {"seeds", c.seeds},
                    {"metric", c.metric},
                    {"baseline", c.baseline},
                    {"mean", c.mean()}});
  }
  return {{"task", io::task_name(task)}, {"metric", task == Task::parsing ? "mIoU" : "WHDR"},
          {"eval_res", eval_res}, {"cells", rows}};
}

TrendTable run_trend(const TrainConfig& base, const std::function<void(const std::string&)>& progress) {
  require(base.synth.has_value(), "trend: needs an inline synthetic dataset (synth_* keys)");
  std::vector<int> inputs = base.trend_input_res.empty() ? std::vector<int>{base.synth->resolution} : base.trend_input_res;
  std::vector<int> guides =
      base.trend_guidance_res.empty() ? std::vector<int>{base.synth->guidance_resolution} : base.trend_guidance_res;
  const std::vector<std::uint64_t> seeds = base.trend_seeds.empty() ? std::vector<std::uint64_t>{base.seed}
                                                                     : base.trend_seeds;
  for (std::size_t i = 1; i < inputs.size(); ++i) require(inputs[i] > inputs[i - 1], "trend: input resolutions must ascend");
  for (std::size_t i = 1; i < guides.size(); ++i)
    require(guides[i] > guides[i - 1], "trend: guidance resolutions must ascend");

  TrendTable table;
  table.task = base.model.task;
  table.eval_res = base.trend_eval_res > 0 ? base.trend_eval_res : guides.back();
  for (int in : inputs) {
    for (int gr : guides) {
      TrendCell cell;
      cell.input_res = in;
      cell.guidance_res = gr;
      for (std::uint64_t seed : seeds) {
        TrainConfig cfg = base;
        cfg.synth->resolution = in;
        cfg.synth->guidance_resolution = gr;
        cfg.synth->gt_resolution = table.eval_res;
        cfg.seed = seed;
        cfg.crop = 0;
        cfg.eval_every = 0;
        const io::Dataset data = io::gen_synthetic_dataset(*cfg.synth, cfg.synth_count);
        TrainResult res = train(cfg, data, TrainOptions{false, {}});
        std::vector<const io::SceneSample*> te = io::split_dataset(data).second;
        if (!cfg.holdout) {
          te.clear();
          for (const auto& s : data.samples) te.push_back(&s);
        }
        const EvalReport rep = evaluate(cfg.model, res.params, te);
        cell.seeds.push_back(seed);
        cell.metric.push_back(rep.field);
        cell.baseline.push_back(rep.baseline);
        if (progress) {
          char buf[160];
          std::snprintf(buf, sizeof buf, "input %d guidance %d seed %llu: %s %.4f (baseline %.4f)", in, gr,
                        static_cast<unsigned long long>(seed), rep.metric_name(), rep.field, rep.baseline);
          progress(buf);
        }
      }
      table.cells.push_back(std::move(cell));
    }
  }
  return table;
}

}  // namespace dpf::trainer
