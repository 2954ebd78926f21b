#include "dpf/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "dpf/rng.hpp"

namespace dpf::nn {

namespace {

template <class T>
struct Evaluation {
  double loss;
  std::uint64_t signature;
};

template <class T>
Evaluation<T> evaluate(const LossClosure<T>& loss, BasicParamSet<T>& params) {
  Tape<T> tape;
  tape.set_branch_tracking(true);
  const Var<T> l = loss(tape, params);
  require(l.value().numel() == 1, "grad_check: loss closure must return a scalar");
  const double v = static_cast<double>(l.value()[0]);
  if (!std::isfinite(v)) throw NumericError("grad_check: loss is not finite");
  return {v, tape.branch_signature()};
}

}  // namespace

template <class T>
GradCheckResult grad_check(const LossClosure<T>& loss, BasicParamSet<T>& params, const GradCheckOptions& opts) {
  require(opts.probes >= 1, "grad_check: probe count must be >= 1");
  require(opts.eps > 0.0, "grad_check: eps must be positive");
  const std::size_t total = params.scalar_count();
  require(total >= 1, "grad_check: no parameters to probe");

  params.zero_grad();
  std::uint64_t base_signature = 0;
  {
    Tape<T> tape;
    tape.set_branch_tracking(true);
    const Var<T> l = loss(tape, params);
    if (!std::isfinite(static_cast<double>(l.value()[0]))) throw NumericError("grad_check: loss is not finite");
    base_signature = tape.branch_signature();
    tape.backward(l);
  }

  std::vector<BasicParameter<T>*> owners;
  std::vector<std::size_t> offsets;
  std::size_t acc = 0;
  for (auto& p : params) {
    owners.push_back(&p);
    offsets.push_back(acc);
    acc += p.value.numel();
  }

  Rng rng = Rng::substream(opts.seed, "grad_check");
  GradCheckResult result;
  while (result.probes < opts.probes) {
    const std::size_t flat = rng.below(total);
    const auto it = std::upper_bound(offsets.begin(), offsets.end(), flat);
    const std::size_t pi = static_cast<std::size_t>(it - offsets.begin()) - 1;
    BasicParameter<T>& p = *owners[pi];
    const std::size_t idx = flat - offsets[pi];

    const T original = p.value[idx];
    p.value[idx] = original + static_cast<T>(opts.eps);
    const T up = p.value[idx];
    const Evaluation<T> plus = evaluate(loss, params);
    p.value[idx] = original - static_cast<T>(opts.eps);
    const T down = p.value[idx];
    const Evaluation<T> minus = evaluate(loss, params);
    p.value[idx] = original;

    if (plus.signature != base_signature || minus.signature != base_signature) {
      if (++result.resamples > opts.max_resamples) {
        throw NumericError("grad_check: too many probes landed on non-differentiable kinks");
      }
      continue;
    }

    // The realized step (up - down) absorbs rounding of original +- eps.
    const double numeric = (plus.loss - minus.loss) / static_cast<double>(up - down);
    const double analytic = static_cast<double>(p.grad[idx]) * opts.analytic_scale;
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    const double rel = std::abs(analytic - numeric) / denom;
    if (rel > result.max_rel_error || result.probes == 0) {
      result.max_rel_error = std::max(rel, result.max_rel_error);
      if (rel >= result.max_rel_error) {
        result.worst_param = p.name;
        result.worst_index = idx;
        result.worst_analytic = analytic;
        result.worst_numeric = numeric;
      }
    }
    ++result.probes;
  }
  return result;
}

template GradCheckResult grad_check(const LossClosure<float>&, BasicParamSet<float>&, const GradCheckOptions&);
template GradCheckResult grad_check(const LossClosure<double>&, BasicParamSet<double>&, const GradCheckOptions&);

}  // namespace dpf::nn
