#include <doctest.h>

#include <cmath>
#include <numeric>

#include "dpf/gradcheck.hpp"
#include "dpf/mlp.hpp"
#include "dpf/optim.hpp"
#include "dpf/rng.hpp"

using namespace dpf;
using namespace dpf::nn;

namespace {

template <class T>
BasicTensor<T> random_tensor(Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  BasicTensor<T> t(std::move(s));
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

// Weighted sum with fixed random coefficients turns any output into a scalar loss.
template <class T>
Var<T> project(Var<T> y, std::uint64_t seed) {
  return sum(mul(y, y.tape->constant(random_tensor<T>(y.shape(), seed))));
}

double check(const LossClosure<double>& f, ParamSet& params, std::size_t probes = 48) {
  auto p = params.cast<double>();
  GradCheckOptions o;
  o.probes = probes;
  o.seed = 3;
  return grad_check(f, p, o).max_rel_error;
}

}  // namespace

TEST_CASE("tensor shape contract") {
  CHECK_THROWS_AS(Tensor(Shape{2, 0}), ContractError);
  CHECK_THROWS_AS(Tensor(Shape{2, 2}, std::vector<float>{1, 2, 3}), ContractError);
  Tensor t(Shape{2, 3}, 1.5f);
  CHECK(t.numel() == 6);
  CHECK(t.at(1, 2) == 1.5f);
  CHECK(t.all_finite());
  t[0] = std::nanf("");
  CHECK_FALSE(t.all_finite());
}

TEST_CASE("parameter names are unique") {
  ParamSet ps;
  ps.add("a", Tensor(Shape{1}));
  CHECK_THROWS_AS(ps.add("a", Tensor(Shape{1})), ContractError);
  CHECK_THROWS_AS(ps.get("b"), ContractError);
}

TEST_CASE("mlp with zero parameters outputs zeros") {
  MlpConfig cfg{5, {7, 3}, 2};
  ParamSet ps;
  init_mlp(cfg, 1, "m", ps);
  for (auto& p : ps) p.value.fill(0.0f);
  const Tensor out = mlp_forward(cfg, ps, "m", random_tensor<float>(Shape{4, 5}, 9));
  CHECK(out.shape() == Shape{4, 2});
  for (float v : out.data()) CHECK(v == 0.0f);
}

TEST_CASE("identity-weight mlp reproduces non-negative inputs") {
  MlpConfig cfg{3, {3}, 3};
  ParamSet ps;
  init_mlp(cfg, 1, "id", ps);
  for (auto& p : ps) {
    p.value.fill(0.0f);
    if (p.value.rank() == 2)
      for (std::size_t i = 0; i < 3; ++i) p.value.at(i, i) = 1.0f;
  }
  const Tensor x = random_tensor<float>(Shape{5, 3}, 4, 0.0, 2.0);
  CHECK(mlp_forward(cfg, ps, "id", x) == x);
}

TEST_CASE("mlp matches straight-line matrix arithmetic") {
  MlpConfig cfg{4, {8}, 3};
  ParamSet ps;
  init_mlp(cfg, 17, "r", ps);
  for (auto& p : ps)
    if (p.value.rank() == 1) p.value = random_tensor<float>(p.value.shape(), 5, -0.5, 0.5);
  const Tensor x = random_tensor<float>(Shape{6, 4}, 21);
  const Tensor out = mlp_forward(cfg, ps, "r", x);
  const Tensor& w0 = ps.get("r.l0.weight").value;
  const Tensor& b0 = ps.get("r.l0.bias").value;
  const Tensor& w1 = ps.get("r.l1.weight").value;
  const Tensor& b1 = ps.get("r.l1.bias").value;
  for (std::size_t n = 0; n < 6; ++n) {
    double h[8];
    for (int j = 0; j < 8; ++j) {
      double a = b0[j];
      for (int k = 0; k < 4; ++k) a += double(x.at(n, k)) * w0.at(k, j);
      h[j] = a > 0 ? a : 0;
    }
    for (int m = 0; m < 3; ++m) {
      double a = b1[m];
      for (int j = 0; j < 8; ++j) a += h[j] * w1.at(j, m);
      CHECK(out.at(n, m) == doctest::Approx(a).epsilon(1e-5));
    }
  }
}

TEST_CASE("mlp rejects mismatched shapes") {
  MlpConfig cfg{4, {8}, 3};
  ParamSet ps;
  init_mlp(cfg, 1, "m", ps);
  CHECK_THROWS_AS(mlp_forward(cfg, ps, "m", Tensor(Shape{2, 5})), ContractError);
  MlpConfig bad{4, {}, 3};
  CHECK_THROWS_AS(bad.validate(), ContractError);
}

TEST_CASE("backward of sum and square") {
  Parameter p("p", random_tensor<float>(Shape{3, 2}, 2));
  {
    Tape<float> tape;
    tape.backward(sum(tape.parameter(p)));
  }
  for (float g : p.grad.data()) CHECK(g == 1.0f);
  p.zero_grad();
  {
    Tape<float> tape;
    auto v = tape.parameter(p);
    tape.backward(sum(mul(v, v)));
  }
  for (std::size_t i = 0; i < 6; ++i) CHECK(p.grad[i] == doctest::Approx(2.0f * p.value[i]));
}

TEST_CASE("gradients accumulate until zeroed") {
  Parameter p("p", Tensor(Shape{2}, 1.0f));
  for (int i = 0; i < 3; ++i) {
    Tape<float> tape;
    tape.backward(sum(tape.parameter(p)));
  }
  CHECK(p.grad[0] == 3.0f);
  p.zero_grad();
  CHECK(p.grad[1] == 0.0f);
}

TEST_CASE("backward needs a scalar loss") {
  Parameter p("p", Tensor(Shape{2}, 1.0f));
  Tape<float> tape;
  auto v = tape.parameter(p);
  CHECK_THROWS_AS(tape.backward(v), ContractError);
}

TEST_CASE("composite mlp + softmax + cross-entropy passes the gradient check") {
  MlpConfig cfg{6, {10, 10}, 4};
  ParamSet ps;
  init_mlp(cfg, 8, "m", ps);
  const auto x = random_tensor<double>(Shape{5, 6}, 12);
  const std::vector<int> labels{0, 3, 1, 2, 3};
  const LossClosure<double> f = [&](Tape<double>& t, BasicParamSet<double>& p) {
    auto logits = mlp_forward(cfg, p, "m", t.constant(x));
    return add(cross_entropy(logits, std::span<const int>(labels)), project(softmax_rows(logits), 5));
  };
  CHECK(check(f, ps, 64) <= 1e-3);
}

TEST_CASE("gradient check of a linear model is exact to rounding") {
  ParamSet ps;
  ps.add("w", random_tensor<float>(Shape{3, 2}, 1));
  ps.add("b", random_tensor<float>(Shape{2}, 2));
  const auto x = random_tensor<double>(Shape{4, 3}, 3);
  const LossClosure<double> f = [&](Tape<double>& t, BasicParamSet<double>& p) {
    return project(linear(t.constant(x), t.parameter(p.get("w")), t.parameter(p.get("b"))), 4);
  };
  CHECK(check(f, ps) <= 1e-6);
}

TEST_CASE("a corrupted gradient is reported") {
  ParamSet ps;
  ps.add("w", random_tensor<float>(Shape{3, 2}, 1));
  ps.add("b", random_tensor<float>(Shape{2}, 2));
  const auto x = random_tensor<double>(Shape{4, 3}, 3);
  const LossClosure<double> f = [&](Tape<double>& t, BasicParamSet<double>& p) {
    return project(linear(t.constant(x), t.parameter(p.get("w")), t.parameter(p.get("b"))), 4);
  };
  auto p = ps.cast<double>();
  GradCheckOptions o;
  o.analytic_scale = 2.0;
  const auto r = grad_check(f, p, o);
  CHECK(r.max_rel_error == doctest::Approx(0.5).epsilon(1e-6));
  CHECK_FALSE(r.worst_param.empty());
}

TEST_CASE("gradient check refuses a non-finite loss") {
  ParamSet ps;
  ps.add("w", Tensor(Shape{2}, 1.0f));
  const LossClosure<double> f = [](Tape<double>& t, BasicParamSet<double>& p) {
    auto v = t.parameter(p.get("w"));
    return scale(sum(v), std::numeric_limits<double>::infinity());
  };
  auto p = ps.cast<double>();
  CHECK_THROWS_AS(grad_check(f, p, GradCheckOptions{}), NumericError);
}

TEST_CASE("elementwise and structural ops pass the gradient check") {
  ParamSet ps;
  ps.add("a", random_tensor<float>(Shape{3, 4}, 1));
  ps.add("b", random_tensor<float>(Shape{3, 4}, 2));
  ps.add("c", random_tensor<float>(Shape{3, 2}, 3));
  const LossClosure<double> f = [](Tape<double>& t, BasicParamSet<double>& p) {
    auto a = t.parameter(p.get("a"));
    auto b = t.parameter(p.get("b"));
    auto c = t.parameter(p.get("c"));
    auto h = add(mul(a, b), scale(relu(a), 0.5));
    auto s = sigmoid_range(b, 1e-3, 1.0);
    return add(project(concat_cols<double>({h, c, s}), 7), project(softmax_rows(a), 8));
  };
  CHECK(check(f, ps, 64) <= 1e-3);
}

TEST_CASE("conv2d, tap sampling and softmax interpolation pass the gradient check") {
  ParamSet ps;
  ps.add("x", random_tensor<float>(Shape{2, 6, 5}, 1));
  ps.add("w", random_tensor<float>(Shape{3, 2, 3, 3}, 2, -0.5, 0.5));
  ps.add("b", random_tensor<float>(Shape{3}, 3));
  ps.add("q", random_tensor<float>(Shape{8, 3}, 4));
  TapTable taps{4, 2, {}, {}};
  Rng rng(6);
  for (int i = 0; i < 8; ++i) taps.push(static_cast<std::uint32_t>(rng.below(9)), rng.uniform());
  const LossClosure<double> f = [&](Tape<double>& t, BasicParamSet<double>& p) {
    auto y = conv2d(t.parameter(p.get("x")), t.parameter(p.get("w")), t.parameter(p.get("b")), 2, 1);
    auto s = sample_taps(y, taps);
    auto v = softmax_interpolate(t.parameter(p.get("q")), 4);
    return add(project(s, 9), project(v, 10));
  };
  CHECK(check(f, ps, 96) <= 1e-3);
}

TEST_CASE("softmax rows are a simplex and shift invariant") {
  Tape<double> tape;
  auto x = random_tensor<double>(Shape{20, 6}, 4, -5, 5);
  auto shifted = x;
  for (std::size_t r = 0; r < 20; ++r)
    for (std::size_t c = 0; c < 6; ++c) shifted.at(r, c) += 3.0 * static_cast<double>(r);
  const auto a = softmax_rows(tape.constant(x)).value();
  const auto b = softmax_rows(tape.constant(shifted)).value();
  for (std::size_t r = 0; r < 20; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < 6; ++c) {
      CHECK(a.at(r, c) > 0.0);
      CHECK(a.at(r, c) == doctest::Approx(b.at(r, c)).epsilon(1e-12));
      s += a.at(r, c);
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-5));
  }
}

TEST_CASE("forward and backward are bitwise deterministic") {
  MlpConfig cfg{6, {16}, 3};
  auto run = [&] {
    ParamSet ps;
    init_mlp(cfg, 42, "m", ps);
    Tape<float> tape;
    auto y = mlp_forward(cfg, ps, "m", tape.constant(random_tensor<float>(Shape{7, 6}, 1)));
    tape.backward(project(y, 2));
    std::vector<float> all = y.value().vec();
    for (auto& p : ps) all.insert(all.end(), p.grad.data().begin(), p.grad.data().end());
    return all;
  };
  CHECK(run() == run());
}

TEST_CASE("sgd step") {
  SUBCASE("zero gradient with zero decay is a fixed point") {
    ParamSet ps;
    ps.add("p", Tensor(Shape{3}, 0.7f));
    OptimState st(0.9, 0.0);
    sgd_step(ps, st, 0.1);
    for (float v : ps.get("p").value.data()) CHECK(v == 0.7f);
  }
  SUBCASE("vanilla step") {
    ParamSet ps;
    ps.add("p", Tensor(Shape{1}, 1.0f));
    ps.get("p").grad[0] = 1.0f;
    OptimState st(0.0, 0.0);
    sgd_step(ps, st, 0.1);
    CHECK(ps.get("p").value[0] == doctest::Approx(0.9f));
  }
  SUBCASE("momentum recurrence") {
    ParamSet ps;
    ps.add("p", Tensor(Shape{1}, 0.0f));
    OptimState st(0.9, 0.0);
    ps.get("p").grad[0] = 1.0f;
    sgd_step(ps, st, 0.1);
    CHECK(ps.get("p").value[0] == doctest::Approx(-0.1f));
    sgd_step(ps, st, 0.1);
    CHECK(ps.get("p").value[0] == doctest::Approx(-0.29f));
    CHECK(ps.get("p").grad[0] == 1.0f);  // caller zeroes
  }
  SUBCASE("weight decay enters the buffer") {
    ParamSet ps;
    ps.add("p", Tensor(Shape{1}, 2.0f));
    OptimState st(0.0, 0.5);
    sgd_step(ps, st, 0.1);
    CHECK(ps.get("p").value[0] == doctest::Approx(1.9f));
  }
  SUBCASE("zero learning rate is the identity") {
    ParamSet ps;
    ps.add("p", random_tensor<float>(Shape{4}, 3));
    const Tensor before = ps.get("p").value;
    ps.get("p").grad.fill(5.0f);
    OptimState st;
    sgd_step(ps, st, 0.0);
    CHECK(ps.get("p").value == before);
  }
  SUBCASE("non-finite gradient aborts") {
    ParamSet ps;
    ps.add("p", Tensor(Shape{1}, 1.0f));
    ps.get("p").grad[0] = std::numeric_limits<float>::infinity();
    OptimState st;
    CHECK_THROWS_AS(sgd_step(ps, st, 0.1), NumericError);
  }
}

TEST_CASE("optimizer defaults") {
  OptimState st;
  CHECK(st.momentum == 0.9);
  CHECK(st.weight_decay == 0.0001);
}

TEST_CASE("poly learning rate") {
  CHECK(poly_lr(0.028, 0, 70) == 0.028);
  CHECK(poly_lr(0.028, 70, 70) == 0.0);
  CHECK(poly_lr(0.028, 35, 70, 0.9) == doctest::Approx(0.015005).epsilon(1e-4));
  CHECK(poly_lr(0.028, 35, 70, 0.9) == doctest::Approx(0.028 * std::pow(0.5, 0.9)).epsilon(1e-15));
  CHECK_THROWS_AS(poly_lr(0.028, 0, 0), ContractError);
  CHECK_THROWS_AS(poly_lr(0.028, 71, 70), ContractError);
}

TEST_CASE("kaiming-uniform initialization") {
  MlpConfig cfg{64, {32}, 8};
  ParamSet a, b, c;
  init_mlp(cfg, 5, "m", a);
  init_mlp(cfg, 5, "m", b);
  init_mlp(cfg, 6, "m", c);
  CHECK(a.get("m.l0.weight").value == b.get("m.l0.weight").value);
  CHECK_FALSE(a.get("m.l0.weight").value == c.get("m.l0.weight").value);
  const double bound = std::sqrt(6.0 / 64.0);
  for (float v : a.get("m.l0.weight").value.data()) CHECK(std::abs(v) <= bound);
  for (float v : a.get("m.l0.bias").value.data()) CHECK(v == 0.0f);

  const Tensor big = kaiming_uniform(Shape{100, 100}, 100, 9, "w");
  const double mean = std::accumulate(big.data().begin(), big.data().end(), 0.0) / 1e4;
  CHECK(std::abs(mean) < 0.02);
}
