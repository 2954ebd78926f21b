#include <doctest.h>

#include <cmath>

#include "dpf/encoders.hpp"
#include "dpf/errors.hpp"
#include "dpf/rng.hpp"

using namespace dpf;
using namespace dpf::encoders;
using nn::Shape;

namespace {

nn::Tensor random_image(std::size_t h, std::size_t w, std::uint64_t seed) {
  Rng rng(seed);
  nn::Tensor t(Shape{3, h, w});
  for (auto& v : t.data()) v = static_cast<float>(rng.uniform());
  return t;
}

// Straight-line zero-padded convolution in double, independent of the library kernels.
std::vector<double> ref_conv(const std::vector<double>& x, std::size_t cin, std::size_t h, std::size_t w,
                             const nn::Tensor& wt, const nn::Tensor& b, int stride, std::size_t& ho,
                             std::size_t& wo) {
  const std::size_t cout = wt.dim(0);
  const int k = static_cast<int>(wt.dim(2));
  const int pad = k / 2;
  ho = (h + 2 * pad - k) / stride + 1;
  wo = (w + 2 * pad - k) / stride + 1;
  std::vector<double> y(cout * ho * wo);
  for (std::size_t o = 0; o < cout; ++o)
    for (std::size_t r = 0; r < ho; ++r)
      for (std::size_t c = 0; c < wo; ++c) {
        double acc = b[o];
        for (std::size_t i = 0; i < cin; ++i)
          for (int dy = 0; dy < k; ++dy)
            for (int dx = 0; dx < k; ++dx) {
              const long yy = static_cast<long>(r) * stride + dy - pad;
              const long xx = static_cast<long>(c) * stride + dx - pad;
              if (yy < 0 || xx < 0 || yy >= static_cast<long>(h) || xx >= static_cast<long>(w)) continue;
              acc += x[(i * h + yy) * w + xx] * wt[((o * cin + i) * k + dy) * k + dx];
            }
        y[(o * ho + r) * wo + c] = acc;
      }
  return y;
}

std::vector<double> ref_backbone(const EncoderConfig& cfg, const nn::ParamSet& ps, const nn::Tensor& img) {
  std::vector<double> x(img.data().begin(), img.data().end());
  std::size_t c = 3, h = img.dim(1), w = img.dim(2);
  for (std::size_t i = 0; i < cfg.backbone_widths.size(); ++i) {
    const auto n = backbone_stage_name(i);
    std::size_t ho, wo;
    x = ref_conv(x, c, h, w, ps.get(n + ".weight").value, ps.get(n + ".bias").value, cfg.stride_of_stage(i), ho, wo);
    for (auto& v : x) v = v > 0 ? v : 0;
    c = static_cast<std::size_t>(cfg.backbone_widths[i]);
    h = ho;
    w = wo;
  }
  std::size_t ho, wo;
  return ref_conv(x, c, h, w, ps.get("backbone.head.weight").value, ps.get("backbone.head.bias").value, 1, ho, wo);
}

std::vector<double> ref_guidance(const EncoderConfig& cfg, const nn::ParamSet& ps, const nn::Tensor& img) {
  std::vector<double> in(img.data().begin(), img.data().end());
  const std::size_t h = img.dim(1), w = img.dim(2), d = static_cast<std::size_t>(cfg.guidance_width);
  std::size_t ho, wo;
  auto x = ref_conv(in, 3, h, w, ps.get("guidance.stem.weight").value, ps.get("guidance.stem.bias").value, 1, ho, wo);
  for (std::size_t b = 0; b < static_cast<std::size_t>(cfg.guidance_blocks); ++b) {
    const auto n1 = guidance_block_name(b, 1), n2 = guidance_block_name(b, 2);
    auto r = ref_conv(x, d, h, w, ps.get(n1 + ".weight").value, ps.get(n1 + ".bias").value, 1, ho, wo);
    for (auto& v : r) v = v > 0 ? v : 0;
    r = ref_conv(r, d, h, w, ps.get(n2 + ".weight").value, ps.get(n2 + ".bias").value, 1, ho, wo);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += kResidualScale * r[i];
  }
  return x;
}

EncoderConfig small_config() {
  EncoderConfig cfg;
  cfg.backbone_widths = {6, 8, 8, 10};
  cfg.downsample = 4;
  cfg.head_channels = 2;
  cfg.guidance_blocks = 2;
  cfg.guidance_width = 5;
  return cfg;
}

void randomize_biases(nn::ParamSet& ps, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& p : ps)
    if (p.value.rank() == 1)
      for (auto& v : p.value.data()) v = static_cast<float>(rng.uniform(-0.2, 0.2));
}

}  // namespace

TEST_CASE("backbone output shapes") {
  const auto cfg = small_config();
  nn::ParamSet ps;
  init_encoders(cfg, 1, ps);
  nn::Tape<float> tape;
  auto out = backbone_forward(cfg, ps, tape.constant(random_image(16, 24, 2)));
  CHECK(out.V.shape() == Shape{2, 4, 6});
  CHECK(out.z.shape() == Shape{10, 4, 6});
}

TEST_CASE("backbone contract errors") {
  const auto cfg = small_config();
  nn::ParamSet ps;
  init_encoders(cfg, 1, ps);
  nn::Tape<float> tape;
  CHECK_THROWS_AS(backbone_forward(cfg, ps, tape.constant(nn::Tensor(Shape{1, 16, 16}))), ContractError);
  CHECK_THROWS_AS(backbone_forward(cfg, ps, tape.constant(nn::Tensor(Shape{3, 18, 16}))), ContractError);
  EncoderConfig bad = cfg;
  bad.downsample = 3;
  CHECK_THROWS_AS(bad.validate(), ContractError);
}

TEST_CASE("zero head gives zero V") {
  const auto cfg = small_config();
  nn::ParamSet ps;
  init_encoders(cfg, 1, ps);
  ps.get("backbone.head.weight").value.fill(0.0f);
  nn::Tape<float> tape;
  auto out = backbone_forward(cfg, ps, tape.constant(random_image(16, 16, 3)));
  for (float v : out.V.value().data()) CHECK(v == 0.0f);
}

TEST_CASE("constant input gives constant interior V") {
  const auto cfg = small_config();
  nn::ParamSet ps;
  init_encoders(cfg, 4, ps);
  nn::Tensor img(Shape{3, 64, 64}, 0.6f);
  nn::Tape<float> tape;
  const auto V = backbone_forward(cfg, ps, tape.constant(img)).V.value();
  // receptive field of four 3x3 stages reaches 2 backbone pixels past the border
  const float ref = V.at(0, 4, 4);
  for (std::size_t r = 3; r < 13; ++r)
    for (std::size_t c = 3; c < 13; ++c) CHECK(V.at(0, r, c) == doctest::Approx(ref).epsilon(1e-5));
}

TEST_CASE("backbone matches the straight-line reference and golden values") {
  const auto cfg = small_config();
  nn::ParamSet ps;
  init_encoders(cfg, 11, ps);
  randomize_biases(ps, 12);
  const auto img = random_image(32, 32, 13);
  nn::Tape<float> tape;
  const auto V = backbone_forward(cfg, ps, tape.constant(img)).V.value();
  const auto ref = ref_backbone(cfg, ps, img);
  REQUIRE(V.numel() == ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i) CHECK(V[i] == doctest::Approx(ref[i]).epsilon(1e-4));

  // frozen from the reference forward pass
  CHECK(ref[0] == doctest::Approx(-0.154839910518).epsilon(1e-9));
  CHECK(ref[37] == doctest::Approx(-0.294632102391).epsilon(1e-9));
  CHECK(ref[127] == doctest::Approx(0.195191606546).epsilon(1e-9));
}

TEST_CASE("guidance encoder matches the straight-line reference and golden values") {
  const auto cfg = small_config();
  nn::ParamSet ps;
  init_encoders(cfg, 21, ps);
  randomize_biases(ps, 22);
  const auto img = random_image(12, 10, 23);
  nn::Tape<float> tape;
  const auto g = guidance_forward(cfg, ps, tape.constant(img)).value();
  CHECK(g.shape() == Shape{5, 12, 10});
  const auto ref = ref_guidance(cfg, ps, img);
  for (std::size_t i = 0; i < ref.size(); ++i) CHECK(g[i] == doctest::Approx(ref[i]).epsilon(1e-4));

  CHECK(ref[0] == doctest::Approx(-0.458377863599).epsilon(1e-9));
  CHECK(ref[301] == doctest::Approx(-0.489967196378).epsilon(1e-9));
}

TEST_CASE("zero residual branches leave the stem projection") {
  const auto cfg = small_config();
  nn::ParamSet ps;
  init_encoders(cfg, 3, ps);
  randomize_biases(ps, 4);
  const auto img = random_image(10, 10, 5);
  nn::Tape<float> tape;
  auto stem = nn::conv2d(tape.constant(img), tape.constant(ps.get("guidance.stem.weight").value),
                         tape.constant(ps.get("guidance.stem.bias").value), 1, 1);
  for (std::size_t b = 0; b < 2; ++b) {
    ps.get(guidance_block_name(b, 2) + ".weight").value.fill(0.0f);
    ps.get(guidance_block_name(b, 2) + ".bias").value.fill(0.0f);
  }
  CHECK(guidance_forward(cfg, ps, tape.constant(img)).value() == stem.value());
}

TEST_CASE("guidance encoder is stride 1") {
  const auto cfg = small_config();
  nn::ParamSet ps;
  init_encoders(cfg, 3, ps);
  nn::Tape<float> tape;
  CHECK(guidance_forward(cfg, ps, tape.constant(random_image(8, 8, 1))).shape() == Shape{5, 8, 8});
  CHECK(guidance_forward(cfg, ps, tape.constant(random_image(16, 16, 1))).shape() == Shape{5, 16, 16});
  EncoderConfig off = cfg;
  off.guidance_width = 0;
  CHECK_THROWS_AS(guidance_forward(off, ps, tape.constant(random_image(8, 8, 1))), ContractError);
}

TEST_CASE("gradients reach every encoder parameter") {
  const auto cfg = small_config();
  nn::ParamSet ps;
  init_encoders(cfg, 8, ps);
  randomize_biases(ps, 9);
  nn::Tape<float> tape;
  auto out = backbone_forward(cfg, ps, tape.constant(random_image(16, 16, 10)));
  auto g = guidance_forward(cfg, ps, tape.constant(random_image(16, 16, 11)));
  auto loss = nn::add(nn::sum(nn::mul(out.V, out.V)), nn::sum(nn::mul(g, g)));
  tape.backward(loss);
  for (const auto& p : ps) {
    double norm = 0;
    for (float v : p.grad.data()) norm += double(v) * v;
    CHECK_MESSAGE(norm > 0.0, p.name);
  }
}

TEST_CASE("encoders are deterministic") {
  const auto cfg = small_config();
  auto run = [&] {
    nn::ParamSet ps;
    init_encoders(cfg, 30, ps);
    nn::Tape<float> tape;
    auto out = backbone_forward(cfg, ps, tape.constant(random_image(16, 16, 31)));
    auto g = guidance_forward(cfg, ps, tape.constant(random_image(16, 16, 32)));
    auto v = out.V.value().vec();
    auto gv = g.value().vec();
    v.insert(v.end(), gv.begin(), gv.end());
    return v;
  };
  CHECK(run() == run());
}

TEST_CASE("reflectance squashing range") {
  nn::Tape<double> tape;
  nn::BasicTensor<double> raw(Shape{5}, std::vector<double>{-1e3, -1, 0, 1, 1e3});
  const auto r = squash_reflectance(tape.constant(raw)).value();
  for (double v : r.data()) {
    CHECK(v >= kReflectanceFloor);
    CHECK(v <= 1.0);
  }
  CHECK(r[2] == doctest::Approx(0.5 * (1.0 + kReflectanceFloor)));
}
