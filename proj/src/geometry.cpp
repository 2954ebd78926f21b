#include "dpf/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "dpf/errors.hpp"

namespace dpf::geometry {

GridSpec::GridSpec(int h, int w) : height(h), width(w) {
  require(h >= 1 && w >= 1, "GridSpec: extents must be positive, got " + std::to_string(h) + "x" + std::to_string(w));
}

NormCoord::NormCoord(double x_, double y_) : x(x_), y(y_) {
  require(x > -1.0 && x < 1.0 && y > -1.0 && y < 1.0, "NormCoord: components must lie strictly inside (-1, 1)");
}

double normalize_pixel(int i, int n) {
  if (n < 1 || i < 0 || i >= n) {
    throw ContractError("normalize_pixel: index " + std::to_string(i) + " outside [0, " + std::to_string(n) + ")");
  }
  return (2.0 * i + 1.0) / n - 1.0;
}

double pixel_position(double u, int n) noexcept { return ((u + 1.0) * n - 1.0) / 2.0; }

NormCoord pixel_center(PixelIndex p, GridSpec grid) {
  return {normalize_pixel(p.col, grid.width), normalize_pixel(p.row, grid.height)};
}

namespace {

struct AxisSpan {
  int lo;
  int hi;
  double frac;  // weight of hi
};

AxisSpan axis_span(double u, int n) {
  const double pos = pixel_position(u, n);
  const double base = std::floor(pos);
  const auto i0 = static_cast<int>(base);
  return {std::clamp(i0, 0, n - 1), std::clamp(i0 + 1, 0, n - 1), pos - base};
}

}  // namespace

NeighborSet neighbors(NormCoord x, GridSpec grid) {
  const AxisSpan cols = axis_span(x.x, grid.width);
  const AxisSpan rows = axis_span(x.y, grid.height);
  NeighborSet out;
  out.indices = {PixelIndex{rows.lo, cols.lo}, PixelIndex{rows.lo, cols.hi}, PixelIndex{rows.hi, cols.lo},
                 PixelIndex{rows.hi, cols.hi}};
  for (std::size_t k = 0; k < 4; ++k) {
    const NormCoord c = pixel_center(out.indices[k], grid);
    out.deltas[k] = {c.x - x.x, c.y - x.y};
  }
  return out;
}

BilinearTaps bilinear_taps(NormCoord x, GridSpec grid) {
  const AxisSpan cols = axis_span(x.x, grid.width);
  const AxisSpan rows = axis_span(x.y, grid.height);
  BilinearTaps out;
  out.indices = {PixelIndex{rows.lo, cols.lo}, PixelIndex{rows.lo, cols.hi}, PixelIndex{rows.hi, cols.lo},
                 PixelIndex{rows.hi, cols.hi}};
  const double fx = cols.frac;
  const double fy = rows.frac;
  out.weights = {(1.0 - fy) * (1.0 - fx), (1.0 - fy) * fx, fy * (1.0 - fx), fy * fx};
  return out;
}

void pos_encode_into(Delta delta, PosEncodingConfig cfg, std::span<double> out) {
  require(cfg.levels >= 0, "pos_encode: levels must be non-negative");
  require(out.size() == static_cast<std::size_t>(cfg.per_delta()), "pos_encode: output span has wrong length");
  const double comps[2] = {delta.dx, delta.dy};
  std::size_t k = 0;
  for (double u : comps) {
    double freq = std::numbers::pi;
    for (int l = 0; l <= cfg.levels; ++l, freq *= 2.0) {
      out[k++] = std::sin(freq * u);
      out[k++] = std::cos(freq * u);
    }
  }
}

std::vector<double> pos_encode(Delta delta, PosEncodingConfig cfg) {
  require(cfg.levels >= 0, "pos_encode: levels must be non-negative");
  std::vector<double> out(static_cast<std::size_t>(cfg.per_delta()));
  pos_encode_into(delta, cfg, out);
  return out;
}

}  // namespace dpf::geometry
