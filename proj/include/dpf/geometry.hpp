#pragma once

#include <array>
#include <span>
#include <vector>

namespace dpf::geometry {

/// Discrete pixel lattice. Both extents are at least 1.
struct GridSpec {
  int height = 1;
  int width = 1;

  GridSpec() = default;
  GridSpec(int h, int w);

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

/// Continuous image coordinate in (-1, 1)^2 with the image center at the origin.
/// x runs along columns, y along rows.
struct NormCoord {
  double x = 0.0;
  double y = 0.0;

  NormCoord() = default;
  NormCoord(double x_, double y_);
};

struct PixelIndex {
  int row = 0;
  int col = 0;

  friend bool operator==(const PixelIndex&, const PixelIndex&) = default;
};

struct Delta {
  double dx = 0.0;
  double dy = 0.0;
};

/// The four corners of the bilinear cell containing a query, ordered
/// (top-left, top-right, bottom-left, bottom-right). Indices are clamped at
/// the border, so duplicates occur outside the outermost pixel centers.
struct NeighborSet {
  std::array<PixelIndex, 4> indices{};
  std::array<Delta, 4> deltas{};  // x_i - x, normalized units
};

/// Neighbor indices together with classical bilinear coefficients (border clamped).
struct BilinearTaps {
  std::array<PixelIndex, 4> indices{};
  std::array<double, 4> weights{};
};

struct PosEncodingConfig {
  int levels = 9;  // highest frequency exponent l

  int per_scalar() const noexcept { return 2 * (levels + 1); }
  int per_delta() const noexcept { return 4 * (levels + 1); }
};

/// Pixel-center convention: (2i + 1) / n - 1.
double normalize_pixel(int i, int n);

/// Inverse of normalize_pixel extended to the continuum: fractional pixel index of u.
double pixel_position(double u, int n) noexcept;

NormCoord pixel_center(PixelIndex p, GridSpec grid);

NeighborSet neighbors(NormCoord x, GridSpec grid);

BilinearTaps bilinear_taps(NormCoord x, GridSpec grid);

/// Writes 4(l+1) values: x-block then y-block, each (sin 2^0 pi u, cos 2^0 pi u, ...).
void pos_encode_into(Delta delta, PosEncodingConfig cfg, std::span<double> out);

std::vector<double> pos_encode(Delta delta, PosEncodingConfig cfg);

}  // namespace dpf::geometry
