#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "dpf/tensor.hpp"

namespace dpf::io {

enum class NetpbmFormat { pgm_p5, ppm_p6 };

/// 8-bit interleaved raster as stored in a binary netpbm file.
struct RawImage {
  int width = 0;
  int height = 0;
  int channels = 1;  // 1 (P5) or 3 (P6)
  std::vector<std::uint8_t> pixels;
};

RawImage parse_netpbm(std::span<const std::uint8_t> bytes, std::optional<NetpbmFormat> expect = std::nullopt);
std::vector<std::uint8_t> encode_netpbm(const RawImage& img);

RawImage read_netpbm(const std::filesystem::path& path, std::optional<NetpbmFormat> expect = std::nullopt);
void write_netpbm(const std::filesystem::path& path, const RawImage& img);

/// v / 127.5 - 1, channel-major [C, H, W].
nn::Tensor to_tensor(const RawImage& img);

/// Inverse affine map with clamping and round-half-away-from-zero. C must be 1 or 3.
RawImage from_tensor(const nn::Tensor& t);

nn::Tensor load_image(const std::filesystem::path& path, std::optional<NetpbmFormat> expect = std::nullopt);
void save_image(const std::filesystem::path& path, const nn::Tensor& t);

/// Dense label map stored as PGM with the class index as the pixel value.
struct LabelMap {
  int width = 0;
  int height = 0;
  std::vector<int> labels;
};

inline constexpr int kIgnoreLabel = 255;

LabelMap load_label_map(const std::filesystem::path& path);
void save_label_map(const std::filesystem::path& path, const LabelMap& map);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace dpf::io
