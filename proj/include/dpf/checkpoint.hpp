#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dpf/tensor.hpp"

namespace dpf::io {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary layout (little endian):
///   "DPF1" | version u32 | config digest u64 | rng seed u64 | tensor count u32 |
///   per tensor: name length u32, utf-8 name, rank u32, dims u32 x rank, f32 payload.
struct Checkpoint {
  std::uint64_t digest = 0;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, nn::Tensor>> tensors;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);

/// Refuses a version mismatch, and a digest mismatch when one is expected.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes, std::optional<std::uint64_t> expected_digest = std::nullopt);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path, std::optional<std::uint64_t> expected_digest = std::nullopt);

Checkpoint checkpoint_from_params(const nn::ParamSet& params, std::uint64_t digest, std::uint64_t seed);

/// Copies tensors into matching parameters; every parameter must be present with its shape.
void load_params(const Checkpoint& ckpt, nn::ParamSet& params);

}  // namespace dpf::io
