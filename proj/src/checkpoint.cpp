#include "dpf/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "dpf/netpbm.hpp"

namespace dpf::io {

namespace {

constexpr char kMagic[4] = {'D', 'P', 'F', '1'};

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}

  bool has(std::size_t n) const { return b_.size() - pos_ >= n; }
  std::size_t pos() const { return pos_; }

  std::uint32_t u32(const std::string& ctx) {
    need(4, ctx);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64(const std::string& ctx) {
    need(8, ctx);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  std::span<const std::uint8_t> take(std::size_t n, const std::string& ctx) {
    need(n, ctx);
    auto s = b_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n, const std::string& ctx) const {
    if (!has(n)) throw ParseError("checkpoint: truncated while reading " + ctx, b_.size());
  }

  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kCheckpointVersion);
  w.u64(ckpt.digest);
  w.u64(ckpt.seed);
  w.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (float v : t.data()) w.u32(std::bit_cast<std::uint32_t>(v));
  }
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes, std::optional<std::uint64_t> expected_digest) {
  Reader r(bytes);
  const auto magic = r.take(4, "magic");
  if (std::memcmp(magic.data(), kMagic, 4) != 0) throw ParseError("checkpoint: bad magic (expected DPF1)", 0);
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw ContractError("checkpoint: version " + std::to_string(version) + " is not supported (expected " +
                        std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint ckpt;
  ckpt.digest = r.u64("config digest");
  if (expected_digest && *expected_digest != ckpt.digest) {
    throw ContractError("checkpoint: config digest mismatch (file " + std::to_string(ckpt.digest) + ", expected " +
                        std::to_string(*expected_digest) + "); refusing to load");
  }
  ckpt.seed = r.u64("seed");
  const std::uint32_t count = r.u32("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string idx = "tensor #" + std::to_string(i);
    const std::uint32_t len = r.u32(idx + " name length");
    const auto nb = r.take(len, idx + " name");
    std::string name(nb.begin(), nb.end());
    const std::uint32_t rank = r.u32("tensor '" + name + "' rank");
    nn::Shape shape;
    for (std::uint32_t k = 0; k < rank; ++k) {
      const std::uint32_t d = r.u32("tensor '" + name + "' dims");
      if (d == 0) throw ParseError("checkpoint: tensor '" + name + "' has a zero dimension", r.pos());
      shape.push_back(d);
    }
    const std::size_t n = nn::shape_numel(shape);
    if (!r.has(n * 4)) {
      throw ParseError("checkpoint: tensor '" + name + "' is truncated (needs " + std::to_string(n * 4) +
                           " payload bytes)",
                       bytes.size());
    }
    std::vector<float> data(n);
    for (auto& v : data) v = std::bit_cast<float>(r.u32("tensor '" + name + "' payload"));
    ckpt.tensors.emplace_back(std::move(name), nn::Tensor(std::move(shape), std::move(data)));
  }
  if (r.pos() != bytes.size()) throw ParseError("checkpoint: trailing bytes after the last tensor", r.pos());
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file_atomic(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path, std::optional<std::uint64_t> expected_digest) {
  const auto bytes = read_file(path);
  try {
    return decode_checkpoint(bytes, expected_digest);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.detail(), e.offset());
  } catch (const ContractError& e) {
    throw ContractError(path.string() + ": " + e.what());
  }
}

Checkpoint checkpoint_from_params(const nn::ParamSet& params, std::uint64_t digest, std::uint64_t seed) {
  Checkpoint c{digest, seed, {}};
  for (const auto& p : params) c.tensors.emplace_back(p.name, p.value);
  return c;
}

void load_params(const Checkpoint& ckpt, nn::ParamSet& params) {
  require(ckpt.tensors.size() == params.size(), "checkpoint: tensor count does not match the model");
  for (const auto& [name, t] : ckpt.tensors) {
    auto& p = params.get(name);
    if (p.value.shape() != t.shape()) {
      throw ContractError("checkpoint: tensor '" + name + "' has shape " + nn::shape_str(t.shape()) +
                          ", model expects " + nn::shape_str(p.value.shape()));
    }
    p.value = t;
  }
}

}  // namespace dpf::io
