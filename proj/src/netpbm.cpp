#include "dpf/netpbm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

namespace dpf::io {

namespace {

bool is_space(std::uint8_t c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; }

class HeaderReader {
 public:
  HeaderReader(std::span<const std::uint8_t> bytes, std::size_t start) : bytes_(bytes), pos_(start) {}

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (is_space(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  int read_uint(const char* what) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    long long v = 0;
    while (pos_ < bytes_.size() && bytes_[pos_] >= '0' && bytes_[pos_] <= '9') {
      v = v * 10 + (bytes_[pos_] - '0');
      if (v > (1LL << 30)) throw ParseError(std::string("netpbm: ") + what + " is too large", start);
      ++pos_;
    }
    if (pos_ == start) throw ParseError(std::string("netpbm: expected ") + what, pos_);
    return static_cast<int>(v);
  }

  std::size_t pos() const { return pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

RawImage parse_netpbm(std::span<const std::uint8_t> bytes, std::optional<NetpbmFormat> expect) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw ParseError("netpbm: missing P5/P6 magic", 0);
  }
  const NetpbmFormat fmt = bytes[1] == '5' ? NetpbmFormat::pgm_p5 : NetpbmFormat::ppm_p6;
  if (expect && *expect != fmt) throw ParseError("netpbm: unexpected format (wanted P5 for grayscale, P6 for color)", 0);

  HeaderReader rd(bytes, 2);
  RawImage img;
  img.channels = fmt == NetpbmFormat::pgm_p5 ? 1 : 3;
  img.width = rd.read_uint("width");
  img.height = rd.read_uint("height");
  const int maxval = rd.read_uint("maxval");
  const std::size_t maxval_end = rd.pos();
  if (img.width < 1 || img.height < 1) throw ParseError("netpbm: image extents must be positive", maxval_end);
  if (maxval != 255) throw ParseError("netpbm: only maxval 255 is supported, got " + std::to_string(maxval), maxval_end);
  if (maxval_end >= bytes.size() || !is_space(bytes[maxval_end])) {
    throw ParseError("netpbm: expected a single whitespace byte after maxval", maxval_end);
  }
  const std::size_t payload_start = maxval_end + 1;
  const std::size_t need = static_cast<std::size_t>(img.width) * img.height * img.channels;
  const std::size_t have = bytes.size() - payload_start;
  if (have < need) {
    throw ParseError("netpbm: truncated payload, expected " + std::to_string(need) + " bytes but found " +
                         std::to_string(have),
                     bytes.size());
  }
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(payload_start),
                    bytes.begin() + static_cast<std::ptrdiff_t>(payload_start + need));
  return img;
}

std::vector<std::uint8_t> encode_netpbm(const RawImage& img) {
  require(img.channels == 1 || img.channels == 3, "encode_netpbm: channels must be 1 or 3");
  require(img.width >= 1 && img.height >= 1, "encode_netpbm: image extents must be positive");
  require(img.pixels.size() == static_cast<std::size_t>(img.width) * img.height * img.channels,
          "encode_netpbm: pixel buffer size does not match the header");
  const std::string header = std::string(img.channels == 1 ? "P5" : "P6") + "\n" + std::to_string(img.width) + " " +
                             std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.pixels.begin(), img.pixels.end());
  return out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed for '" + path.string() + "'");
  return bytes;
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
}

RawImage read_netpbm(const std::filesystem::path& path, std::optional<NetpbmFormat> expect) {
  const auto bytes = read_file(path);
  try {
    return parse_netpbm(bytes, expect);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.detail(), e.offset());
  }
}

void write_netpbm(const std::filesystem::path& path, const RawImage& img) { write_file_atomic(path, encode_netpbm(img)); }

nn::Tensor to_tensor(const RawImage& img) {
  const auto c = static_cast<std::size_t>(img.channels);
  const auto h = static_cast<std::size_t>(img.height);
  const auto w = static_cast<std::size_t>(img.width);
  nn::Tensor t(nn::Shape{c, h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t ch = 0; ch < c; ++ch)
        t.at(ch, y, x) = static_cast<float>(img.pixels[(y * w + x) * c + ch] / 127.5 - 1.0);
  return t;
}

RawImage from_tensor(const nn::Tensor& t) {
  require(t.rank() == 3 && (t.dim(0) == 1 || t.dim(0) == 3), "from_tensor: expected [1|3, H, W], got " + nn::shape_str(t.shape()));
  RawImage img;
  img.channels = static_cast<int>(t.dim(0));
  img.height = static_cast<int>(t.dim(1));
  img.width = static_cast<int>(t.dim(2));
  const std::size_t c = t.dim(0), h = t.dim(1), w = t.dim(2);
  img.pixels.resize(c * h * w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double v = std::round((static_cast<double>(t.at(ch, y, x)) + 1.0) * 127.5);
        img.pixels[(y * w + x) * c + ch] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
      }
  return img;
}

nn::Tensor load_image(const std::filesystem::path& path, std::optional<NetpbmFormat> expect) {
  return to_tensor(read_netpbm(path, expect));
}

void save_image(const std::filesystem::path& path, const nn::Tensor& t) { write_netpbm(path, from_tensor(t)); }

LabelMap load_label_map(const std::filesystem::path& path) {
  const RawImage img = read_netpbm(path, NetpbmFormat::pgm_p5);
  LabelMap map{img.width, img.height, {}};
  map.labels.assign(img.pixels.begin(), img.pixels.end());
  return map;
}

void save_label_map(const std::filesystem::path& path, const LabelMap& map) {
  RawImage img{map.width, map.height, 1, {}};
  require(map.labels.size() == static_cast<std::size_t>(map.width) * map.height, "save_label_map: size mismatch");
  img.pixels.reserve(map.labels.size());
  for (int v : map.labels) {
    require(v >= 0 && v <= 255, "save_label_map: label outside [0, 255]");
    img.pixels.push_back(static_cast<std::uint8_t>(v));
  }
  write_netpbm(path, img);
}

}  // namespace dpf::io
