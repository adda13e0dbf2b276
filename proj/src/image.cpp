#include "dcic/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "dcic/bytes.hpp"
#include "dcic/error.hpp"

namespace dcic {

namespace {

class HeaderScanner {
 public:
  explicit HeaderScanner(std::span<const std::uint8_t> b) : b_(b) {}

  int number() {
    skip_space();
    require(pos_ < b_.size() && std::isdigit(b_[pos_]), Errc::corrupt, "pnm: malformed header");
    long v = 0;
    while (pos_ < b_.size() && std::isdigit(b_[pos_])) {
      v = v * 10 + (b_[pos_++] - '0');
      require(v <= 1 << 20, Errc::corrupt, "pnm: header value too large");
    }
    return static_cast<int>(v);
  }

  // exactly one whitespace byte separates maxval from the raster
  std::size_t raster_start() {
    require(pos_ < b_.size() && std::isspace(b_[pos_]), Errc::corrupt, "pnm: malformed header");
    return pos_ + 1;
  }

  std::size_t pos_ = 2;

 private:
  void skip_space() {
    while (pos_ < b_.size()) {
      if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else if (std::isspace(b_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::span<const std::uint8_t> b_;
};

std::uint8_t to_byte(float v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

}  // namespace

Tensor decode_pnm(std::span<const std::uint8_t> bytes) {
  require(bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '6' || bytes[1] == '5'), Errc::bad_magic,
          "not a binary PPM/PGM image");
  const int channels = bytes[1] == '6' ? 3 : 1;
  HeaderScanner s(bytes);
  const int w = s.number(), h = s.number(), maxval = s.number();
  require(w > 0 && h > 0, Errc::corrupt, "pnm: empty image");
  require(maxval == 255, Errc::corrupt, "pnm: only 8-bit images are supported (maxval " + std::to_string(maxval) + ")");
  const std::size_t start = s.raster_start();
  const std::size_t plane = static_cast<std::size_t>(w) * h;
  require(bytes.size() - start >= plane * channels, Errc::truncated, "pnm: truncated raster");
  Tensor t({channels, h, w});
  for (std::size_t i = 0; i < plane; ++i)
    for (int c = 0; c < channels; ++c) t[c * plane + i] = bytes[start + i * channels + c];
  return t;
}

std::vector<std::uint8_t> encode_pnm(const Tensor& image) {
  require(image.rank() == 3 && (image.dim(0) == 3 || image.dim(0) == 1), Errc::shape_mismatch,
          "pnm: expected a (3,H,W) or (1,H,W) image, got " + shape_string(image.shape()));
  const int channels = image.dim(0), h = image.dim(1), w = image.dim(2);
  const std::string header = std::string(channels == 3 ? "P6" : "P5") + "\n" + std::to_string(w) + " " +
                             std::to_string(h) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  const std::size_t plane = static_cast<std::size_t>(w) * h;
  out.reserve(out.size() + plane * channels);
  for (std::size_t i = 0; i < plane; ++i)
    for (int c = 0; c < channels; ++c) out.push_back(to_byte(image[c * plane + i]));
  return out;
}

Tensor read_image(const std::string& path) {
  const auto bytes = read_file(path);
  try {
    return decode_pnm(bytes);
  } catch (const Error& e) {
    fail(e.code(), path + ": " + e.what());
  }
}

void write_image(const std::string& path, const Tensor& image) { write_file(path, encode_pnm(image)); }

LabelMap read_label_map(const std::string& path) {
  const Tensor t = read_image(path);
  require(t.dim(0) == 1, Errc::corrupt, path + ": label maps must be 8-bit P5 images");
  LabelMap m{t.dim(1), t.dim(2), {}};
  m.labels.reserve(t.numel());
  for (float v : t.values()) m.labels.push_back(static_cast<int>(v));
  return m;
}

void write_label_map(const std::string& path, const LabelMap& map) {
  require(map.labels.size() == static_cast<std::size_t>(map.height) * map.width, Errc::shape_mismatch,
          "label map size does not match its dimensions");
  Tensor t({1, map.height, map.width});
  for (std::size_t i = 0; i < map.labels.size(); ++i) {
    require(map.labels[i] >= 0 && map.labels[i] <= 255, Errc::invalid_argument, "labels must fit in 8 bits");
    t[i] = static_cast<float>(map.labels[i]);
  }
  write_image(path, t);
}

}  // namespace dcic
