#include "dcic/bitstream.hpp"

#include <algorithm>
#include <cstring>

#include "dcic/bytes.hpp"
#include "dcic/error.hpp"

namespace dcic {

namespace {

constexpr std::uint32_t kTop = 1u << 24;
// Beyond this total the frequencies are scaled down before coding so that
// range / total keeps enough precision.
constexpr std::uint64_t kMaxTotal = 1u << 20;

// Coding order: every symbol value except the most frequent in index order,
// then the most frequent last. The last slot absorbs the rounding remainder of
// range / total, so the rounding loss lands on the symbol that can best afford it.
struct Model {
  std::vector<std::uint32_t> freq;   // per symbol value, possibly rescaled
  std::vector<std::uint32_t> start;  // per symbol value
  std::vector<std::uint8_t> order;   // symbol value at each coding position
  std::vector<std::uint32_t> cum;    // cumulative start by coding position, plus total
  std::uint32_t total = 0;
  std::uint8_t last = 0;
};

Model build_model(std::span<const std::uint32_t> frequencies) {
  require(!frequencies.empty() && frequencies.size() <= 256, Errc::invalid_argument, "range coder needs 1..256 symbols");
  std::uint64_t sum = 0;
  for (std::uint32_t f : frequencies) {
    require(f > 0, Errc::corrupt, "zero symbol frequency");
    sum += f;
  }
  require(sum < (1ull << 32), Errc::corrupt, "symbol frequencies overflow");
  Model m;
  m.freq.assign(frequencies.begin(), frequencies.end());
  if (sum > kMaxTotal)
    for (std::uint32_t& f : m.freq)
      f = static_cast<std::uint32_t>(std::max<std::uint64_t>(1, f * kMaxTotal / sum));
  const std::size_t L = m.freq.size();
  m.last = static_cast<std::uint8_t>(std::max_element(m.freq.begin(), m.freq.end()) - m.freq.begin());
  for (std::size_t s = 0; s < L; ++s)
    if (s != m.last) m.order.push_back(static_cast<std::uint8_t>(s));
  m.order.push_back(m.last);
  m.start.resize(L);
  std::uint32_t acc = 0;
  for (std::uint8_t s : m.order) {
    m.start[s] = acc;
    m.cum.push_back(acc);
    acc += m.freq[s];
  }
  m.cum.push_back(acc);
  m.total = acc;
  return m;
}

class Encoder {
 public:
  void encode(std::uint32_t start, std::uint32_t size, bool last, std::uint32_t total) {
    const std::uint32_t r = range_ / total;
    low_ += static_cast<std::uint64_t>(r) * start;
    range_ = last ? range_ - r * start : r * size;
    while (range_ < kTop) {
      range_ <<= 8;
      shift_low();
    }
  }

  std::vector<std::uint8_t> finish() {
    for (int i = 0; i < 5; ++i) shift_low();
    // The first byte out is the initial empty cache, always zero.
    out_.erase(out_.begin());
    return std::move(out_);
  }

 private:
  void shift_low() {
    if (static_cast<std::uint32_t>(low_) < 0xFF000000u || (low_ >> 32) != 0) {
      const auto carry = static_cast<std::uint8_t>(low_ >> 32);
      std::uint8_t temp = cache_;
      do {
        out_.push_back(static_cast<std::uint8_t>(temp + carry));
        temp = 0xFF;
      } while (--pending_ != 0);
      cache_ = static_cast<std::uint8_t>(low_ >> 24);
    }
    ++pending_;
    low_ = (low_ & 0x00FFFFFFu) << 8;
  }

  std::uint64_t low_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
  std::uint8_t cache_ = 0;
  std::uint64_t pending_ = 1;
  std::vector<std::uint8_t> out_;
};

class Decoder {
 public:
  explicit Decoder(std::span<const std::uint8_t> in) : in_(in) {
    for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next();
  }

  std::uint8_t decode(const Model& m) {
    const std::uint32_t r = range_ / m.total;
    const std::uint32_t target = std::min(code_ / r, m.total - 1);
    const auto pos = static_cast<std::size_t>(std::upper_bound(m.cum.begin(), m.cum.end() - 1, target) - m.cum.begin()) - 1;
    const std::uint8_t s = m.order[pos];
    const bool last = pos + 1 == m.order.size();
    const std::uint32_t lo = r * m.cum[pos];
    code_ -= lo;
    range_ = last ? range_ - lo : r * m.freq[s];
    if (code_ >= range_) fail(Errc::corrupt, "corrupt range-coded payload");
    while (range_ < kTop) {
      range_ <<= 8;
      code_ = (code_ << 8) | next();
    }
    return s;
  }

  bool exhausted() const { return pos_ == in_.size(); }

 private:
  std::uint32_t next() {
    if (pos_ >= in_.size()) fail(Errc::truncated, "truncated stream: payload ended early");
    return in_[pos_++];
  }

  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
  std::uint32_t code_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
};

}  // namespace

std::vector<std::uint32_t> symbol_frequencies(std::span<const std::uint8_t> symbols, int levels) {
  require(levels >= 1, Errc::invalid_argument, "symbol_frequencies: levels must be >= 1");
  std::vector<std::uint32_t> f(static_cast<std::size_t>(levels), 1);
  for (std::uint8_t s : symbols) {
    require(s < levels, Errc::invalid_argument, "symbol " + std::to_string(s) + " out of range for L=" + std::to_string(levels));
    ++f[s];
  }
  return f;
}

std::vector<std::uint8_t> range_encode(std::span<const std::uint8_t> symbols, std::span<const std::uint32_t> frequencies) {
  if (symbols.empty()) return {};
  const Model m = build_model(frequencies);
  Encoder enc;
  for (std::uint8_t s : symbols) {
    require(s < m.freq.size(), Errc::invalid_argument, "symbol out of range");
    enc.encode(m.start[s], m.freq[s], s == m.last, m.total);
  }
  return enc.finish();
}

std::vector<std::uint8_t> range_decode(std::span<const std::uint8_t> payload, std::span<const std::uint32_t> frequencies,
                                       std::size_t count) {
  if (count == 0) {
    require(payload.empty(), Errc::corrupt, "payload present for an empty symbol map");
    return {};
  }
  const Model m = build_model(frequencies);
  Decoder dec(payload);
  std::vector<std::uint8_t> out(count);
  for (std::uint8_t& s : out) s = dec.decode(m);
  require(dec.exhausted(), Errc::corrupt, "trailing bytes after range-coded payload");
  return out;
}

std::vector<std::uint8_t> serialize(const SymbolMap& map) {
  const std::size_t L = map.centers.size();
  require(L >= 1 && L <= 255, Errc::invalid_argument, "coded image needs 1..255 centers");
  require(map.channels >= 1 && map.channels <= 255, Errc::invalid_argument, "coded image needs 1..255 channels");
  require(map.width % 8 == 0 && map.height % 8 == 0, Errc::invalid_argument, "image dimensions must be divisible by 8");
  require(map.symbols.size() == map.expected_count(), Errc::invalid_argument,
          "symbol count " + std::to_string(map.symbols.size()) + " does not match dims (" + std::to_string(map.expected_count()) + ")");
  const std::vector<std::uint32_t> freq = symbol_frequencies(map.symbols, static_cast<int>(L));
  const std::vector<std::uint8_t> payload = range_encode(map.symbols, freq);

  ByteWriter w;
  w.raw(std::string_view("DCR1"));
  w.u16(kCodedVersion);
  w.u32(map.width);
  w.u32(map.height);
  w.u8(static_cast<std::uint8_t>(map.channels));
  w.u8(static_cast<std::uint8_t>(L));
  for (float c : map.centers) w.f32(c);
  for (std::uint32_t f : freq) w.u32(f);
  w.u32(static_cast<std::uint32_t>(payload.size()));
  w.raw(payload);
  return w.take();
}

SymbolMap deserialize(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "stream: header");
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), "DCR1", 4) != 0) fail(Errc::bad_magic, "bad magic: not a coded image");
  r.raw(4);
  const std::uint16_t version = r.u16();
  if (version != kCodedVersion) fail(Errc::unsupported_version, "unsupported coded image version " + std::to_string(version));
  SymbolMap map;
  map.width = r.u32();
  map.height = r.u32();
  map.channels = r.u8();
  const int L = r.u8();
  require(L >= 1 && map.channels >= 1, Errc::corrupt, "corrupt header: zero channels or centers");
  require(map.width % 8 == 0 && map.height % 8 == 0, Errc::corrupt, "corrupt header: dimensions not divisible by 8");
  map.centers.resize(static_cast<std::size_t>(L));
  for (float& c : map.centers) c = r.f32();
  std::vector<std::uint32_t> freq(static_cast<std::size_t>(L));
  std::uint64_t sum = 0;
  for (std::uint32_t& f : freq) {
    f = r.u32();
    require(f >= 1, Errc::corrupt, "corrupt header: zero frequency");
    sum += f;
  }
  const std::size_t count = map.expected_count();
  require(sum == count + static_cast<std::uint64_t>(L), Errc::corrupt, "corrupt header: frequencies do not match dimensions");
  const std::uint32_t len = r.u32();
  if (r.remaining() < len) fail(Errc::truncated, "truncated stream: payload shorter than declared");
  require(r.remaining() == len, Errc::corrupt, "trailing bytes after payload");
  map.symbols = range_decode(r.raw(len), freq, count);
  // the header's frequencies are the exact smoothed histogram of the payload
  require(symbol_frequencies(map.symbols, L) == freq, Errc::corrupt, "corrupt stream: decoded symbols disagree with header");
  return map;
}

double measured_bpp(std::size_t bytes, int width, int height) {
  require(width > 0 && height > 0, Errc::invalid_argument, "measured_bpp: dimensions must be positive");
  return 8.0 * static_cast<double>(bytes) / (static_cast<double>(width) * height);
}

std::vector<std::uint8_t> planar_to_interleaved(std::span<const std::uint8_t> planar, int channels, int rows, int cols) {
  const std::size_t plane = static_cast<std::size_t>(rows) * cols;
  require(planar.size() == plane * channels, Errc::shape_mismatch, "planar_to_interleaved: size mismatch");
  std::vector<std::uint8_t> out(planar.size());
  for (int c = 0; c < channels; ++c)
    for (std::size_t i = 0; i < plane; ++i) out[i * channels + c] = planar[c * plane + i];
  return out;
}

std::vector<std::uint8_t> interleaved_to_planar(std::span<const std::uint8_t> interleaved, int channels, int rows, int cols) {
  const std::size_t plane = static_cast<std::size_t>(rows) * cols;
  require(interleaved.size() == plane * channels, Errc::shape_mismatch, "interleaved_to_planar: size mismatch");
  std::vector<std::uint8_t> out(interleaved.size());
  for (int c = 0; c < channels; ++c)
    for (std::size_t i = 0; i < plane; ++i) out[c * plane + i] = interleaved[i * channels + c];
  return out;
}

}  // namespace dcic
