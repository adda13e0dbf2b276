#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace dcic {

/// A quantized representation ready for coding. Symbols are laid out as
/// (h/8, w/8, C) row-major, channel innermost.
struct SymbolMap {
  std::uint32_t width = 0;   // image pixels
  std::uint32_t height = 0;
  int channels = 0;
  std::vector<float> centers;
  std::vector<std::uint8_t> symbols;

  std::size_t expected_count() const {
    return static_cast<std::size_t>(width / 8) * (height / 8) * static_cast<std::size_t>(channels);
  }
};

inline constexpr std::uint16_t kCodedVersion = 1;

/// Bytes before the payload: magic, version, dims, channels, L, centers,
/// frequencies, payload length.
constexpr std::size_t coded_header_size(std::size_t levels) { return 20 + 8 * levels; }

/// occurrences + 1 for every symbol value in [0, levels).
std::vector<std::uint32_t> symbol_frequencies(std::span<const std::uint8_t> symbols, int levels);

/// Static-model range coder. `frequencies` must be positive for every symbol
/// value and sum below 2^32.
std::vector<std::uint8_t> range_encode(std::span<const std::uint8_t> symbols, std::span<const std::uint32_t> frequencies);
std::vector<std::uint8_t> range_decode(std::span<const std::uint8_t> payload, std::span<const std::uint32_t> frequencies,
                                       std::size_t count);

std::vector<std::uint8_t> serialize(const SymbolMap& map);
SymbolMap deserialize(std::span<const std::uint8_t> bytes);

/// 8 * bytes / (w * h).
double measured_bpp(std::size_t bytes, int width, int height);

/// NCHW symbol order (as produced by quantize_hard on a (1,C,h,w) tensor) to
/// the container's channel-innermost order, and back.
std::vector<std::uint8_t> planar_to_interleaved(std::span<const std::uint8_t> planar, int channels, int rows, int cols);
std::vector<std::uint8_t> interleaved_to_planar(std::span<const std::uint8_t> interleaved, int channels, int rows, int cols);

}  // namespace dcic
