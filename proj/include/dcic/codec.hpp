#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dcic/bitstream.hpp"
#include "dcic/compression.hpp"

namespace dcic {

/// (N,3,h,w) pixels in 0..255 minus the model's pixel mean.
Tensor center_pixels(const CompressionModel& model, const Tensor& rgb);
/// Inverse of center_pixels, clamped to 0..255.
Tensor uncenter_pixels(const CompressionModel& model, const Tensor& centered);

/// Hard-quantized center values, (N,C,h/8,w/8). No gradients are recorded.
Tensor representation(CompressionModel& model, const Tensor& rgb);
/// Decoder output for center values, as 0..255 pixels.
Tensor reconstruct(CompressionModel& model, const Tensor& values);

/// One (3,h,w) image to its symbol map.
SymbolMap symbol_map(CompressionModel& model, const Tensor& image);
/// Encode + quantize + range-code one (3,h,w) image.
std::vector<std::uint8_t> compress_image(CompressionModel& model, const Tensor& image);
/// Decode a stream with the model's decoder; centers come from the stream.
Tensor decompress_image(CompressionModel& model, std::span<const std::uint8_t> bytes);

}  // namespace dcic
