#include "dcic/codec.hpp"

#include <algorithm>

#include "dcic/error.hpp"

namespace dcic {

namespace {

Tensor shift_channels(const Tensor& t, const std::array<float, 3>& mean, float sign) {
  require(t.rank() == 4 && t.dim(1) == 3, Errc::shape_mismatch, "expected (N,3,h,w) pixels, got " + shape_string(t.shape()));
  Tensor out = t;
  const std::size_t plane = static_cast<std::size_t>(t.dim(2)) * t.dim(3);
  for (int n = 0; n < t.dim(0); ++n)
    for (int c = 0; c < 3; ++c) {
      float* p = out.data() + (static_cast<std::size_t>(n) * 3 + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) p[i] += sign * mean[c];
    }
  return out;
}

Tensor as_batch(const Tensor& image) {
  require(image.rank() == 3 && image.dim(0) == 3, Errc::shape_mismatch, "expected a (3,h,w) image, got " + shape_string(image.shape()));
  return image.reshaped({1, 3, image.dim(1), image.dim(2)});
}

}  // namespace

Tensor center_pixels(const CompressionModel& model, const Tensor& rgb) { return shift_channels(rgb, model.pixel_mean(), -1.0f); }

Tensor uncenter_pixels(const CompressionModel& model, const Tensor& centered) {
  Tensor out = shift_channels(centered, model.pixel_mean(), 1.0f);
  for (float& v : out.values()) v = std::clamp(v, 0.0f, 255.0f);
  return out;
}

Tensor representation(CompressionModel& model, const Tensor& rgb) {
  Tape t(false);
  const Tensor z = model.encode(t.constant(center_pixels(model, rgb))).value();
  return quantize_hard(z, model.center_values()).values;
}

Tensor reconstruct(CompressionModel& model, const Tensor& values) {
  Tape t(false);
  return uncenter_pixels(model, model.decode(t.constant(values)).value());
}

SymbolMap symbol_map(CompressionModel& model, const Tensor& image) {
  Tape t(false);
  const Tensor z = model.encode(t.constant(center_pixels(model, as_batch(image)))).value();
  SymbolMap m;
  m.height = static_cast<std::uint32_t>(image.dim(1));
  m.width = static_cast<std::uint32_t>(image.dim(2));
  m.channels = z.dim(1);
  m.centers = model.center_values();
  m.symbols = planar_to_interleaved(quantize_hard(z, m.centers).symbols, z.dim(1), z.dim(2), z.dim(3));
  return m;
}

std::vector<std::uint8_t> compress_image(CompressionModel& model, const Tensor& image) {
  return serialize(symbol_map(model, image));
}

Tensor decompress_image(CompressionModel& model, std::span<const std::uint8_t> bytes) {
  const SymbolMap m = deserialize(bytes);
  require(m.channels == model.config().channels, Errc::shape_mismatch,
          "stream has " + std::to_string(m.channels) + " channels, model expects " + std::to_string(model.config().channels));
  const int rows = static_cast<int>(m.height / 8), cols = static_cast<int>(m.width / 8);
  const auto planar = interleaved_to_planar(m.symbols, m.channels, rows, cols);
  Tensor values({1, m.channels, rows, cols});
  for (std::size_t i = 0; i < planar.size(); ++i) values[i] = m.centers[planar[i]];
  Tensor out = reconstruct(model, values);
  return out.reshaped({3, static_cast<int>(m.height), static_cast<int>(m.width)});
}

}  // namespace dcic
