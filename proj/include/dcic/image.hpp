#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dcic/tensor.hpp"

namespace dcic {

/// Binary 8-bit PNM: "P6" -> (3,H,W), "P5" -> (1,H,W); values 0..255.
Tensor decode_pnm(std::span<const std::uint8_t> bytes);
/// (3,H,W) -> P6, (1,H,W) -> P5. Values are rounded and clamped to 0..255.
std::vector<std::uint8_t> encode_pnm(const Tensor& image);

Tensor read_image(const std::string& path);
void write_image(const std::string& path, const Tensor& image);

/// Per-pixel class labels, row-major.
struct LabelMap {
  int height = 0;
  int width = 0;
  std::vector<int> labels;
};

/// 8-bit P5 label maps.
LabelMap read_label_map(const std::string& path);
void write_label_map(const std::string& path, const LabelMap& map);

}  // namespace dcic
