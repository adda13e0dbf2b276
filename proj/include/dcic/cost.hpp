#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dcic/compression.hpp"
#include "dcic/nets.hpp"

namespace dcic {

/// Counting convention used by every report.
inline constexpr const char* kFlopConvention =
    "flops = multiply-accumulates (1 MAC = 1 FLOP): conv = out_h*out_w*k*k*c_in*c_out, fc = D*K; "
    "elementwise ops listed separately: bias, bn, relu, add, scale = 1 per element; max pool = k*k per output; "
    "avg pool = 1 per input; bilinear resize = 4 per output; nearest upsample = 0";

struct LayerCost {
  std::string name;
  std::string op;
  double flops = 0.0;        // multiply-accumulates
  double elementwise = 0.0;  // everything else
  std::size_t params = 0;
};

struct CostReport {
  std::string subject;
  int in_channels = 0, in_h = 0, in_w = 0;
  std::vector<LayerCost> layers;
  double total_flops = 0.0;
  double total_elementwise = 0.0;
  std::size_t total_params = 0;

  double total_with_elementwise() const { return total_flops + total_elementwise; }

  /// FLOPs of layers whose name starts with `prefix`.
  double flops_with_prefix(const std::string& prefix) const;
};

/// Multiply-accumulates of one layer.
double layer_flops(const LayerRow& row);
double layer_elementwise(const LayerRow& row);
CostReport cost_of(const std::string& subject, int in_channels, int in_h, int in_w, const std::vector<LayerRow>& rows);

CostReport count_flops(const NetworkSpec& spec, int in_h, int in_w);

enum class CompressorPart { encoder, decoder, both };
/// Layer table of the compressor for an h x w image.
std::vector<LayerRow> compressor_summary(const CompressorConfig& config, int h, int w, CompressorPart part);
CostReport count_flops(const CompressorConfig& config, int h, int w, CompressorPart part);

/// Tab-separated per-layer table headed by the convention line.
std::string report_text(const CostReport& report);
/// key=value lines: subject, input, total_flops, total_params, convention.
std::string report_kv(const CostReport& report);

struct CostComparison {
  double direct = 0.0;       // inference straight from the representation
  double decoder = 0.0;
  double rgb_network = 0.0;  // inference on the decoded image
  double pipeline() const { return decoder + rgb_network; }
  double ratio() const { return pipeline() / direct; }
};

/// Direct inference on the representation of an h x w image versus decoding
/// it and running the RGB network.
CostComparison cost_comparison(const NetworkSpec& direct, const CompressorConfig& codec, const NetworkSpec& rgb, int h, int w);

std::string comparison_text(const CostComparison& c, const std::string& direct_name, const std::string& rgb_name);

}  // namespace dcic
