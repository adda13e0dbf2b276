#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "dcic/module.hpp"

namespace dcic {

struct CompressorConfig {
  int channels = 8;         // C
  int levels = 6;           // L, number of quantization centers
  float sigma = 1.0f;       // softness of the soft assignment
  float center_range = 2.0f;  // centers start evenly spaced on [-range, range]
  float beta = 600.0f;
  float target_entropy = 0.8f;  // H_t, bits per symbol

  int encoder_width1 = 64;
  int encoder_width2 = 128;
  int decoder_width1 = 128;
  int decoder_width2 = 64;
  int decoder_width3 = 32;
  int residual_units = 3;
  /// Centered pixels are divided by this on the way in and the decoder output
  /// multiplied by it on the way out.
  float pixel_scale = 64.0f;
};

struct OperatingPoint {
  int channels = 8;
  double target_entropy = 0.8;
  double beta = 600.0;
  double nominal_bpp() const;
};

/// H_t * C / 64: (w/8)(h/8)C symbols at H_t bits over w*h pixels.
double nominal_bpp(double target_entropy, int channels);

struct HardQuantization {
  std::vector<std::uint8_t> symbols;  // same element order as z
  Tensor values;                      // centers[symbols]
};

/// Nearest center per entry; ties go to the lower index.
HardQuantization quantize_hard(const Tensor& z, std::span<const float> centers);

struct SoftQuantization {
  Tensor probs;   // (numel(z), L), rows sum to 1
  Tensor values;  // shape of z, sum_j probs_j * c_j
};

/// probs_j = softmax_j(-sigma (z - c_j)^2).
SoftQuantization quantize_soft(const Tensor& z, std::span<const float> centers, float sigma);

/// Forward: nearest-center values. Backward: Jacobian of the soft value with
/// respect to both z and the centers.
Var quantize_ste(Var z, Var centers, float sigma);
/// The soft value itself, differentiable.
Var quantize_soft_value(Var z, Var centers, float sigma);

/// -sum p log2 p with 0 log 0 = 0.
double entropy_bits(std::span<const double> p);
/// Entropy of the column means of a (n, L) probability table.
double entropy_estimate(const Tensor& probs);
/// Entropy of the empirical symbol histogram.
double empirical_entropy(std::span<const std::uint8_t> symbols, int levels);

/// Differentiable entropy of the batch soft histogram (mean soft assignment
/// over all entries of z), in bits per symbol. Returns a (1) tensor.
Var soft_entropy(Var z, Var centers, float sigma);

/// MSE(x, x_hat) + beta * max(H - H_t, 0).
Var rate_distortion_loss(Var x, Var x_hat, Var entropy, float beta, float target_entropy);

/// Sorted centers with near-duplicates (within 1e-6) merged.
std::vector<float> canonical_centers(std::span<const float> centers);

/// Encoder, scalar quantizer and decoder. Inputs are per-channel centered
/// pixels in 0..255 units, (N, 3, h, w) with h and w divisible by 8.
class CompressionModel {
 public:
  CompressionModel(CompressorConfig config, std::uint64_t seed);

  const CompressorConfig& config() const { return config_; }
  ParameterStore& store() { return store_; }
  const ParameterStore& store() const { return store_; }

  Parameter& centers() { return store_.get("quantizer/centers"); }
  std::vector<float> center_values() const;
  std::vector<Parameter*> encoder_parameters() { return store_.parameters("encoder/"); }
  std::vector<Parameter*> decoder_parameters() { return store_.parameters("decoder/"); }

  /// (N,3,h,w) -> (N,C,h/8,w/8), unquantized.
  Var encode(Var image);
  /// (N,C,h/8,w/8) -> (N,3,h,w) centered pixels; not clipped.
  Var decode(Var representation);

  struct Forward {
    Var z;        // encoder output
    Var q;        // straight-through quantized representation
    Var x_hat;    // reconstruction
    Var entropy;  // soft-histogram H(q), bits per symbol
  };
  Forward forward(Var image);

  /// Sorts and deduplicates the centers in place (after training).
  void canonicalize();

  /// Per-channel mean subtracted from 0..255 pixels before encoding.
  const std::array<float, 3>& pixel_mean() const { return pixel_mean_; }
  void set_pixel_mean(const std::array<float, 3>& mean) { pixel_mean_ = mean; }

 private:
  Var conv(Var x, const std::string& name, int stride);

  CompressorConfig config_;
  ParameterStore store_;
  std::array<float, 3> pixel_mean_{};
};

}  // namespace dcic
