#pragma once

#include <span>
#include <vector>

#include "dcic/tensor.hpp"

namespace dcic {

inline constexpr double kPsnrCap = 99.0;

/// Mean squared error over all elements.
double mse(const Tensor& a, const Tensor& b);
/// 10 log10(255^2 / MSE) on 0..255 data, capped at kPsnrCap.
double psnr(const Tensor& a, const Tensor& b);
double psnr_from_mse(double mse);

/// (3,H,W) RGB -> (1,H,W) luma with ITU-R 601 weights; (1,H,W) passes through.
Tensor luma(const Tensor& image);

/// Mean SSIM over valid window positions: 11x11 Gaussian (sigma 1.5),
/// K1 = 0.01, K2 = 0.03, L = 255, on the luma of (C,H,W) inputs.
double ssim(const Tensor& a, const Tensor& b);
/// Five-scale MS-SSIM with weights (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
/// and 2x2 average downsampling. Negative per-scale terms are clamped to 0.
/// Needs at least 176x176 (11 pixels at the coarsest scale).
double ms_ssim(const Tensor& a, const Tensor& b);

/// Fraction of rows of (N,K) logits whose label ranks within the top k;
/// equal logits rank the lower class index first.
double topk_accuracy(const Tensor& logits, std::span<const int> labels, int k);

struct IouResult {
  double mean = 0.0;
  std::vector<double> per_class;  // negative for classes absent from both maps
  int counted = 0;                // classes included in the mean
};

/// Per-class TP / (TP + FP + FN) over pixels whose truth is not ignore_label.
IouResult miou(std::span<const int> pred, std::span<const int> truth, int num_classes, int ignore_label = 255);

/// Accumulates a confusion matrix over many images.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes, int ignore_label = 255);
  void add(std::span<const int> pred, std::span<const int> truth);
  IouResult iou() const;
  double pixel_accuracy() const;

 private:
  int k_;
  int ignore_;
  std::vector<long long> m_;  // truth-major
};

}  // namespace dcic
