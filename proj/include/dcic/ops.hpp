#pragma once

#include <optional>
#include <span>

#include "dcic/autograd.hpp"

namespace dcic {

enum class Padding { same, valid };
enum class Mode { train, eval };

/// Spatial bookkeeping shared by the conv ops and the cost model.
/// "same" pads (effective_kernel - 1) zeros in total, the odd pixel going to
/// the bottom/right, which gives out = ceil(in / stride).
struct ConvGeometry {
  int in_h = 0, in_w = 0;
  int out_h = 0, out_w = 0;
  int kernel = 1, stride = 1, dilation = 1;
  int pad_top = 0, pad_left = 0;
};

int effective_kernel(int kernel, int dilation);
ConvGeometry conv_geometry(int in_h, int in_w, int kernel, int stride, int dilation, Padding padding);

struct ConvOptions {
  int stride = 1;
  int dilation = 1;
  Padding padding = Padding::same;
};

/// input (N,Cin,H,W), weight (Cout,Cin,k,k), bias (Cout).
Var conv2d(Var input, Var weight, std::optional<Var> bias = std::nullopt, ConvOptions options = {});

/// Adjoint of conv2d(., weight, stride, same padding): input (N,Cout,H,W) with
/// weight (Cout,Cin,k,k) yields (N,Cin,H*stride,W*stride).
Var transposed_conv2d(Var input, Var weight, int stride);

struct BatchNormState {
  explicit BatchNormState(int channels = 0);

  Tensor running_mean;
  Tensor running_var;
  float decay = 0.9f;
  float eps = 1e-5f;
};

/// Per-channel normalization of (N,C,H,W). Train mode normalizes with batch
/// statistics and folds them into `state`; eval mode uses the running values.
Var batch_norm(Var input, Var scale, Var shift, BatchNormState& state, Mode mode);

Var relu(Var input);
Var add(Var a, Var b);
Var scale(Var input, float factor);
/// max(x - threshold, 0); the subgradient at the threshold is 0.
Var hinge(Var input, float threshold);
Var sum(Var input);

/// kernel x kernel max pooling, same padding. Ties route the gradient to the
/// lowest linear index in the window.
Var max_pool(Var input, int kernel = 3, int stride = 2);
/// (N,C,H,W) -> (N,C)
Var global_avg_pool(Var input);
/// input (N,D), weight (K,D), bias (K) -> (N,K)
Var linear(Var input, Var weight, std::optional<Var> bias = std::nullopt);

Var upsample_nearest(Var input, int factor);
/// Bilinear resize with half-pixel centers (edge-clamped).
Var resize_bilinear(Var input, int out_h, int out_w);

Var mse_loss(Var a, Var b);
/// Mean over the batch of -log softmax(logits)[label].
Var softmax_cross_entropy(Var logits, std::span<const int> labels);
/// Per-pixel cross entropy for (N,K,H,W) logits and N*H*W labels, averaged
/// over pixels whose label differs from `ignore_label`.
Var pixel_cross_entropy(Var logits, std::span<const int> labels, int ignore_label = -1);

}  // namespace dcic
