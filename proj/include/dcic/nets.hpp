#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "dcic/module.hpp"

namespace dcic {

enum class Family { rgb, compressed };
enum class Head { classifier, aspp };

/// One residual stage (conv2_x .. conv5_x) of bottleneck units
/// 1x1,w / 3x3,w / 1x1,4w. Stride applies to the first unit's 1x1 reduce
/// and its shortcut; dilation to every 3x3 of the stage.
struct StageSpec {
  std::string name;
  int blocks = 0;
  int width = 0;
  int stride = 1;
  int dilation = 1;
};

struct NetworkSpec {
  std::string variant;
  Family family = Family::rgb;
  bool has_root = true;
  int input_channels = 3;
  int num_classes = 1000;
  Head head = Head::classifier;
  int root_width = 64;
  std::vector<StageSpec> stages;
  std::vector<int> aspp_rates;

  /// Ratio between label resolution and network input resolution.
  int label_scale() const { return family == Family::compressed ? 8 : 1; }
  int output_stride() const;
  std::size_t bottleneck_blocks() const;
};

/// Names: ResNet-50, ResNet-71, cResNet-39, cResNet-51, cResNet-72.
/// base_width is the bottleneck width of conv2_x (64 in the full-size nets).
NetworkSpec classifier_spec(std::string_view variant, int num_classes, int input_channels, int base_width = 64);
/// Same names with a "-d" suffix: conv4_x and conv5_x at stride 1 with
/// dilation 2 and 4, ASPP head with rates 6/12/18/24.
NetworkSpec segmenter_spec(std::string_view variant, int num_classes, int input_channels, int base_width = 64);
/// Dispatches on the "-d" suffix.
NetworkSpec network_spec(std::string_view variant, int num_classes, int input_channels, int base_width = 64);
std::vector<std::string> classifier_variants();

/// One row per layer, in execution order.
struct LayerRow {
  std::string name;
  std::string op;  // conv, bn, relu, maxpool, add, avgpool, fc, upsample
  int in_channels = 0;
  int out_channels = 0;
  int out_h = 0, out_w = 0;
  int kernel = 1, stride = 1, dilation = 1;
  bool bias = false;
  std::size_t params = 0;
  int in_h = 0, in_w = 0;
};

/// Layer table for an input of in_h x in_w.
std::vector<LayerRow> spec_summary(const NetworkSpec& spec, int in_h, int in_w);
/// Tab-separated rendering of spec_summary.
std::string summary_text(const std::vector<LayerRow>& rows);

class Network {
 public:
  Network(NetworkSpec spec, std::uint64_t seed);

  const NetworkSpec& spec() const { return spec_; }
  ParameterStore& store() { return store_; }
  const ParameterStore& store() const { return store_; }

  /// Classifier: (N,K) logits. Segmenter: (N,K,H*s,W*s) logits, bilinearly
  /// resized to label resolution (s = spec().label_scale()).
  Var forward(Var input, Mode mode);
  /// Backbone output before the head.
  Var features(Var input, Mode mode);

  std::vector<Parameter*> head_parameters();
  std::vector<Parameter*> backbone_parameters();
  bool is_head(std::string_view name) const;

 private:
  Var conv_bn(Var x, const std::string& name, int stride, int dilation, Mode mode, bool activate);
  Var bottleneck(Var x, const std::string& name, int in_c, int width, int stride, int dilation, Mode mode);

  NetworkSpec spec_;
  ParameterStore store_;
};

/// Copies every non-head tensor of `from` into `to`. Every non-head tensor of
/// `to` must exist in `from` with the same shape; returns the number copied.
std::size_t transfer_backbone(const Network& from, Network& to);

}  // namespace dcic
