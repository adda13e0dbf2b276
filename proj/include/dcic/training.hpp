#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dcic/compression.hpp"
#include "dcic/data.hpp"
#include "dcic/nets.hpp"

namespace dcic {

/// Learning-rate schedules. Steps count optimizer updates from 0.
struct Schedule {
  enum class Kind { constant, step, poly };
  Kind kind = Kind::constant;
  float base_lr = 0.0f;
  std::vector<long> milestones;  // step: lr divided by `factor` at each
  float factor = 10.0f;
  long total_steps = 0;          // poly
  float power = 0.9f;

  static Schedule constant(float lr);
  static Schedule step(float lr, std::vector<long> milestones, float factor = 10.0f);
  static Schedule poly(float lr, long total_steps, float power = 0.9f);

  float lr(long step) const;
};

/// Epoch milestones given against `reference_epochs`, rescaled to `epochs`
/// and converted to steps. Throws unless the result is strictly increasing
/// and inside the run.
std::vector<long> scaled_milestones(const std::vector<double>& epoch_milestones, double reference_epochs, int epochs,
                                    long steps_per_epoch);

/// Tab-separated table of (step, named metrics).
class Trace {
 public:
  Trace() = default;
  explicit Trace(std::vector<std::string> columns);

  void add(std::vector<double> row);
  const std::vector<std::string>& columns() const { return columns_; }
  const std::vector<std::vector<double>>& rows() const { return rows_; }
  std::vector<double> column(const std::string& name) const;
  double last(const std::string& name) const;
  std::string text() const;
  void write(const std::string& path) const;

 private:
  std::vector<std::string> columns_;
  std::vector<std::vector<double>> rows_;
};

/// Called after each trace row; may print progress.
using Progress = std::function<void(const Trace&)>;

struct ImageQuality {
  double bpp = 0.0;
  double psnr = 0.0;
  double ssim = 0.0;
  double ms_ssim = 0.0;
  double hard_entropy = 0.0;  // empirical bits per symbol
};

/// Compresses every probe image to a file and averages bpp and quality.
ImageQuality evaluate_codec(CompressionModel& model, const std::vector<Tensor>& probe);

/// Square mosaics of `side` x `side` tiles from a dataset (for bpp and
/// MS-SSIM probes, which need images larger than the tiles).
std::vector<Tensor> probe_mosaics(const Dataset& data, int count, int side);

// --- compressor ---------------------------------------------------------

struct CompressorTraining {
  CompressorConfig model;
  int iterations = 2000;
  int batch_size = 8;
  float lr = 1e-3f;
  int log_every = 100;
  bool mirror = true;
  std::uint64_t seed = 1;
};

struct CompressorResult {
  CompressionModel model;
  Trace trace;  // step, mse, entropy, hard_entropy, loss, bpp, psnr
  ImageQuality quality;
};

/// Minimizes MSE + beta * max(H - H_t, 0) with Adam. Throws Errc::numeric on
/// a non-finite loss.
CompressorResult train_compressor(const CompressorTraining& options, const Dataset& train, const std::vector<Tensor>& probe,
                                  const Progress& progress = {});

// --- classifier ---------------------------------------------------------

enum class Source { representation, decoded_rgb, original_rgb };
Source parse_source(const std::string& name);
const char* source_name(Source s);

struct ClassifierTraining {
  std::string variant = "cResNet-39";
  int base_width = 64;
  Source source = Source::representation;
  int epochs = 28;
  int batch_size = 64;
  float lr = 0.025f;
  float momentum = 0.9f;
  float weight_decay = 1e-4f;
  std::vector<double> milestones{8, 16, 24};
  double reference_epochs = 28;
  int crop = 0;  // pixels; 0 keeps the full image. Representations use crop / 8.
  bool mirror = true;
  bool center = true;
  std::uint64_t seed = 1;
};

struct ClassifierResult {
  Network network;
  std::vector<float> mean;
  Trace trace;  // step, epoch, lr, loss, train_top1, top1, top5
  double top1 = 0.0;
  double top5 = 0.0;
};

/// Inputs as seen by an inference network: representation values, decoded
/// pixels or original pixels, each (C,H,W) and uncentered.
std::vector<Tensor> network_inputs(CompressionModel& codec, const Dataset& data, Source source);

/// The compressor is read only. `init` continues from an existing network
/// (whose mean is reused) instead of starting from scratch.
ClassifierResult train_classifier(const ClassifierTraining& options, CompressionModel& codec, const Dataset& train,
                                  const Dataset& test, const Progress& progress = {},
                                  const ClassifierResult* init = nullptr);

struct Accuracy {
  double top1 = 0.0, top5 = 0.0;
};
Accuracy evaluate_classifier(Network& net, const std::vector<Tensor>& inputs, const std::vector<int>& labels,
                             const std::vector<float>& mean, int crop_h, int crop_w, int batch_size = 32);

// --- segmenter ----------------------------------------------------------

struct SegmenterTraining {
  std::string variant = "cResNet-39-d";
  Source source = Source::representation;
  int iterations = 20000;
  int batch_size = 10;
  float lr = 0.001f;
  float head_lr_mult = 10.0f;
  float power = 0.9f;
  float momentum = 0.9f;
  float weight_decay = 5e-4f;
  int crop = 0;
  bool mirror = true;
  bool freeze_batch_norm = false;
  int log_every = 100;
  std::uint64_t seed = 1;
};

struct SegmenterResult {
  Network network;
  std::vector<float> mean;
  Trace trace;  // step, lr, head_lr, loss, miou
  double miou = 0.0;
  double pixel_accuracy = 0.0;
};

/// Backbone weights come from `pretrained` (same variant without "-d").
SegmenterResult train_segmenter(const SegmenterTraining& options, CompressionModel& codec, const ClassifierResult& pretrained,
                                const Dataset& train, const Dataset& test, const Progress& progress = {});

double evaluate_segmenter(Network& net, const std::vector<Tensor>& inputs, const Dataset& data, const std::vector<float>& mean,
                          double* pixel_accuracy = nullptr);

// --- joint --------------------------------------------------------------

enum class JointMode { joint, compression_only };

struct JointTraining {
  JointMode mode = JointMode::joint;
  float gamma = 0.001f;
  int epochs = 9;
  int batch_size = 64;
  float lr = 0.0025f;
  std::vector<double> milestones{3, 6};
  double reference_epochs = 9;
  float momentum = 0.9f;
  float weight_decay = 1e-4f;  // classifier parameters only
  bool mirror = true;
  std::uint64_t seed = 1;
};

struct JointResult {
  Trace trace;   // step, epoch, lr, loss, compression_loss, mse, entropy, ce, additivity
  Trace epochs;  // epoch, top1, top5
  ImageQuality before, after;
  double top1 = 0.0;
  double top5 = 0.0;
  double max_additivity_error = 0.0;
};

struct JointLoss {
  Var total;
  Var compression;  // MSE + beta max(H - H_t, 0)
  Var mse;
  Var entropy;
  Var ce;           // invalid in compression_only mode
};

/// Records one joint objective on `tape` for 0..255 images (N,3,h,w).
JointLoss joint_loss(Tape& tape, CompressionModel& codec, Network& net, const std::vector<float>& mean, const Tensor& rgb,
                     std::span<const int> labels, float gamma, JointMode mode);

/// joint: gamma * (MSE + beta max(H - H_t, 0)) + ce through the
/// straight-through quantizer, updating both models. compression_only: the
/// same objective without ce, updating only the compressor. Both models are
/// updated in place.
JointResult train_joint(const JointTraining& options, CompressionModel& codec, ClassifierResult& classifier, const Dataset& train,
                        const Dataset& test, const std::vector<Tensor>& probe, const Progress& progress = {});

}  // namespace dcic
