#include "dcic/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "dcic/bytes.hpp"
#include "dcic/codec.hpp"
#include "dcic/error.hpp"
#include "dcic/metrics.hpp"
#include "dcic/optim.hpp"

namespace dcic {

// --- schedules and traces -------------------------------------------------

Schedule Schedule::constant(float lr) {
  require(lr > 0.0f, Errc::invalid_argument, "learning rate must be positive");
  Schedule s;
  s.base_lr = lr;
  return s;
}

Schedule Schedule::step(float lr, std::vector<long> milestones, float factor) {
  Schedule s = constant(lr);
  require(factor > 0.0f, Errc::invalid_argument, "decay factor must be positive");
  for (std::size_t i = 1; i < milestones.size(); ++i)
    require(milestones[i] > milestones[i - 1], Errc::invalid_argument, "schedule milestones must be strictly increasing");
  s.kind = Kind::step;
  s.milestones = std::move(milestones);
  s.factor = factor;
  return s;
}

Schedule Schedule::poly(float lr, long total_steps, float power) {
  Schedule s = constant(lr);
  require(total_steps > 0, Errc::invalid_argument, "poly schedule needs a positive step count");
  s.kind = Kind::poly;
  s.total_steps = total_steps;
  s.power = power;
  return s;
}

float Schedule::lr(long step) const {
  switch (kind) {
    case Kind::constant:
      return base_lr;
    case Kind::step: {
      float lr = base_lr;
      for (long m : milestones)
        if (step >= m) lr /= factor;
      return lr;
    }
    case Kind::poly: {
      const double frac = std::clamp(static_cast<double>(step) / static_cast<double>(total_steps), 0.0, 1.0);
      return static_cast<float>(base_lr * std::pow(1.0 - frac, static_cast<double>(power)));
    }
  }
  return base_lr;
}

std::vector<long> scaled_milestones(const std::vector<double>& epoch_milestones, double reference_epochs, int epochs,
                                    long steps_per_epoch) {
  require(reference_epochs > 0 && epochs > 0 && steps_per_epoch > 0, Errc::invalid_argument,
          "schedule needs positive epochs and steps");
  std::vector<long> out;
  for (double m : epoch_milestones) {
    const long epoch = std::lround(m * epochs / reference_epochs);
    const long step = epoch * steps_per_epoch;
    require(epoch > 0 && epoch < epochs && (out.empty() || step > out.back()), Errc::invalid_argument,
            "milestones do not scale to " + std::to_string(epochs) + " epochs as a strictly increasing sequence");
    out.push_back(step);
  }
  return out;
}

Trace::Trace(std::vector<std::string> columns) : columns_(std::move(columns)) {}

void Trace::add(std::vector<double> row) {
  require(row.size() == columns_.size(), Errc::invalid_argument, "trace row has the wrong number of columns");
  rows_.push_back(std::move(row));
}

std::vector<double> Trace::column(const std::string& name) const {
  const auto it = std::find(columns_.begin(), columns_.end(), name);
  require(it != columns_.end(), Errc::invalid_argument, "trace has no column " + name);
  const std::size_t k = static_cast<std::size_t>(it - columns_.begin());
  std::vector<double> out;
  for (const auto& r : rows_) out.push_back(r[k]);
  return out;
}

double Trace::last(const std::string& name) const {
  const auto c = column(name);
  require(!c.empty(), Errc::invalid_argument, "trace is empty");
  return c.back();
}

std::string Trace::text() const {
  std::string out;
  for (std::size_t i = 0; i < columns_.size(); ++i) out += (i ? "\t" : "") + columns_[i];
  out += '\n';
  char buf[64];
  for (const auto& r : rows_) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.9g", r[i]);
      out += (i ? "\t" : "");
      out += buf;
    }
    out += '\n';
  }
  return out;
}

void Trace::write(const std::string& path) const {
  const std::string t = text();
  write_file(path, std::vector<std::uint8_t>(t.begin(), t.end()));
}

// --- shared helpers -------------------------------------------------------

namespace {

Tensor stack(const std::vector<Tensor>& items) {
  std::vector<Tensor> b;
  b.reserve(items.size());
  for (const Tensor& t : items) {
    Shape s = t.shape();
    s.insert(s.begin(), 1);
    b.push_back(t.reshaped(s));
  }
  return stack_batch(b);
}

std::vector<std::size_t> permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[static_cast<std::size_t>(rng.next() % i)]);
  return p;
}

void check_finite(double loss, long step, const char* what) {
  require(std::isfinite(loss), Errc::numeric,
          std::string(what) + " diverged at step " + std::to_string(step) + ": loss is not finite");
}

std::vector<int> labels_of(const Dataset& data) {
  std::vector<int> out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) out[i] = data.get(i).label;
  return out;
}

int input_channels(CompressionModel& codec, Source s) { return s == Source::representation ? codec.config().channels : 3; }

void check_family(const NetworkSpec& spec, Source s) {
  const bool compressed = spec.family == Family::compressed;
  require(compressed == (s == Source::representation), Errc::invalid_argument,
          spec.variant + " cannot consume " + source_name(s) + " inputs");
}

// Crop in input units; labels may live at a finer resolution (`scale`).
struct Window {
  int h, w;
};

Window crop_window(const Tensor& sample, int crop_pixels, Source s) {
  const int h = sample.dim(1), w = sample.dim(2);
  if (crop_pixels <= 0) return {h, w};
  const int c = s == Source::representation ? crop_pixels / 8 : crop_pixels;
  require(c >= 1 && c <= h && c <= w, Errc::invalid_argument, "crop " + std::to_string(crop_pixels) + " does not fit the inputs");
  return {c, c};
}


}  // namespace

Source parse_source(const std::string& name) {
  if (name == "representation") return Source::representation;
  if (name == "decoded_rgb") return Source::decoded_rgb;
  if (name == "original_rgb") return Source::original_rgb;
  fail(Errc::invalid_argument, "unknown input source " + name + " (representation, decoded_rgb, original_rgb)");
}

const char* source_name(Source s) {
  switch (s) {
    case Source::representation: return "representation";
    case Source::decoded_rgb: return "decoded_rgb";
    case Source::original_rgb: return "original_rgb";
  }
  return "?";
}

ImageQuality evaluate_codec(CompressionModel& model, const std::vector<Tensor>& probe) {
  require(!probe.empty(), Errc::invalid_argument, "codec evaluation needs probe images");
  ImageQuality q;
  bool multiscale = true;
  for (const Tensor& img : probe) {
    const SymbolMap m = symbol_map(model, img);
    const auto bytes = serialize(m);
    const Tensor rec = decompress_image(model, bytes);
    q.bpp += measured_bpp(bytes.size(), img.dim(2), img.dim(1));
    q.hard_entropy += empirical_entropy(m.symbols, static_cast<int>(m.centers.size()));
    q.psnr += psnr(img, rec);
    q.ssim += ssim(img, rec);
    multiscale = multiscale && img.dim(1) >= 176 && img.dim(2) >= 176;
    if (multiscale) q.ms_ssim += ms_ssim(img, rec);
  }
  const double n = static_cast<double>(probe.size());
  q.bpp /= n;
  q.hard_entropy /= n;
  q.psnr /= n;
  q.ssim /= n;
  q.ms_ssim = multiscale ? q.ms_ssim / n : 0.0;
  return q;
}

std::vector<Tensor> probe_mosaics(const Dataset& data, int count, int side) {
  require(count >= 1 && side >= 1, Errc::invalid_argument, "probe needs positive count and side");
  const std::size_t per = static_cast<std::size_t>(side) * side;
  require(data.size() >= per * count, Errc::invalid_argument,
          "probe needs " + std::to_string(per * count) + " images, dataset has " + std::to_string(data.size()));
  std::vector<Tensor> out;
  for (int m = 0; m < count; ++m) {
    std::vector<Tensor> tiles;
    for (std::size_t i = 0; i < per; ++i) tiles.push_back(data.get(m * per + i).image);
    out.push_back(mosaic(tiles, side));
  }
  return out;
}

// --- compressor -----------------------------------------------------------

CompressorResult train_compressor(const CompressorTraining& o, const Dataset& train, const std::vector<Tensor>& probe,
                                  const Progress& progress) {
  require(o.iterations >= 1 && o.batch_size >= 1 && o.log_every >= 1, Errc::invalid_argument,
          "compressor training needs positive iterations, batch size and log interval");
  require(train.size() > 0, Errc::invalid_argument, "empty training set");
  require(o.lr > 0.0f, Errc::invalid_argument, "learning rate must be positive");
  CompressorResult r{CompressionModel(o.model, o.seed), Trace({"step", "mse", "entropy", "hard_entropy", "loss", "bpp", "psnr"}), {}};
  CompressionModel& m = r.model;
  {
    std::vector<Tensor> images;
    for (std::size_t i = 0; i < train.size(); ++i) images.push_back(train.get(i).image);
    const auto mean = channel_means(images);
    m.set_pixel_mean({mean[0], mean[1], mean[2]});
  }
  Adam opt;
  opt.add(m.store().parameters());
  Rng data_rng = Rng::stream(o.seed, "data"), aug_rng = Rng::stream(o.seed, "augmentation");
  double sum_mse = 0, sum_h = 0, sum_hard = 0, sum_loss = 0;
  int n = 0;
  for (long step = 0; step < o.iterations; ++step) {
    std::vector<Tensor> items;
    for (int b = 0; b < o.batch_size; ++b) {
      Tensor img = train.get(static_cast<std::size_t>(data_rng.next() % train.size())).image;
      items.push_back(o.mirror && aug_rng.coin() ? mirror(img) : std::move(img));
    }
    const Tensor x = center_pixels(m, stack(items));
    opt.zero_grad();
    Tape t;
    Var xv = t.constant(x);
    auto f = m.forward(xv);
    Var mse = mse_loss(f.x_hat, xv);
    Var loss = rate_distortion_loss(xv, f.x_hat, f.entropy, o.model.beta, o.model.target_entropy);
    const double lv = loss.value()[0];
    check_finite(lv, step, "compressor training");
    sum_mse += mse.value()[0];
    sum_h += f.entropy.value()[0];
    sum_loss += lv;
    sum_hard += empirical_entropy(quantize_hard(f.z.value(), m.center_values()).symbols, m.config().levels);
    ++n;
    t.backward(loss);
    opt.step(o.lr);
    if ((step + 1) % o.log_every == 0 || step + 1 == o.iterations) {
      double bpp = 0, p = 0;
      if (!probe.empty()) {
        const ImageQuality q = evaluate_codec(m, probe);
        bpp = q.bpp;
        p = q.psnr;
      }
      r.trace.add({static_cast<double>(step + 1), sum_mse / n, sum_h / n, sum_hard / n, sum_loss / n, bpp, p});
      if (progress) progress(r.trace);
      sum_mse = sum_h = sum_hard = sum_loss = 0;
      n = 0;
    }
  }
  m.canonicalize();
  if (!probe.empty()) r.quality = evaluate_codec(m, probe);
  return r;
}

// --- classifier -----------------------------------------------------------

std::vector<Tensor> network_inputs(CompressionModel& codec, const Dataset& data, Source source) {
  std::vector<Tensor> out;
  out.reserve(data.size());
  constexpr std::size_t kChunk = 32;
  for (std::size_t begin = 0; begin < data.size(); begin += kChunk) {
    std::vector<Tensor> images;
    for (std::size_t i = begin; i < std::min(begin + kChunk, data.size()); ++i) images.push_back(data.get(i).image);
    if (source == Source::original_rgb) {
      for (Tensor& t : images) out.push_back(std::move(t));
      continue;
    }
    Tensor batch = representation(codec, stack(images));
    if (source == Source::decoded_rgb) batch = reconstruct(codec, batch);
    for (int i = 0; i < batch.dim(0); ++i) {
      Tensor item = slice_batch(batch, i, i + 1);
      out.push_back(item.reshaped({batch.dim(1), batch.dim(2), batch.dim(3)}));
    }
  }
  return out;
}

Accuracy evaluate_classifier(Network& net, const std::vector<Tensor>& inputs, const std::vector<int>& labels,
                             const std::vector<float>& mean, int crop_h, int crop_w, int batch_size) {
  require(inputs.size() == labels.size() && !inputs.empty(), Errc::invalid_argument, "evaluation needs labelled inputs");
  const int k = net.spec().num_classes;
  std::vector<float> logits;
  Rng unused(0);
  for (std::size_t begin = 0; begin < inputs.size(); begin += batch_size) {
    std::vector<Tensor> items;
    for (std::size_t i = begin; i < std::min(begin + batch_size, inputs.size()); ++i) {
      const Crop c = choose_crop(inputs[i].dim(1), inputs[i].dim(2), crop_h, crop_w, Mode::eval, false, unused);
      items.push_back(subtract_mean(apply_crop(inputs[i], c, crop_h, crop_w), mean));
    }
    Tape t(false);
    const Tensor y = net.forward(t.constant(stack(items)), Mode::eval).value();
    logits.insert(logits.end(), y.values().begin(), y.values().end());
  }
  const Tensor all({static_cast<int>(inputs.size()), k}, std::move(logits));
  return {topk_accuracy(all, labels, 1), topk_accuracy(all, labels, std::min(5, k))};
}

ClassifierResult train_classifier(const ClassifierTraining& o, CompressionModel& codec, const Dataset& train, const Dataset& test,
                                  const Progress& progress, const ClassifierResult* init) {
  require(o.epochs >= 1 && o.batch_size >= 1, Errc::invalid_argument, "classifier training needs positive epochs and batch size");
  require(train.num_classes() >= 2, Errc::invalid_argument, "classifier training needs labelled data with >= 2 classes");
  const NetworkSpec spec = init ? init->network.spec()
                                : classifier_spec(o.variant, train.num_classes(), input_channels(codec, o.source), o.base_width);
  check_family(spec, o.source);
  require(spec.head == Head::classifier, Errc::invalid_argument, spec.variant + " is not a classifier");

  const std::vector<Tensor> inputs = network_inputs(codec, train, o.source);
  const std::vector<Tensor> test_inputs = network_inputs(codec, test, o.source);
  const std::vector<int> labels = labels_of(train), test_labels = labels_of(test);

  ClassifierResult r{init ? init->network : Network(spec, o.seed), {}, Trace({"step", "epoch", "lr", "loss", "train_top1", "top1", "top5"}),
                     0.0, 0.0};
  if (init) {
    r.mean = init->mean;
  } else if (o.center) {
    r.mean = channel_means(inputs);
  }
  const Window win = crop_window(inputs.front(), o.crop, o.source);
  const long steps_per_epoch = static_cast<long>(inputs.size()) / o.batch_size;
  require(steps_per_epoch >= 1, Errc::invalid_argument, "training set smaller than one batch");
  const Schedule sched = Schedule::step(o.lr, scaled_milestones(o.milestones, o.reference_epochs, o.epochs, steps_per_epoch));

  SgdMomentum opt(o.momentum, o.weight_decay);
  opt.add(r.network.store().parameters());
  Rng data_rng = Rng::stream(o.seed, "data"), aug_rng = Rng::stream(o.seed, "augmentation");
  long step = 0;
  for (int epoch = 1; epoch <= o.epochs; ++epoch) {
    const auto order = permutation(inputs.size(), data_rng);
    double sum_loss = 0.0, hits = 0.0;
    for (long b = 0; b < steps_per_epoch; ++b, ++step) {
      std::vector<Tensor> items;
      std::vector<int> y;
      for (int i = 0; i < o.batch_size; ++i) {
        const std::size_t idx = order[b * o.batch_size + i];
        const Tensor& in = inputs[idx];
        const Crop c = choose_crop(in.dim(1), in.dim(2), win.h, win.w, Mode::train, o.mirror, aug_rng);
        items.push_back(subtract_mean(apply_crop(in, c, win.h, win.w), r.mean));
        y.push_back(labels[idx]);
      }
      opt.zero_grad();
      Tape t;
      Var logits = r.network.forward(t.constant(stack(items)), Mode::train);
      Var loss = softmax_cross_entropy(logits, y);
      check_finite(loss.value()[0], step, "classifier training");
      sum_loss += loss.value()[0];
      hits += topk_accuracy(logits.value(), y, 1) * o.batch_size;
      t.backward(loss);
      opt.step(sched.lr(step));
    }
    const Accuracy acc = evaluate_classifier(r.network, test_inputs, test_labels, r.mean, win.h, win.w);
    r.top1 = acc.top1;
    r.top5 = acc.top5;
    r.trace.add({static_cast<double>(step), static_cast<double>(epoch), sched.lr(step - 1), sum_loss / steps_per_epoch,
                 hits / (static_cast<double>(steps_per_epoch) * o.batch_size), acc.top1, acc.top5});
    if (progress) progress(r.trace);
  }
  return r;
}

// --- segmenter ------------------------------------------------------------

namespace {

std::vector<int> predict_labels(const Tensor& logits) {
  const int n = logits.dim(0), k = logits.dim(1);
  const std::size_t plane = static_cast<std::size_t>(logits.dim(2)) * logits.dim(3);
  std::vector<int> out(static_cast<std::size_t>(n) * plane);
  for (int b = 0; b < n; ++b)
    for (std::size_t i = 0; i < plane; ++i) {
      int best = 0;
      float bv = logits[(static_cast<std::size_t>(b) * k) * plane + i];
      for (int c = 1; c < k; ++c) {
        const float v = logits[(static_cast<std::size_t>(b) * k + c) * plane + i];
        if (v > bv) bv = v, best = c;
      }
      out[b * plane + i] = best;
    }
  return out;
}

}  // namespace

double evaluate_segmenter(Network& net, const std::vector<Tensor>& inputs, const Dataset& data, const std::vector<float>& mean,
                          double* pixel_accuracy) {
  require(inputs.size() == data.size() && data.has_masks(), Errc::invalid_argument, "segmentation evaluation needs masks");
  ConfusionMatrix cm(net.spec().num_classes, kIgnoreLabel);
  constexpr std::size_t kBatch = 16;
  for (std::size_t begin = 0; begin < inputs.size(); begin += kBatch) {
    std::vector<Tensor> items;
    std::vector<int> truth;
    for (std::size_t i = begin; i < std::min(begin + kBatch, inputs.size()); ++i) {
      items.push_back(subtract_mean(inputs[i], mean));
      const Sample s = data.get(i);
      truth.insert(truth.end(), s.mask.begin(), s.mask.end());
    }
    Tape t(false);
    const Tensor logits = net.forward(t.constant(stack(items)), Mode::eval).value();
    require(logits.numel() / logits.dim(1) == truth.size(), Errc::shape_mismatch, "segmenter output does not match mask size");
    cm.add(predict_labels(logits), truth);
  }
  if (pixel_accuracy) *pixel_accuracy = cm.pixel_accuracy();
  return cm.iou().mean;
}

SegmenterResult train_segmenter(const SegmenterTraining& o, CompressionModel& codec, const ClassifierResult& pretrained,
                                const Dataset& train, const Dataset& test, const Progress& progress) {
  require(o.iterations >= 1 && o.batch_size >= 1 && o.log_every >= 1, Errc::invalid_argument,
          "segmenter training needs positive iterations, batch size and log interval");
  require(train.has_masks() && test.has_masks(), Errc::invalid_argument, "segmenter training needs masks");
  const NetworkSpec& base = pretrained.network.spec();
  require(o.variant == base.variant + "-d", Errc::shape_mismatch,
          "incompatible pretrained weights: " + base.variant + " cannot initialize " + o.variant);
  const NetworkSpec spec = segmenter_spec(o.variant, train.segmentation_classes(), input_channels(codec, o.source), base.root_width);
  check_family(spec, o.source);
  require(spec.input_channels == base.input_channels, Errc::shape_mismatch,
          "incompatible pretrained weights: input channels differ");

  SegmenterResult r{Network(spec, o.seed), pretrained.mean, Trace({"step", "lr", "head_lr", "loss", "miou"}), 0.0, 0.0};
  transfer_backbone(pretrained.network, r.network);

  const std::vector<Tensor> inputs = network_inputs(codec, train, o.source);
  const std::vector<Tensor> test_inputs = network_inputs(codec, test, o.source);
  std::vector<std::vector<int>> masks;
  for (std::size_t i = 0; i < train.size(); ++i) masks.push_back(train.get(i).mask);
  const int scale = spec.label_scale();
  const Window win = crop_window(inputs.front(), o.crop, o.source);

  const Schedule sched = Schedule::poly(o.lr, o.iterations, o.power);
  SgdMomentum opt(o.momentum, o.weight_decay);
  opt.add(r.network.backbone_parameters());
  opt.add(r.network.head_parameters(), o.head_lr_mult);
  Rng data_rng = Rng::stream(o.seed, "data"), aug_rng = Rng::stream(o.seed, "augmentation");
  const Mode bn_mode = o.freeze_batch_norm ? Mode::eval : Mode::train;
  double sum_loss = 0.0;
  int n = 0;
  for (long step = 0; step < o.iterations; ++step) {
    std::vector<Tensor> items;
    std::vector<int> y;
    for (int b = 0; b < o.batch_size; ++b) {
      const std::size_t idx = static_cast<std::size_t>(data_rng.next() % inputs.size());
      const Tensor& in = inputs[idx];
      const Crop c = choose_crop(in.dim(1), in.dim(2), win.h, win.w, Mode::train, o.mirror, aug_rng);
      items.push_back(subtract_mean(apply_crop(in, c, win.h, win.w), r.mean));
      const auto m = apply_crop(masks[idx], in.dim(1) * scale, in.dim(2) * scale, c, win.h, win.w, scale);
      y.insert(y.end(), m.begin(), m.end());
    }
    opt.zero_grad();
    Tape t;
    Var loss = pixel_cross_entropy(r.network.forward(t.constant(stack(items)), bn_mode), y, kIgnoreLabel);
    check_finite(loss.value()[0], step, "segmenter training");
    sum_loss += loss.value()[0];
    ++n;
    t.backward(loss);
    opt.step(sched.lr(step));
    if ((step + 1) % o.log_every == 0 || step + 1 == o.iterations) {
      r.miou = evaluate_segmenter(r.network, test_inputs, test, r.mean, &r.pixel_accuracy);
      r.trace.add({static_cast<double>(step + 1), sched.lr(step), sched.lr(step) * o.head_lr_mult, sum_loss / n, r.miou});
      if (progress) progress(r.trace);
      sum_loss = 0.0;
      n = 0;
    }
  }
  return r;
}

// --- joint ----------------------------------------------------------------

namespace {

Tensor channel_offset(const Shape& shape, const std::vector<float>& mean) {
  Tensor t(shape);
  if (mean.empty()) return t;
  const std::size_t plane = static_cast<std::size_t>(shape[2]) * shape[3];
  for (int n = 0; n < shape[0]; ++n)
    for (int c = 0; c < shape[1]; ++c)
      std::fill_n(t.data() + (static_cast<std::size_t>(n) * shape[1] + c) * plane, plane, -mean[c]);
  return t;
}

}  // namespace

JointLoss joint_loss(Tape& tape, CompressionModel& codec, Network& net, const std::vector<float>& mean, const Tensor& rgb,
                     std::span<const int> labels, float gamma, JointMode mode) {
  require(gamma >= 0.0f, Errc::invalid_argument, "gamma must be non-negative");
  const CompressorConfig& c = codec.config();
  Var x = tape.constant(center_pixels(codec, rgb));
  auto f = codec.forward(x);
  JointLoss l;
  l.mse = mse_loss(f.x_hat, x);
  l.entropy = f.entropy;
  l.compression = rate_distortion_loss(x, f.x_hat, f.entropy, c.beta, c.target_entropy);
  l.total = scale(l.compression, gamma);
  if (mode == JointMode::joint) {
    Var in = add(f.q, tape.constant(channel_offset(f.q.shape(), mean)));
    l.ce = softmax_cross_entropy(net.forward(in, Mode::train), labels);
    l.total = add(l.total, l.ce);
  }
  return l;
}

JointResult train_joint(const JointTraining& o, CompressionModel& codec, ClassifierResult& classifier, const Dataset& train,
                        const Dataset& test, const std::vector<Tensor>& probe, const Progress& progress) {
  require(o.gamma >= 0.0f, Errc::invalid_argument, "gamma must be non-negative");
  require(o.epochs >= 1 && o.batch_size >= 1, Errc::invalid_argument, "joint training needs positive epochs and batch size");
  Network& net = classifier.network;
  check_family(net.spec(), Source::representation);
  require(net.spec().input_channels == codec.config().channels, Errc::shape_mismatch,
          "classifier expects " + std::to_string(net.spec().input_channels) + " channels, compressor produces " +
              std::to_string(codec.config().channels));
  const bool joint = o.mode == JointMode::joint;

  JointResult r;
  r.trace = Trace({"step", "epoch", "lr", "loss", "compression_loss", "mse", "entropy", "ce", "additivity"});
  r.epochs = Trace({"epoch", "top1", "top5"});
  if (!probe.empty()) r.before = evaluate_codec(codec, probe);

  const long steps_per_epoch = static_cast<long>(train.size()) / o.batch_size;
  require(steps_per_epoch >= 1, Errc::invalid_argument, "training set smaller than one batch");
  const Schedule sched = Schedule::step(o.lr, scaled_milestones(o.milestones, o.reference_epochs, o.epochs, steps_per_epoch));
  SgdMomentum codec_opt(o.momentum, 0.0f), net_opt(o.momentum, o.weight_decay);
  codec_opt.add(codec.store().parameters());
  if (joint) net_opt.add(net.store().parameters());
  const std::vector<int> test_labels = labels_of(test);
  Rng data_rng = Rng::stream(o.seed, "data"), aug_rng = Rng::stream(o.seed, "augmentation");

  long step = 0;
  for (int epoch = 1; epoch <= o.epochs; ++epoch) {
    const auto order = permutation(train.size(), data_rng);
    for (long b = 0; b < steps_per_epoch; ++b, ++step) {
      std::vector<Tensor> items;
      std::vector<int> y;
      for (int i = 0; i < o.batch_size; ++i) {
        Sample s = train.get(order[b * o.batch_size + i]);
        items.push_back(o.mirror && aug_rng.coin() ? mirror(s.image) : std::move(s.image));
        y.push_back(s.label);
      }
      codec_opt.zero_grad();
      net_opt.zero_grad();
      Tape t;
      const JointLoss jl = joint_loss(t, codec, net, classifier.mean, stack(items), y, o.gamma, o.mode);
      const double ce_value = joint ? jl.ce.value()[0] : 0.0;
      Var loss = jl.total;
      const double lv = loss.value()[0], cv = jl.compression.value()[0];
      check_finite(lv, step, "joint training");
      const double additivity = std::abs(lv - (static_cast<double>(o.gamma) * cv + ce_value));
      r.max_additivity_error = std::max(r.max_additivity_error, additivity);
      t.backward(loss);
      const float lr = sched.lr(step);
      codec_opt.step(lr);
      if (joint) net_opt.step(lr);
      r.trace.add({static_cast<double>(step + 1), static_cast<double>(epoch), lr, lv, cv, jl.mse.value()[0], jl.entropy.value()[0],
                   ce_value, additivity});
    }
    const std::vector<Tensor> test_inputs = network_inputs(codec, test, Source::representation);
    const Accuracy acc = evaluate_classifier(net, test_inputs, test_labels, classifier.mean, test_inputs.front().dim(1),
                                             test_inputs.front().dim(2));
    r.top1 = acc.top1;
    r.top5 = acc.top5;
    r.epochs.add({static_cast<double>(epoch), acc.top1, acc.top5});
    if (progress) progress(r.epochs);
  }
  if (!probe.empty()) r.after = evaluate_codec(codec, probe);
  classifier.top1 = r.top1;
  classifier.top5 = r.top5;
  return r;
}

}  // namespace dcic
