#include "dcic/dcic.h"

#include <cmath>
#include <cstring>
#include <memory>
#include <new>
#include <optional>
#include <string>

#include "dcic/bench.hpp"
#include "dcic/bytes.hpp"
#include "dcic/checkpoint.hpp"
#include "dcic/codec.hpp"
#include "dcic/config.hpp"
#include "dcic/cost.hpp"
#include "dcic/error.hpp"
#include "dcic/image.hpp"
#include "dcic/metrics.hpp"
#include "dcic/training.hpp"

struct dcic_config {
  dcic::Config config;
};

struct dcic_compressor {
  dcic::CompressionModel model;
  std::uint64_t seed = 0;
};

struct dcic_network {
  dcic::Network network;
  std::vector<float> mean;
  std::uint64_t seed = 0;
};

namespace {

thread_local std::string g_last_error;

dcic_status status_of(dcic::Errc e) {
  switch (e) {
    case dcic::Errc::invalid_argument: return DCIC_ERR_INVALID_ARGUMENT;
    case dcic::Errc::shape_mismatch: return DCIC_ERR_SHAPE_MISMATCH;
    case dcic::Errc::io: return DCIC_ERR_IO;
    case dcic::Errc::bad_magic: return DCIC_ERR_BAD_MAGIC;
    case dcic::Errc::unsupported_version: return DCIC_ERR_UNSUPPORTED_VERSION;
    case dcic::Errc::corrupt: return DCIC_ERR_CORRUPT;
    case dcic::Errc::truncated: return DCIC_ERR_TRUNCATED;
    case dcic::Errc::kind_mismatch: return DCIC_ERR_KIND_MISMATCH;
    case dcic::Errc::numeric: return DCIC_ERR_NUMERIC;
    case dcic::Errc::tape_consumed: return DCIC_ERR_TAPE_CONSUMED;
    case dcic::Errc::usage: return DCIC_ERR_USAGE;
  }
  return DCIC_ERR_INTERNAL;
}

template <class F>
dcic_status guard(F&& f) noexcept {
  try {
    f();
    g_last_error.clear();
    return DCIC_OK;
  } catch (const dcic::Error& e) {
    g_last_error = e.what();
    return status_of(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return DCIC_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return DCIC_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown failure";
    return DCIC_ERR_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  dcic::require(p != nullptr, dcic::Errc::invalid_argument, std::string(what) + " must not be NULL");
}

void copy_text(const std::string& s, char* buf, size_t cap, size_t* len) {
  if (len) *len = s.size();
  if (buf && cap > 0) {
    const size_t n = std::min(cap - 1, s.size());
    std::memcpy(buf, s.data(), n);
    buf[n] = '\0';
  }
}

/// Forwards new trace rows to a C callback, with a header whenever the table changes.
dcic::Progress forward_rows(dcic_progress_fn fn, void* user) {
  if (!fn) return {};
  struct State {
    const dcic::Trace* table = nullptr;
    std::size_t sent = 0;
  };
  auto state = std::make_shared<State>();
  return [fn, user, state](const dcic::Trace& t) {
    if (state->table != &t || t.rows().size() < state->sent) {
      state->table = &t;
      state->sent = 0;
      std::string header;
      for (const auto& c : t.columns()) header += (header.empty() ? "" : "\t") + c;
      fn(header.c_str(), user);
    }
    const std::string text = t.text();
    // rows in text() are line-aligned after the header
    std::size_t pos = text.find('\n') + 1;
    for (std::size_t i = 0; i < t.rows().size(); ++i) {
      const std::size_t end = text.find('\n', pos);
      if (i >= state->sent) fn(text.substr(pos, end - pos).c_str(), user);
      pos = end + 1;
    }
    state->sent = t.rows().size();
  };
}

void fill(dcic_quality* out, const dcic::ImageQuality& q) {
  if (!out) return;
  *out = {q.bpp, q.psnr, q.ssim, q.ms_ssim, q.hard_entropy};
}

dcic::ClassifierResult as_result(const dcic_network& n) { return {n.network, n.mean, {}, 0.0, 0.0}; }

int input_window(int crop_pixels, dcic::Source s, int full) {
  if (crop_pixels <= 0) return full;
  return s == dcic::Source::representation ? crop_pixels / 8 : crop_pixels;
}

dcic::Source source_for(const dcic_network& n, const dcic::Config& c, const char* key) {
  const dcic::Source s = dcic::parse_source(c.get(key));
  const bool compressed = n.network.spec().family == dcic::Family::compressed;
  dcic::require(compressed == (s == dcic::Source::representation), dcic::Errc::invalid_argument,
                n.network.spec().variant + " cannot consume " + dcic::source_name(s) + " inputs (" + key + ")");
  return s;
}

}  // namespace

extern "C" {

const char* dcic_last_error(void) { return g_last_error.c_str(); }

const char* dcic_status_name(dcic_status status) {
  switch (status) {
    case DCIC_OK: return "ok";
    case DCIC_ERR_INVALID_ARGUMENT: return "invalid argument";
    case DCIC_ERR_SHAPE_MISMATCH: return "shape mismatch";
    case DCIC_ERR_IO: return "i/o error";
    case DCIC_ERR_BAD_MAGIC: return "bad magic";
    case DCIC_ERR_UNSUPPORTED_VERSION: return "unsupported version";
    case DCIC_ERR_CORRUPT: return "corrupt data";
    case DCIC_ERR_TRUNCATED: return "truncated data";
    case DCIC_ERR_KIND_MISMATCH: return "kind mismatch";
    case DCIC_ERR_NUMERIC: return "numeric failure";
    case DCIC_ERR_TAPE_CONSUMED: return "tape consumed";
    case DCIC_ERR_USAGE: return "usage error";
    case DCIC_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

dcic_status dcic_config_create(dcic_config** out) {
  return guard([&] {
    need(out, "out");
    *out = new dcic_config{};
  });
}

void dcic_config_destroy(dcic_config* config) { delete config; }

dcic_status dcic_config_load(dcic_config* config, const char* path) {
  return guard([&] {
    need(config, "config");
    need(path, "path");
    config->config.load(path);
  });
}

dcic_status dcic_config_set(dcic_config* config, const char* assignment) {
  return guard([&] {
    need(config, "config");
    need(assignment, "assignment");
    config->config.set(std::string_view(assignment));
  });
}

dcic_status dcic_config_get(const dcic_config* config, const char* key, char* buf, size_t cap, size_t* len) {
  return guard([&] {
    need(config, "config");
    need(key, "key");
    copy_text(config->config.get(key), buf, cap, len);
  });
}

dcic_status dcic_config_text(const dcic_config* config, char* buf, size_t cap, size_t* len) {
  return guard([&] {
    need(config, "config");
    copy_text(config->config.text(), buf, cap, len);
  });
}

dcic_status dcic_train_compressor(const dcic_config* config, const char* trace_path, dcic_progress_fn progress, void* user,
                                  dcic_compressor** out, dcic_quality* quality) {
  return guard([&] {
    need(config, "config");
    need(out, "out");
    const dcic::CompressorTraining o = dcic::compressor_options(config->config);
    const dcic::DataSplits data = dcic::load_data(config->config, true);
    dcic::CompressorResult r = dcic::train_compressor(o, data.train, data.probe, forward_rows(progress, user));
    if (trace_path) r.trace.write(trace_path);
    fill(quality, r.quality);
    *out = new dcic_compressor{std::move(r.model), o.seed};
  });
}

dcic_status dcic_compressor_create(const dcic_config* config, dcic_compressor** out) {
  return guard([&] {
    need(config, "config");
    need(out, "out");
    const dcic::CompressorTraining o = dcic::compressor_options(config->config);
    *out = new dcic_compressor{dcic::CompressionModel(o.model, o.seed), o.seed};
  });
}

dcic_status dcic_compressor_load(const char* path, dcic_compressor** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    const auto bytes = dcic::read_file(path);
    std::uint64_t seed = 0;
    dcic::CompressionModel m = dcic::decode_compressor(bytes, &seed);
    *out = new dcic_compressor{std::move(m), seed};
  });
}

dcic_status dcic_compressor_save(const dcic_compressor* model, const char* path) {
  return guard([&] {
    need(model, "model");
    need(path, "path");
    dcic::save_checkpoint(path, model->model, model->seed);
  });
}

void dcic_compressor_destroy(dcic_compressor* model) { delete model; }

dcic_status dcic_compressor_evaluate(dcic_compressor* model, const dcic_config* config, dcic_quality* out) {
  return guard([&] {
    need(model, "model");
    need(config, "config");
    need(out, "out");
    fill(out, dcic::evaluate_codec(model->model, dcic::load_data(config->config, true).probe));
  });
}

dcic_status dcic_encode_file(dcic_compressor* model, const char* image_path, const char* coded_path, double* bpp) {
  return guard([&] {
    need(model, "model");
    need(image_path, "image path");
    need(coded_path, "coded path");
    const dcic::Tensor img = dcic::read_image(image_path);
    dcic::require(img.dim(0) == 3, dcic::Errc::invalid_argument, std::string(image_path) + " is not an RGB (P6) image");
    const auto bytes = dcic::compress_image(model->model, img);
    dcic::write_file(coded_path, bytes);
    if (bpp) *bpp = dcic::measured_bpp(bytes.size(), img.dim(2), img.dim(1));
  });
}

dcic_status dcic_decode_file(dcic_compressor* model, const char* coded_path, const char* image_path) {
  return guard([&] {
    need(model, "model");
    need(coded_path, "coded path");
    need(image_path, "image path");
    dcic::write_image(image_path, dcic::decompress_image(model->model, dcic::read_file(coded_path)));
  });
}

dcic_status dcic_train_classifier(const dcic_config* config, dcic_compressor* codec, const dcic_network* init,
                                  const char* trace_path, dcic_progress_fn progress, void* user, dcic_network** out,
                                  dcic_accuracy* accuracy) {
  return guard([&] {
    need(config, "config");
    need(codec, "codec");
    need(out, "out");
    const dcic::ClassifierTraining o = dcic::classifier_options(config->config);
    const dcic::DataSplits data = dcic::load_data(config->config, false);
    std::optional<dcic::ClassifierResult> start;
    if (init) start = as_result(*init);
    dcic::ClassifierResult r = dcic::train_classifier(o, codec->model, data.train, data.test, forward_rows(progress, user),
                                                      start ? &*start : nullptr);
    if (trace_path) r.trace.write(trace_path);
    if (accuracy) *accuracy = {r.top1, r.top5};
    *out = new dcic_network{std::move(r.network), std::move(r.mean), o.seed};
  });
}

dcic_status dcic_train_segmenter(const dcic_config* config, dcic_compressor* codec, const dcic_network* pretrained,
                                 const char* trace_path, dcic_progress_fn progress, void* user, dcic_network** out,
                                 dcic_segmentation* result) {
  return guard([&] {
    need(config, "config");
    need(codec, "codec");
    need(pretrained, "pretrained network");
    need(out, "out");
    const dcic::SegmenterTraining o = dcic::segmenter_options(config->config);
    const dcic::DataSplits data = dcic::load_data(config->config, false);
    dcic::SegmenterResult r = dcic::train_segmenter(o, codec->model, as_result(*pretrained), data.train, data.test,
                                                    forward_rows(progress, user));
    if (trace_path) r.trace.write(trace_path);
    if (result) *result = {r.miou, r.pixel_accuracy};
    *out = new dcic_network{std::move(r.network), std::move(r.mean), o.seed};
  });
}

dcic_status dcic_train_joint(const dcic_config* config, dcic_compressor* codec, dcic_network* classifier,
                             const char* trace_path, dcic_progress_fn progress, void* user, dcic_joint_result* out) {
  return guard([&] {
    need(config, "config");
    need(codec, "codec");
    need(classifier, "classifier");
    const dcic::JointTraining o = dcic::joint_options(config->config);
    const dcic::DataSplits data = dcic::load_data(config->config, true);
    dcic::ClassifierResult cls = as_result(*classifier);
    const dcic::JointResult r =
        dcic::train_joint(o, codec->model, cls, data.train, data.test, data.probe, forward_rows(progress, user));
    classifier->network = std::move(cls.network);
    if (trace_path) {
      r.trace.write(trace_path);
      r.epochs.write(std::string(trace_path) + ".epochs");
    }
    if (out) {
      out->top1 = r.top1;
      out->top5 = r.top5;
      out->max_additivity_error = r.max_additivity_error;
      fill(&out->before, r.before);
      fill(&out->after, r.after);
    }
  });
}

dcic_status dcic_network_load(const char* path, dcic_network** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    const auto bytes = dcic::read_file(path);
    const dcic::ModelKind kind = dcic::checkpoint_kind(bytes);
    dcic::require(kind != dcic::ModelKind::compressor, dcic::Errc::kind_mismatch,
                  "kind mismatch: " + std::string(path) + " holds a compressor, expected a network");
    dcic::NetworkCheckpoint c = dcic::decode_network(bytes, kind);
    *out = new dcic_network{std::move(c.network), std::move(c.mean), c.seed};
  });
}

dcic_status dcic_network_save(const dcic_network* net, const char* path) {
  return guard([&] {
    need(net, "network");
    need(path, "path");
    dcic::save_checkpoint(path, net->network, net->mean, net->seed);
  });
}

void dcic_network_destroy(dcic_network* net) { delete net; }

dcic_status dcic_network_is_segmenter(const dcic_network* net, int* out) {
  return guard([&] {
    need(net, "network");
    need(out, "out");
    *out = net->network.spec().head == dcic::Head::aspp ? 1 : 0;
  });
}

dcic_status dcic_network_variant(const dcic_network* net, char* buf, size_t cap, size_t* len) {
  return guard([&] {
    need(net, "network");
    copy_text(net->network.spec().variant, buf, cap, len);
  });
}

dcic_status dcic_eval_classifier(const dcic_config* config, dcic_compressor* codec, dcic_network* net, dcic_accuracy* out) {
  return guard([&] {
    need(config, "config");
    need(codec, "codec");
    need(net, "network");
    need(out, "out");
    dcic::require(net->network.spec().head == dcic::Head::classifier, dcic::Errc::kind_mismatch,
                  "kind mismatch: expected a classifier");
    const dcic::Source s = source_for(*net, config->config, "classifier.source");
    const dcic::DataSplits data = dcic::load_data(config->config, false);
    const auto inputs = dcic::network_inputs(codec->model, data.test, s);
    std::vector<int> labels;
    for (std::size_t i = 0; i < data.test.size(); ++i) labels.push_back(data.test.get(i).label);
    const int crop = config->config.get_int("classifier.crop");
    const dcic::Accuracy a =
        dcic::evaluate_classifier(net->network, inputs, labels, net->mean, input_window(crop, s, inputs.front().dim(1)),
                                  input_window(crop, s, inputs.front().dim(2)));
    *out = {a.top1, a.top5};
  });
}

dcic_status dcic_eval_segmenter(const dcic_config* config, dcic_compressor* codec, dcic_network* net, dcic_segmentation* out) {
  return guard([&] {
    need(config, "config");
    need(codec, "codec");
    need(net, "network");
    need(out, "out");
    dcic::require(net->network.spec().head == dcic::Head::aspp, dcic::Errc::kind_mismatch,
                  "kind mismatch: expected a segmenter");
    const dcic::Source s = source_for(*net, config->config, "segmenter.source");
    const dcic::DataSplits data = dcic::load_data(config->config, false);
    const auto inputs = dcic::network_inputs(codec->model, data.test, s);
    double pa = 0.0;
    const double m = dcic::evaluate_segmenter(net->network, inputs, data.test, net->mean, &pa);
    *out = {m, pa};
  });
}

dcic_status dcic_flops(const dcic_config* config, const char* subject, int height, int width, int channels, char* buf,
                       size_t cap, size_t* len, double* total) {
  return guard([&] {
    need(config, "config");
    need(subject, "subject");
    const std::string s = subject;
    dcic::CostReport r;
    if (s == "encoder" || s == "decoder") {
      dcic::require(channels == 3, dcic::Errc::invalid_argument, "the compressor takes 3-channel images");
      const dcic::CompressorConfig c = dcic::compressor_options(config->config).model;
      r = dcic::count_flops(c, height, width, s == "encoder" ? dcic::CompressorPart::encoder : dcic::CompressorPart::decoder);
    } else {
      const int classes = config->config.get_int("data.classes");
      const int num_classes = s.ends_with("-d") ? dcic::kSegmentationClasses : classes;
      const int base = config->config.get_int("classifier.base_width");
      r = dcic::count_flops(dcic::network_spec(s, num_classes, channels, base), height, width);
    }
    copy_text(dcic::report_text(r) + dcic::report_kv(r), buf, cap, len);
    if (total) *total = r.total_flops;
  });
}

dcic_status dcic_cost_comparison(const dcic_config* config, const char* direct_variant, const char* rgb_variant, int height,
                                 int width, char* buf, size_t cap, size_t* len, double* ratio) {
  return guard([&] {
    need(config, "config");
    need(direct_variant, "direct variant");
    need(rgb_variant, "rgb variant");
    const dcic::CompressorConfig c = dcic::compressor_options(config->config).model;
    const int classes = config->config.get_int("data.classes");
    const int base = config->config.get_int("classifier.base_width");
    const dcic::CostComparison cmp =
        dcic::cost_comparison(dcic::classifier_spec(direct_variant, classes, c.channels, base), c,
                              dcic::classifier_spec(rgb_variant, classes, 3, base), height, width);
    copy_text(dcic::comparison_text(cmp, direct_variant, rgb_variant), buf, cap, len);
    if (ratio) *ratio = cmp.ratio();
  });
}

dcic_status dcic_compare_images(const char* path_a, const char* path_b, dcic_image_metrics* out) {
  return guard([&] {
    need(path_a, "first image");
    need(path_b, "second image");
    need(out, "out");
    const dcic::Tensor a = dcic::read_image(path_a), b = dcic::read_image(path_b);
    dcic::require(a.shape() == b.shape(), dcic::Errc::shape_mismatch,
                  "images differ in size: " + dcic::shape_string(a.shape()) + " vs " + dcic::shape_string(b.shape()));
    out->psnr = dcic::psnr(a, b);
    out->ssim = dcic::ssim(a, b);
    out->ms_ssim = a.dim(1) >= 176 && a.dim(2) >= 176 ? dcic::ms_ssim(a, b) : -1.0;
  });
}

dcic_status dcic_bench(const dcic_config* config, dcic_compressor* codec, const char* direct_variant, const char* rgb_variant,
                       int height, int width, int repetitions, dcic_timing* direct, dcic_timing* pipeline, char* buf,
                       size_t cap, size_t* len) {
  return guard([&] {
    need(config, "config");
    need(direct_variant, "direct variant");
    need(rgb_variant, "rgb variant");
    std::optional<dcic::CompressionModel> own;
    dcic::CompressionModel* model = codec ? &codec->model : nullptr;
    if (!model) {
      const dcic::CompressorTraining o = dcic::compressor_options(config->config);
      own.emplace(o.model, o.seed);
      model = &*own;
    }
    const int classes = config->config.get_int("data.classes");
    const int base = config->config.get_int("classifier.base_width");
    const dcic::BenchResult r =
        dcic::run_bench(*model, dcic::classifier_spec(direct_variant, classes, model->config().channels, base),
                        dcic::classifier_spec(rgb_variant, classes, 3, base), height, width, repetitions);
    auto conv = [](const dcic::TimingStats& t) {
      return dcic_timing{t.flops, t.mean(), t.median(), t.stddev(), static_cast<int>(t.samples.size())};
    };
    if (direct) *direct = conv(r.direct);
    if (pipeline) *pipeline = conv(r.pipeline);
    copy_text(dcic::bench_text(r), buf, cap, len);
  });
}

dcic_status dcic_generate_data(const dcic_config* config, const char* directory) {
  return guard([&] {
    need(config, "config");
    need(directory, "directory");
    const dcic::DataSplits d = dcic::load_data(config->config, false);
    dcic::write_dataset(d.train, std::string(directory) + "/train");
    dcic::write_dataset(d.test, std::string(directory) + "/test");
  });
}

}  // extern "C"
