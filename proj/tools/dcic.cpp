// Command-line front end over the C interface.
#include <cstdio>
#include <cstdlib>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "CLI11.hpp"
#include "dcic/dcic.h"

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

/// A failed library call; usage-class statuses map to exit code 1.
struct Failure : std::runtime_error {
  dcic_status status;
  Failure(dcic_status s, const std::string& what) : std::runtime_error(what), status(s) {}
};

void check(dcic_status s) {
  if (s != DCIC_OK) throw Failure(s, std::string(dcic_status_name(s)) + ": " + dcic_last_error());
}

[[noreturn]] void usage_error(const std::string& what) { throw Failure(DCIC_ERR_USAGE, what); }

struct ConfigDeleter {
  void operator()(dcic_config* c) const { dcic_config_destroy(c); }
};
struct CompressorDeleter {
  void operator()(dcic_compressor* c) const { dcic_compressor_destroy(c); }
};
struct NetworkDeleter {
  void operator()(dcic_network* n) const { dcic_network_destroy(n); }
};
using ConfigPtr = std::unique_ptr<dcic_config, ConfigDeleter>;
using CompressorPtr = std::unique_ptr<dcic_compressor, CompressorDeleter>;
using NetworkPtr = std::unique_ptr<dcic_network, NetworkDeleter>;

/// Text from a buffer-filling call, retried with the reported length.
template <class F>
std::string text_of(F&& call) {
  std::vector<char> buf(1 << 16);
  size_t len = 0;
  check(call(buf.data(), buf.size(), &len));
  if (len >= buf.size()) {
    buf.resize(len + 1);
    check(call(buf.data(), buf.size(), &len));
  }
  return std::string(buf.data(), len);
}

void print_row(const char* row, void*) {
  std::printf("%s\n", row);
  std::fflush(stdout);
}

struct Common {
  std::string config_file;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_file, "key=value settings file");
  cmd->add_option("--set", c.overrides, "override one setting (key=value), may repeat");
}

ConfigPtr make_config(const Common& c) {
  dcic_config* raw = nullptr;
  check(dcic_config_create(&raw));
  ConfigPtr cfg(raw);
  if (!c.config_file.empty()) check(dcic_config_load(cfg.get(), c.config_file.c_str()));
  for (const std::string& o : c.overrides) check(dcic_config_set(cfg.get(), o.c_str()));
  return cfg;
}

CompressorPtr load_compressor(const std::string& path) {
  dcic_compressor* raw = nullptr;
  check(dcic_compressor_load(path.c_str(), &raw));
  return CompressorPtr(raw);
}

NetworkPtr load_network(const std::string& path) {
  dcic_network* raw = nullptr;
  check(dcic_network_load(path.c_str(), &raw));
  return NetworkPtr(raw);
}

const char* opt(const std::string& s) { return s.empty() ? nullptr : s.c_str(); }

/// "HxW" or "HxWxC".
std::vector<int> parse_dims(const std::string& s, std::size_t min_parts, std::size_t max_parts) {
  std::vector<int> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const std::size_t x = s.find('x', pos);
    const std::string part = s.substr(pos, x == std::string::npos ? std::string::npos : x - pos);
    char* end = nullptr;
    const long v = std::strtol(part.c_str(), &end, 10);
    if (part.empty() || *end != '\0' || v <= 0 || v > 1 << 16) usage_error("bad dimensions '" + s + "'");
    out.push_back(static_cast<int>(v));
    if (x == std::string::npos) break;
    pos = x + 1;
  }
  if (out.size() < min_parts || out.size() > max_parts) usage_error("bad dimensions '" + s + "'");
  return out;
}

void print_quality(const char* label, const dcic_quality& q) {
  std::printf("%s\tbpp=%.6f\thard_entropy=%.6f\tpsnr=%.4f\tssim=%.6f\tms_ssim=%.6f\n", label, q.bpp, q.hard_entropy, q.psnr,
              q.ssim, q.ms_ssim);
}

}  // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  // training allocates and frees large activation buffers every step
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  CLI::App app{"Learned image compression with inference on compressed representations", "dcic"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "help for every subcommand");

  Common common;
  std::string out, trace, compressor, model, in, init, pretrained, classifier, out_compressor, out_classifier;
  std::string variant, input_dims, rgb = "ResNet-50", image_dims = "224x224", image_a, image_b;
  int reps = 3;
  int classes = 1000;
  bool compare = false;

  auto* tc = app.add_subcommand("train-compressor", "train the compression autoencoder");
  add_common(tc, common);
  tc->add_option("--out", out, "checkpoint to write")->required();
  tc->add_option("--trace", trace, "trace file (tab separated)");

  auto* tcl = app.add_subcommand("train-classifier", "train a classifier on representations or pixels");
  add_common(tcl, common);
  tcl->add_option("--compressor", compressor, "compressor checkpoint")->required();
  tcl->add_option("--init", init, "continue from this classifier checkpoint");
  tcl->add_option("--out", out, "checkpoint to write")->required();
  tcl->add_option("--trace", trace, "trace file");

  auto* ts = app.add_subcommand("train-segmenter", "train a dilated segmentation network");
  add_common(ts, common);
  ts->add_option("--compressor", compressor, "compressor checkpoint")->required();
  ts->add_option("--pretrained", pretrained, "classifier checkpoint with the backbone")->required();
  ts->add_option("--out", out, "checkpoint to write")->required();
  ts->add_option("--trace", trace, "trace file");

  auto* tj = app.add_subcommand("train-joint", "finetune compressor and classifier together (or the compressor alone)");
  add_common(tj, common);
  tj->add_option("--compressor", compressor, "compressor checkpoint")->required();
  tj->add_option("--classifier", classifier, "classifier checkpoint")->required();
  tj->add_option("--out-compressor", out_compressor, "updated compressor")->required();
  tj->add_option("--out-classifier", out_classifier, "updated classifier");
  tj->add_option("--trace", trace, "per-step trace; per-epoch accuracy goes to <trace>.epochs");

  auto* enc = app.add_subcommand("encode", "compress a PPM image");
  add_common(enc, common);
  enc->add_option("--model", model, "compressor checkpoint")->required();
  enc->add_option("--in", in, "P6 image")->required();
  enc->add_option("--out", out, "coded file")->required();

  auto* dec = app.add_subcommand("decode", "decompress to a PPM image");
  add_common(dec, common);
  dec->add_option("--model", model, "compressor checkpoint")->required();
  dec->add_option("--in", in, "coded file")->required();
  dec->add_option("--out", out, "P6 image")->required();

  auto* ec = app.add_subcommand("eval-class", "classification accuracy on the test split");
  add_common(ec, common);
  ec->add_option("--compressor", compressor, "compressor checkpoint")->required();
  ec->add_option("--model", model, "classifier checkpoint")->required();

  auto* es = app.add_subcommand("eval-seg", "segmentation mIoU on the test split");
  add_common(es, common);
  es->add_option("--compressor", compressor, "compressor checkpoint")->required();
  es->add_option("--model", model, "segmenter checkpoint")->required();

  auto* fl = app.add_subcommand("flops", "multiply-accumulate counts per layer");
  add_common(fl, common);
  fl->add_option("--variant", variant, "network variant, or encoder / decoder")->required();
  fl->add_option("--input", input_dims, "HxWxC input (default: 224x224x3, or 28x28xC for compressed variants)");
  fl->add_option("--classes", classes, "classifier outputs")->capture_default_str();
  fl->add_flag("--compare", compare, "compare --variant on representations against decoder + --rgb");
  fl->add_option("--rgb", rgb, "RGB network for --compare")->capture_default_str();
  fl->add_option("--image", image_dims, "HxW image for --compare")->capture_default_str();

  auto* me = app.add_subcommand("metrics", "PSNR, SSIM and MS-SSIM between two PPM images");
  add_common(me, common);
  me->add_option("--a", image_a, "first image")->required();
  me->add_option("--b", image_b, "second image")->required();

  auto* be = app.add_subcommand("bench", "per-image wall clock: direct inference vs decode + RGB network");
  add_common(be, common);
  be->add_option("--variant", variant, "compressed-domain network")->default_val("cResNet-51");
  be->add_option("--rgb", rgb, "RGB network")->capture_default_str();
  be->add_option("--image", image_dims, "HxW image")->capture_default_str();
  be->add_option("--reps", reps, "repetitions, the first is discarded (>= 3)")->capture_default_str();
  be->add_option("--classes", classes, "classifier outputs")->capture_default_str();
  be->add_option("--compressor", compressor, "compressor checkpoint (default: untrained, from the config)");

  auto* gd = app.add_subcommand("gen-data", "write the synthetic train/test splits as image folders");
  add_common(gd, common);
  gd->add_option("--out", out, "output directory")->required();

  if (argc <= 1) {
    std::fputs(app.help().c_str(), stdout);
    return kExitUsage;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    // all work runs on one thread, so any valid cap is already met
    if (const char* threads = std::getenv("DCIC_THREADS")) {
      char* end = nullptr;
      const long n = std::strtol(threads, &end, 10);
      if (*threads == '\0' || *end != '\0' || n < 1)
        usage_error(std::string("DCIC_THREADS must be a positive integer, got '") + threads + "'");
    }
    ConfigPtr cfg = make_config(common);
    auto* cmd = app.get_subcommands().front();
    const std::string name = cmd->get_name();

    if (name == "train-compressor") {
      dcic_compressor* raw = nullptr;
      dcic_quality q{};
      check(dcic_train_compressor(cfg.get(), opt(trace), print_row, nullptr, &raw, &q));
      CompressorPtr m(raw);
      check(dcic_compressor_save(m.get(), out.c_str()));
      print_quality("probe", q);
    } else if (name == "train-classifier") {
      CompressorPtr codec = load_compressor(compressor);
      NetworkPtr start = init.empty() ? nullptr : load_network(init);
      dcic_network* raw = nullptr;
      dcic_accuracy a{};
      check(dcic_train_classifier(cfg.get(), codec.get(), start.get(), opt(trace), print_row, nullptr, &raw, &a));
      NetworkPtr net(raw);
      check(dcic_network_save(net.get(), out.c_str()));
      std::printf("test\ttop1=%.6f\ttop5=%.6f\n", a.top1, a.top5);
    } else if (name == "train-segmenter") {
      CompressorPtr codec = load_compressor(compressor);
      NetworkPtr base = load_network(pretrained);
      dcic_network* raw = nullptr;
      dcic_segmentation s{};
      check(dcic_train_segmenter(cfg.get(), codec.get(), base.get(), opt(trace), print_row, nullptr, &raw, &s));
      NetworkPtr net(raw);
      check(dcic_network_save(net.get(), out.c_str()));
      std::printf("test\tmiou=%.6f\tpixel_accuracy=%.6f\n", s.miou, s.pixel_accuracy);
    } else if (name == "train-joint") {
      CompressorPtr codec = load_compressor(compressor);
      NetworkPtr net = load_network(classifier);
      dcic_joint_result r{};
      check(dcic_train_joint(cfg.get(), codec.get(), net.get(), opt(trace), print_row, nullptr, &r));
      check(dcic_compressor_save(codec.get(), out_compressor.c_str()));
      if (!out_classifier.empty()) check(dcic_network_save(net.get(), out_classifier.c_str()));
      print_quality("before", r.before);
      print_quality("after", r.after);
      std::printf("test\ttop1=%.6f\ttop5=%.6f\tmax_additivity_error=%.3g\n", r.top1, r.top5, r.max_additivity_error);
    } else if (name == "encode") {
      CompressorPtr codec = load_compressor(model);
      double bpp = 0.0;
      check(dcic_encode_file(codec.get(), in.c_str(), out.c_str(), &bpp));
      std::printf("bpp=%.6f\n", bpp);
    } else if (name == "decode") {
      CompressorPtr codec = load_compressor(model);
      check(dcic_decode_file(codec.get(), in.c_str(), out.c_str()));
    } else if (name == "eval-class") {
      CompressorPtr codec = load_compressor(compressor);
      NetworkPtr net = load_network(model);
      dcic_accuracy a{};
      check(dcic_eval_classifier(cfg.get(), codec.get(), net.get(), &a));
      std::printf("top1=%.6f\ttop5=%.6f\n", a.top1, a.top5);
    } else if (name == "eval-seg") {
      CompressorPtr codec = load_compressor(compressor);
      NetworkPtr net = load_network(model);
      dcic_segmentation s{};
      check(dcic_eval_segmenter(cfg.get(), codec.get(), net.get(), &s));
      std::printf("miou=%.6f\tpixel_accuracy=%.6f\n", s.miou, s.pixel_accuracy);
    } else if (name == "flops") {
      check(dcic_config_set(cfg.get(), ("data.classes=" + std::to_string(classes)).c_str()));
      if (compare) {
        const auto hw = parse_dims(image_dims, 2, 2);
        double ratio = 0.0;
        std::fputs(text_of([&](char* b, size_t c, size_t* l) {
                     return dcic_cost_comparison(cfg.get(), variant.c_str(), rgb.c_str(), hw[0], hw[1], b, c, l, &ratio);
                   }).c_str(),
                   stdout);
      } else {
        std::string dims = input_dims;
        if (dims.empty()) {
          const std::string channels = text_of([&](char* b, size_t c, size_t* l) {
            return dcic_config_get(cfg.get(), "compressor.channels", b, c, l);
          });
          dims = variant.starts_with("cResNet") ? "28x28x" + channels : "224x224x3";
        }
        const auto d = parse_dims(dims, 3, 3);
        std::fputs(text_of([&](char* b, size_t c, size_t* l) {
                     return dcic_flops(cfg.get(), variant.c_str(), d[0], d[1], d[2], b, c, l, nullptr);
                   }).c_str(),
                   stdout);
      }
    } else if (name == "metrics") {
      dcic_image_metrics m{};
      check(dcic_compare_images(image_a.c_str(), image_b.c_str(), &m));
      std::printf("psnr=%.4f\tssim=%.6f\t", m.psnr, m.ssim);
      if (m.ms_ssim < 0) std::printf("ms_ssim=n/a (needs at least 176x176)\n");
      else std::printf("ms_ssim=%.6f\n", m.ms_ssim);
    } else if (name == "bench") {
      if (reps < 3) usage_error("--reps must be at least 3 (the first run is a warm-up)");
      check(dcic_config_set(cfg.get(), ("data.classes=" + std::to_string(classes)).c_str()));
      const auto hw = parse_dims(image_dims, 2, 2);
      CompressorPtr codec = compressor.empty() ? nullptr : load_compressor(compressor);
      std::fputs(text_of([&](char* b, size_t c, size_t* l) {
                   return dcic_bench(cfg.get(), codec.get(), variant.c_str(), rgb.c_str(), hw[0], hw[1], reps, nullptr,
                                     nullptr, b, c, l);
                 }).c_str(),
                 stdout);
    } else if (name == "gen-data") {
      check(dcic_generate_data(cfg.get(), out.c_str()));
    }
    return 0;
  } catch (const Failure& f) {
    std::fprintf(stderr, "dcic: %s\n", f.what());
    return f.status == DCIC_ERR_USAGE ? kExitUsage : kExitRuntime;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "dcic: %s\n", e.what());
    return kExitRuntime;
  }
}
