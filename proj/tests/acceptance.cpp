// Acceptance runner: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <malloc.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "checks.hpp"
#include "dcic/bitstream.hpp"
#include "dcic/checkpoint.hpp"
#include "dcic/config.hpp"
#include "dcic/cost.hpp"
#include "dcic/error.hpp"
#include "dcic/metrics.hpp"
#include "dcic/training.hpp"

using namespace dcic;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

int failures = 0;

void report(int id, const std::string& name, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("error: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!o.pass) ++failures;
  std::printf("%s %2d %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str(), secs);
  std::fflush(stdout);
}

void note(const std::string& s) {
  std::fprintf(stderr, "  %s\n", s.c_str());
  std::fflush(stderr);
}

Progress echo(const std::string& label) {
  return [label](const Trace& t) {
    std::string line = label;
    const auto& row = t.rows().back();
    for (std::size_t i = 0; i < row.size(); ++i) line += " " + t.columns()[i] + "=" + fmt("%.4g", row[i]);
    note(line);
  };
}

// --- 1, 2 ---------------------------------------------------------------

Outcome flop_table() {
  struct Row {
    const char* variant;
    int h, c;
    double expect;
  };
  const Row rows[] = {{"ResNet-50", 224, 3, 3.86e9},  {"ResNet-71", 224, 3, 5.38e9}, {"cResNet-39", 28, 8, 2.95e9},
                      {"cResNet-51", 28, 8, 3.83e9}, {"cResNet-72", 28, 8, 5.36e9}};
  bool ok = true;
  std::string detail;
  for (const Row& r : rows) {
    const double got = count_flops(classifier_spec(r.variant, 1000, r.c), r.h, r.h).total_flops;
    const double rel = std::abs(got / r.expect - 1.0);
    ok = ok && rel <= 0.02;
    detail += fmt("%s %.3fe9 ", r.variant, got / 1e9);
  }
  CompressorConfig k;
  k.channels = 32;
  const double enc = count_flops(k, 224, 224, CompressorPart::encoder).total_flops;
  ok = ok && std::abs(enc / 3.56e9 - 1.0) <= 0.02;
  detail += fmt("encoder(C=32) %.3fe9", enc / 1e9);
  return {ok, detail};
}

Outcome cost_claim() {
  CompressorConfig k;
  k.channels = 8;
  const CostComparison c =
      cost_comparison(classifier_spec("cResNet-51", 1000, 8), k, classifier_spec("ResNet-50", 1000, 3), 224, 224);
  return {c.ratio() >= 1.5 && c.ratio() <= 2.0,
          fmt("(decoder %.3fe9 + ResNet-50 %.3fe9) / cResNet-51 %.3fe9 = %.3f", c.decoder / 1e9, c.rgb_network / 1e9,
              c.direct / 1e9, c.ratio())};
}

// --- 4, 5, 6, 9 ---------------------------------------------------------

double smoothed_bits(const std::vector<std::uint8_t>& symbols, int levels) {
  const std::vector<std::uint32_t> f = symbol_frequencies(symbols, levels);
  double total = 0.0;
  for (auto v : f) total += v;
  double bits = 0.0;
  for (std::uint8_t s : symbols) bits -= std::log2(f[s] / total);
  return bits;
}

double empirical_bits(const std::vector<std::uint8_t>& symbols, int levels) {
  std::vector<double> n(static_cast<std::size_t>(levels), 0.0);
  for (std::uint8_t s : symbols) n[s] += 1.0;
  double bits = 0.0;
  for (double v : n)
    if (v > 0) bits -= v * std::log2(v / static_cast<double>(symbols.size()));
  return bits;
}

Outcome codec_lossless() {
  Rng rng(2024);
  int mismatches = 0, over = 0;
  double worst_margin = -1e300;
  for (int trial = 0; trial < 1000; ++trial) {
    const int L = 2 + rng.below(15);
    SymbolMap m;
    m.width = static_cast<std::uint32_t>(8 * (1 + rng.below(64)));
    m.height = static_cast<std::uint32_t>(8 * (1 + rng.below(64)));
    m.channels = 1 + rng.below(32);
    for (int j = 0; j < L; ++j) m.centers.push_back(rng.uniform(-2.0f, 2.0f));
    m.symbols.resize(m.expected_count());
    // mix of uniform and peaked sources
    const float peak = rng.uniform();
    const int mode = rng.below(L);
    for (auto& s : m.symbols) s = static_cast<std::uint8_t>(rng.uniform() < peak ? mode : rng.below(L));
    const auto bytes = serialize(m);
    const SymbolMap back = deserialize(bytes);
    if (back.symbols != m.symbols || back.centers != m.centers || back.width != m.width || back.height != m.height ||
        back.channels != m.channels)
      ++mismatches;
    const double payload = 8.0 * static_cast<double>(bytes.size() - coded_header_size(static_cast<std::size_t>(L)));
    const double penalty = smoothed_bits(m.symbols, L) - empirical_bits(m.symbols, L);
    const double bound = empirical_bits(m.symbols, L) + 64.0 + penalty;
    if (payload > bound) ++over;
    worst_margin = std::max(worst_margin, payload - bound);
  }
  return {mismatches == 0 && over == 0,
          fmt("1000 maps, %d mismatches, %d over the bound, worst payload - bound = %.1f bits", mismatches, over, worst_margin)};
}

Outcome gradients() {
  constexpr double tol = 1e-3;
  bool ok = true;
  double worst = 0.0;
  std::string worst_name;
  int checked = 0;
  for (const checks::OpResult& r : checks::op_gradients(20, 99)) {
    ok = ok && r.worst < tol;
    if (r.worst >= worst) {
      worst = r.worst;
      worst_name = r.op;
    }
    if (r.worst >= tol) note(fmt("%s rel err %.3g", r.op.c_str(), r.worst));
    ++checked;
  }
  Rng rng(5);
  double codec = 0.0, net = 0.0;
  for (int i = 0; i < 20; ++i) {
    const auto a = checks::codec_path(i, rng);
    const auto b = checks::cresnet_path(i, rng);
    codec = std::max(codec, std::max(a.rel_err, a.forward_rel_diff));
    net = std::max(net, std::max(b.rel_err, b.forward_rel_diff));
  }
  ok = ok && codec < tol && net < tol;
  return {ok, fmt("%d ops x 20 instances, worst op %s %.2g; encoder-quantizer-decoder-MSE %.2g; two-block cResNet %.2g", checked,
                  worst_name.c_str(), worst, codec, net)};
}

Outcome quantizer() {
  const auto q = checks::quantizer_contract(50, 7);
  return {q.off_center == 0 && q.ste_vs_soft < 1e-3 && q.hinge_gradient == 0.0,
          fmt("%d instances: %d forward values off the center set, STE vs soft derivative %.2g, rate gradient below target %g",
              q.instances, q.off_center, q.ste_vs_soft, q.hinge_gradient)};
}

Outcome metrics() {
  Rng rng(3);
  Tensor x({3, 192, 192}), y({3, 192, 192});
  for (float& v : x.values()) v = std::round(rng.uniform(0.0f, 255.0f));
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] = std::clamp(x[i] + std::round(rng.normal() * 20.0f), 0.0f, 255.0f);
  const double s_self = ssim(x, x);
  const double ms_xy = ms_ssim(x, y), ms_yx = ms_ssim(y, x);
  const double p = psnr_from_mse(1.0);
  // truth half class 0, half class 1; prediction all class 0: IoU (1/2, 0)
  const double iou = miou(std::vector<int>{0, 0, 0, 0}, std::vector<int>{0, 0, 1, 1}, 2).mean;
  bool topk_ok = true;
  for (int trial = 0; trial < 100; ++trial) {
    Tensor logits({16, 10});
    for (float& v : logits.values()) v = rng.normal();
    std::vector<int> labels(16);
    for (int& l : labels) l = rng.below(10);
    topk_ok = topk_ok && topk_accuracy(logits, labels, 5) >= topk_accuracy(logits, labels, 1);
  }
  const bool ok = s_self == 1.0 && ms_xy == ms_yx && std::abs(p - 48.13) <= 0.01 && iou == 0.25 && topk_ok;
  return {ok, fmt("SSIM(x,x)=%.6f MS-SSIM %.6f/%.6f PSNR(MSE=1)=%.4f mIoU(2x2)=%.4f top5>=top1 %s", s_self, ms_xy, ms_yx, p, iou,
                  topk_ok ? "yes" : "no")};
}

// --- 3, 7, 8 ------------------------------------------------------------

struct Desk {
  Config config;
  DataSplits data;
  std::uint64_t seed = 1;
  std::optional<CompressionModel> codec;
  std::optional<ClassifierResult> classifier;
};

CompressionModel clone(const CompressionModel& m) { return decode_compressor(encode_checkpoint(m, 0)); }

ClassifierResult clone(const ClassifierResult& c) {
  NetworkCheckpoint n = decode_network(encode_checkpoint(c.network, c.mean, 0), ModelKind::classifier);
  ClassifierResult out{std::move(n.network), std::move(n.mean), c.trace, c.top1, c.top5};
  return out;
}

Outcome desk_compressor(Desk& d) {
  CompressorResult r = train_compressor(compressor_options(d.config), d.data.train, d.data.probe, echo("compressor"));
  const CompressorConfig& k = r.model.config();
  const double nominal = nominal_bpp(k.target_entropy, k.channels);
  const double soft_h = r.trace.last("entropy");
  const double rel = std::abs(r.quality.bpp / nominal - 1.0);
  const bool ok = r.quality.hard_entropy <= 0.9 && soft_h <= 0.9 && rel <= 0.15;
  const std::string detail =
      fmt("C=%d H_t=%.2f beta=%.0f, %d iterations: H(q) soft %.3f / empirical %.3f bits, bpp %.4f vs nominal %.4f (%.1f%%), "
          "PSNR %.2f dB",
          k.channels, k.target_entropy, k.beta, compressor_options(d.config).iterations, soft_h, r.quality.hard_entropy,
          r.quality.bpp, nominal, 100.0 * rel, r.quality.psnr);
  d.codec.emplace(std::move(r.model));
  return {ok, detail};
}

Outcome desk_learning(Desk& d) {
  require(d.codec.has_value(), Errc::invalid_argument, "no desk compressor (criterion 3 failed to train one)");
  ClassifierTraining rep = classifier_options(d.config);
  rep.variant = "cResNet-39";
  rep.source = Source::representation;
  ClassifierResult direct = train_classifier(rep, *d.codec, d.data.train, d.data.test, echo("cResNet-39"));

  ClassifierTraining rgb = rep;
  rgb.variant = "ResNet-50";
  rgb.source = Source::decoded_rgb;
  const ClassifierResult decoded = train_classifier(rgb, *d.codec, d.data.train, d.data.test, echo("ResNet-50"));

  SegmenterTraining seg = segmenter_options(d.config);
  seg.variant = "cResNet-39-d";
  const SegmenterResult s = train_segmenter(seg, *d.codec, direct, d.data.train, d.data.test, echo("cResNet-39-d"));

  const double gap = decoded.top1 - direct.top1;
  const bool ok = direct.top1 >= 0.80 && std::abs(gap) <= 0.05 && s.miou >= 0.5;
  const std::string detail = fmt("cResNet-39 on representations top-1 %.3f; ResNet-50 on decoded top-1 %.3f (gap %+.3f); "
                                 "cResNet-39-d mIoU %.3f",
                                 direct.top1, decoded.top1, gap, s.miou);
  d.classifier.emplace(std::move(direct));
  return {ok, detail};
}

Outcome joint_direction(Desk& d) {
  require(d.codec.has_value() && d.classifier.has_value(), Errc::invalid_argument, "no desk compressor and classifier");
  const JointTraining opts = joint_options(d.config);

  CompressionModel jc = clone(*d.codec);
  ClassifierResult jn = clone(*d.classifier);
  JointTraining joint = opts;
  joint.mode = JointMode::joint;
  const JointResult j = train_joint(joint, jc, jn, d.data.train, d.data.test, d.data.probe, echo("joint"));

  // control: the same schedule on the compressor alone, then a classifier
  // trained from scratch on the new operating point and finetuned with the
  // joint schedule.
  CompressionModel cc = clone(*d.codec);
  ClassifierResult cn = clone(*d.classifier);
  JointTraining control = opts;
  control.mode = JointMode::compression_only;
  const JointResult c = train_joint(control, cc, cn, d.data.train, d.data.test, d.data.probe, echo("control"));
  ClassifierTraining scratch = classifier_options(d.config);
  const ClassifierResult fresh = train_classifier(scratch, cc, d.data.train, d.data.test, echo("control classifier"));
  ClassifierTraining finetune = scratch;
  finetune.epochs = opts.epochs;
  finetune.lr = opts.lr;
  finetune.milestones = opts.milestones;
  finetune.reference_epochs = opts.reference_epochs;
  finetune.batch_size = opts.batch_size;
  finetune.crop = 0;  // joint trains and evaluates on whole maps
  const ClassifierResult tuned =
      train_classifier(finetune, cc, d.data.train, d.data.test, echo("control finetune"), &fresh);

  const bool ok = j.top1 >= tuned.top1 - 0.01 && j.max_additivity_error < 1e-6;
  return {ok, fmt("joint top-1 %.3f at %.4f bpp vs control %.3f at %.4f bpp (baseline %.3f at %.4f bpp); "
                  "max |L - (gamma Lcomp + Lce)| = %.2g over %zu logged steps",
                  j.top1, j.after.bpp, tuned.top1, c.after.bpp, d.classifier->top1, j.before.bpp, j.max_additivity_error,
                  j.trace.rows().size())};
}

// --- 10 -----------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome reproducibility(const std::string& cli, const std::string& cfg, const fs::path& work) {
  fs::remove_all(work);
  fs::create_directories(work);
  auto run = [&](const std::string& args) {
    const std::string cmd = "\"" + cli + "\" " + args + " --config \"" + cfg + "\" > /dev/null 2>&1";
    if (std::system(cmd.c_str()) != 0) throw std::runtime_error("command failed: " + cmd);
  };
  const std::string w = work.string() + "/";
  for (const char* i : {"1", "2"}) {
    const std::string s(i);
    run("train-compressor --out " + w + "codec" + s + ".dcic --trace " + w + "codec" + s + ".tsv");
    run("train-classifier --compressor " + w + "codec1.dcic --out " + w + "cls" + s + ".dcic --trace " + w + "cls" + s + ".tsv");
    run("train-segmenter --compressor " + w + "codec1.dcic --pretrained " + w + "cls1.dcic --out " + w + "seg" + s +
        ".dcic --trace " + w + "seg" + s + ".tsv");
    run("train-joint --compressor " + w + "codec1.dcic --classifier " + w + "cls1.dcic --out-compressor " + w + "jc" + s +
        ".dcic --out-classifier " + w + "jn" + s + ".dcic --trace " + w + "joint" + s + ".tsv");
    run("gen-data --out " + w + "data" + s);
    run("encode --model " + w + "codec1.dcic --in " + w + "data1/test/000000.ppm --out " + w + "img" + s + ".dcr");
    run("decode --model " + w + "codec1.dcic --in " + w + "img1.dcr --out " + w + "img" + s + ".ppm");
  }
  int compared = 0, differ = 0;
  for (const char* f : {"codec%.dcic", "codec%.tsv", "cls%.dcic", "cls%.tsv", "seg%.dcic", "seg%.tsv", "jc%.dcic", "jn%.dcic",
                        "joint%.tsv", "joint%.tsv.epochs", "img%.dcr", "img%.ppm", "data%/train/manifest.tsv",
                        "data%/test/000003.ppm"}) {
    std::string a(f), b(f);
    a.replace(a.find('%'), 1, "1");
    b.replace(b.find('%'), 1, "2");
    const std::string x = slurp(work / a), y = slurp(work / b);
    ++compared;
    if (x.empty() || x != y) {
      ++differ;
      note("differs or empty: " + a);
    }
  }
  return {differ == 0, fmt("7 subcommands run twice, %d output files compared byte for byte, %d differ", compared, differ)};
}

}  // namespace

int main(int argc, char** argv) {
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);

  CLI::App app{"acceptance checks"};
  std::string desk_cfg, small_cfg, cli, work = (fs::temp_directory_path() / "dcic_acceptance").string();
  std::vector<int> only;
  app.add_option("--desk", desk_cfg, "configuration for the desk-scale training runs")->required();
  app.add_option("--small", small_cfg, "small configuration for the reproducibility runs")->required();
  app.add_option("--cli", cli, "command line tool")->required();
  app.add_option("--work", work, "scratch directory")->capture_default_str();
  app.add_option("--only", only, "run only these criteria");
  CLI11_PARSE(app, argc, argv);

  auto wanted = [&](int id) { return only.empty() || std::find(only.begin(), only.end(), id) != only.end(); };

  Desk desk;
  desk.config.load(desk_cfg);
  desk.seed = desk.config.get_u64("seed");
  if (wanted(3) || wanted(7) || wanted(8)) desk.data = load_data(desk.config, true);

  if (wanted(1)) report(1, "FLOP table", flop_table);
  if (wanted(2)) report(2, "cost saving", cost_claim);
  if (wanted(3) || wanted(7) || wanted(8)) report(3, "bpp consistency", [&] { return desk_compressor(desk); });
  if (wanted(4)) report(4, "codec losslessness", codec_lossless);
  if (wanted(5)) report(5, "gradient correctness", gradients);
  if (wanted(6)) report(6, "quantizer contract", quantizer);
  if (wanted(7) || wanted(8)) report(7, "desk-scale learning", [&] { return desk_learning(desk); });
  if (wanted(8)) report(8, "joint training direction", [&] { return joint_direction(desk); });
  if (wanted(9)) report(9, "metrics validity", metrics);
  if (wanted(10)) report(10, "reproducibility", [&] { return reproducibility(cli, small_cfg, fs::path(work) / "repro"); });

  std::printf("%s: %d failing\n", failures == 0 ? "ALL PASS" : "FAILURES", failures);
  return failures == 0 ? 0 : 1;
}
