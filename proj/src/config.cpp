#include "dcic/config.hpp"

#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdlib>

#include "dcic/bytes.hpp"
#include "dcic/error.hpp"

namespace dcic {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* want) {
  fail(Errc::usage, "setting " + key + "=" + value + " is not " + want);
}

Source source_setting(const Config& c, const std::string& key) {
  try {
    return parse_source(c.get(key));
  } catch (const Error& e) {
    fail(Errc::usage, key + ": " + e.what());
  }
}

}  // namespace

const std::map<std::string, std::string>& Config::defaults() {
  static const std::map<std::string, std::string> d = {
      {"seed", "1"},

      {"data.kind", "synthetic"},
      {"data.size", "64"},
      {"data.classes", "10"},
      {"data.train", "2000"},
      {"data.test", "500"},
      {"data.train_manifest", ""},
      {"data.test_manifest", ""},
      {"data.probe_mosaics", "4"},
      {"data.probe_side", "4"},

      {"compressor.channels", "8"},
      {"compressor.levels", "6"},
      {"compressor.sigma", "1"},
      {"compressor.center_range", "2"},
      {"compressor.beta", "600"},
      {"compressor.target_entropy", "0.8"},
      {"compressor.encoder_width1", "64"},
      {"compressor.encoder_width2", "128"},
      {"compressor.decoder_width1", "128"},
      {"compressor.decoder_width2", "64"},
      {"compressor.decoder_width3", "32"},
      {"compressor.residual_units", "3"},
      {"compressor.iterations", "20000"},
      {"compressor.batch_size", "30"},
      {"compressor.lr", "0.001"},
      {"compressor.log_every", "100"},
      {"compressor.mirror", "true"},

      {"classifier.variant", "cResNet-39"},
      {"classifier.base_width", "64"},
      {"classifier.source", "representation"},
      {"classifier.epochs", "28"},
      {"classifier.batch_size", "64"},
      {"classifier.lr", "0.025"},
      {"classifier.momentum", "0.9"},
      {"classifier.weight_decay", "0.0001"},
      {"classifier.milestones", "8,16,24"},
      {"classifier.reference_epochs", "28"},
      {"classifier.crop", "0"},
      {"classifier.mirror", "true"},
      {"classifier.center", "true"},

      {"segmenter.variant", "cResNet-39-d"},
      {"segmenter.source", "representation"},
      {"segmenter.iterations", "20000"},
      {"segmenter.batch_size", "10"},
      {"segmenter.lr", "0.001"},
      {"segmenter.head_lr_mult", "10"},
      {"segmenter.power", "0.9"},
      {"segmenter.momentum", "0.9"},
      {"segmenter.weight_decay", "0.0005"},
      {"segmenter.crop", "0"},
      {"segmenter.mirror", "true"},
      {"segmenter.freeze_batch_norm", "false"},
      {"segmenter.log_every", "100"},

      {"joint.mode", "joint"},
      {"joint.gamma", "0.001"},
      {"joint.epochs", "9"},
      {"joint.batch_size", "64"},
      {"joint.lr", "0.0025"},
      {"joint.milestones", "3,6"},
      {"joint.reference_epochs", "9"},
      {"joint.momentum", "0.9"},
      {"joint.weight_decay", "0.0001"},
      {"joint.mirror", "true"},
  };
  return d;
}

Config::Config() : values_(defaults()) {}

void Config::merge_text(std::string_view text, const std::string& origin) {
  int line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string_view::npos, Errc::usage,
            origin + ":" + std::to_string(line_no) + ": expected key=value, got '" + std::string(line) + "'");
    set(std::string(trim(line.substr(0, eq))), std::string(trim(line.substr(eq + 1))));
  }
}

void Config::load(const std::string& path) {
  const auto bytes = read_file(path);
  merge_text(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()), path);
}

void Config::set(std::string_view assignment) {
  const auto eq = assignment.find('=');
  require(eq != std::string_view::npos, Errc::usage, "override '" + std::string(assignment) + "' is not key=value");
  set(std::string(trim(assignment.substr(0, eq))), std::string(trim(assignment.substr(eq + 1))));
}

void Config::set(const std::string& key, const std::string& value) {
  require(defaults().count(key) != 0, Errc::usage, "unknown setting '" + key + "'");
  values_[key] = value;
}

const std::string& Config::get(const std::string& key) const {
  const auto it = values_.find(key);
  require(it != values_.end(), Errc::usage, "unknown setting '" + key + "'");
  return it->second;
}

int Config::get_int(const std::string& key) const {
  const std::string& v = get(key);
  int out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "an integer");
  return out;
}

std::uint64_t Config::get_u64(const std::string& key) const {
  const std::string& v = get(key);
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "a non-negative integer");
  return out;
}

double Config::get_double(const std::string& key) const {
  const std::string& v = get(key);
  double out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out)) bad_value(key, v, "a number");
  return out;
}

bool Config::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(key, v, "a boolean");
}

std::vector<double> Config::get_list(const std::string& key) const {
  const std::string& v = get(key);
  std::vector<double> out;
  std::string_view rest = v;
  while (!trim(rest).empty()) {
    const auto comma = rest.find(',');
    const std::string_view item = trim(rest.substr(0, comma));
    double x = 0;
    const auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), x);
    if (item.empty() || ec != std::errc() || p != item.data() + item.size()) bad_value(key, v, "a comma-separated list of numbers");
    out.push_back(x);
    rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
  }
  return out;
}

std::string Config::text() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
  return out;
}

DataSplits load_data(const Config& c, bool with_probe) {
  const std::string kind = c.get("data.kind");
  DataSplits d;
  if (kind == "synthetic") {
    const SyntheticSpec spec{c.get_int("data.size"), c.get_int("data.classes")};
    require(spec.size >= 8 && spec.size % 8 == 0, Errc::usage, "data.size must be a positive multiple of 8");
    require(spec.num_classes >= 2, Errc::usage, "data.classes must be at least 2");
    const std::uint64_t seed = c.get_u64("seed");
    d.train = Dataset::synthetic(spec, seed, 0, static_cast<std::size_t>(c.get_int("data.train")));
    d.test = Dataset::synthetic(spec, seed, 1u << 30, static_cast<std::size_t>(c.get_int("data.test")));
    if (with_probe) {
      const int side = c.get_int("data.probe_side"), count = c.get_int("data.probe_mosaics");
      const Dataset tiles = Dataset::synthetic(spec, seed, 2u << 30, static_cast<std::size_t>(count) * side * side);
      d.probe = probe_mosaics(tiles, count, side);
    }
  } else if (kind == "folder") {
    const std::string tr = c.get("data.train_manifest"), te = c.get("data.test_manifest");
    require(!tr.empty() && !te.empty(), Errc::usage, "data.kind=folder needs data.train_manifest and data.test_manifest");
    d.train = Dataset::from_manifest(tr);
    d.test = Dataset::from_manifest(te);
    if (with_probe) {
      // whole test images; bpp needs no mosaic when the images are large
      for (std::size_t i = 0; i < std::min<std::size_t>(d.test.size(), 4); ++i) d.probe.push_back(d.test.get(i).image);
    }
  } else {
    fail(Errc::usage, "data.kind must be synthetic or folder, got " + kind);
  }
  return d;
}

CompressorTraining compressor_options(const Config& c) {
  CompressorTraining o;
  CompressorConfig& m = o.model;
  m.channels = c.get_int("compressor.channels");
  m.levels = c.get_int("compressor.levels");
  m.sigma = c.get_float("compressor.sigma");
  m.center_range = c.get_float("compressor.center_range");
  m.beta = c.get_float("compressor.beta");
  m.target_entropy = c.get_float("compressor.target_entropy");
  m.encoder_width1 = c.get_int("compressor.encoder_width1");
  m.encoder_width2 = c.get_int("compressor.encoder_width2");
  m.decoder_width1 = c.get_int("compressor.decoder_width1");
  m.decoder_width2 = c.get_int("compressor.decoder_width2");
  m.decoder_width3 = c.get_int("compressor.decoder_width3");
  m.residual_units = c.get_int("compressor.residual_units");
  o.iterations = c.get_int("compressor.iterations");
  o.batch_size = c.get_int("compressor.batch_size");
  o.lr = c.get_float("compressor.lr");
  o.log_every = c.get_int("compressor.log_every");
  o.mirror = c.get_bool("compressor.mirror");
  o.seed = c.get_u64("seed");
  return o;
}

ClassifierTraining classifier_options(const Config& c) {
  ClassifierTraining o;
  o.variant = c.get("classifier.variant");
  o.base_width = c.get_int("classifier.base_width");
  o.source = source_setting(c, "classifier.source");
  o.epochs = c.get_int("classifier.epochs");
  o.batch_size = c.get_int("classifier.batch_size");
  o.lr = c.get_float("classifier.lr");
  o.momentum = c.get_float("classifier.momentum");
  o.weight_decay = c.get_float("classifier.weight_decay");
  o.milestones = c.get_list("classifier.milestones");
  o.reference_epochs = c.get_double("classifier.reference_epochs");
  o.crop = c.get_int("classifier.crop");
  o.mirror = c.get_bool("classifier.mirror");
  o.center = c.get_bool("classifier.center");
  o.seed = c.get_u64("seed");
  return o;
}

SegmenterTraining segmenter_options(const Config& c) {
  SegmenterTraining o;
  o.variant = c.get("segmenter.variant");
  o.source = source_setting(c, "segmenter.source");
  o.iterations = c.get_int("segmenter.iterations");
  o.batch_size = c.get_int("segmenter.batch_size");
  o.lr = c.get_float("segmenter.lr");
  o.head_lr_mult = c.get_float("segmenter.head_lr_mult");
  o.power = c.get_float("segmenter.power");
  o.momentum = c.get_float("segmenter.momentum");
  o.weight_decay = c.get_float("segmenter.weight_decay");
  o.crop = c.get_int("segmenter.crop");
  o.mirror = c.get_bool("segmenter.mirror");
  o.freeze_batch_norm = c.get_bool("segmenter.freeze_batch_norm");
  o.log_every = c.get_int("segmenter.log_every");
  o.seed = c.get_u64("seed");
  return o;
}

JointTraining joint_options(const Config& c) {
  JointTraining o;
  const std::string mode = c.get("joint.mode");
  if (mode == "joint") o.mode = JointMode::joint;
  else if (mode == "compression_only") o.mode = JointMode::compression_only;
  else fail(Errc::usage, "joint.mode must be joint or compression_only, got " + mode);
  o.gamma = c.get_float("joint.gamma");
  o.epochs = c.get_int("joint.epochs");
  o.batch_size = c.get_int("joint.batch_size");
  o.lr = c.get_float("joint.lr");
  o.milestones = c.get_list("joint.milestones");
  o.reference_epochs = c.get_double("joint.reference_epochs");
  o.momentum = c.get_float("joint.momentum");
  o.weight_decay = c.get_float("joint.weight_decay");
  o.mirror = c.get_bool("joint.mirror");
  o.seed = c.get_u64("seed");
  return o;
}

}  // namespace dcic
