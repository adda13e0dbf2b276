#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "dcic/data.hpp"
#include "dcic/training.hpp"

namespace dcic {

/// Flat key=value settings with dotted sections ("classifier.lr=0.025").
/// Every key has a registered default; unknown keys and malformed values
/// raise Errc::usage.
class Config {
 public:
  Config();

  /// Lines of key=value; '#' starts a comment.
  void merge_text(std::string_view text, const std::string& origin = "config");
  void load(const std::string& path);
  /// One "key=value" override.
  void set(std::string_view assignment);
  void set(const std::string& key, const std::string& value);

  const std::string& get(const std::string& key) const;
  std::string get_string(const std::string& key) const { return get(key); }
  int get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  float get_float(const std::string& key) const { return static_cast<float>(get_double(key)); }
  bool get_bool(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  std::vector<double> get_list(const std::string& key) const;

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  /// All settings, sorted by key, one per line.
  std::string text() const;

  static const std::map<std::string, std::string>& defaults();

 private:
  std::map<std::string, std::string> values_;
};

struct DataSplits {
  Dataset train;
  Dataset test;
  std::vector<Tensor> probe;
};

/// data.* settings: synthetic splits (disjoint index ranges) or manifests.
DataSplits load_data(const Config& c, bool with_probe);

CompressorTraining compressor_options(const Config& c);
ClassifierTraining classifier_options(const Config& c);
SegmenterTraining segmenter_options(const Config& c);
JointTraining joint_options(const Config& c);

}  // namespace dcic
