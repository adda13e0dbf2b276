#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace dcic {

/// Portable random source. std::mt19937_64 output is fixed by the standard;
/// the distributions below are written out so that streams are identical on
/// every platform (the <random> distributions are not).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(mix(seed)) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1) with 24 bits of resolution.
  float uniform() { return static_cast<float>(next() >> 40) * 0x1.0p-24f; }
  float uniform(float lo, float hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  int below(int n) { return static_cast<int>(next() % static_cast<std::uint64_t>(n)); }
  bool coin() { return (next() >> 63) != 0; }
  /// Standard normal via Box-Muller (one draw per call).
  float normal();

  /// Independent named substream (data, init, augmentation, ...).
  static Rng stream(std::uint64_t seed, std::string_view name);
  /// Independent stream for item `index` of a named family; pure in (seed, name, index).
  static Rng indexed(std::uint64_t seed, std::string_view name, std::uint64_t index);

  static std::uint64_t mix(std::uint64_t x);

 private:
  std::mt19937_64 engine_;
};

}  // namespace dcic
