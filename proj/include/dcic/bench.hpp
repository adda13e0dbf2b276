#pragma once

#include <string>
#include <vector>

#include "dcic/compression.hpp"
#include "dcic/nets.hpp"

namespace dcic {

struct TimingStats {
  std::string label;
  double flops = 0.0;            // multiply-accumulates per image
  std::vector<double> samples;   // seconds per image, warm-up excluded
  double mean() const;
  double median() const;
  double stddev() const;         // population
};

struct BenchResult {
  int height = 0, width = 0;     // image size
  TimingStats direct;            // inference network on the representation
  TimingStats pipeline;          // decoder + RGB network
};

/// Times both pipelines for one h x w image, `repetitions` times each; the
/// first repetition is a discarded warm-up.
BenchResult run_bench(CompressionModel& codec, const NetworkSpec& direct, const NetworkSpec& rgb, int h, int w,
                      int repetitions);

/// Human-readable table; every row carries its FLOP count.
std::string bench_text(const BenchResult& r);

}  // namespace dcic
