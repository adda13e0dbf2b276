#include "dcic/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "dcic/cost.hpp"
#include "dcic/error.hpp"

namespace dcic {

double TimingStats::mean() const {
  return samples.empty() ? 0.0 : std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(samples.size());
}

double TimingStats::median() const {
  if (samples.empty()) return 0.0;
  std::vector<double> s = samples;
  std::sort(s.begin(), s.end());
  const std::size_t n = s.size();
  return n % 2 ? s[n / 2] : 0.5 * (s[n / 2 - 1] + s[n / 2]);
}

double TimingStats::stddev() const {
  if (samples.empty()) return 0.0;
  const double m = mean();
  double acc = 0.0;
  for (double x : samples) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(samples.size()));
}

namespace {

template <class F>
std::vector<double> time_runs(int repetitions, F&& run) {
  std::vector<double> out;
  for (int i = 0; i < repetitions; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    run();
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (i > 0) out.push_back(dt);
  }
  return out;
}

}  // namespace

BenchResult run_bench(CompressionModel& codec, const NetworkSpec& direct, const NetworkSpec& rgb, int h, int w,
                      int repetitions) {
  require(repetitions >= 3, Errc::invalid_argument, "bench needs at least 3 repetitions (the first is a warm-up)");
  require(h > 0 && w > 0 && h % 8 == 0 && w % 8 == 0, Errc::invalid_argument, "image size must be divisible by 8");
  require(direct.family == Family::compressed && rgb.family == Family::rgb, Errc::invalid_argument,
          "bench compares a compressed-domain network with an RGB network");
  require(direct.input_channels == codec.config().channels, Errc::shape_mismatch,
          "direct network expects " + std::to_string(direct.input_channels) + " channels, compressor produces " +
              std::to_string(codec.config().channels));
  const CostComparison cost = cost_comparison(direct, codec.config(), rgb, h, w);

  Network dnet(direct, 1), rnet(rgb, 1);
  const Tensor values = Tensor({1, codec.config().channels, h / 8, w / 8}, codec.center_values().front());

  BenchResult r;
  r.height = h;
  r.width = w;
  r.direct = {direct.variant + " on representation", cost.direct,
              time_runs(repetitions, [&] {
                Tape t(false);
                dnet.forward(t.constant(values), Mode::eval);
              })};
  r.pipeline = {"decoder + " + rgb.variant, cost.pipeline(), time_runs(repetitions, [&] {
                  Tape t(false);
                  Var img = codec.decode(t.constant(values));
                  rnet.forward(img, Mode::eval);
                })};
  return r;
}

std::string bench_text(const BenchResult& r) {
  std::string out = "image " + std::to_string(r.height) + "x" + std::to_string(r.width) + ", seconds per image over " +
                    std::to_string(r.direct.samples.size()) + " timed runs (first run discarded)\n";
  out += "pipeline\tflops\tmean_s\tmedian_s\tstddev_s\tflops_per_s\n";
  char buf[256];
  for (const TimingStats* s : {&r.direct, &r.pipeline}) {
    std::snprintf(buf, sizeof buf, "%s\t%.4g\t%.6f\t%.6f\t%.6f\t%.4g\n", s->label.c_str(), s->flops, s->mean(), s->median(),
                  s->stddev(), s->mean() > 0 ? s->flops / s->mean() : 0.0);
    out += buf;
  }
  return out;
}

}  // namespace dcic
