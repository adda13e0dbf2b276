#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "dcic/cost.hpp"
#include "dcic/error.hpp"
#include "dcic/metrics.hpp"
#include "gradcheck.hpp"

using namespace dcic;
using dcic::testing::random_tensor;

namespace {

double within(double value, double expected) { return std::abs(value - expected) / expected; }

// SSIM straight from the definition: a full 2-D Gaussian window at every
// valid position, no separable filtering, no reuse between positions.
double direct_ssim(const std::vector<double>& a, const std::vector<double>& b, int h, int w) {
  double g[11][11], norm = 0.0;
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) norm += g[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2 * 1.5 * 1.5));
  const double c1 = std::pow(0.01 * 255, 2), c2 = std::pow(0.03 * 255, 2);
  double total = 0.0;
  int count = 0;
  for (int y = 0; y + 11 <= h; ++y)
    for (int x = 0; x + 11 <= w; ++x) {
      double ma = 0, mb = 0;
      for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
          ma += g[i][j] / norm * a[(y + i) * w + x + j];
          mb += g[i][j] / norm * b[(y + i) * w + x + j];
        }
      double va = 0, vb = 0, cov = 0;
      for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
          const double da = a[(y + i) * w + x + j] - ma, db = b[(y + i) * w + x + j] - mb;
          va += g[i][j] / norm * da * da;
          vb += g[i][j] / norm * db * db;
          cov += g[i][j] / norm * da * db;
        }
      total += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  return total / count;
}

Tensor random_image(int c, int h, int w, Rng& rng) { return random_tensor({c, h, w}, rng, 0.0f, 255.0f); }

// Diagonal ramp repeating every 16 pixels, values 64..192.
Tensor gradient_image(int size) {
  Tensor t({1, size, size});
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) t[y * size + x] = 64.0f + 128.0f * static_cast<float>((x + y) % 16) / 15.0f;
  return t;
}

}  // namespace

TEST_CASE("classifier FLOPs match the published table") {
  struct Row {
    const char* variant;
    int c, size;
    double gflops;
  };
  for (const Row& r : {Row{"ResNet-50", 3, 224, 3.86}, Row{"ResNet-71", 3, 224, 5.38}, Row{"cResNet-39", 8, 28, 2.95},
                       Row{"cResNet-51", 8, 28, 3.83}, Row{"cResNet-72", 8, 28, 5.36}}) {
    const CostReport rep = count_flops(classifier_spec(r.variant, 1000, r.c), r.size, r.size);
    CHECK_MESSAGE(within(rep.total_flops, r.gflops * 1e9) < 0.02, r.variant << " " << rep.total_flops);
    CHECK(rep.total_with_elementwise() >= rep.total_flops);
  }
  const double r50 = count_flops(classifier_spec("ResNet-50", 1000, 3), 224, 224).total_flops;
  const double c51 = count_flops(classifier_spec("cResNet-51", 1000, 8), 28, 28).total_flops;
  CHECK(within(c51, r50) < 0.01);
}

TEST_CASE("encoder FLOPs at 224x224 with 32 channels") {
  CompressorConfig k;
  k.channels = 32;
  const CostReport enc = count_flops(k, 224, 224, CompressorPart::encoder);
  CHECK(within(enc.total_flops, 3.56e9) < 0.02);
  const CostReport both = count_flops(k, 224, 224, CompressorPart::both);
  CHECK(both.total_flops == doctest::Approx(enc.total_flops + count_flops(k, 224, 224, CompressorPart::decoder).total_flops));
  CHECK_THROWS_AS(count_flops(k, 225, 224, CompressorPart::encoder), Error);
}

TEST_CASE("report arithmetic") {
  LayerRow unit{"unit", "conv", 1, 1, 1, 1, 1, 1, 1, false, 1, 1, 1};
  CHECK(layer_flops(unit) == 1.0);
  LayerRow wide{"w", "conv", 3, 5, 4, 6, 3, 1, 2, false, 0, 4, 6};
  CHECK(layer_flops(wide) == 4.0 * 6 * 9 * 3 * 5);
  LayerRow fc{"fc", "fc", 2048, 1000, 1, 1, 1, 1, 1, true, 0, 1, 1};
  CHECK(layer_flops(fc) == 2048.0 * 1000);

  const CostReport rep = count_flops(classifier_spec("cResNet-39", 10, 8), 28, 28);
  double sum = 0.0, elem = 0.0;
  std::size_t params = 0;
  for (const LayerCost& l : rep.layers) {
    CHECK(l.flops >= 0.0);
    CHECK(l.elementwise >= 0.0);
    sum += l.flops;
    elem += l.elementwise;
    params += l.params;
  }
  CHECK(rep.total_flops == doctest::Approx(sum));
  CHECK(rep.total_elementwise == doctest::Approx(elem));
  CHECK(rep.total_params == params);
  CHECK(rep.flops_with_prefix("conv") + rep.flops_with_prefix("logits") == doctest::Approx(rep.total_flops));

  const CostReport again = count_flops(classifier_spec("cResNet-39", 10, 8), 28, 28);
  CHECK(again.total_flops == rep.total_flops);
  CHECK(report_text(rep).find(kFlopConvention) != std::string::npos);
  CHECK(report_kv(rep).find("total_flops=") != std::string::npos);
}

TEST_CASE("decode-then-infer versus direct inference") {
  CostComparison paper{3.83e9, 2.85e9, 3.86e9};
  CHECK(paper.ratio() == doctest::Approx(1.7519).epsilon(1e-3));
  CHECK(paper.ratio() >= 1.5);
  CHECK(paper.ratio() <= 2.0);

  CompressorConfig k;
  k.channels = 8;
  CostComparison built{count_flops(classifier_spec("cResNet-51", 1000, 8), 28, 28).total_flops,
                       count_flops(k, 224, 224, CompressorPart::decoder).total_flops,
                       count_flops(classifier_spec("ResNet-50", 1000, 3), 224, 224).total_flops};
  CHECK(built.ratio() >= 1.5);
  CHECK(built.ratio() <= 2.0);
  CostComparison self{built.direct, 0.0, built.direct};
  CHECK(self.ratio() == 1.0);
  CHECK(comparison_text(built, "cResNet-51", "ResNet-50").find("ratio") != std::string::npos);
}

TEST_CASE("psnr") {
  Rng rng(1);
  Tensor x = random_image(3, 8, 8, rng);
  CHECK(psnr(x, x) == kPsnrCap);
  CHECK(psnr_from_mse(255.0 * 255.0) == doctest::Approx(0.0));
  CHECK(psnr_from_mse(1.0) == doctest::Approx(48.1308).epsilon(1e-5));
  Tensor y = x;
  for (float& v : y.values()) v += 1.0f;
  CHECK(psnr(x, y) == doctest::Approx(48.1308).epsilon(1e-4));
  double prev = kPsnrCap + 1;
  for (double m : {1e-3, 0.5, 1.0, 10.0, 100.0, 1e4}) {
    CHECK(psnr_from_mse(m) < prev);
    prev = psnr_from_mse(m);
  }
  CHECK_THROWS_AS(psnr(x, Tensor({3, 8, 9})), Error);
}

TEST_CASE("ssim against the direct definition") {
  Rng rng(2);
  Tensor g = gradient_image(64);
  CHECK(ssim(g, g) == doctest::Approx(1.0).epsilon(1e-12));
  Tensor inv = g;
  for (float& v : inv.values()) v = 255.0f - v;
  const std::vector<double> gv(g.values().begin(), g.values().end()), iv(inv.values().begin(), inv.values().end());
  const double oracle = direct_ssim(gv, iv, 64, 64);
  CHECK(oracle < 0.3);
  CHECK(ssim(g, inv) == doctest::Approx(oracle).epsilon(1e-9));

  for (int trial = 0; trial < 5; ++trial) {
    Tensor a = random_image(1, 23, 31, rng), b = a;
    for (float& v : b.values()) v = std::clamp(v + rng.uniform(-40.0f, 40.0f), 0.0f, 255.0f);
    const std::vector<double> av(a.values().begin(), a.values().end()), bv(b.values().begin(), b.values().end());
    const double s = ssim(a, b);
    CHECK(s == doctest::Approx(direct_ssim(av, bv, 23, 31)).epsilon(1e-9));
    CHECK(s <= 1.0);
    CHECK(s >= -1.0);
    CHECK(s < 1.0);
  }

  // RGB goes through 601 luma
  Tensor rgb = random_image(3, 16, 16, rng), other = random_image(3, 16, 16, rng);
  CHECK(ssim(rgb, other) == doctest::Approx(ssim(luma(rgb), luma(other))));
  CHECK_THROWS_AS(ssim(Tensor({1, 10, 10}), Tensor({1, 10, 10})), Error);
}

TEST_CASE("ms-ssim") {
  Rng rng(3);
  Tensor a = random_image(3, 176, 180, rng);
  CHECK(ms_ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  for (int trial = 0; trial < 3; ++trial) {
    Tensor b = a;
    for (float& v : b.values()) v = std::clamp(v + rng.uniform(-60.0f, 60.0f), 0.0f, 255.0f);
    const double ab = ms_ssim(a, b), ba = ms_ssim(b, a);
    CHECK(ab == ba);
    CHECK(ab < 1.0);
    CHECK(ab >= 0.0);
  }
  CHECK_THROWS_WITH_AS(ms_ssim(Tensor({3, 175, 200}), Tensor({3, 175, 200})), doctest::Contains("176"), Error);
}

TEST_CASE("top-k accuracy") {
  Tensor onehot({4, 5});
  const std::vector<int> labels{0, 3, 4, 1};
  for (int i = 0; i < 4; ++i) onehot[i * 5 + labels[i]] = 1.0f;
  CHECK(topk_accuracy(onehot, labels, 1) == 1.0);

  Tensor one_right({4, 5});
  one_right[0 * 5 + 0] = 2.0f;
  for (int i = 1; i < 4; ++i) one_right[i * 5 + (labels[i] + 1) % 5] = 2.0f;
  CHECK(topk_accuracy(one_right, labels, 1) == 0.25);

  // a tie ranks the lower index first
  Tensor tie({1, 3}, 1.0f);
  CHECK(topk_accuracy(tie, std::vector<int>{0}, 1) == 1.0);
  CHECK(topk_accuracy(tie, std::vector<int>{2}, 2) == 0.0);
  CHECK(topk_accuracy(tie, std::vector<int>{2}, 3) == 1.0);

  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor logits = random_tensor({16, 10}, rng);
    std::vector<int> y(16);
    for (int& v : y) v = static_cast<int>(rng.next() % 10);
    double prev = 0.0;
    for (int k = 1; k <= 10; ++k) {
      const double acc = topk_accuracy(logits, y, k);
      CHECK(acc >= prev);
      prev = acc;
    }
    CHECK(prev == 1.0);
  }
  CHECK_THROWS_AS(topk_accuracy(onehot, labels, 6), Error);
}

TEST_CASE("mean IoU") {
  const std::vector<int> truth{0, 0, 1, 1}, pred{0, 0, 0, 0};
  IouResult r = miou(pred, truth, 2);
  CHECK(r.per_class[0] == 0.5);
  CHECK(r.per_class[1] == 0.0);
  CHECK(r.mean == 0.25);

  CHECK(miou(truth, truth, 5).mean == 1.0);
  CHECK(miou(truth, truth, 5).counted == 2);
  CHECK(miou(std::vector<int>{1, 1}, std::vector<int>{0, 0}, 2).mean == 0.0);

  // ignored pixels count nowhere
  const std::vector<int> t2{0, 255, 1, 255}, p2{0, 1, 1, 0};
  CHECK(miou(p2, t2, 2).mean == 1.0);

  Rng rng(5);
  std::vector<int> a(200), b(200), perm{3, 0, 4, 1, 2};
  for (int i = 0; i < 200; ++i) {
    a[i] = static_cast<int>(rng.next() % 5);
    b[i] = rng.uniform() < 0.7 ? a[i] : static_cast<int>(rng.next() % 5);
  }
  std::vector<int> pa(200), pb(200);
  for (int i = 0; i < 200; ++i) pa[i] = perm[a[i]], pb[i] = perm[b[i]];
  const double m = miou(b, a, 5).mean;
  CHECK(m > 0.0);
  CHECK(m < 1.0);
  CHECK(miou(pb, pa, 5).mean == doctest::Approx(m).epsilon(1e-12));

  ConfusionMatrix cm(2);
  cm.add(pred, truth);
  CHECK(cm.pixel_accuracy() == 0.5);
}
