#include <cmath>

#include "doctest.h"
#include "dcic/compression.hpp"
#include "dcic/error.hpp"
#include "gradcheck.hpp"
#include "checks.hpp"
#include "reference.hpp"

using namespace dcic;
using dcic::testing::gradcheck;
using dcic::testing::random_tensor;

namespace {

// Reference soft value in double, written from the formula.
double soft_ref(double z, const std::vector<double>& c, double sigma) {
  double num = 0.0, den = 0.0;
  for (double cj : c) {
    const double w = std::exp(-sigma * (z - cj) * (z - cj));
    num += w * cj;
    den += w;
  }
  return num / den;
}

CompressorConfig tiny_config(int channels = 4) {
  CompressorConfig k;
  k.channels = channels;
  k.encoder_width1 = 4;
  k.encoder_width2 = 6;
  k.decoder_width1 = 6;
  k.decoder_width2 = 4;
  k.decoder_width3 = 4;
  k.residual_units = 1;
  return k;
}

}  // namespace

TEST_CASE("encode and decode shape laws") {
  CompressorConfig k = tiny_config(8);
  CompressionModel m(k, 1);
  {
    Tape t(false);
    Var z = m.encode(t.constant(Tensor({1, 3, 224, 224})));
    CHECK(z.shape() == Shape{1, 8, 28, 28});
    Var x = m.decode(t.constant(Tensor({1, 8, 28, 28})));
    CHECK(x.shape() == Shape{1, 3, 224, 224});
    CHECK(x.value().all_finite());
    Var again = m.decode(t.constant(Tensor({1, 8, 28, 28})));
    CHECK(again.value().storage() == x.value().storage());
  }
  CompressionModel m16(tiny_config(16), 2);
  Tape t(false);
  CHECK(m16.encode(t.constant(Tensor({1, 3, 64, 64}))).shape() == Shape{1, 16, 8, 8});
  try {
    m16.encode(t.constant(Tensor({1, 3, 225, 224})));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("divisible by 8") != std::string::npos);
  }
  CHECK_THROWS_AS(m16.decode(t.constant(Tensor({1, 8, 8, 8}))), Error);
}

TEST_CASE("quantize_hard") {
  const std::vector<float> c{-1.0f, 0.0f, 1.0f};
  HardQuantization q = quantize_hard(Tensor({1}, 0.3f), c);
  CHECK(q.symbols[0] == 1);
  CHECK(q.values[0] == 0.0f);
  q = quantize_hard(Tensor({1}, 1.0f), c);
  CHECK(q.symbols[0] == 2);
  CHECK(q.values[0] == 1.0f);
  const std::vector<float> c2{0.0f, 1.0f};
  CHECK(quantize_hard(Tensor({1}, 0.5f), c2).symbols[0] == 0);
  CHECK_THROWS_AS(quantize_hard(Tensor({1}), std::vector<float>{}), Error);
}

TEST_CASE("quantize_soft") {
  const std::vector<float> c{0.0f, 1.0f};
  SoftQuantization s = quantize_soft(Tensor({1}, 0.2f), c, 1e4f);
  CHECK(s.probs[0] == doctest::Approx(1.0));
  CHECK(s.values[0] == doctest::Approx(0.0));
  s = quantize_soft(Tensor({1}, 0.5f), c, 3.0f);
  CHECK(s.probs[0] == doctest::Approx(0.5));
  CHECK(s.values[0] == doctest::Approx(0.5));
  const std::vector<float> sym{-1.0f, 1.0f};
  s = quantize_soft(Tensor({1}, 0.0f), sym, 1.0f);
  CHECK(s.probs[0] == doctest::Approx(0.5));
  CHECK(s.probs[1] == doctest::Approx(0.5));
  CHECK(s.values[0] == doctest::Approx(0.0));
  CHECK_THROWS_AS(quantize_soft(Tensor({1}), c, 0.0f), Error);
  CHECK_THROWS_AS(quantize_soft(Tensor({1}), c, -1.0f), Error);

  Rng rng(3);
  const std::vector<float> six{-2.0f, -1.2f, -0.4f, 0.4f, 1.2f, 2.0f};
  Tensor z = random_tensor({500}, rng, -4.0f, 4.0f);
  s = quantize_soft(z, six, 1.0f);
  for (int i = 0; i < 500; ++i) {
    double total = 0.0;
    for (int j = 0; j < 6; ++j) total += s.probs[i * 6 + j];
    CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("sigma limit: soft value approaches the hard value") {
  const std::vector<float> c{-2.0f, -1.0f, 0.0f, 1.0f, 2.0f};
  Rng rng(5);
  int tested = 0;
  while (tested < 1000) {
    const float z = rng.uniform(-2.0f, 2.0f);
    // the exact midpoints are tie points where soft stays at the average
    const float frac = z - std::floor(z);
    if (std::abs(frac - 0.5f) < 0.05f) continue;
    ++tested;
    const float hard = quantize_hard(Tensor({1}, z), c).values[0];
    CHECK(std::abs(quantize_soft(Tensor({1}, z), c, 100.0f).values[0] - hard) < 1e-4f);
  }
  const std::vector<float> c01{0.0f, 1.0f};
  CHECK(std::abs(quantize_soft(Tensor({1}, 0.2f), c01, 1e6f).values[0] - quantize_hard(Tensor({1}, 0.2f), c01).values[0]) < 1e-6f);
}

TEST_CASE("quantize_ste: hard forward, soft backward") {
  Rng rng(7);
  for (int inst = 0; inst < 25; ++inst) {
    const float sigma = rng.uniform(0.5f, 3.0f);
    std::vector<float> c{-2.0f, -1.2f, -0.4f, 0.4f, 1.2f, 2.0f};
    for (float& v : c) v += rng.uniform(-0.1f, 0.1f);
    Parameter z("z", random_tensor({3, 4}, rng, -3.0f, 3.0f));
    Parameter cp("c", Tensor({6}, c));
    Tape t;
    Var q = quantize_ste(t.parameter(z), t.parameter(cp), sigma);
    for (float v : q.value().values()) CHECK(std::find(c.begin(), c.end(), v) != c.end());
    t.backward(sum(q));

    const std::vector<double> cd(c.begin(), c.end());
    const double h = 1e-5;
    for (std::size_t i = 0; i < z.value.numel(); ++i) {
      const double zi = z.value[i];
      const double fd = (soft_ref(zi + h, cd, sigma) - soft_ref(zi - h, cd, sigma)) / (2 * h);
      CHECK(std::abs(z.grad[i] - fd) <= 1e-3 * std::max(1.0, std::abs(fd)));
    }
    for (std::size_t j = 0; j < 6; ++j) {
      double fd = 0.0;
      for (std::size_t i = 0; i < z.value.numel(); ++i) {
        std::vector<double> up = cd, dn = cd;
        up[j] += h;
        dn[j] -= h;
        fd += (soft_ref(z.value[i], up, sigma) - soft_ref(z.value[i], dn, sigma)) / (2 * h);
      }
      CHECK(std::abs(cp.grad[j] - fd) <= 1e-3 * std::max(1.0, std::abs(fd)));
    }
  }
  Tape t;
  std::vector<float> c01{0.0f, 1.0f};
  CHECK(quantize_ste(t.constant(Tensor({1}, 0.2f)), t.constant(Tensor({2}, c01)), 1.0f).value()[0] == 0.0f);
}

TEST_CASE("entropy estimate") {
  CHECK(entropy_bits(std::vector<double>{0.25, 0.25, 0.25, 0.25}) == doctest::Approx(2.0));
  CHECK(entropy_bits(std::vector<double>{0.0, 1.0, 0.0}) == 0.0);
  CHECK(entropy_bits(std::vector<double>{0.5, 0.25, 0.25}) == doctest::Approx(1.5));
  Tensor probs({2, 3}, std::vector<float>{1.0f, 0.0f, 0.0f, 0.0f, 0.5f, 0.5f});
  CHECK(entropy_estimate(probs) == doctest::Approx(1.5));
  const std::vector<std::uint8_t> sym{0, 0, 1, 2};
  CHECK(empirical_entropy(sym, 3) == doctest::Approx(1.5));

  Rng rng(9);
  const std::vector<float> six{-2.0f, -1.2f, -0.4f, 0.4f, 1.2f, 2.0f};
  Tensor z = random_tensor({2, 3, 4, 4}, rng, -3.0f, 3.0f);
  SoftQuantization s = quantize_soft(z, six, 1.0f);
  const double h = entropy_estimate(s.probs);
  CHECK(h >= 0.0);
  CHECK(h <= std::log2(6.0) + 1e-9);
  Tape t;
  CHECK(soft_entropy(t.constant(z), t.constant(Tensor({6}, six)), 1.0f).value().item() == doctest::Approx(h).epsilon(1e-5));
}

TEST_CASE("soft entropy gradients") {
  namespace ref = dcic::reference;
  Rng rng(11);
  for (int inst = 0; inst < 20; ++inst) {
    Parameter z("z", random_tensor({2, 2, 3, 3}, rng, -3.0f, 3.0f));
    Parameter c("c", Tensor({5}, std::vector<float>{-2.0f, -1.0f, 0.0f, 1.0f, 2.0f}));
    for (float& v : c.value.values()) v += rng.uniform(-0.2f, 0.2f);
    const float sigma = rng.uniform(0.5f, 2.0f);
    z.zero_grad();
    c.zero_grad();
    Tape t;
    t.backward(soft_entropy(t.parameter(z), t.parameter(c), sigma));
    auto res = ref::compare({&z, &c}, [&](const ref::Params& p) {
      return ref::soft_entropy(p.at("z"), p.at("c").v, sigma);
    }, rng);
    CHECK(res.max_rel_err < 1e-3);
    auto res2 = gradcheck({&z, &c}, [&](Tape& tp) { return quantize_soft_value(tp.parameter(z), tp.parameter(c), sigma); }, rng);
    CHECK(res2.max_rel_err < 1e-3);
  }
}

TEST_CASE("rate distortion loss") {
  Rng rng(13);
  Tape t;
  Var x = t.constant(random_tensor({1, 3, 4, 4}, rng));
  Var y = t.constant(random_tensor({1, 3, 4, 4}, rng));
  const float mse = mse_loss(x, y).value().item();
  CHECK(rate_distortion_loss(x, y, t.constant(Tensor::scalar(0.5f)), 600.0f, 0.8f).value().item() == doctest::Approx(mse));
  CHECK(rate_distortion_loss(x, x, t.constant(Tensor::scalar(1.265f + 1.0f)), 150.0f, 1.265f).value().item() ==
        doctest::Approx(150.0f));
  CHECK(rate_distortion_loss(x, x, t.constant(Tensor::scalar(0.8f)), 600.0f, 0.8f).value().item() == 0.0f);

  // rate term alone has zero gradient below and at the target
  for (float h_t : {2.5f, 2.58496f, 3.0f}) {
    CompressionModel m(tiny_config(), 3);
    Tape tape;
    auto f = m.forward(tape.constant(random_tensor({1, 3, 16, 16}, rng, -100.0f, 100.0f)));
    const float h = f.entropy.value().item();
    Var rate = scale(hinge(f.entropy, std::max(h_t, h)), 600.0f);
    tape.backward(rate);
    for (Parameter* p : m.store().parameters())
      for (float g : p->grad.values()) CHECK(g == 0.0f);
  }
  CHECK(nominal_bpp(0.8, 8) == doctest::Approx(0.1));
  CHECK(nominal_bpp(1.265, 32) == doctest::Approx(0.6325));
  CHECK(nominal_bpp(0.0, 16) == 0.0);
  CHECK(OperatingPoint{8, 0.8, 600.0}.nominal_bpp() == doctest::Approx(0.1));
}

TEST_CASE("centers canonicalization") {
  const std::vector<float> c{1.0f, -1.0f, 0.5f, 1.0f + 1e-7f, 0.0f};
  const std::vector<float> out = canonical_centers(c);
  CHECK(out == std::vector<float>{-1.0f, 0.0f, 0.5f, 1.0f});
  CompressionModel m(tiny_config(), 1);
  m.centers().value[2] = m.centers().value[3];
  m.canonicalize();
  CHECK(m.config().levels == 5);
  CHECK(m.center_values().size() == 5);
}

TEST_CASE("composed encoder, quantizer, decoder, MSE path gradients") {
  Rng rng(17);
  for (int inst = 0; inst < 20; ++inst) {
    const auto res = dcic::checks::codec_path(inst, rng);
    CHECK(res.forward_rel_diff < 1e-4);
    CHECK(res.rel_err < 1e-3);
  }
}
