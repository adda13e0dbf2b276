#include "dcic/compression.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <limits>
#include <numbers>

#include "dcic/error.hpp"

namespace dcic {

double nominal_bpp(double target_entropy, int channels) { return target_entropy * channels / 64.0; }

double OperatingPoint::nominal_bpp() const { return dcic::nominal_bpp(target_entropy, channels); }

namespace {

void require_centers(std::span<const float> centers) {
  require(!centers.empty(), Errc::invalid_argument, "quantizer needs at least one center");
  require(centers.size() <= 256, Errc::invalid_argument, "at most 256 quantization centers");
}

void require_sigma(float sigma) {
  require(sigma > 0.0f && std::isfinite(sigma), Errc::invalid_argument, "sigma must be positive");
}

// Row of soft assignment probabilities for one entry, written into p[0..L).
void soft_row(float z, std::span<const float> c, float sigma, double* p) {
  const std::size_t L = c.size();
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < L; ++j) {
    const double d = static_cast<double>(z) - c[j];
    p[j] = -sigma * d * d;
    best = std::max(best, p[j]);
  }
  double total = 0.0;
  for (std::size_t j = 0; j < L; ++j) {
    p[j] = std::exp(p[j] - best);
    total += p[j];
  }
  for (std::size_t j = 0; j < L; ++j) p[j] /= total;
}

std::uint8_t nearest(float z, std::span<const float> c) {
  std::size_t best = 0;
  float best_d = std::abs(z - c[0]);
  for (std::size_t j = 1; j < c.size(); ++j) {
    const float d = std::abs(z - c[j]);
    if (d < best_d) {
      best_d = d;
      best = j;
    }
  }
  return static_cast<std::uint8_t>(best);
}

}  // namespace

HardQuantization quantize_hard(const Tensor& z, std::span<const float> centers) {
  require_centers(centers);
  HardQuantization out{std::vector<std::uint8_t>(z.numel()), Tensor(z.shape())};
  for (std::size_t i = 0; i < z.numel(); ++i) {
    out.symbols[i] = nearest(z[i], centers);
    out.values[i] = centers[out.symbols[i]];
  }
  return out;
}

SoftQuantization quantize_soft(const Tensor& z, std::span<const float> centers, float sigma) {
  require_centers(centers);
  require_sigma(sigma);
  const int L = static_cast<int>(centers.size());
  SoftQuantization out{Tensor({static_cast<int>(z.numel()), L}), Tensor(z.shape())};
  std::vector<double> p(L);
  for (std::size_t i = 0; i < z.numel(); ++i) {
    soft_row(z[i], centers, sigma, p.data());
    double v = 0.0;
    for (int j = 0; j < L; ++j) {
      out.probs[i * L + j] = static_cast<float>(p[j]);
      v += p[j] * centers[j];
    }
    out.values[i] = static_cast<float>(v);
  }
  return out;
}

namespace {

// Emits `forward` with the backward pass of the soft value sum_j p_j c_j.
Var emit_soft_jacobian(Tensor forward, Var z, Var centers, float sigma) {
  return z.tape().emit(std::move(forward), {z, centers}, [=](const Tensor& gout) {
    Tape& tape = z.tape();
    const Tensor& zv = z.value();
    const std::span<const float> cv = centers.value().values();
    const std::size_t L = cv.size();
    const bool want_z = z.requires_grad(), want_c = centers.requires_grad();
    std::vector<double> p(L), dc(L, 0.0);
    Tensor dz = want_z ? Tensor(zv.shape()) : Tensor();
    for (std::size_t i = 0; i < zv.numel(); ++i) {
      soft_row(zv[i], cv, sigma, p.data());
      double soft = 0.0, abar = 0.0;
      for (std::size_t j = 0; j < L; ++j) {
        soft += p[j] * cv[j];
        abar += p[j] * (-2.0 * sigma * (zv[i] - cv[j]));
      }
      const double g = gout[i];
      if (want_z) {
        double d = 0.0;
        for (std::size_t j = 0; j < L; ++j) d += cv[j] * p[j] * (-2.0 * sigma * (zv[i] - cv[j]) - abar);
        dz[i] = static_cast<float>(g * d);
      }
      if (want_c)
        for (std::size_t j = 0; j < L; ++j) {
          const double b = 2.0 * sigma * (zv[i] - cv[j]);
          dc[j] += g * (p[j] + b * p[j] * (cv[j] - soft));
        }
    }
    if (want_z) tape.accumulate(z, dz);
    if (want_c) {
      Tensor d(centers.shape());
      for (std::size_t j = 0; j < L; ++j) d[j] = static_cast<float>(dc[j]);
      tape.accumulate(centers, d);
    }
  });
}

void require_center_var(Var centers, float sigma) {
  require_sigma(sigma);
  require(centers.value().rank() == 1, Errc::shape_mismatch, "centers must be a vector");
  require_centers(centers.value().values());
}

}  // namespace

Var quantize_ste(Var z, Var centers, float sigma) {
  require_center_var(centers, sigma);
  return emit_soft_jacobian(quantize_hard(z.value(), centers.value().values()).values, z, centers, sigma);
}

Var quantize_soft_value(Var z, Var centers, float sigma) {
  require_center_var(centers, sigma);
  return emit_soft_jacobian(quantize_soft(z.value(), centers.value().values(), sigma).values, z, centers, sigma);
}

double entropy_bits(std::span<const double> p) {
  double h = 0.0;
  for (double v : p)
    if (v > 0.0) h -= v * std::log2(v);
  return std::max(h, 0.0);
}

double entropy_estimate(const Tensor& probs) {
  require(probs.rank() == 2 && probs.dim(0) > 0, Errc::shape_mismatch, "entropy_estimate: expected (n, L) probabilities");
  const int n = probs.dim(0), L = probs.dim(1);
  std::vector<double> mean(L, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < L; ++j) mean[j] += probs[static_cast<std::size_t>(i) * L + j];
  for (double& m : mean) m /= n;
  return entropy_bits(mean);
}

double empirical_entropy(std::span<const std::uint8_t> symbols, int levels) {
  if (symbols.empty()) return 0.0;
  std::vector<double> p(levels, 0.0);
  for (std::uint8_t s : symbols) {
    require(s < levels, Errc::invalid_argument, "symbol out of range");
    p[s] += 1.0;
  }
  for (double& v : p) v /= static_cast<double>(symbols.size());
  return entropy_bits(p);
}

Var soft_entropy(Var z, Var centers, float sigma) {
  require_sigma(sigma);
  const Tensor& zv = z.value();
  const std::span<const float> c = centers.value().values();
  require_centers(c);
  require(zv.numel() > 0, Errc::shape_mismatch, "soft_entropy: empty representation");
  const std::size_t L = c.size(), n = zv.numel();
  auto mean = std::make_shared<std::vector<double>>(L, 0.0);
  std::vector<double> p(L);
  for (std::size_t i = 0; i < n; ++i) {
    soft_row(zv[i], c, sigma, p.data());
    for (std::size_t j = 0; j < L; ++j) (*mean)[j] += p[j];
  }
  for (double& m : *mean) m /= static_cast<double>(n);
  const double h = entropy_bits(*mean);
  return z.tape().emit(Tensor::scalar(static_cast<float>(h)), {z, centers}, [=](const Tensor& gout) {
    Tape& tape = z.tape();
    const Tensor& zin = z.value();
    const std::span<const float> cv = centers.value().values();
    // dH/dpbar_j, spread over the n entries that average into pbar
    std::vector<double> g(L);
    for (std::size_t j = 0; j < L; ++j)
      g[j] = -(std::log2(std::max((*mean)[j], 1e-30)) + 1.0 / std::numbers::ln2) * gout[0] / static_cast<double>(n);
    const bool want_z = z.requires_grad(), want_c = centers.requires_grad();
    std::vector<double> p(L), dc(L, 0.0);
    Tensor dz = want_z ? Tensor(zin.shape()) : Tensor();
    for (std::size_t i = 0; i < zin.numel(); ++i) {
      soft_row(zin[i], cv, sigma, p.data());
      double gbar = 0.0;
      for (std::size_t j = 0; j < L; ++j) gbar += g[j] * p[j];
      if (want_z) {
        // dp_j/dz = p_j (a_j - abar), a_j = -2 sigma (z - c_j)
        double abar = 0.0, d = 0.0;
        for (std::size_t j = 0; j < L; ++j) abar += p[j] * (-2.0 * sigma * (zin[i] - cv[j]));
        for (std::size_t j = 0; j < L; ++j) d += g[j] * p[j] * (-2.0 * sigma * (zin[i] - cv[j]) - abar);
        dz[i] = static_cast<float>(d);
      }
      if (want_c)
        for (std::size_t k = 0; k < L; ++k) dc[k] += 2.0 * sigma * (zin[i] - cv[k]) * p[k] * (g[k] - gbar);
    }
    if (want_z) tape.accumulate(z, dz);
    if (want_c) {
      Tensor d(centers.shape());
      for (std::size_t j = 0; j < L; ++j) d[j] = static_cast<float>(dc[j]);
      tape.accumulate(centers, d);
    }
  });
}

Var rate_distortion_loss(Var x, Var x_hat, Var entropy, float beta, float target_entropy) {
  require(entropy.value().numel() == 1, Errc::shape_mismatch, "entropy must be a scalar");
  return add(mse_loss(x, x_hat), scale(hinge(entropy, target_entropy), beta));
}

std::vector<float> canonical_centers(std::span<const float> centers) {
  std::vector<float> c(centers.begin(), centers.end());
  std::sort(c.begin(), c.end());
  std::vector<float> out;
  for (float v : c)
    if (out.empty() || v - out.back() > 1e-6f) out.push_back(v);
  return out;
}

CompressionModel::CompressionModel(CompressorConfig config, std::uint64_t seed) : config_(config) {
  const CompressorConfig& k = config_;
  require(k.channels >= 1 && k.levels >= 1 && k.levels <= 255, Errc::invalid_argument,
          "compressor needs channels >= 1 and 1 <= levels <= 255");
  require_sigma(k.sigma);
  Rng rng = Rng::stream(seed, "init/compressor");
  auto conv_param = [&](const std::string& name, int cin, int cout, int kernel, float gain = 1.0f) {
    Tensor w = he_normal({cout, cin, kernel, kernel}, cin * kernel * kernel, rng);
    for (float& v : w.values()) v *= gain;
    store_.add(name + "/weight", std::move(w));
    store_.add(name + "/bias", Tensor({cout}));
  };
  conv_param("encoder/conv1", 3, k.encoder_width1, 5);
  conv_param("encoder/conv2", k.encoder_width1, k.encoder_width2, 5);
  for (int r = 0; r < k.residual_units; ++r) {
    const std::string n = "encoder/res" + std::to_string(r + 1);
    conv_param(n + "/conv1", k.encoder_width2, k.encoder_width2, 3);
    conv_param(n + "/conv2", k.encoder_width2, k.encoder_width2, 3, 0.1f);
  }
  conv_param("encoder/conv3", k.encoder_width2, k.channels, 5, std::sqrt(0.5f));

  conv_param("decoder/conv1", k.channels, k.decoder_width1, 5);
  for (int r = 0; r < k.residual_units; ++r) {
    const std::string n = "decoder/res" + std::to_string(r + 1);
    conv_param(n + "/conv1", k.decoder_width1, k.decoder_width1, 3);
    conv_param(n + "/conv2", k.decoder_width1, k.decoder_width1, 3, 0.1f);
  }
  conv_param("decoder/up1", k.decoder_width1, k.decoder_width2, 5);
  conv_param("decoder/up2", k.decoder_width2, k.decoder_width3, 5);
  conv_param("decoder/up3", k.decoder_width3, 3, 5, std::sqrt(0.5f));

  Tensor c({k.levels});
  for (int j = 0; j < k.levels; ++j)
    c[j] = k.levels == 1 ? 0.0f : -k.center_range + 2.0f * k.center_range * j / (k.levels - 1);
  store_.add("quantizer/centers", std::move(c));
}

std::vector<float> CompressionModel::center_values() const {
  const Tensor& c = store_.get("quantizer/centers").value;
  return {c.values().begin(), c.values().end()};
}

Var CompressionModel::conv(Var x, const std::string& name, int stride) {
  Tape& t = x.tape();
  return conv2d(x, t.parameter(store_.get(name + "/weight")), t.parameter(store_.get(name + "/bias")),
                {stride, 1, Padding::same});
}

Var CompressionModel::encode(Var image) {
  const Shape& s = image.shape();
  require(s.size() == 4 && s[1] == 3, Errc::shape_mismatch, "encode: expected (N,3,h,w), got " + shape_string(s));
  require(s[2] % 8 == 0 && s[3] % 8 == 0 && s[2] > 0 && s[3] > 0, Errc::shape_mismatch,
          "encode: dimensions must be divisible by 8, got " + std::to_string(s[2]) + "x" + std::to_string(s[3]));
  Var h = scale(image, 1.0f / config_.pixel_scale);
  h = relu(conv(h, "encoder/conv1", 2));
  h = relu(conv(h, "encoder/conv2", 2));
  for (int r = 1; r <= config_.residual_units; ++r) {
    const std::string n = "encoder/res" + std::to_string(r);
    h = add(h, conv(relu(conv(h, n + "/conv1", 1)), n + "/conv2", 1));
  }
  return conv(h, "encoder/conv3", 2);
}

Var CompressionModel::decode(Var representation) {
  const Shape& s = representation.shape();
  require(s.size() == 4 && s[1] == config_.channels, Errc::shape_mismatch,
          "decode: expected (N," + std::to_string(config_.channels) + ",h/8,w/8), got " + shape_string(s));
  Var h = relu(conv(representation, "decoder/conv1", 1));
  for (int r = 1; r <= config_.residual_units; ++r) {
    const std::string n = "decoder/res" + std::to_string(r);
    h = add(h, conv(relu(conv(h, n + "/conv1", 1)), n + "/conv2", 1));
  }
  h = relu(conv(upsample_nearest(h, 2), "decoder/up1", 1));
  h = relu(conv(upsample_nearest(h, 2), "decoder/up2", 1));
  h = conv(upsample_nearest(h, 2), "decoder/up3", 1);
  return scale(h, config_.pixel_scale);
}

CompressionModel::Forward CompressionModel::forward(Var image) {
  Forward f;
  f.z = encode(image);
  Var c = image.tape().parameter(centers());
  f.q = quantize_ste(f.z, c, config_.sigma);
  f.entropy = soft_entropy(f.z, c, config_.sigma);
  f.x_hat = decode(f.q);
  return f;
}

void CompressionModel::canonicalize() {
  std::vector<float> c = canonical_centers(center_values());
  Parameter& p = centers();
  const int levels = static_cast<int>(c.size());
  p.value = Tensor({levels}, std::move(c));
  p.grad = Tensor(p.value.shape());
  config_.levels = p.value.dim(0);
}

}  // namespace dcic
