#include "dcic/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "dcic/error.hpp"

namespace dcic {

double mse(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), Errc::shape_mismatch, "mse: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  require(a.numel() > 0, Errc::invalid_argument, "mse: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += (static_cast<double>(a[i]) - b[i]) * (static_cast<double>(a[i]) - b[i]);
  return s / static_cast<double>(a.numel());
}

double psnr_from_mse(double m) {
  if (m <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(255.0 * 255.0 / m));
}

double psnr(const Tensor& a, const Tensor& b) { return psnr_from_mse(mse(a, b)); }

Tensor luma(const Tensor& image) {
  require(image.rank() == 3 && (image.dim(0) == 3 || image.dim(0) == 1), Errc::shape_mismatch,
          "expected a (3,H,W) or (1,H,W) image, got " + shape_string(image.shape()));
  if (image.dim(0) == 1) return image;
  const int h = image.dim(1), w = image.dim(2);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  Tensor y({1, h, w});
  for (std::size_t i = 0; i < plane; ++i)
    y[i] = 0.299f * image[i] + 0.587f * image[plane + i] + 0.114f * image[2 * plane + i];
  return y;
}

namespace {

constexpr int kWin = 11;

struct Plane {
  int h = 0, w = 0;
  std::vector<double> v;
  double at(int y, int x) const { return v[static_cast<std::size_t>(y) * w + x]; }
};

Plane to_plane(const Tensor& image) {
  Tensor y = luma(image);
  return {y.dim(1), y.dim(2), std::vector<double>(y.values().begin(), y.values().end())};
}

std::array<double, kWin> gaussian() {
  std::array<double, kWin> g{};
  double s = 0.0;
  for (int i = 0; i < kWin; ++i) s += g[i] = std::exp(-0.5 * (i - 5) * (i - 5) / (1.5 * 1.5));
  for (double& v : g) v /= s;
  return g;
}

// Separable valid-mode filtering.
Plane filter(const Plane& p) {
  static const std::array<double, kWin> g = gaussian();
  Plane tmp{p.h, p.w - kWin + 1, {}};
  tmp.v.resize(static_cast<std::size_t>(tmp.h) * tmp.w);
  for (int y = 0; y < tmp.h; ++y)
    for (int x = 0; x < tmp.w; ++x) {
      double s = 0.0;
      for (int k = 0; k < kWin; ++k) s += g[k] * p.at(y, x + k);
      tmp.v[static_cast<std::size_t>(y) * tmp.w + x] = s;
    }
  Plane out{p.h - kWin + 1, tmp.w, {}};
  out.v.resize(static_cast<std::size_t>(out.h) * out.w);
  for (int y = 0; y < out.h; ++y)
    for (int x = 0; x < out.w; ++x) {
      double s = 0.0;
      for (int k = 0; k < kWin; ++k) s += g[k] * tmp.at(y + k, x);
      out.v[static_cast<std::size_t>(y) * out.w + x] = s;
    }
  return out;
}

Plane product(const Plane& a, const Plane& b) {
  Plane o = a;
  for (std::size_t i = 0; i < o.v.size(); ++i) o.v[i] *= b.v[i];
  return o;
}

// Mean SSIM and mean contrast-structure term.
std::pair<double, double> ssim_terms(const Plane& a, const Plane& b) {
  require(a.h >= kWin && a.w >= kWin, Errc::invalid_argument,
          "image " + std::to_string(a.h) + "x" + std::to_string(a.w) + " smaller than the 11x11 SSIM window");
  constexpr double c1 = (0.01 * 255) * (0.01 * 255), c2 = (0.03 * 255) * (0.03 * 255);
  const Plane ma = filter(a), mb = filter(b);
  const Plane saa = filter(product(a, a)), sbb = filter(product(b, b)), sab = filter(product(a, b));
  double s = 0.0, cs = 0.0;
  for (std::size_t i = 0; i < ma.v.size(); ++i) {
    const double va = saa.v[i] - ma.v[i] * ma.v[i], vb = sbb.v[i] - mb.v[i] * mb.v[i], cov = sab.v[i] - ma.v[i] * mb.v[i];
    const double csv = (2 * cov + c2) / (va + vb + c2);
    const double l = (2 * ma.v[i] * mb.v[i] + c1) / (ma.v[i] * ma.v[i] + mb.v[i] * mb.v[i] + c1);
    s += l * csv;
    cs += csv;
  }
  const auto n = static_cast<double>(ma.v.size());
  return {s / n, cs / n};
}

Plane downsample(const Plane& p) {
  Plane o{p.h / 2, p.w / 2, {}};
  o.v.resize(static_cast<std::size_t>(o.h) * o.w);
  for (int y = 0; y < o.h; ++y)
    for (int x = 0; x < o.w; ++x)
      o.v[static_cast<std::size_t>(y) * o.w + x] =
          0.25 * (p.at(2 * y, 2 * x) + p.at(2 * y, 2 * x + 1) + p.at(2 * y + 1, 2 * x) + p.at(2 * y + 1, 2 * x + 1));
  return o;
}

void require_same(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), Errc::shape_mismatch, "image shapes differ: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

}  // namespace

double ssim(const Tensor& a, const Tensor& b) {
  require_same(a, b);
  return ssim_terms(to_plane(a), to_plane(b)).first;
}

double ms_ssim(const Tensor& a, const Tensor& b) {
  require_same(a, b);
  static constexpr std::array<double, 5> weights{0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
  Plane pa = to_plane(a), pb = to_plane(b);
  require(pa.h >= 176 && pa.w >= 176, Errc::invalid_argument,
          "MS-SSIM needs at least 176x176, got " + std::to_string(pa.h) + "x" + std::to_string(pa.w));
  double result = 1.0;
  for (std::size_t s = 0; s < weights.size(); ++s) {
    const auto [full, cs] = ssim_terms(pa, pb);
    const double term = s + 1 == weights.size() ? full : cs;
    result *= std::pow(std::max(term, 0.0), weights[s]);
    if (s + 1 < weights.size()) {
      pa = downsample(pa);
      pb = downsample(pb);
    }
  }
  return result;
}

double topk_accuracy(const Tensor& logits, std::span<const int> labels, int k) {
  require(logits.rank() == 2, Errc::shape_mismatch, "topk_accuracy: logits must be (N,K)");
  const int n = logits.dim(0), classes = logits.dim(1);
  require(static_cast<int>(labels.size()) == n && n > 0, Errc::shape_mismatch, "topk_accuracy: label count mismatch");
  require(k >= 1 && k <= classes, Errc::invalid_argument, "topk_accuracy: k must be in [1, num classes]");
  int hits = 0;
  for (int r = 0; r < n; ++r) {
    const float* row = logits.data() + static_cast<std::size_t>(r) * classes;
    const int y = labels[r];
    require(y >= 0 && y < classes, Errc::invalid_argument, "topk_accuracy: label out of range");
    int ahead = 0;
    for (int j = 0; j < classes; ++j)
      if (row[j] > row[y] || (row[j] == row[y] && j < y)) ++ahead;
    if (ahead < k) ++hits;
  }
  return static_cast<double>(hits) / n;
}

ConfusionMatrix::ConfusionMatrix(int num_classes, int ignore_label)
    : k_(num_classes), ignore_(ignore_label), m_(static_cast<std::size_t>(num_classes) * num_classes, 0) {
  require(num_classes >= 1, Errc::invalid_argument, "confusion matrix needs at least one class");
}

void ConfusionMatrix::add(std::span<const int> pred, std::span<const int> truth) {
  require(pred.size() == truth.size(), Errc::shape_mismatch, "miou: label maps differ in size");
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] == ignore_) continue;
    require(truth[i] >= 0 && truth[i] < k_ && pred[i] >= 0 && pred[i] < k_, Errc::invalid_argument, "miou: label out of range");
    ++m_[static_cast<std::size_t>(truth[i]) * k_ + pred[i]];
  }
}

IouResult ConfusionMatrix::iou() const {
  IouResult r;
  r.per_class.assign(k_, -1.0);
  double total = 0.0;
  for (int c = 0; c < k_; ++c) {
    long long tp = m_[static_cast<std::size_t>(c) * k_ + c], fp = 0, fn = 0;
    for (int o = 0; o < k_; ++o) {
      if (o == c) continue;
      fn += m_[static_cast<std::size_t>(c) * k_ + o];
      fp += m_[static_cast<std::size_t>(o) * k_ + c];
    }
    const long long denom = tp + fp + fn;
    if (denom == 0) continue;
    r.per_class[c] = static_cast<double>(tp) / denom;
    total += r.per_class[c];
    ++r.counted;
  }
  r.mean = r.counted > 0 ? total / r.counted : 0.0;
  return r;
}

double ConfusionMatrix::pixel_accuracy() const {
  long long hit = 0, all = 0;
  for (int c = 0; c < k_; ++c)
    for (int o = 0; o < k_; ++o) {
      all += m_[static_cast<std::size_t>(c) * k_ + o];
      if (c == o) hit += m_[static_cast<std::size_t>(c) * k_ + o];
    }
  return all > 0 ? static_cast<double>(hit) / all : 0.0;
}

IouResult miou(std::span<const int> pred, std::span<const int> truth, int num_classes, int ignore_label) {
  ConfusionMatrix m(num_classes, ignore_label);
  m.add(pred, truth);
  return m.iou();
}

}  // namespace dcic
