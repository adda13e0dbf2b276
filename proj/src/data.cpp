#include "dcic/data.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdio>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "dcic/bytes.hpp"
#include "dcic/error.hpp"
#include "dcic/image.hpp"

namespace dcic {

namespace {

constexpr float kPi = std::numbers::pi_v<float>;

std::array<float, 3> hsv_to_rgb(float hue_deg, float s, float v) {
  float h = std::fmod(hue_deg, 360.0f);
  if (h < 0) h += 360.0f;
  const float c = v * s, x = c * (1 - std::abs(std::fmod(h / 60.0f, 2.0f) - 1)), m = v - c;
  float r = 0, g = 0, b = 0;
  switch (static_cast<int>(h / 60.0f)) {
    case 0: r = c, g = x; break;
    case 1: r = x, g = c; break;
    case 2: g = c, b = x; break;
    case 3: g = x, b = c; break;
    case 4: r = x, b = c; break;
    default: r = c, b = x; break;
  }
  return {255 * (r + m), 255 * (g + m), 255 * (b + m)};
}

// (u, v) in the shape's rotated frame, r its outer radius.
bool inside(int family, float u, float v, float r) {
  switch (family) {
    case 0: return u * u + v * v <= r * r;
    case 1: return std::abs(u) <= 0.8f * r && std::abs(v) <= 0.8f * r;
    case 2:
      for (int k = 0; k < 3; ++k) {
        const float a = kPi / 2 + 2 * kPi * k / 3;
        if (u * std::cos(a) + v * std::sin(a) > 0.5f * r) return false;
      }
      return true;
    case 3:
      return (std::abs(u) <= 0.3f * r && std::abs(v) <= r) || (std::abs(v) <= 0.3f * r && std::abs(u) <= r);
    default: {
      const float d2 = u * u + v * v;
      return d2 <= r * r && d2 >= 0.3025f * r * r;
    }
  }
}

}  // namespace

Sample synthetic_sample(const SyntheticSpec& spec, std::uint64_t seed, std::uint64_t index) {
  require(spec.size >= 16 && spec.size % 8 == 0, Errc::invalid_argument, "synthetic images need a size divisible by 8, >= 16");
  require(spec.num_classes >= 2 && spec.num_classes <= 2 * kShapeFamilies, Errc::invalid_argument,
          "synthetic data supports 2..10 classes");
  Rng rng = Rng::indexed(seed, "synthetic", index);
  const int n = spec.size;
  Sample s;
  s.label = rng.below(spec.num_classes);
  const int family = s.label % kShapeFamilies;
  const bool cool = spec.num_classes > kShapeFamilies ? s.label >= kShapeFamilies : rng.coin();

  const float gray = rng.uniform(70, 150), slope = rng.uniform(-30, 30), dir = rng.uniform(0, 2 * kPi);
  std::array<float, 3> tint{rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-10, 10)};
  const auto color = hsv_to_rgb(cool ? rng.uniform(170, 250) : rng.uniform(-20, 50), rng.uniform(0.6f, 1.0f),
                                rng.uniform(0.6f, 1.0f));
  const float cx = n / 2.0f + rng.uniform(-0.12f, 0.12f) * n, cy = n / 2.0f + rng.uniform(-0.12f, 0.12f) * n;
  const float radius = rng.uniform(0.22f, 0.32f) * n, angle = rng.uniform(0, 2 * kPi);
  const float ca = std::cos(angle), sa = std::sin(angle);

  s.image = Tensor({3, n, n});
  s.mask.assign(static_cast<std::size_t>(n) * n, 0);
  const std::size_t plane = static_cast<std::size_t>(n) * n;
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * n + x;
      const float dx = x + 0.5f - cx, dy = y + 0.5f - cy;
      const bool fg = inside(family, ca * dx + sa * dy, -sa * dx + ca * dy, radius);
      const float ramp = slope * ((x - n / 2.0f) * std::cos(dir) + (y - n / 2.0f) * std::sin(dir)) / n;
      for (int c = 0; c < 3; ++c) {
        const float base = fg ? color[c] : gray + tint[c] + ramp;
        s.image[c * plane + i] = std::clamp(std::round(base + 4.0f * rng.normal()), 0.0f, 255.0f);
      }
      if (fg) s.mask[i] = family + 1;
    }
  return s;
}

Dataset Dataset::synthetic(SyntheticSpec spec, std::uint64_t seed, std::uint64_t first, std::size_t count) {
  synthetic_sample(spec, seed, first);  // validates the spec
  Dataset d;
  d.spec_ = spec;
  d.seed_ = seed;
  d.first_ = first;
  d.count_ = count;
  d.num_classes_ = spec.num_classes;
  d.seg_classes_ = kSegmentationClasses;
  d.has_masks_ = true;
  return d;
}

Dataset Dataset::from_manifest(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), Errc::io, "cannot open manifest " + path);
  const std::filesystem::path dir = std::filesystem::path(path).parent_path();
  Dataset d;
  std::string line;
  int line_no = 0, max_label = -1, max_mask = 0;
  bool any_label = false, any_mask = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, '\t');) fields.push_back(f);
    const std::string where = path + ":" + std::to_string(line_no);
    require(fields.size() >= 2 && fields.size() <= 3, Errc::corrupt, where + ": expected 2 or 3 tab-separated fields");
    Sample s;
    s.image = read_image((dir / fields[0]).string());
    require(s.image.dim(0) == 3, Errc::corrupt, where + ": images must be P6 color");
    std::string mask_file;
    const bool numeric = std::all_of(fields[1].begin(), fields[1].end(), [](char c) { return std::isdigit(c); });
    if (numeric && !fields[1].empty()) {
      s.label = std::stoi(fields[1]);
      max_label = std::max(max_label, s.label);
      any_label = true;
      if (fields.size() == 3) mask_file = fields[2];
    } else {
      require(fields.size() == 2, Errc::corrupt, where + ": label must be a non-negative integer");
      mask_file = fields[1];
    }
    if (!mask_file.empty()) {
      LabelMap m = read_label_map((dir / mask_file).string());
      require(m.height == s.image.dim(1) && m.width == s.image.dim(2), Errc::shape_mismatch, where + ": mask size differs from image");
      for (int l : m.labels)
        if (l != kIgnoreLabel) max_mask = std::max(max_mask, l);
      s.mask = std::move(m.labels);
      any_mask = true;
    }
    d.items_.push_back(std::move(s));
  }
  require(!d.items_.empty(), Errc::corrupt, path + ": manifest lists no images");
  if (any_mask)
    for (const Sample& s : d.items_) require(!s.mask.empty(), Errc::corrupt, path + ": either every image has a mask or none");
  d.count_ = d.items_.size();
  d.num_classes_ = any_label ? max_label + 1 : 0;
  d.has_masks_ = any_mask;
  d.seg_classes_ = any_mask ? max_mask + 1 : 0;
  return d;
}

std::size_t Dataset::size() const { return count_; }

Sample Dataset::get(std::size_t i) const {
  require(i < count_, Errc::invalid_argument, "dataset index out of range");
  if (spec_) return synthetic_sample(*spec_, seed_, first_ + i);
  return items_[i];
}

void write_dataset(const Dataset& data, const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::ostringstream manifest;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Sample s = data.get(i);
    char name[32];
    std::snprintf(name, sizeof name, "%06zu", i);
    write_image(dir + "/" + name + ".ppm", s.image);
    manifest << name << ".ppm\t" << s.label;
    if (!s.mask.empty()) {
      write_label_map(dir + "/" + name + "_mask.pgm", {s.image.dim(1), s.image.dim(2), s.mask});
      manifest << '\t' << name << "_mask.pgm";
    }
    manifest << '\n';
  }
  const std::string text = manifest.str();
  write_file(dir + "/manifest.tsv", std::vector<std::uint8_t>(text.begin(), text.end()));
}

Crop choose_crop(int h, int w, int crop_h, int crop_w, Mode mode, bool mirror, Rng& rng) {
  require(crop_h >= 1 && crop_w >= 1 && crop_h <= h && crop_w <= w, Errc::invalid_argument,
          "crop " + std::to_string(crop_h) + "x" + std::to_string(crop_w) + " larger than input " + std::to_string(h) + "x" +
              std::to_string(w));
  if (mode == Mode::eval) return {(h - crop_h) / 2, (w - crop_w) / 2, false};
  Crop c;
  c.y = rng.below(h - crop_h + 1);
  c.x = rng.below(w - crop_w + 1);
  c.mirror = mirror && rng.coin();
  return c;
}

Tensor apply_crop(const Tensor& image, const Crop& crop, int crop_h, int crop_w, int scale) {
  require(image.rank() == 3, Errc::shape_mismatch, "crop expects (C,H,W), got " + shape_string(image.shape()));
  const int c = image.dim(0), h = image.dim(1), w = image.dim(2);
  const int ch = crop_h * scale, cw = crop_w * scale, y0 = crop.y * scale, x0 = crop.x * scale;
  require(y0 + ch <= h && x0 + cw <= w, Errc::invalid_argument, "crop window outside the input");
  Tensor out({c, ch, cw});
  for (int k = 0; k < c; ++k)
    for (int y = 0; y < ch; ++y)
      for (int x = 0; x < cw; ++x) {
        const int sx = crop.mirror ? x0 + cw - 1 - x : x0 + x;
        out[(static_cast<std::size_t>(k) * ch + y) * cw + x] = image[(static_cast<std::size_t>(k) * h + y0 + y) * w + sx];
      }
  return out;
}

std::vector<int> apply_crop(const std::vector<int>& labels, int h, int w, const Crop& crop, int crop_h, int crop_w, int scale) {
  require(labels.size() == static_cast<std::size_t>(h) * w, Errc::shape_mismatch, "label map size mismatch");
  const int ch = crop_h * scale, cw = crop_w * scale, y0 = crop.y * scale, x0 = crop.x * scale;
  require(y0 + ch <= h && x0 + cw <= w, Errc::invalid_argument, "crop window outside the label map");
  std::vector<int> out(static_cast<std::size_t>(ch) * cw);
  for (int y = 0; y < ch; ++y)
    for (int x = 0; x < cw; ++x)
      out[static_cast<std::size_t>(y) * cw + x] = labels[static_cast<std::size_t>(y0 + y) * w + (crop.mirror ? x0 + cw - 1 - x : x0 + x)];
  return out;
}

Tensor mirror(const Tensor& image) {
  require(image.rank() == 3, Errc::shape_mismatch, "mirror expects (C,H,W)");
  return apply_crop(image, {0, 0, true}, image.dim(1), image.dim(2));
}

Tensor subtract_mean(Tensor image, const std::vector<float>& mean) {
  if (mean.empty()) return image;
  require(image.rank() == 3 && static_cast<int>(mean.size()) == image.dim(0), Errc::shape_mismatch,
          "mean has " + std::to_string(mean.size()) + " channels, input " + shape_string(image.shape()));
  const std::size_t plane = static_cast<std::size_t>(image.dim(1)) * image.dim(2);
  for (std::size_t c = 0; c < mean.size(); ++c)
    for (std::size_t i = 0; i < plane; ++i) image[c * plane + i] -= mean[c];
  return image;
}

std::vector<float> channel_means(const std::vector<Tensor>& items) {
  require(!items.empty(), Errc::invalid_argument, "channel_means: no items");
  const int c = items.front().dim(0);
  std::vector<double> sum(c, 0.0);
  double count = 0.0;
  for (const Tensor& t : items) {
    require(t.rank() == 3 && t.dim(0) == c, Errc::shape_mismatch, "channel_means: inconsistent items");
    const std::size_t plane = static_cast<std::size_t>(t.dim(1)) * t.dim(2);
    for (int k = 0; k < c; ++k)
      for (std::size_t i = 0; i < plane; ++i) sum[k] += t[k * plane + i];
    count += static_cast<double>(plane);
  }
  std::vector<float> out(c);
  for (int k = 0; k < c; ++k) out[k] = static_cast<float>(sum[k] / count);
  return out;
}

Tensor mosaic(const std::vector<Tensor>& tiles, int cols) {
  require(!tiles.empty() && cols >= 1, Errc::invalid_argument, "mosaic: no tiles");
  const int c = tiles[0].dim(0), h = tiles[0].dim(1), w = tiles[0].dim(2);
  const int rows = (static_cast<int>(tiles.size()) + cols - 1) / cols;
  Tensor out({c, rows * h, cols * w});
  for (std::size_t t = 0; t < tiles.size(); ++t) {
    require(tiles[t].shape() == tiles[0].shape(), Errc::shape_mismatch, "mosaic: tiles differ in shape");
    const int ty = static_cast<int>(t) / cols, tx = static_cast<int>(t) % cols;
    for (int k = 0; k < c; ++k)
      for (int y = 0; y < h; ++y)
        std::copy_n(tiles[t].data() + (static_cast<std::size_t>(k) * h + y) * w, w,
                    out.data() + (static_cast<std::size_t>(k) * rows * h + ty * h + y) * cols * w + tx * w);
  }
  return out;
}

}  // namespace dcic
