#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dcic/ops.hpp"
#include "dcic/rng.hpp"
#include "dcic/tensor.hpp"

namespace dcic {

struct Sample {
  Tensor image;            // (3,H,W), 0..255
  int label = 0;
  std::vector<int> mask;   // H*W labels, empty when the source has none
};

/// Procedural shapes on a smooth noisy background. Shape family = label % 5
/// (disk, square, triangle, cross, ring); labels 5..9 use the cool palette,
/// 0..4 the warm one. Masks mark the shape's pixels with family + 1.
struct SyntheticSpec {
  int size = 64;
  int num_classes = 10;
};

inline constexpr int kShapeFamilies = 5;
inline constexpr int kSegmentationClasses = kShapeFamilies + 1;
inline constexpr int kIgnoreLabel = 255;

/// Pure function of (spec, seed, index).
Sample synthetic_sample(const SyntheticSpec& spec, std::uint64_t seed, std::uint64_t index);

class Dataset {
 public:
  /// Items first .. first+count-1 of the synthetic stream for `seed`.
  static Dataset synthetic(SyntheticSpec spec, std::uint64_t seed, std::uint64_t first, std::size_t count);
  /// Manifest lines: "image<TAB>label", "image<TAB>mask" or
  /// "image<TAB>label<TAB>mask"; paths relative to the manifest's directory.
  static Dataset from_manifest(const std::string& path);

  std::size_t size() const;
  Sample get(std::size_t i) const;
  int num_classes() const { return num_classes_; }
  int segmentation_classes() const { return seg_classes_; }
  bool has_masks() const { return has_masks_; }

 private:
  std::optional<SyntheticSpec> spec_;
  std::uint64_t seed_ = 0, first_ = 0;
  std::size_t count_ = 0;
  std::vector<Sample> items_;
  int num_classes_ = 0;
  int seg_classes_ = 0;
  bool has_masks_ = false;
};

/// Writes a dataset as PPM images, P5 masks and a manifest.
void write_dataset(const Dataset& data, const std::string& dir);

struct Crop {
  int y = 0, x = 0;
  bool mirror = false;
};

/// train: random offset and random horizontal flip; eval: centered, no flip.
Crop choose_crop(int h, int w, int crop_h, int crop_w, Mode mode, bool mirror, Rng& rng);
/// (C,H,W) window at the crop offset times `scale`, flipped if requested.
Tensor apply_crop(const Tensor& image, const Crop& crop, int crop_h, int crop_w, int scale = 1);
std::vector<int> apply_crop(const std::vector<int>& labels, int h, int w, const Crop& crop, int crop_h, int crop_w,
                            int scale = 1);
Tensor mirror(const Tensor& image);

/// Subtracts a per-channel mean from a (C,H,W) tensor.
Tensor subtract_mean(Tensor image, const std::vector<float>& mean);
/// Per-channel mean over (C,H,W) items.
std::vector<float> channel_means(const std::vector<Tensor>& items);

/// Tiles (C,h,w) images row-major into a grid `cols` wide.
Tensor mosaic(const std::vector<Tensor>& tiles, int cols);

}  // namespace dcic
