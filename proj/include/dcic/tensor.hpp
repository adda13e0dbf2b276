#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace dcic {

/// Extents, outermost first. 4-D image data is (batch, channels, height, width).
using Shape = std::vector<int>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major float array. Value type: copies are deep.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> values);

  static Tensor scalar(float value) { return Tensor({1}, value); }
  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

  const Shape& shape() const { return shape_; }
  int dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t rank() const { return shape_.size(); }
  std::size_t numel() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  float* data() { return values_.data(); }
  const float* data() const { return values_.data(); }
  std::span<float> values() { return values_; }
  std::span<const float> values() const { return values_; }
  std::vector<float>& storage() { return values_; }
  const std::vector<float>& storage() const { return values_; }

  float& operator[](std::size_t i) { return values_[i]; }
  float operator[](std::size_t i) const { return values_[i]; }

  // 4-D accessors, no bounds checks beyond the vector's.
  float& at(int n, int c, int h, int w) {
    return values_[((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  float at(int n, int c, int h, int w) const {
    return values_[((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  float item() const;
  bool all_finite() const;
  void fill(float value);
  /// Same storage reinterpreted under a new shape of equal element count.
  Tensor reshaped(Shape shape) const;
  /// Elementwise this += other (shapes must match).
  void add_(const Tensor& other);

 private:
  Shape shape_;
  std::vector<float> values_;
};

/// Slices batch items [begin, end) along axis 0.
Tensor slice_batch(const Tensor& t, int begin, int end);
/// Concatenates along axis 0; all trailing extents must agree.
Tensor stack_batch(std::span<const Tensor> items);

}  // namespace dcic
