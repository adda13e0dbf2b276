#include "dcic/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dcic/error.hpp"

namespace dcic {

const char* errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::invalid_argument: return "invalid argument";
    case Errc::shape_mismatch: return "shape mismatch";
    case Errc::io: return "i/o error";
    case Errc::bad_magic: return "bad magic";
    case Errc::unsupported_version: return "unsupported version";
    case Errc::corrupt: return "corrupt data";
    case Errc::truncated: return "truncated";
    case Errc::kind_mismatch: return "kind mismatch";
    case Errc::numeric: return "numeric error";
    case Errc::tape_consumed: return "tape consumed";
    case Errc::usage: return "usage error";
  }
  return "unknown";
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    require(d >= 0, Errc::invalid_argument, "negative extent in shape " + shape_string(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)), values_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<float> values) : shape_(std::move(shape)), values_(std::move(values)) {
  require(values_.size() == shape_numel(shape_), Errc::shape_mismatch,
          "value count " + std::to_string(values_.size()) + " does not match shape " + shape_string(shape_));
}

float Tensor::item() const {
  require(values_.size() == 1, Errc::shape_mismatch, "item() on tensor of shape " + shape_string(shape_));
  return values_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](float v) { return std::isfinite(v); });
}

void Tensor::fill(float value) { std::fill(values_.begin(), values_.end(), value); }

Tensor Tensor::reshaped(Shape shape) const {
  require(shape_numel(shape) == values_.size(), Errc::shape_mismatch,
          "cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  return Tensor(std::move(shape), values_);
}

void Tensor::add_(const Tensor& other) {
  require(other.shape_ == shape_, Errc::shape_mismatch,
          "add_: " + shape_string(shape_) + " vs " + shape_string(other.shape_));
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
}

Tensor slice_batch(const Tensor& t, int begin, int end) {
  require(t.rank() >= 1 && begin >= 0 && begin <= end && end <= t.dim(0), Errc::invalid_argument,
          "slice_batch: bad range on " + shape_string(t.shape()));
  Shape shape = t.shape();
  shape[0] = end - begin;
  const std::size_t stride = t.numel() / std::max(1, t.dim(0));
  std::vector<float> values(t.values().begin() + begin * stride, t.values().begin() + end * stride);
  return Tensor(std::move(shape), std::move(values));
}

Tensor stack_batch(std::span<const Tensor> items) {
  require(!items.empty(), Errc::invalid_argument, "stack_batch: no items");
  Shape shape = items[0].shape();
  int total = 0;
  for (const auto& t : items) {
    Shape s = t.shape();
    require(s.size() == shape.size() && std::equal(s.begin() + 1, s.end(), shape.begin() + 1),
            Errc::shape_mismatch, "stack_batch: " + shape_string(s) + " vs " + shape_string(shape));
    total += s[0];
  }
  shape[0] = total;
  std::vector<float> values;
  values.reserve(shape_numel(shape));
  for (const auto& t : items) values.insert(values.end(), t.values().begin(), t.values().end());
  return Tensor(std::move(shape), std::move(values));
}

}  // namespace dcic
