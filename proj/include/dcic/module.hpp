#pragma once

#include <deque>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dcic/error.hpp"
#include "dcic/ops.hpp"
#include "dcic/rng.hpp"

namespace dcic {

/// Owns a model's named parameters and batch-norm buffers. Elements have
/// stable addresses, so optimizers and tapes may hold pointers to them.
class ParameterStore {
 public:
  Parameter& add(std::string name, Tensor value);
  BatchNormState& add_batch_norm(std::string name, int channels);

  Parameter& get(std::string_view name);
  const Parameter& get(std::string_view name) const;
  Parameter* find(std::string_view name);
  BatchNormState& batch_norm_state(std::string_view name);

  std::vector<Parameter*> parameters();
  /// Parameters whose name starts with `prefix`.
  std::vector<Parameter*> parameters(std::string_view prefix);
  std::size_t parameter_count() const;

  /// Every persistent array by name: parameters, then "<bn>/running_mean" and
  /// "<bn>/running_var" for each batch-norm layer.
  std::vector<std::pair<std::string, Tensor*>> tensors();
  std::vector<std::pair<std::string, const Tensor*>> tensors() const;

 private:
  std::deque<Parameter> params_;
  std::deque<std::pair<std::string, BatchNormState>> norms_;
};

/// He-normal initialisation: N(0, 2 / fan_in).
Tensor he_normal(Shape shape, int fan_in, Rng& rng);
/// Order-sensitive FNV-1a digest of the float bits of every tensor.
std::uint64_t checksum(const std::vector<std::pair<std::string, const Tensor*>>& tensors);
inline std::uint64_t checksum(const ParameterStore& store) { return checksum(store.tensors()); }

}  // namespace dcic
