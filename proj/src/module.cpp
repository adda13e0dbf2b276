#include "dcic/module.hpp"

#include <bit>
#include <cmath>

namespace dcic {

Parameter& ParameterStore::add(std::string name, Tensor value) {
  require(find(name) == nullptr, Errc::invalid_argument, "duplicate parameter " + name);
  return params_.emplace_back(std::move(name), std::move(value));
}

BatchNormState& ParameterStore::add_batch_norm(std::string name, int channels) {
  return norms_.emplace_back(std::move(name), BatchNormState(channels)).second;
}

Parameter* ParameterStore::find(std::string_view name) {
  for (Parameter& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

Parameter& ParameterStore::get(std::string_view name) {
  Parameter* p = find(name);
  if (p == nullptr) fail(Errc::invalid_argument, "no parameter named " + std::string(name));
  return *p;
}

const Parameter& ParameterStore::get(std::string_view name) const {
  return const_cast<ParameterStore*>(this)->get(name);
}

BatchNormState& ParameterStore::batch_norm_state(std::string_view name) {
  for (auto& [n, s] : norms_)
    if (n == name) return s;
  fail(Errc::invalid_argument, "no batch norm named " + std::string(name));
}

std::vector<Parameter*> ParameterStore::parameters() {
  std::vector<Parameter*> out;
  for (Parameter& p : params_) out.push_back(&p);
  return out;
}

std::vector<Parameter*> ParameterStore::parameters(std::string_view prefix) {
  std::vector<Parameter*> out;
  for (Parameter& p : params_)
    if (p.name.starts_with(prefix)) out.push_back(&p);
  return out;
}

std::size_t ParameterStore::parameter_count() const {
  std::size_t n = 0;
  for (const Parameter& p : params_) n += p.value.numel();
  return n;
}

std::vector<std::pair<std::string, Tensor*>> ParameterStore::tensors() {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (Parameter& p : params_) out.emplace_back(p.name, &p.value);
  for (auto& [n, s] : norms_) {
    out.emplace_back(n + "/running_mean", &s.running_mean);
    out.emplace_back(n + "/running_var", &s.running_var);
  }
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> ParameterStore::tensors() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  for (auto& [n, t] : const_cast<ParameterStore*>(this)->tensors()) out.emplace_back(n, t);
  return out;
}

Tensor he_normal(Shape shape, int fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const float sd = std::sqrt(2.0f / static_cast<float>(fan_in));
  for (float& v : t.values()) v = sd * rng.normal();
  return t;
}

std::uint64_t checksum(const std::vector<std::pair<std::string, const Tensor*>>& tensors) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto eat = [&](std::uint32_t w) {
    for (int i = 0; i < 4; ++i) {
      h ^= (w >> (8 * i)) & 0xff;
      h *= 0x100000001b3ull;
    }
  };
  for (const auto& [name, t] : tensors) {
    for (char c : name) eat(static_cast<unsigned char>(c));
    for (float v : t->values()) eat(std::bit_cast<std::uint32_t>(v));
  }
  return h;
}

}  // namespace dcic
