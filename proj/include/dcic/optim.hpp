#pragma once

#include <cstdint>
#include <vector>

#include "dcic/autograd.hpp"

namespace dcic {

/// SGD with heavy-ball momentum and L2 weight decay folded into the gradient:
///   v <- momentum * v + (grad + weight_decay * param)
///   param <- param - lr * lr_mult * v
class SgdMomentum {
 public:
  explicit SgdMomentum(float momentum = 0.9f, float weight_decay = 0.0f)
      : momentum_(momentum), weight_decay_(weight_decay) {}

  /// Registers a parameter; lr_mult scales its learning rate (e.g. a 10x head).
  void add(Parameter& p, float lr_mult = 1.0f);
  void add(const std::vector<Parameter*>& ps, float lr_mult = 1.0f);
  void step(float lr);
  void zero_grad();

  std::int64_t steps() const { return steps_; }
  const Tensor& velocity(std::size_t i) const { return entries_.at(i).velocity; }
  std::size_t size() const { return entries_.size(); }
  float lr_mult(std::size_t i) const { return entries_.at(i).lr_mult; }

 private:
  struct Entry {
    Parameter* param;
    float lr_mult;
    Tensor velocity;
  };
  float momentum_;
  float weight_decay_;
  std::int64_t steps_ = 0;
  std::vector<Entry> entries_;
};

/// Adam with bias correction (Kingma & Ba).
class Adam {
 public:
  explicit Adam(float beta1 = 0.9f, float beta2 = 0.999f, float eps = 1e-8f)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void add(Parameter& p);
  void add(const std::vector<Parameter*>& ps);
  void step(float lr);
  void zero_grad();

  std::int64_t steps() const { return steps_; }

 private:
  struct Entry {
    Parameter* param;
    Tensor m;
    Tensor v;
  };
  float beta1_, beta2_, eps_;
  std::int64_t steps_ = 0;
  std::vector<Entry> entries_;
};

}  // namespace dcic
