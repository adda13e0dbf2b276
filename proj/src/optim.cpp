#include "dcic/optim.hpp"

#include <cmath>

#include "dcic/error.hpp"

namespace dcic {

namespace {

void check_grad(const Parameter& p) {
  require(p.grad.shape() == p.value.shape(), Errc::shape_mismatch,
          "optimizer: gradient shape " + shape_string(p.grad.shape()) + " for parameter " + p.name + " " +
              shape_string(p.value.shape()));
}

}  // namespace

void SgdMomentum::add(Parameter& p, float lr_mult) { entries_.push_back({&p, lr_mult, Tensor::zeros_like(p.value)}); }

void SgdMomentum::add(const std::vector<Parameter*>& ps, float lr_mult) {
  for (Parameter* p : ps) add(*p, lr_mult);
}

void SgdMomentum::step(float lr) {
  for (Entry& e : entries_) {
    Parameter& p = *e.param;
    check_grad(p);
    const float rate = lr * e.lr_mult;
    for (std::size_t i = 0; i < p.value.numel(); ++i) {
      e.velocity[i] = momentum_ * e.velocity[i] + (p.grad[i] + weight_decay_ * p.value[i]);
      p.value[i] -= rate * e.velocity[i];
    }
  }
  ++steps_;
}

void SgdMomentum::zero_grad() {
  for (Entry& e : entries_) e.param->zero_grad();
}

void Adam::add(Parameter& p) { entries_.push_back({&p, Tensor::zeros_like(p.value), Tensor::zeros_like(p.value)}); }

void Adam::add(const std::vector<Parameter*>& ps) {
  for (Parameter* p : ps) add(*p);
}

void Adam::step(float lr) {
  ++steps_;
  const double c1 = 1.0 - std::pow(static_cast<double>(beta1_), static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(static_cast<double>(beta2_), static_cast<double>(steps_));
  for (Entry& e : entries_) {
    Parameter& p = *e.param;
    check_grad(p);
    for (std::size_t i = 0; i < p.value.numel(); ++i) {
      const float g = p.grad[i];
      e.m[i] = beta1_ * e.m[i] + (1.0f - beta1_) * g;
      e.v[i] = beta2_ * e.v[i] + (1.0f - beta2_) * g * g;
      const double mhat = e.m[i] / c1;
      const double vhat = e.v[i] / c2;
      p.value[i] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + eps_));
    }
  }
}

void Adam::zero_grad() {
  for (Entry& e : entries_) e.param->zero_grad();
}

}  // namespace dcic
