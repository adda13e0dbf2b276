#include "dcic/autograd.hpp"

#include "dcic/error.hpp"

namespace dcic {

Parameter::Parameter(std::string name_, Tensor value_)
    : name(std::move(name_)), value(std::move(value_)), grad(Tensor::zeros_like(value)) {}

const Tensor& Var::value() const { return tape_->value(*this); }
bool Var::requires_grad() const { return tape_->needs_grad(*this); }

Var Tape::constant(Tensor value) {
  require(!consumed_, Errc::tape_consumed, "tape already consumed by backward()");
  nodes_.push_back(Node{std::move(value), {}, false, nullptr, {}});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::parameter(Parameter& p) {
  require(!consumed_, Errc::tape_consumed, "tape already consumed by backward()");
  nodes_.push_back(Node{Tensor(), {}, record_, &p, {}});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::emit(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
  require(!consumed_, Errc::tape_consumed, "tape already consumed by backward()");
  bool needs = false;
  if (record_) {
    for (const Var& in : inputs) {
      require(in.tape_ == this, Errc::invalid_argument, "op input recorded on a different tape");
      needs = needs || nodes_[in.id_].requires_grad;
    }
  }
  Node node{std::move(value), {}, needs, nullptr, {}};
  if (needs) node.backward = std::move(fn);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Tensor& Tape::grad_buffer(Var v) {
  Node& node = nodes_[v.id_];
  if (node.grad.empty()) node.grad = Tensor::zeros_like(value(v));
  return node.grad;
}

void Tape::accumulate(Var v, const Tensor& g) {
  Node& node = nodes_[v.id_];
  if (!node.requires_grad) return;
  const Tensor& val = value(v);
  require(g.numel() == val.numel(), Errc::shape_mismatch,
          "adjoint " + shape_string(g.shape()) + " for value " + shape_string(val.shape()));
  if (node.grad.empty()) {
    node.grad = g.reshaped(val.shape());
  } else {
    float* dst = node.grad.data();
    const float* src = g.data();
    for (std::size_t i = 0; i < g.numel(); ++i) dst[i] += src[i];
  }
}

void Tape::backward(Var loss) {
  require(!consumed_, Errc::tape_consumed, "tape already consumed by backward()");
  require(loss.tape_ == this, Errc::invalid_argument, "loss was not recorded on this tape");
  const Tensor& lv = value(loss);
  require(lv.numel() == 1, Errc::shape_mismatch, "backward() needs a scalar loss, got " + shape_string(lv.shape()));
  consumed_ = true;
  if (!record_) return;
  nodes_[loss.id_].grad = Tensor(lv.shape(), 1.0f);
  for (int i = loss.id_; i >= 0; --i) {
    Node& node = nodes_[i];
    if (!node.requires_grad || node.grad.empty()) continue;
    if (node.param != nullptr) {
      node.param->grad.add_(node.grad);
    } else if (node.backward) {
      node.backward(node.grad);
      node.backward = nullptr;
      node.grad = Tensor();  // adjoint no longer needed
    }
  }
}

std::vector<Parameter*> Tape::parameters() const {
  std::vector<Parameter*> out;
  for (const Node& n : nodes_)
    if (n.param != nullptr) out.push_back(n.param);
  return out;
}

}  // namespace dcic
