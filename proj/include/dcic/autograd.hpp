#pragma once

#include <deque>
#include <functional>
#include <initializer_list>
#include <string>
#include <vector>

#include "dcic/tensor.hpp"

namespace dcic {

/// A trainable array with a persistent gradient accumulator.
struct Parameter {
  Parameter(std::string name, Tensor value);

  void zero_grad() { grad.fill(0.0f); }

  std::string name;
  Tensor value;
  Tensor grad;
};

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  Tape& tape() const { return *tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Reverse-mode recording. Each op appends a node holding its output and a
/// closure that maps the output adjoint onto input adjoints. Nodes are
/// created in topological order, so replaying closures from the back visits
/// every consumer before its producers. One backward pass per tape.
class Tape {
 public:
  using BackwardFn = std::function<void(const Tensor& grad_out)>;

  /// With record=false no closures are kept and no gradients flow (inference).
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var parameter(Parameter& p);
  /// Appends an op output. `fn` runs during backward only if some input needs a gradient.
  Var emit(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);

  const Tensor& value(Var v) const {
    const Node& n = nodes_[v.id_];
    return n.param != nullptr ? n.param->value : n.value;
  }
  bool needs_grad(Var v) const { return nodes_[v.id_].requires_grad; }
  /// Adds `g` into v's adjoint (allocating it on first use). Ignored if v needs no gradient.
  void accumulate(Var v, const Tensor& g);
  /// Direct access to v's adjoint buffer for in-place accumulation; allocated zeroed.
  Tensor& grad_buffer(Var v);

  /// Seeds d(loss)/d(loss) = 1 and replays all closures. Parameter adjoints are
  /// added into Parameter::grad.
  void backward(Var loss);
  /// Adjoint of a leaf after backward; empty if nothing reached it. Adjoints of
  /// intermediate op outputs are released as the replay passes them.
  const Tensor& grad(Var v) const { return nodes_[v.id_].grad; }

  bool recording() const { return record_; }
  bool consumed() const { return consumed_; }
  std::size_t size() const { return nodes_.size(); }
  /// Parameters registered on this tape, in registration order.
  std::vector<Parameter*> parameters() const;

 private:
  struct Node {
    Tensor value;  // unused for parameter leaves, which alias Parameter::value
    Tensor grad;
    bool requires_grad = false;
    Parameter* param = nullptr;
    BackwardFn backward;
  };

  bool record_;
  bool consumed_ = false;
  std::deque<Node> nodes_;
};

}  // namespace dcic
