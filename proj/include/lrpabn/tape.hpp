#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <vector>

#include "lrpabn/params.hpp"
#include "lrpabn/tensor.hpp"

namespace lrpabn {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the
/// owning tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode differentiation record. Operations append nodes in execution
/// order, so every node's inputs precede it; backward() walks the record once
/// in reverse.
class Tape {
 public:
  /// Receives the gradient of the loss w.r.t. the node's output.
  using BackwardFn = std::function<void(Tape&, const Tensor&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf without gradient tracking.
  Var constant(Tensor value);
  /// Leaf aliasing external storage without gradient tracking. The tensor
  /// must outlive the tape.
  Var frozen(const Tensor& value);
  /// Leaf with gradient tracking; read the result with grad().
  Var variable(Tensor value);
  /// Leaf aliasing a model parameter. backward() accumulates into p.grad.
  Var parameter(Parameter& p);

  /// Appends an operation node. fn may be empty when no input needs a gradient.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);

  const Tensor& value(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  bool requires_grad(Var v) const { return requires_grad(v.id()); }
  /// Gradient buffer of a node, allocated as zeros on first access.
  Tensor& grad(std::size_t id);
  Tensor& grad(Var v) { return grad(v.id()); }

  /// Populates gradients of every tracked leaf w.r.t. a scalar loss.
  void backward(Var loss);

  /// Forward value of the node whose backward rule is running.
  const Tensor& output() const { return value(current_); }

  std::size_t size() const { return nodes_.size(); }
  /// Operation nodes whose backward rule ran in the last backward().
  std::size_t backward_visits() const { return visits_; }

 private:
  struct Node {
    Tensor owned;
    const Tensor* alias = nullptr;
    Tensor grad;
    bool requires_grad = false;
    bool is_leaf = false;
    Parameter* param = nullptr;
    BackwardFn backward;
  };

  Var push(Node node);

  std::deque<Node> nodes_;  // deque: Var::value() references survive growth
  std::size_t visits_ = 0;
  std::size_t current_ = 0;
};

}  // namespace lrpabn
