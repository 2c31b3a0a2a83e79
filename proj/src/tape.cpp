#include "lrpabn/tape.hpp"

#include <stdexcept>

namespace lrpabn {

const Tensor& Var::value() const {
  if (!tape_) throw std::logic_error("use of an unbound Var");
  return tape_->value(id_);
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  Node n;
  n.owned = std::move(value);
  n.is_leaf = true;
  return push(std::move(n));
}

Var Tape::frozen(const Tensor& value) {
  Node n;
  n.alias = &value;
  n.is_leaf = true;
  return push(std::move(n));
}

Var Tape::variable(Tensor value) {
  Node n;
  n.owned = std::move(value);
  n.is_leaf = true;
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::parameter(Parameter& p) {
  Node n;
  n.alias = &p.value;
  n.is_leaf = true;
  n.requires_grad = true;
  n.param = &p;
  return push(std::move(n));
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
  Node n;
  n.owned = std::move(value);
  for (const Var& v : inputs) {
    if (v.tape() != this) throw std::logic_error("operands recorded on different tapes");
    n.requires_grad = n.requires_grad || nodes_[v.id()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(fn);
  return push(std::move(n));
}

const Tensor& Tape::value(std::size_t id) const {
  const Node& n = nodes_.at(id);
  return n.alias ? *n.alias : n.owned;
}

Tensor& Tape::grad(std::size_t id) {
  Node& n = nodes_.at(id);
  if (n.grad.empty()) n.grad = Tensor(value(id).shape(), 0.0);
  return n.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw std::logic_error("loss recorded on a different tape");
  if (loss.value().size() != 1) {
    throw ShapeError("backward requires a scalar loss, got shape " +
                     to_string(loss.shape()));
  }
  visits_ = 0;
  grad(loss.id())[0] += 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.empty()) continue;
    if (n.is_leaf) {
      if (n.param) {
        Tensor& acc = n.param->grad;
        if (acc.shape() != n.grad.shape()) acc = Tensor(n.grad.shape(), 0.0);
        for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += n.grad[k];
      }
      continue;
    }
    if (n.backward) {
      Tensor g = std::move(n.grad);
      n.grad = Tensor();
      current_ = i;
      n.backward(*this, g);
      ++visits_;
    }
  }
}

}  // namespace lrpabn
