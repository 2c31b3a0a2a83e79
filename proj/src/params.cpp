#include "lrpabn/params.hpp"

#include <stdexcept>

namespace lrpabn {

Parameter& ModelParams::add(std::string name, Tensor value) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter " + name);
  // the gradient buffer is allocated by zero_grad() or the first backward pass
  params_.push_back(Parameter{std::move(name), std::move(value), Tensor()});
  return params_.back();
}

Parameter* ModelParams::find(std::string_view name) {
  for (auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

const Parameter* ModelParams::find(std::string_view name) const {
  for (const auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

Parameter& ModelParams::get(std::string_view name) {
  if (auto* p = find(name)) return *p;
  throw std::out_of_range("no parameter named " + std::string(name));
}

const Parameter& ModelParams::get(std::string_view name) const {
  if (const auto* p = find(name)) return *p;
  throw std::out_of_range("no parameter named " + std::string(name));
}

std::size_t ModelParams::total_values() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

std::size_t ModelParams::values_with_prefix(std::string_view prefix) const {
  std::size_t n = 0;
  for (const auto& p : params_) {
    if (std::string_view(p.name).substr(0, prefix.size()) == prefix) {
      n += p.value.size();
    }
  }
  return n;
}

void ModelParams::zero_grad() {
  for (auto& p : params_) {
    if (p.grad.shape() != p.value.shape()) {
      p.grad = Tensor(p.value.shape(), 0.0);
    } else {
      p.grad.fill(0.0);
    }
  }
}

}  // namespace lrpabn
