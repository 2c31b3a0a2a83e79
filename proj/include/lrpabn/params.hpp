#pragma once

#include <deque>
#include <string>
#include <string_view>
#include <vector>

#include "lrpabn/tensor.hpp"

namespace lrpabn {

/// A named learnable tensor together with its gradient accumulator. The
/// accumulator stays empty until zero_grad() or a backward pass reaches it.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
};

/// Ordered collection of named parameters. Insertion order is the
/// serialization order; references returned by add() stay valid.
class ModelParams {
 public:
  Parameter& add(std::string name, Tensor value);

  Parameter& get(std::string_view name);
  const Parameter& get(std::string_view name) const;
  const Parameter* find(std::string_view name) const;
  Parameter* find(std::string_view name);
  bool contains(std::string_view name) const { return find(name) != nullptr; }

  std::size_t size() const { return params_.size(); }
  /// Total number of scalar values across all parameters.
  std::size_t total_values() const;
  /// Number of scalar values held by parameters whose name starts with prefix.
  std::size_t values_with_prefix(std::string_view prefix) const;

  void zero_grad();

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::deque<Parameter> params_;
};

}  // namespace lrpabn
