#pragma once

#include <map>
#include <random>
#include <string>
#include <string_view>

#include "lrpabn/params.hpp"
#include "lrpabn/tape.hpp"

namespace lrpabn {

/// Resolves parameter names to tape leaves. Bound to a mutable ModelParams,
/// leaves track gradients; bound to a const one, they are frozen aliases.
/// Each name maps to a single leaf per binding.
class ParamBinding {
 public:
  ParamBinding(Tape& tape, ModelParams& params) : tape_(tape), mutable_(&params), frozen_(&params) {}
  ParamBinding(Tape& tape, const ModelParams& params) : tape_(tape), frozen_(&params) {}

  Var operator()(std::string_view name);
  Tape& tape() { return tape_; }
  const ModelParams& params() const { return *frozen_; }
  bool trainable() const { return mutable_ != nullptr; }

 private:
  Tape& tape_;
  ModelParams* mutable_ = nullptr;
  const ModelParams* frozen_ = nullptr;
  std::map<std::string, Var, std::less<>> cache_;
};

/// Tensor of i.i.d. uniform values in [-bound, bound].
Tensor uniform_tensor(Shape shape, double bound, std::mt19937_64& rng);

}  // namespace lrpabn
