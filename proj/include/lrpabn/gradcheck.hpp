#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "lrpabn/params.hpp"
#include "lrpabn/tape.hpp"

namespace lrpabn {

/// Builds a scalar loss on the given tape from the given parameters. Must be
/// deterministic for fixed parameter values.
using LossProgram = std::function<Var(Tape&, ModelParams&)>;

struct GradCheckReport {
  double worst_relative_error = 0.0;
  std::string worst_coordinate;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coordinates = 0;
  double tolerance = 0.0;
  bool passed() const { return worst_relative_error < tolerance; }
};

/// Compares reverse-mode gradients against central differences
/// (f(p+h) - f(p-h)) / 2h at `samples` coordinates, cycling through the
/// parameters so each one is probed. The relative error at a coordinate is
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
GradCheckReport finite_diff_check(const LossProgram& f, ModelParams& params, double tolerance,
                                  std::size_t samples, std::uint64_t seed = 0,
                                  double step = 1e-5);

}  // namespace lrpabn
