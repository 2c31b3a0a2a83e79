#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lrpabn/gradcheck.hpp"

namespace lrpabn {

struct GradCheckRow {
  std::string name;
  GradCheckReport report;
  double seconds = 0.0;
};

/// Finite-difference checks for every differentiable operator, the model
/// components, and tiny end-to-end models (one per pooling variant and
/// alignment loss). Inputs are random and away from kinks.
std::vector<GradCheckRow> run_gradcheck_suite(double tolerance = 1e-4, std::size_t samples = 64,
                                              std::uint64_t seed = 0);

}  // namespace lrpabn
