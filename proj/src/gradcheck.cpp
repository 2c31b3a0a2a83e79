#include "lrpabn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

namespace lrpabn {

namespace {
double evaluate(const LossProgram& f, ModelParams& params) {
  Tape tape;
  return f(tape, params).value()[0];
}
}  // namespace

GradCheckReport finite_diff_check(const LossProgram& f, ModelParams& params, double tolerance,
                                  std::size_t samples, std::uint64_t seed, double step) {
  GradCheckReport report;
  report.tolerance = tolerance;

  params.zero_grad();
  {
    Tape tape;
    Var loss = f(tape, params);
    tape.backward(loss);
  }

  std::vector<Parameter*> order;
  for (auto& p : params) order.push_back(&p);
  if (order.empty()) return report;

  std::mt19937_64 rng(seed);
  for (std::size_t s = 0; s < samples; ++s) {
    Parameter& p = *order[s % order.size()];
    std::uniform_int_distribution<std::size_t> pick(0, p.value.size() - 1);
    const std::size_t k = pick(rng);
    const double original = p.value[k];
    p.value[k] = original + step;
    const double up = evaluate(f, params);
    p.value[k] = original - step;
    const double down = evaluate(f, params);
    p.value[k] = original;

    const double numeric = (up - down) / (2.0 * step);
    const double analytic = p.grad[k];
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    const double err = std::abs(analytic - numeric) / denom;
    ++report.coordinates;
    if (err > report.worst_relative_error || report.worst_coordinate.empty()) {
      report.worst_relative_error = std::max(report.worst_relative_error, err);
      report.worst_coordinate = p.name + "[" + std::to_string(k) + "]";
      report.worst_analytic = analytic;
      report.worst_numeric = numeric;
    }
  }
  return report;
}

}  // namespace lrpabn
