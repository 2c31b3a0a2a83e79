#pragma once

#include <stdexcept>

namespace lrpabn {

/// Operand shapes are incompatible with an operator.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Degenerate numeric input: zero-variance batches, zero vectors, non-finite
/// losses.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration value, unknown key, or unusable dataset layout.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An episode cannot be formed or scored: too few samples, foreign labels.
class EpisodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed binary artifact (checkpoint or raw dataset).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A well-formed artifact that does not fit the model it is loaded into.
class IncompatibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace lrpabn
