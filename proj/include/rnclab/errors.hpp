#pragma once

#include <stdexcept>
#include <string>

namespace rnclab {

// Shape disagreement between operands (matmul, elementwise ops, ...).
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A precondition on an argument value failed (empty input, bad index, ...).
struct ArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A numeric-domain failure at runtime (NaN/Inf, zero-norm row under cosine).
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad configuration: unparseable files, invalid experiment settings.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A training stage produced a non-finite or runaway loss.
struct DivergedError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace rnclab
