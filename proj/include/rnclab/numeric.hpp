#pragma once

#include <span>

namespace rnclab {

// max(x) + ln(sum(exp(x - max(x)))). Never overflows for finite input;
// throws ArgumentError on empty input.
double log_sum_exp(std::span<const double> x);

// |a - b| / max(1e-8, |a| + |b|); the relative-error measure used by the
// gradient checker.
double rel_err(double a, double b);

}  // namespace rnclab
