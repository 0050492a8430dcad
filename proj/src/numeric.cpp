#include "rnclab/numeric.hpp"

#include <algorithm>
#include <cmath>

#include "rnclab/errors.hpp"

namespace rnclab {

double log_sum_exp(std::span<const double> x) {
  if (x.empty()) throw ArgumentError("log_sum_exp: empty input");
  double m = x[0];
  for (double v : x) m = std::max(m, v);
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  return m + std::log(s);
}

double rel_err(double a, double b) {
  double denom = std::max(1e-8, std::abs(a) + std::abs(b));
  return std::abs(a - b) / denom;
}

}  // namespace rnclab
