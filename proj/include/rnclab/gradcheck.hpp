#pragma once

#include <functional>
#include <string>

#include "rnclab/autodiff.hpp"

namespace rnclab {

struct GradCheckWorst {
  std::string param;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradCheckReport {
  bool pass = false;
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  GradCheckWorst worst;
  std::string message;  // non-empty when an evaluation went non-finite
};

// Central finite differences against the backward pass.
//
// build_loss must construct a scalar loss from the current values of
// `params`. Each parameter entry is perturbed by +/- h and the quotient
// (f(th+h e) - f(th-h e)) / 2h is compared with the analytic gradient under
// rel_err (|a-b| / max(1e-8, |a|+|b|)). Two measurement artifacts are
// handled before a coordinate is declared wrong: a discrepancy below the
// finite-difference resolution (32 eps max(1,|f|) / 2h) is agreement within
// rounding noise and reports a residual error under 1e-10, and a coordinate
// that fails at h is retried at h/8 and h/64 in case a relu kink sits
// inside the window (a wrong gradient fails at every window size).
// Non-finite evaluations are reported in `message` and fail the check.
GradCheckReport grad_check(const std::function<Var()>& build_loss,
                           ParameterSet& params, double h = 1e-5,
                           double tol = 1e-4);

}  // namespace rnclab
