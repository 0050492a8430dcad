#include "rnclab/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "rnclab/errors.hpp"
#include "rnclab/numeric.hpp"

namespace rnclab {

GradCheckReport grad_check(const std::function<Var()>& build_loss,
                           ParameterSet& params, double h, double tol) {
  if (h <= 0.0) throw ArgumentError("grad_check: h must be positive");
  if (tol <= 0.0) throw ArgumentError("grad_check: tol must be positive");

  GradCheckReport report;

  params.zero_grads();
  Var loss = build_loss();
  if (!loss.value().all_finite()) {
    report.message = "analytic evaluation is non-finite";
    return report;
  }
  // The quotient can't resolve differences below the rounding noise of f
  // itself. A discrepancy under this floor is agreement-within-noise: it
  // reports a residual error in the numerically-zero decade (scaled by how
  // close to the floor it sits) instead of being pushed through the 1e-8
  // denominator floor, which would turn pure float noise on flat directions
  // (e.g. the embedding translation invariance of the neg-l2 ranking loss)
  // into rel-errs around 1e-3.
  const double f0 = loss.value().at(0, 0);
  const double fd_resolution = 32.0 * std::numeric_limits<double>::epsilon() *
                               std::max(1.0, std::abs(f0)) / (2.0 * h);
  constexpr double kSubResolutionErr = 1e-10;
  loss.backward();
  std::map<std::string, Matrix> analytic;
  for (const auto& [name, var] : params) analytic.emplace(name, var.grad());

  auto eval = [&]() {
    NoGradGuard no_grad;
    return build_loss().value().at(0, 0);
  };

  bool bad_eval = false;
  std::string bad_where;
  auto quotient = [&](double& slot, double saved, double step) {
    slot = saved + step;
    double f_plus = eval();
    slot = saved - step;
    double f_minus = eval();
    slot = saved;
    if (!std::isfinite(f_plus) || !std::isfinite(f_minus)) bad_eval = true;
    return (f_plus - f_minus) / (2.0 * step);
  };
  auto error_at = [&](double analytic_k, double numeric, double step) {
    double gap = std::abs(analytic_k - numeric);
    double resolution = fd_resolution * (h / step);
    return gap <= resolution ? (gap / resolution) * kSubResolutionErr
                             : rel_err(analytic_k, numeric);
  };

  for (auto& [name, var] : params) {
    Matrix& theta = var.value();
    const Matrix& grad = analytic.at(name);
    for (std::size_t k = 0; k < theta.size(); ++k) {
      double saved = theta.values()[k];
      double analytic_k = grad.values()[k];
      double numeric = quotient(theta.values()[k], saved, h);
      double err = error_at(analytic_k, numeric, h);
      // A failure can be a kink (relu) sitting inside the +/-h window
      // rather than a wrong gradient; a genuinely wrong gradient fails at
      // every window size, so retry with shrunken steps before flagging.
      for (double shrink : {8.0, 64.0}) {
        if (err <= tol || bad_eval) break;
        double retry = quotient(theta.values()[k], saved, h / shrink);
        err = std::min(err, error_at(analytic_k, retry, h / shrink));
        if (err <= tol) numeric = retry;
      }
      if (bad_eval) {
        report.message = "non-finite evaluation at " + name + "[" + std::to_string(k) + "]";
        report.pass = false;
        return report;
      }
      ++report.checked;
      if (err >= report.max_rel_err) {
        report.max_rel_err = err;
        report.worst = {name, k, analytic_k, numeric};
      }
    }
  }
  report.pass = report.max_rel_err <= tol;
  return report;
}

}  // namespace rnclab
