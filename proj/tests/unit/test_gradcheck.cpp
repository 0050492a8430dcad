#include <doctest.h>

#include "rnclab/errors.hpp"
#include "rnclab/gradcheck.hpp"
#include "rnclab/random.hpp"

using namespace rnclab;

TEST_CASE("grad_check on a quadratic") {
  ParameterSet params;
  Var theta = params.add("theta", Matrix::from_rows({{1, 2}}));
  auto build = [&]() { return sum_all(mul(theta, theta)); };  // f = theta . theta
  GradCheckReport rep = grad_check(build, params, 1e-5, 1e-9);
  CHECK(rep.pass);
  CHECK(rep.max_rel_err < 1e-9);
  CHECK(rep.checked == 2);
  // analytic gradient is [2, 4]
  CHECK(theta.grad().at(0, 0) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(theta.grad().at(0, 1) == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("grad_check on a constant function") {
  ParameterSet params;
  params.add("theta", Matrix::from_rows({{3, -1}}));
  auto build = [&]() { return sum_all(scale(params.at("theta"), 0.0)); };
  GradCheckReport rep = grad_check(build, params, 1e-5, 1e-9);
  CHECK(rep.pass);
  CHECK(rep.max_rel_err == 0.0);
}

TEST_CASE("grad_check flags a wrong gradient") {
  ParameterSet params;
  Var theta = params.add("theta", Matrix::from_rows({{1.5}}));
  // f reads the value but the graph (and therefore the analytic gradient)
  // pretends the function is 3x instead of x^2 + x
  auto build = [&]() {
    double v = theta.value().at(0, 0);
    Matrix out(1, 1);
    out.at(0, 0) = v * v + v;
    Var fake = scale(theta, 3.0);
    return detail::make_op(std::move(out), {fake}, [](detail::Node& self) {
      detail::Node& p = *self.parents[0];
      if (p.requires_grad) p.grad.at(0, 0) += self.grad.at(0, 0);
    });
  };
  GradCheckReport rep = grad_check(build, params, 1e-5, 1e-4);
  CHECK_FALSE(rep.pass);
  CHECK(rep.worst.param == "theta");
}

TEST_CASE("grad_check validates its own arguments") {
  ParameterSet params;
  params.add("theta", Matrix(1, 1));
  auto build = [&]() { return sum_all(params.at("theta")); };
  CHECK_THROWS_AS(grad_check(build, params, 0.0, 1e-4), ArgumentError);
  CHECK_THROWS_AS(grad_check(build, params, 1e-5, -1.0), ArgumentError);
}

TEST_CASE("grad_check reports non-finite evaluations") {
  ParameterSet params;
  Var theta = params.add("theta", Matrix::from_rows({{0.0}}));
  auto build = [&]() {
    Matrix out(1, 1);
    out.at(0, 0) = std::numeric_limits<double>::quiet_NaN();
    return detail::make_op(std::move(out), {theta}, [](detail::Node&) {});
  };
  GradCheckReport rep = grad_check(build, params, 1e-5, 1e-4);
  CHECK_FALSE(rep.pass);
  CHECK_FALSE(rep.message.empty());
}
