#include <doctest.h>

#include <cmath>

#include "rnclab/autodiff.hpp"
#include "rnclab/errors.hpp"
#include "rnclab/gradcheck.hpp"
#include "rnclab/numeric.hpp"
#include "rnclab/random.hpp"

using namespace rnclab;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double lo = -1.0,
                     double hi = 1.0) {
  Matrix m(r, c);
  for (double& v : m.values()) v = rng.uniform(lo, hi);
  return m;
}

}  // namespace

TEST_CASE("matmul values") {
  Var eye = Var::leaf(Matrix::from_rows({{1, 0}, {0, 1}}));
  Var m = Var::leaf(Matrix::from_rows({{2, 3}, {4, 5}}));
  Matrix out = matmul(eye, m).value();
  for (std::size_t i = 0; i < out.size(); ++i) {
    CHECK(out.values()[i] == m.value().values()[i]);
  }

  Var a = Var::leaf(Matrix::from_rows({{1, 2}, {3, 4}}));
  Var ones = Var::leaf(Matrix::from_rows({{1}, {1}}));
  Matrix prod = matmul(a, ones).value();
  CHECK(prod.at(0, 0) == 3);
  CHECK(prod.at(1, 0) == 7);

  CHECK_THROWS_WITH_AS(matmul(a, Var::leaf(Matrix(3, 1))).value(),
                       doctest::Contains("2x2"), DimensionError);
}

TEST_CASE("matmul gradient vs central finite differences") {
  Rng rng(31);
  for (int instance = 0; instance < 10; ++instance) {
    ParameterSet params;
    params.add("a", random_matrix(3, 4, rng));
    params.add("b", random_matrix(4, 2, rng));
    // tanh head so the gradient depends on both operands nontrivially
    auto build = [&]() {
      return sum_all(tanh(matmul(params.at("a"), params.at("b"))));
    };
    GradCheckReport rep = grad_check(build, params, 1e-5, 1e-6);
    CAPTURE(instance);
    CHECK(rep.pass);
    CHECK(rep.max_rel_err < 1e-6);
  }
}

TEST_CASE("elementwise values") {
  Var x = Var::leaf(Matrix::from_rows({{-1, 0, 2}}));
  Matrix r = relu(x).value();
  CHECK(r.at(0, 0) == 0);
  CHECK(r.at(0, 1) == 0);
  CHECK(r.at(0, 2) == 2);

  Var zeros = Var::leaf(Matrix(1, 3));
  Matrix sum = add(x, zeros).value();
  for (std::size_t i = 0; i < sum.size(); ++i) {
    CHECK(sum.values()[i] == x.value().values()[i]);
  }

  CHECK_THROWS_AS(add(x, Var::leaf(Matrix(2, 3))), DimensionError);
  CHECK_THROWS_AS(mul(x, Var::leaf(Matrix(1, 2))), DimensionError);
}

TEST_CASE("elementwise gradients vs finite differences") {
  Rng rng(77);
  for (int instance = 0; instance < 10; ++instance) {
    ParameterSet params;
    params.add("x", random_matrix(2, 3, rng));
    params.add("y", random_matrix(2, 3, rng));
    params.add("r", random_matrix(1, 3, rng));
    auto get = [&](const char* n) { return params.at(n); };

    auto check_op = [&](auto&& build, double tol) {
      GradCheckReport rep = grad_check(build, params, 1e-5, tol);
      CAPTURE(instance);
      CAPTURE(rep.max_rel_err);
      CHECK(rep.pass);
    };
    check_op([&]() { return sum_all(tanh(get("x"))); }, 1e-6);
    check_op([&]() { return sum_all(mul(get("x"), get("y"))); }, 1e-6);
    check_op([&]() { return sum_all(sub(get("x"), get("y"))); }, 1e-6);
    check_op([&]() { return sum_all(scale(get("x"), -2.5)); }, 1e-6);
    // relu at random points stays clear of the kink with overwhelming odds
    check_op([&]() { return sum_all(relu(get("x"))); }, 1e-4);
    check_op([&]() { return sum_all(tanh(add_row(get("x"), get("r")))); }, 1e-6);
  }
}

TEST_CASE("pairwise_sq_l2 values and properties") {
  Var v = Var::leaf(Matrix::from_rows({{0}, {3}}));
  Matrix d = pairwise_sq_l2(v).value();
  CHECK(d.at(0, 0) == 0);
  CHECK(d.at(1, 1) == 0);
  CHECK(d.at(0, 1) == 9);
  CHECK(d.at(1, 0) == 9);

  Var same = Var::leaf(Matrix::from_rows({{1, 2}, {1, 2}, {1, 2}}));
  Matrix z = pairwise_sq_l2(same).value();
  for (double x : z.values()) CHECK(x == 0.0);

  Rng rng(9);
  Matrix r = random_matrix(5, 3, rng);
  Matrix got = pairwise_sq_l2(Var::leaf(r)).value();
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 5; ++j) {
      double ref = 0.0;
      for (std::size_t c = 0; c < 3; ++c) {
        double diff = r.at(i, c) - r.at(j, c);
        ref += diff * diff;
      }
      CHECK(std::abs(got.at(i, j) - ref) < 1e-12);
      CHECK(got.at(i, j) == got.at(j, i));
    }
    CHECK(got.at(i, i) == 0.0);
  }

  ParameterSet params;
  params.add("v", random_matrix(4, 3, rng));
  auto build = [&]() {
    Var d2 = pairwise_sq_l2(params.at("v"));
    return sum_all(tanh(d2));  // non-linear head so the gradient is not constant
  };
  GradCheckReport rep = grad_check(build, params, 1e-5, 1e-4);
  CHECK(rep.pass);

  CHECK_THROWS_AS(pairwise_sq_l2(Var::leaf(Matrix(1, 3))), ArgumentError);
}

TEST_CASE("log_sum_exp") {
  std::vector<double> two_zeros = {0.0, 0.0};
  CHECK(log_sum_exp(two_zeros) == doctest::Approx(std::log(2.0)).epsilon(1e-15));

  std::vector<double> big = {1000.0, 1000.0};
  CHECK(log_sum_exp(big) == doctest::Approx(1000.0 + std::log(2.0)).epsilon(1e-15));

  // extended-precision direct sum as the independent reference
  std::vector<double> v = {1.0, 2.0, 3.0};
  long double direct = 0.0L;
  for (double x : v) direct += expl(static_cast<long double>(x));
  double expected = static_cast<double>(logl(direct));
  CHECK(std::abs(log_sum_exp(v) - expected) < 1e-14);

  CHECK_THROWS_AS(log_sum_exp(std::span<const double>{}), ArgumentError);

  // shift identity: lse(x + c) == lse(x) + c
  Rng rng(4);
  for (int i = 0; i < 20; ++i) {
    std::vector<double> x(5);
    for (double& xi : x) xi = rng.uniform(-50.0, 50.0);
    double c = rng.uniform(-100.0, 100.0);
    std::vector<double> shifted = x;
    for (double& xi : shifted) xi += c;
    CHECK(std::abs(log_sum_exp(shifted) - (log_sum_exp(x) + c)) < 1e-12);
  }
}

TEST_CASE("backward basics") {
  Rng rng(15);
  Matrix init = random_matrix(3, 2, rng);

  ParameterSet params;
  Var x = params.add("x", init);
  Var loss = sum_all(x);
  loss.backward();
  for (double g : x.grad().values()) CHECK(g == 1.0);

  x.zero_grad();
  Var zero_loss = sum_all(scale(x, 0.0));
  zero_loss.backward();
  for (double g : x.grad().values()) CHECK(g == 0.0);

  // repeated backward without reset accumulates
  x.zero_grad();
  Var l2 = sum_all(x);
  l2.backward();
  l2.backward();
  for (double g : x.grad().values()) CHECK(g == 2.0);

  // gradient linearity: separate backward passes add up like a summed loss
  x.zero_grad();
  Var la = sum_all(tanh(x));
  Var lb = sum_all(mul(x, x));
  la.backward();
  lb.backward();
  Matrix separate = x.grad();
  x.zero_grad();
  add(sum_all(tanh(x)), sum_all(mul(x, x))).backward();
  for (std::size_t i = 0; i < separate.size(); ++i) {
    CHECK(std::abs(separate.values()[i] - x.grad().values()[i]) < 1e-12);
  }
}

TEST_CASE("backward rejects non-scalar losses") {
  Var x = Var::leaf(Matrix(2, 2), true);
  CHECK_THROWS_AS(x.backward(), ArgumentError);
  CHECK_THROWS_AS(scale(x, 2.0).backward(), ArgumentError);
}

TEST_CASE("parameter set is name-sorted and rejects duplicates") {
  ParameterSet params;
  params.add("b", Matrix(1, 1));
  params.add("a", Matrix(2, 2));
  params.add("c", Matrix(1, 3));
  CHECK_THROWS_AS(params.add("a", Matrix(1, 1)), ArgumentError);
  std::vector<std::string> order;
  for (const auto& [name, var] : params) order.push_back(name);
  CHECK(order == std::vector<std::string>{"a", "b", "c"});
  CHECK(params.scalar_count() == 8);

  ParameterSet other;
  other.add("a", Matrix(1, 1));
  CHECK_THROWS_AS(other.adopt(params), ArgumentError);
}

TEST_CASE("no-grad mode builds constants") {
  Var x = Var::leaf(Matrix::from_rows({{1, 2}}), true);
  {
    NoGradGuard guard;
    Var y = scale(x, 3.0);
    CHECK_FALSE(y.requires_grad());
    CHECK(y.value().at(0, 1) == 6.0);
  }
  Var y = scale(x, 3.0);
  CHECK(y.requires_grad());
}
