#include <doctest.h>

#include <limits>

#include "rnclab/errors.hpp"
#include "rnclab/matrix.hpp"

using namespace rnclab;

TEST_CASE("matrix construction and access") {
  Matrix m(2, 3);
  CHECK(m.rows() == 2);
  CHECK(m.cols() == 3);
  CHECK(m.size() == 6);
  for (double v : m.values()) CHECK(v == 0.0);

  m.at(1, 2) = 4.5;
  CHECK(m.values()[5] == 4.5);
  CHECK(m.shape_str() == "2x3");

  Matrix r = Matrix::from_rows({{1, 2}, {3, 4}});
  CHECK(r.at(0, 1) == 2);
  CHECK(r.at(1, 0) == 3);

  CHECK_THROWS_AS(Matrix(2, 2, {1.0, 2.0, 3.0}), DimensionError);
  CHECK_THROWS_AS(Matrix::from_rows({{1, 2}, {3}}), DimensionError);
}

TEST_CASE("matrix finiteness check") {
  Matrix m = Matrix::from_rows({{1, 2}, {3, 4}});
  CHECK(m.all_finite());
  m.at(0, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_FALSE(m.all_finite());
  m.at(0, 1) = std::numeric_limits<double>::infinity();
  CHECK_FALSE(m.all_finite());
}

TEST_CASE("value-level products") {
  Matrix a = Matrix::from_rows({{1, 2}, {3, 4}});
  Matrix ones = Matrix::from_rows({{1}, {1}});
  Matrix prod = mat_mul(a, ones);
  CHECK(prod.at(0, 0) == 3);
  CHECK(prod.at(1, 0) == 7);

  // a . b^T and a^T . b agree with explicit transposition through mat_mul
  Matrix b = Matrix::from_rows({{5, 6}, {7, 8}});
  Matrix bt = Matrix::from_rows({{5, 7}, {6, 8}});
  Matrix nt = mat_mul_nt(a, b);
  Matrix ref = mat_mul(a, bt);
  for (std::size_t i = 0; i < nt.size(); ++i) {
    CHECK(nt.values()[i] == ref.values()[i]);
  }
  Matrix tn = mat_mul_tn(a, b);
  Matrix at = Matrix::from_rows({{1, 3}, {2, 4}});
  Matrix ref2 = mat_mul(at, b);
  for (std::size_t i = 0; i < tn.size(); ++i) {
    CHECK(tn.values()[i] == ref2.values()[i]);
  }

  CHECK_THROWS_AS(mat_mul(a, Matrix(3, 2)), DimensionError);
}
