#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace rnclab {

// Dense row-major fp64 matrix. Plain storage; the math lives in the ops
// built on top of it.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols);  // zero-filled
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  static Matrix constant(std::size_t rows, std::size_t cols, double v);
  static Matrix row_vector(const std::vector<double>& values);
  static Matrix column_vector(const std::vector<double>& values);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return values_.size(); }

  double& at(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double at(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  bool all_finite() const;
  void fill(double v);
  std::string shape_str() const;  // "3x4"

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

// Value-level products used by backward rules. All check shapes and throw
// DimensionError naming both operands.
Matrix mat_mul(const Matrix& a, const Matrix& b);     // a . b
Matrix mat_mul_nt(const Matrix& a, const Matrix& b);  // a . b^T
Matrix mat_mul_tn(const Matrix& a, const Matrix& b);  // a^T . b

}  // namespace rnclab
