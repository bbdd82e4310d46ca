#pragma once

#include <cassert>
#include <initializer_list>
#include <vector>

namespace divnorm {

// Dense row-major matrix of 64-bit reals. Everything in this project is a
// few hundred entries per side at most, so storage is a flat std::vector
// and products are the naive triple loop.
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols, double fill = 0.0);
  static Matrix identity(int n);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  bool empty() const { return data_.empty(); }
  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  double& operator()(int r, int c) {
    assert(r >= 0 && r < rows_ && c >= 0 && c < cols_);
    return data_[static_cast<size_t>(r) * cols_ + c];
  }
  double operator()(int r, int c) const {
    assert(r >= 0 && r < rows_ && c >= 0 && c < cols_);
    return data_[static_cast<size_t>(r) * cols_ + c];
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  const double* row_ptr(int r) const { return data_.data() + static_cast<size_t>(r) * cols_; }
  size_t size() const { return data_.size(); }

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double s);

  Matrix operator*(const Matrix& other) const;  // matrix product
  Matrix transposed() const;
  Matrix hadamard(const Matrix& other) const;

  void fill(double v);
  void add_scaled(const Matrix& other, double s);  // *this += s * other

  double trace() const;
  double frobenius_norm() const;
  double max_abs() const;
  double max_abs_diff(const Matrix& other) const;
  bool all_finite() const;

  // Mean over rows, returned as a 1 x cols matrix.
  Matrix row_mean() const;

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double s);
Matrix operator*(double s, Matrix a);

// a * b^T and a^T * b without materializing the transpose.
Matrix matmul_bt(const Matrix& a, const Matrix& b);
Matrix matmul_at(const Matrix& a, const Matrix& b);

}  // namespace divnorm
