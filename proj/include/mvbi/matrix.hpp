#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace mvbi {

/// Dense row-major matrix of doubles. Vectors are represented as 1×n rows.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix row_vector(std::span<const double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  const std::vector<double>& data() const { return data_; }

  void fill(double v);
  Matrix transpose() const;
  bool all_finite() const;
  /// "rows×cols", used in error messages.
  std::string shape_str() const;

  Matrix& operator+=(const Matrix& o);
  Matrix& operator-=(const Matrix& o);
  Matrix& operator*=(double s);

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double s);

/// a·b
Matrix matmul(const Matrix& a, const Matrix& b);
/// a·bᵀ
Matrix matmul_nt(const Matrix& a, const Matrix& b);
/// aᵀ·b
Matrix matmul_tn(const Matrix& a, const Matrix& b);

Matrix hadamard(const Matrix& a, const Matrix& b);
double sum(const Matrix& a);
double max_abs(const Matrix& a);
double frobenius_norm(const Matrix& a);
/// Column sums as a 1×cols row.
Matrix column_sums(const Matrix& a);
/// Rows `first..first+count` as a new matrix.
Matrix slice_rows(const Matrix& a, std::size_t first, std::size_t count);
/// Columns `first..first+count` as a new matrix.
Matrix slice_cols(const Matrix& a, std::size_t first, std::size_t count);
/// Gathers the listed rows in order.
Matrix gather_rows(const Matrix& a, std::span<const std::size_t> idx);

void require_same_shape(const Matrix& a, const Matrix& b, const char* what);

}  // namespace mvbi
