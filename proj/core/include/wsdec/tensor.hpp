#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace wsdec {

// Dense row-major matrix of doubles. Vectors are 1×n matrices.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix row_vector(std::span<const double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  void fill(double v);
  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  std::string shape_string() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// out += a * b
void gemm_acc(const Matrix& a, const Matrix& b, Matrix& out);
// out += a * b^T
void gemm_nt_acc(const Matrix& a, const Matrix& b, Matrix& out);
// out += a^T * b
void gemm_tn_acc(const Matrix& a, const Matrix& b, Matrix& out);

Matrix matmul(const Matrix& a, const Matrix& b);

bool all_finite(const Matrix& m);

}  // namespace wsdec
