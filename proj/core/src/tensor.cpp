#include "wsdec/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace wsdec {

Matrix Matrix::row_vector(std::span<const double> values) {
  Matrix m(1, values.size());
  std::copy(values.begin(), values.end(), m.data());
  return m;
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

std::string Matrix::shape_string() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

namespace {

void check(bool ok, const char* what, const Matrix& a, const Matrix& b) {
  if (!ok) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + a.shape_string() +
                                " vs " + b.shape_string());
  }
}

}  // namespace

void gemm_acc(const Matrix& a, const Matrix& b, Matrix& out) {
  check(a.cols() == b.rows() && out.rows() == a.rows() && out.cols() == b.cols(), "gemm", a, b);
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  for (std::size_t i = 0; i < n; ++i) {
    double* __restrict o = out.data() + i * m;
    const double* ai = a.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      const double* __restrict bp = b.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) o[j] += av * bp[j];
    }
  }
}

namespace {

// Four independent partial sums so the reduction pipelines; the summation
// order is fixed, so results stay deterministic.
double dot(const double* __restrict x, const double* __restrict y, std::size_t k) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t p = 0;
  for (; p + 4 <= k; p += 4) {
    s0 += x[p] * y[p];
    s1 += x[p + 1] * y[p + 1];
    s2 += x[p + 2] * y[p + 2];
    s3 += x[p + 3] * y[p + 3];
  }
  for (; p < k; ++p) s0 += x[p] * y[p];
  return (s0 + s1) + (s2 + s3);
}

}  // namespace

void gemm_nt_acc(const Matrix& a, const Matrix& b, Matrix& out) {
  check(a.cols() == b.cols() && out.rows() == a.rows() && out.cols() == b.rows(), "gemm_nt", a,
        b);
  const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a.data() + i * k;
    double* o = out.data() + i * m;
    for (std::size_t j = 0; j < m; ++j) o[j] += dot(ai, b.data() + j * k, k);
  }
}

void gemm_tn_acc(const Matrix& a, const Matrix& b, Matrix& out) {
  check(a.rows() == b.rows() && out.rows() == a.cols() && out.cols() == b.cols(), "gemm_tn", a,
        b);
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  for (std::size_t r = 0; r < n; ++r) {
    const double* ar = a.data() + r * k;
    const double* __restrict br = b.data() + r * m;
    for (std::size_t i = 0; i < k; ++i) {
      const double av = ar[i];
      if (av == 0.0) continue;
      double* __restrict o = out.data() + i * m;
      for (std::size_t j = 0; j < m; ++j) o[j] += av * br[j];
    }
  }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.cols());
  gemm_acc(a, b, out);
  return out;
}

bool all_finite(const Matrix& m) {
  return std::all_of(m.values().begin(), m.values().end(),
                     [](double v) { return std::isfinite(v); });
}

}  // namespace wsdec
