#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include "datagrad/errors.hpp"

namespace datagrad {

/// Dense vector of doubles.
class Vector {
 public:
  Vector() = default;
  explicit Vector(std::size_t len, double fill = 0.0) : data_(len, fill) {}
  explicit Vector(std::vector<double> values) : data_(std::move(values)) {}
  Vector(std::initializer_list<double> values) : data_(values) {}
  explicit Vector(std::span<const double> values)
      : data_(values.begin(), values.end()) {}

  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  std::span<double> span() noexcept { return data_; }
  std::span<const double> span() const noexcept { return data_; }

  auto begin() noexcept { return data_.begin(); }
  auto end() noexcept { return data_.end(); }
  auto begin() const noexcept { return data_.begin(); }
  auto end() const noexcept { return data_.end(); }

  const std::vector<double>& values() const noexcept { return data_; }

  friend bool operator==(const Vector&, const Vector&) = default;

 private:
  std::vector<double> data_;
};

/// Dense row-major matrix of doubles. Both dimensions are at least 1.
class Matrix {
 public:
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) noexcept {
    return data_[r * cols_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const noexcept {
    return data_[r * cols_ + c];
  }

  std::span<double> row(std::size_t r) noexcept {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  std::span<double> span() noexcept { return data_; }
  std::span<const double> span() const noexcept { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<double> data_;
};

// Single-sample kernels. Plain loops with a fixed summation order.

/// result[i] = sum_j A[i,j] * x[j]
Vector matmul(const Matrix& a, const Vector& x);

/// result[j] = sum_i A[i,j] * x[i]
Vector matmul_transpose(const Matrix& a, const Vector& x);

Vector hadamard(const Vector& a, const Vector& b);

/// result[i,j] = u[i] * v[j]
Matrix outer(const Vector& u, const Vector& v);

Matrix transpose(const Matrix& a);

// Batched kernels used by the training loop; one sample per row.

/// A * B
Matrix gemm(const Matrix& a, const Matrix& b);
/// A * B^T
Matrix gemm_nt(const Matrix& a, const Matrix& b);
/// A^T * B
Matrix gemm_tn(const Matrix& a, const Matrix& b);

/// dst += alpha * src, elementwise.
void axpy(double alpha, const Matrix& src, Matrix& dst);
void axpy(double alpha, const Vector& src, Vector& dst);

void scale(double alpha, Matrix& m) noexcept;
void scale(double alpha, Vector& v) noexcept;

/// Adds `bias` to every row of `m`.
void add_row_vector(const Vector& bias, Matrix& m);

/// Column sums, i.e. sum over samples for a batch laid out one sample per row.
Vector column_sums(const Matrix& m);

bool all_finite(std::span<const double> values) noexcept;

double frobenius_norm(std::span<const double> values) noexcept;

}  // namespace datagrad
