#include "datagrad/tensor.hpp"

#include <cmath>
#include <string>

#include <Eigen/Core>

namespace datagrad {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

ConstMap view(const Matrix& m) {
  return ConstMap(m.data(), static_cast<Eigen::Index>(m.rows()),
                  static_cast<Eigen::Index>(m.cols()));
}
MutMap view(Matrix& m) {
  return MutMap(m.data(), static_cast<Eigen::Index>(m.rows()),
                static_cast<Eigen::Index>(m.cols()));
}

std::string shape(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require(bool ok, const char* op, const std::string& detail) {
  if (!ok) throw InvalidArgument(std::string(op) + ": dimension mismatch (" + detail + ")");
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols) {
  if (rows == 0 || cols == 0) throw InvalidArgument("Matrix: dimensions must be >= 1");
  data_.assign(rows * cols, fill);
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
  if (rows == 0 || cols == 0) throw InvalidArgument("Matrix: dimensions must be >= 1");
  if (data_.size() != rows * cols)
    throw InvalidArgument("Matrix: expected " + std::to_string(rows * cols) +
                          " values, got " + std::to_string(data_.size()));
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows)
    : rows_(rows.size()), cols_(rows.size() ? rows.begin()->size() : 0) {
  if (rows_ == 0 || cols_ == 0) throw InvalidArgument("Matrix: dimensions must be >= 1");
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw InvalidArgument("Matrix: ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Vector matmul(const Matrix& a, const Vector& x) {
  require(a.cols() == x.size(), "matmul",
          shape(a) + " * " + std::to_string(x.size()));
  Vector out(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto row = a.row(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) acc += row[j] * x[j];
    out[i] = acc;
  }
  return out;
}

Vector matmul_transpose(const Matrix& a, const Vector& x) {
  require(a.rows() == x.size(), "matmul_transpose",
          shape(a) + "^T * " + std::to_string(x.size()));
  Vector out(a.cols());
  for (std::size_t j = 0; j < a.cols(); ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) acc += a(i, j) * x[i];
    out[j] = acc;
  }
  return out;
}

Vector hadamard(const Vector& a, const Vector& b) {
  require(a.size() == b.size(), "hadamard",
          std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  Vector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

Matrix outer(const Vector& u, const Vector& v) {
  if (u.empty() || v.empty()) throw InvalidArgument("outer: empty operand");
  Matrix out(u.size(), v.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    auto row = out.row(i);
    for (std::size_t j = 0; j < v.size(); ++j) row[j] = u[i] * v[j];
  }
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

Matrix gemm(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(), "gemm", shape(a) + " * " + shape(b));
  Matrix out(a.rows(), b.cols());
  view(out).noalias() = view(a) * view(b);
  return out;
}

Matrix gemm_nt(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.cols(), "gemm_nt", shape(a) + " * " + shape(b) + "^T");
  Matrix out(a.rows(), b.rows());
  view(out).noalias() = view(a) * view(b).transpose();
  return out;
}

Matrix gemm_tn(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows(), "gemm_tn", shape(a) + "^T * " + shape(b));
  Matrix out(a.cols(), b.cols());
  view(out).noalias() = view(a).transpose() * view(b);
  return out;
}

void axpy(double alpha, const Matrix& src, Matrix& dst) {
  require(src.rows() == dst.rows() && src.cols() == dst.cols(), "axpy",
          shape(src) + " vs " + shape(dst));
  const double* s = src.data();
  double* d = dst.data();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += alpha * s[i];
}

void axpy(double alpha, const Vector& src, Vector& dst) {
  require(src.size() == dst.size(), "axpy",
          std::to_string(src.size()) + " vs " + std::to_string(dst.size()));
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += alpha * src[i];
}

void scale(double alpha, Matrix& m) noexcept {
  for (double& v : m.span()) v *= alpha;
}

void scale(double alpha, Vector& v) noexcept {
  for (double& x : v) x *= alpha;
}

void add_row_vector(const Vector& bias, Matrix& m) {
  require(bias.size() == m.cols(), "add_row_vector",
          std::to_string(bias.size()) + " vs " + shape(m));
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    for (std::size_t c = 0; c < m.cols(); ++c) row[c] += bias[c];
  }
}

Vector column_sums(const Matrix& m) {
  Vector out(m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto row = m.row(r);
    for (std::size_t c = 0; c < m.cols(); ++c) out[c] += row[c];
  }
  return out;
}

bool all_finite(std::span<const double> values) noexcept {
  for (double v : values)
    if (!std::isfinite(v)) return false;
  return true;
}

double frobenius_norm(std::span<const double> values) noexcept {
  double acc = 0.0;
  for (double v : values) acc += v * v;
  return std::sqrt(acc);
}

}  // namespace datagrad
