#include "fusionkit/matrix.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "fusionkit/error.hpp"

namespace fusionkit {

namespace {

[[noreturn]] void shape_mismatch(const char* op, const Matrix& a, const Matrix& b) {
  throw ShapeError(fmt::format("{}: incompatible shapes {} and {}", op, a.shape_string(), b.shape_string()));
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw ShapeError(fmt::format("Matrix: {} values cannot fill a {}x{} matrix", data_.size(), rows, cols));
  }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ShapeError("Matrix: ragged initializer list");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::column(std::span<const double> values) {
  return Matrix(values.size(), 1, std::vector<double>(values.begin(), values.end()));
}

std::vector<double> Matrix::col(std::size_t c) const {
  std::vector<double> out(rows_);
  for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
  return out;
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Matrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Matrix::shape_string() const { return fmt::format("{}x{}", rows_, cols_); }

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) shape_mismatch("matmul", a, b);
  Matrix out(a.rows(), b.cols());
  // i-k-j order keeps the inner loop contiguous in both b and out.
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out_row = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      const auto b_row = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aik * b_row[j];
    }
  }
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) out(c, r) = a(r, c);
  return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_mismatch("add", a, b);
  Matrix out = a;
  auto dst = out.values();
  auto src = b.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  return out;
}

Matrix scale(const Matrix& a, double s) {
  Matrix out = a;
  for (double& v : out.values()) v *= s;
  return out;
}

std::vector<double> matvec(const Matrix& a, std::span<const double> x) {
  std::vector<double> y(a.rows(), 0.0);
  matvec_accumulate(a, x, y);
  return y;
}

void matvec_accumulate(const Matrix& a, std::span<const double> x, std::span<double> y) {
  if (a.cols() != x.size() || a.rows() != y.size()) {
    throw ShapeError(fmt::format("matvec: matrix {} with vector of length {} into {}", a.shape_string(), x.size(),
                                 y.size()));
  }
  for (std::size_t r = 0; r < a.rows(); ++r) y[r] += dot(a.row(r), x);
}

void matvec_transpose_accumulate(const Matrix& a, std::span<const double> x, std::span<double> y) {
  if (a.rows() != x.size() || a.cols() != y.size()) {
    throw ShapeError(fmt::format("matvec_transpose: matrix {} with vector of length {} into {}", a.shape_string(),
                                 x.size(), y.size()));
  }
  const std::size_t n = a.cols();
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const double xr = x[r];
    const double* row = a.row(r).data();
    double* out = y.data();
    for (std::size_t c = 0; c < n; ++c) out[c] += xr * row[c];
  }
}

void rank1_update(Matrix& a, double alpha, std::span<const double> u, std::span<const double> v) {
  if (a.rows() != u.size() || a.cols() != v.size()) {
    throw ShapeError(fmt::format("rank1_update: matrix {} with vectors {} and {}", a.shape_string(), u.size(),
                                 v.size()));
  }
  const std::size_t n = a.cols();
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const double s = alpha * u[r];
    double* row = a.row(r).data();
    const double* vv = v.data();
    for (std::size_t c = 0; c < n; ++c) row[c] += s * vv[c];
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  // Four independent partial sums; the order is fixed so results stay reproducible.
  const std::size_t n = a.size();
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ShapeError(fmt::format("squared_distance: lengths {} and {}", a.size(), b.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void softmax(std::span<const double> in, std::span<double> out) noexcept {
  if (in.empty()) return;
  const double mx = *std::max_element(in.begin(), in.end());
  double total = 0.0;
  for (std::size_t i = 0; i < in.size(); ++i) {
    out[i] = std::exp(in[i] - mx);
    total += out[i];
  }
  for (std::size_t i = 0; i < in.size(); ++i) out[i] /= total;
}

std::vector<double> softmax(std::span<const double> in) {
  std::vector<double> out(in.size());
  softmax(in, out);
  return out;
}

Matrix activate(const Matrix& x, Activation kind) {
  Matrix out = x;
  switch (kind) {
    case Activation::sigmoid:
      for (double& v : out.values()) v = sigmoid(v);
      break;
    case Activation::tanh:
      for (double& v : out.values()) v = std::tanh(v);
      break;
    case Activation::softmax_rows:
      for (std::size_t r = 0; r < out.rows(); ++r) softmax(x.row(r), out.row(r));
      break;
  }
  return out;
}

}  // namespace fusionkit
