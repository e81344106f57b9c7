#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace fusionkit {

/// Dense row-major matrix of doubles. Column vectors are n x 1 matrices.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix column(std::span<const double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }
  std::vector<double> col(std::size_t c) const;

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  void fill(double v);
  bool all_finite() const noexcept;
  std::string shape_string() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Matrix add(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double s);

/// y = A x.
std::vector<double> matvec(const Matrix& a, std::span<const double> x);
/// y += A x, no allocation.
void matvec_accumulate(const Matrix& a, std::span<const double> x, std::span<double> y);
/// y += A^T x.
void matvec_transpose_accumulate(const Matrix& a, std::span<const double> x, std::span<double> y);
/// A += alpha * u v^T.
void rank1_update(Matrix& a, double alpha, std::span<const double> u, std::span<const double> v);

double dot(std::span<const double> a, std::span<const double> b);
double squared_distance(std::span<const double> a, std::span<const double> b);

enum class Activation { sigmoid, tanh, softmax_rows };

double sigmoid(double x) noexcept;
/// Numerically stable softmax (max-subtracted). Writes into out, which may alias in.
void softmax(std::span<const double> in, std::span<double> out) noexcept;
std::vector<double> softmax(std::span<const double> in);
Matrix activate(const Matrix& x, Activation kind);

}  // namespace fusionkit
