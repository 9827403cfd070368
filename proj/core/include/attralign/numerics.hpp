#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include "attralign/error.hpp"

namespace attralign {

/// Dense float64 vector. Every element is finite; a default-constructed
/// vector is an empty placeholder and is rejected by every math routine.
class Vector {
 public:
  Vector() = default;
  explicit Vector(std::vector<double> data);
  Vector(std::initializer_list<double> init) : Vector(std::vector<double>(init)) {}

  std::size_t dim() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  std::span<const double> values() const noexcept { return data_; }
  const std::vector<double>& raw() const noexcept { return data_; }
  double operator[](std::size_t i) const { return data_[i]; }

  friend bool operator==(const Vector&, const Vector&) = default;

 private:
  std::vector<double> data_;
};

/// Row-major float64 matrix. A matrix with zero rows stands for an empty
/// stack of row vectors (e.g. a batch without hard negatives).
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix from_rows(std::span<const Vector> rows);
  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  Vector row_vector(std::size_t r) const;

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  bool same_shape(const Matrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Norms below this are treated as degenerate by cosine similarity.
inline constexpr double kDegenerateNorm = 1e-12;

enum class DegeneratePolicy {
  Strict,   // throw DegenerateVector
  Lenient,  // similarity 0
};

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> a);

/// dot(a,b) / (|a||b|), clamped to [-1, 1].
double cosine_sim(std::span<const double> a, std::span<const double> b,
                  DegeneratePolicy policy = DegeneratePolicy::Strict);
double cosine_sim(const Vector& a, const Vector& b,
                  DegeneratePolicy policy = DegeneratePolicy::Strict);

/// max(xs) + log(sum(exp(x - max(xs)))).
double log_sum_exp(std::span<const double> xs);

/// Returns v / |v|; throws DegenerateVector when |v| < kDegenerateNorm.
Vector normalized(const Vector& v);

void require_finite(std::span<const double> values, const char* what);

}  // namespace attralign
