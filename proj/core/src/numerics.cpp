#include "attralign/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace attralign {

void require_finite(std::span<const double> values, const char* what) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw Error(ErrorCode::NonFinite,
                  std::string(what) + ": element " + std::to_string(i) + " is not finite");
    }
  }
}

Vector::Vector(std::vector<double> data) : data_(std::move(data)) {
  if (data_.empty()) {
    throw Error(ErrorCode::InvalidArgument, "vector dimension must be positive");
  }
  require_finite(data_, "vector");
}

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {
  if (!std::isfinite(fill)) {
    throw Error(ErrorCode::NonFinite, "matrix fill value is not finite");
  }
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw Error(ErrorCode::ShapeMismatch,
                "matrix data length " + std::to_string(data_.size()) + " != " +
                    std::to_string(rows) + "x" + std::to_string(cols));
  }
  require_finite(data_, "matrix");
}

Matrix Matrix::from_rows(std::span<const Vector> rows) {
  if (rows.empty()) {
    return {};
  }
  const std::size_t cols = rows.front().dim();
  Matrix m(rows.size(), cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].dim() != cols) {
      throw Error(ErrorCode::DimensionMismatch,
                  "row " + std::to_string(r) + " has dim " + std::to_string(rows[r].dim()) +
                      ", expected " + std::to_string(cols));
    }
    std::copy(rows[r].raw().begin(), rows[r].raw().end(), m.row(r).begin());
  }
  return m;
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Vector Matrix::row_vector(std::size_t r) const {
  auto span = row(r);
  return Vector(std::vector<double>(span.begin(), span.end()));
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::DimensionMismatch,
                "dot: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double l2_norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double cosine_sim(std::span<const double> a, std::span<const double> b, DegeneratePolicy policy) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::DimensionMismatch,
                "cosine_sim: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
  if (a.empty()) {
    throw Error(ErrorCode::EmptyInput, "cosine_sim of empty vectors");
  }
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  if (na < kDegenerateNorm || nb < kDegenerateNorm) {
    if (policy == DegeneratePolicy::Lenient) return 0.0;
    throw Error(ErrorCode::DegenerateVector, "cosine_sim: vector norm below 1e-12");
  }
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

double cosine_sim(const Vector& a, const Vector& b, DegeneratePolicy policy) {
  return cosine_sim(a.values(), b.values(), policy);
}

double log_sum_exp(std::span<const double> xs) {
  if (xs.empty()) {
    throw Error(ErrorCode::EmptyInput, "log_sum_exp of an empty list");
  }
  require_finite(xs, "log_sum_exp");
  const double m = *std::max_element(xs.begin(), xs.end());
  double acc = 0.0;
  for (double x : xs) acc += std::exp(x - m);
  return m + std::log(acc);
}

Vector normalized(const Vector& v) {
  const double n = l2_norm(v.values());
  if (n < kDegenerateNorm) {
    throw Error(ErrorCode::DegenerateVector, "cannot normalize a zero-norm vector");
  }
  std::vector<double> out(v.raw());
  for (double& x : out) x /= n;
  return Vector(std::move(out));
}

}  // namespace attralign
