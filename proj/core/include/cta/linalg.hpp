#pragma once

// Dense row-major matrices and vectors over a parametric scalar.
//
// Inner products accumulate from the first term (k multiplications and k-1
// additions for length k), which is the operation accounting the cost model
// assumes. Nothing here subtracts a running maximum before exponentiating:
// the continual caches hold raw exponential sums and the batch path must
// perform the same arithmetic.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <span>
#include <type_traits>
#include <string>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "cta/counting.hpp"
#include "cta/errors.hpp"

namespace cta {

/// Read-only token view. T is not deduced from it, so plain vectors and
/// mutable spans bind without naming the scalar type.
template <typename T>
using RowView = std::span<const std::type_identity_t<T>>;

template <typename T>
class Vector {
 public:
  using value_type = T;

  Vector() = default;
  explicit Vector(std::size_t len, T fill = T(0)) : data_(len, fill) {}
  explicit Vector(std::vector<T> data) : data_(std::move(data)) {}
  Vector(std::initializer_list<T> init) : data_(init) {}
  explicit Vector(std::span<const T> values) : data_(values.begin(), values.end()) {}

  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  std::span<T> span() noexcept { return data_; }
  std::span<const T> span() const noexcept { return data_; }
  operator std::span<const T>() const noexcept { return data_; }  // NOLINT

  auto begin() noexcept { return data_.begin(); }
  auto end() noexcept { return data_.end(); }
  auto begin() const noexcept { return data_.begin(); }
  auto end() const noexcept { return data_.end(); }

  friend bool operator==(const Vector&, const Vector&) = default;

 private:
  std::vector<T> data_;
};

template <typename T>
class Matrix {
 public:
  using value_type = T;

  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T(0))
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  Matrix(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw ShapeError(fmt::format("matrix data holds {} values, expected {}x{}={}",
                                   data_.size(), rows_, cols_, rows_ * cols_));
    }
  }

  Matrix(std::initializer_list<std::initializer_list<T>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw ShapeError("ragged matrix initializer");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = T(1);
    return m;
  }

  static Matrix from_row(std::span<const T> row) {
    return Matrix(1, row.size(), std::vector<T>(row.begin(), row.end()));
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const noexcept {
    return data_[r * cols_ + c];
  }

  std::span<T> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }

  void append_row(std::span<const T> values) {
    if (rows_ != 0 && values.size() != cols_) {
      throw ShapeError(fmt::format("append_row: width {} into {} columns", values.size(), cols_));
    }
    if (rows_ == 0) cols_ = values.size();
    data_.insert(data_.end(), values.begin(), values.end());
    ++rows_;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

template <typename To, typename From>
Matrix<To> matrix_cast(const Matrix<From>& m) {
  Matrix<To> out(m.rows(), m.cols());
  std::ranges::transform(m.data(), out.data().begin(),
                         [](From v) { return scalar_cast<To>(v); });
  return out;
}

template <typename To, typename From>
Vector<To> vector_cast(const Vector<From>& v) {
  Vector<To> out(v.size());
  std::ranges::transform(v.span(), out.begin(), [](From x) { return scalar_cast<To>(x); });
  return out;
}

/// Largest argument whose exponential is finite for scalar type T.
template <typename T>
raw_scalar_t<T> exp_limit() noexcept {
  using R = raw_scalar_t<T>;
  return std::log(std::numeric_limits<R>::max());
}

/// exp(x), raising RangeError when the result would overflow.
template <typename T>
T checked_exp(T x) {
  if (!(raw_value(x) <= exp_limit<T>())) {
    throw RangeError(fmt::format("exp overflow: argument {}", raw_value(x)));
  }
  using std::exp;
  return exp(x);
}

template <typename T>
T dot(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size()) {
    throw ShapeError(fmt::format("dot: lengths {} and {}", a.size(), b.size()));
  }
  if (a.empty()) return T(0);
  T acc = a[0] * b[0];
  for (std::size_t i = 1; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

template <typename T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError(fmt::format("matmul: {}x{} by {}x{}", a.rows(), a.cols(), b.rows(), b.cols()));
  }
  Matrix<T> out(a.rows(), b.cols());
  if (a.cols() == 0) return out;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto ar = a.row(i);
    auto orow = out.row(i);
    const auto b0 = b.row(0);
    for (std::size_t j = 0; j < b.cols(); ++j) orow[j] = ar[0] * b0[j];
    for (std::size_t p = 1; p < a.cols(); ++p) {
      const auto bp = b.row(p);
      for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += ar[p] * bp[j];
    }
  }
  return out;
}

/// a * b^T, each entry an inner product of a row of a with a row of b.
template <typename T>
Matrix<T> matmul_transposed(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError(fmt::format("matmul_transposed: {}x{} by ({}x{})^T", a.rows(), a.cols(),
                                 b.rows(), b.cols()));
  }
  Matrix<T> out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = dot<T>(a.row(i), b.row(j));
  }
  return out;
}

/// Row vector times matrix.
template <typename T>
Vector<T> vecmat(RowView<T> x, const Matrix<T>& m) {
  if (x.size() != m.rows()) {
    throw ShapeError(fmt::format("vecmat: length {} by {}x{}", x.size(), m.rows(), m.cols()));
  }
  Vector<T> out(m.cols());
  if (x.empty()) return out;
  const auto m0 = m.row(0);
  for (std::size_t j = 0; j < m.cols(); ++j) out[j] = x[0] * m0[j];
  for (std::size_t p = 1; p < x.size(); ++p) {
    const auto mp = m.row(p);
    for (std::size_t j = 0; j < m.cols(); ++j) out[j] += x[p] * mp[j];
  }
  return out;
}

template <typename T>
Matrix<T> scale(const Matrix<T>& m, T factor) {
  Matrix<T> out(m.rows(), m.cols());
  std::ranges::transform(m.data(), out.data().begin(), [factor](T v) { return v * factor; });
  return out;
}

template <typename T>
Matrix<T> elementwise_exp(const Matrix<T>& m) {
  Matrix<T> out(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (!(raw_value(m(r, c)) <= exp_limit<T>())) {
        throw RangeError(
            fmt::format("exp overflow at ({}, {}): argument {}", r, c, raw_value(m(r, c))));
      }
      using std::exp;
      out(r, c) = exp(m(r, c));
    }
  }
  return out;
}

/// Sum of each row, accumulated left to right.
template <typename T>
Vector<T> row_sums(const Matrix<T>& m) {
  Vector<T> out(m.rows());
  if (m.cols() == 0) return out;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto row = m.row(r);
    T acc = row[0];
    for (std::size_t c = 1; c < row.size(); ++c) acc += row[c];
    out[r] = acc;
  }
  return out;
}

/// Divide row i of m by d[i].
template <typename T>
Matrix<T> row_normalize(const Matrix<T>& m, const Vector<T>& d) {
  if (d.size() != m.rows()) {
    throw ShapeError(fmt::format("row_normalize: {} divisors for {} rows", d.size(), m.rows()));
  }
  Matrix<T> out(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    if (!(raw_value(d[r]) > 0)) {
      throw DomainError(fmt::format("row_normalize: divisor {} at row {}", raw_value(d[r]), r));
    }
    const auto in = m.row(r);
    auto o = out.row(r);
    for (std::size_t c = 0; c < in.size(); ++c) o[c] = in[c] / d[r];
  }
  return out;
}

template <typename T>
Matrix<T> add(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(fmt::format("add: {}x{} and {}x{}", a.rows(), a.cols(), b.rows(), b.cols()));
  }
  Matrix<T> out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] + b.data()[i];
  return out;
}

/// Stack a on top of b.
template <typename T>
Matrix<T> vconcat(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.rows() == 0) return b;
  if (b.rows() == 0) return a;
  if (a.cols() != b.cols()) {
    throw ShapeError(fmt::format("vconcat: widths {} and {}", a.cols(), b.cols()));
  }
  Matrix<T> out = a;
  for (std::size_t r = 0; r < b.rows(); ++r) out.append_row(b.row(r));
  return out;
}

/// Rows of m restricted to columns [first, first + count).
template <typename T>
Matrix<T> column_block(const Matrix<T>& m, std::size_t first, std::size_t count) {
  if (first + count > m.cols()) throw ShapeError("column_block out of range");
  Matrix<T> out(m.rows(), count);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    std::ranges::copy(m.row(r).subspan(first, count), out.row(r).begin());
  }
  return out;
}

/// Normwise relative deviation max|a-b| / max|b|.
template <typename T>
double max_relative_error(std::span<const T> actual, std::span<const T> expected) {
  if (actual.size() != expected.size()) {
    throw ShapeError(fmt::format("max_relative_error: sizes {} and {}", actual.size(),
                                 expected.size()));
  }
  double diff = 0.0;
  double scale_ref = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    const double a = static_cast<double>(raw_value(actual[i]));
    const double e = static_cast<double>(raw_value(expected[i]));
    if (!std::isfinite(a)) return std::numeric_limits<double>::infinity();
    diff = std::max(diff, std::abs(a - e));
    scale_ref = std::max(scale_ref, std::abs(e));
  }
  if (diff == 0.0) return 0.0;
  return diff / std::max(scale_ref, std::numeric_limits<double>::min());
}

template <typename T>
double max_relative_error(const Matrix<T>& actual, const Matrix<T>& expected) {
  if (actual.rows() != expected.rows() || actual.cols() != expected.cols()) {
    throw ShapeError(fmt::format("max_relative_error: {}x{} vs {}x{}", actual.rows(),
                                 actual.cols(), expected.rows(), expected.cols()));
  }
  return max_relative_error<T>(actual.data(), expected.data());
}

template <typename T>
bool all_finite(std::span<const T> values) {
  return std::ranges::all_of(values, [](T v) { return std::isfinite(raw_value(v)); });
}

}  // namespace cta
