#pragma once

#include <algorithm>
#include <cstddef>
#include <random>

#include "cta/linalg.hpp"
#include "cta/mha.hpp"

namespace cta::cli::detail {

// Values are drawn in double and rounded to T, so the same seed gives the
// same inputs to a float run and its double reference.
template <typename T>
Matrix<T> random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols,
                        double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix<T> m(rows, cols);
  for (T& v : m.data()) v = static_cast<T>(u(rng));
  return m;
}

template <typename T>
MhaWeights<T> random_mha(std::mt19937_64& rng, std::size_t d, std::size_t heads,
                         double amp = 0.5) {
  const std::size_t dh = std::max<std::size_t>(1, d / heads);
  MhaWeights<T> w;
  for (std::size_t i = 0; i < heads; ++i) {
    w.w_q.push_back(random_matrix<T>(rng, d, dh, -amp, amp));
    w.w_k.push_back(random_matrix<T>(rng, d, dh, -amp, amp));
    w.w_v.push_back(random_matrix<T>(rng, d, dh, -amp, amp));
  }
  w.w_o = random_matrix<T>(rng, heads * dh, d, -amp, amp);
  return w;
}

template <typename T>
MhaWeights<double> widen(const MhaWeights<T>& w) {
  MhaWeights<double> out;
  for (const auto& m : w.w_q) out.w_q.push_back(matrix_cast<double>(m));
  for (const auto& m : w.w_k) out.w_k.push_back(matrix_cast<double>(m));
  for (const auto& m : w.w_v) out.w_v.push_back(matrix_cast<double>(m));
  out.w_o = matrix_cast<double>(w.w_o);
  return out;
}

/// Rows [first, first + count) of m.
template <typename T>
Matrix<T> rows(const Matrix<T>& m, std::size_t first, std::size_t count) {
  Matrix<T> out(count, m.cols());
  for (std::size_t r = 0; r < count; ++r) std::ranges::copy(m.row(first + r), out.row(r).begin());
  return out;
}

}  // namespace cta::cli::detail
