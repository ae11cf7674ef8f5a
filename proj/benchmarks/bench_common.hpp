#pragma once

#include <cstddef>
#include <random>

#include "cta/linalg.hpp"

namespace bench {

template <typename T>
cta::Matrix<T> random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  cta::Matrix<T> m(rows, cols);
  for (T& v : m.data()) v = static_cast<T>(u(rng));
  return m;
}

// Stream rows are reused cyclically; 61 is prime so the pattern never lines
// up with a power-of-two window.
constexpr std::size_t kPool = 61;

}  // namespace bench
