#pragma once

// Recycling positional encoding: token t receives p[tau_t] with
// tau_t = (tau_{t-1} + 1) mod T. With T >= 2n-1 every signed offset inside a
// window of n tokens maps to a distinct index difference mod T.

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <type_traits>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "cta/errors.hpp"
#include "cta/linalg.hpp"

namespace cta {

enum class RpeKind { fixed_sinusoidal, learned };

template <typename T>
struct RpeTable {
  Matrix<T> p;  // T x d
  RpeKind kind = RpeKind::fixed_sinusoidal;

  std::size_t tokens() const noexcept { return p.rows(); }
  std::size_t dim() const noexcept { return p.cols(); }
};

struct RpeState {
  std::size_t tau = 0;
};

/// p[i][2j] = sin(i / 10000^(2j/d)), p[i][2j+1] = cos(i / 10000^(2j/d)).
template <typename T>
RpeTable<T> rpe_fixed_table(std::size_t tokens, std::size_t d) {
  if (tokens < 1) throw ConfigError("positional table needs at least one encoding");
  if (d < 2 || d % 2 != 0) {
    throw ConfigError(fmt::format("sinusoidal table needs an even dimension >= 2, got {}", d));
  }
  RpeTable<T> table{Matrix<T>(tokens, d), RpeKind::fixed_sinusoidal};
  for (std::size_t i = 0; i < tokens; ++i) {
    for (std::size_t j = 0; 2 * j < d; ++j) {
      const double angle =
          static_cast<double>(i) / std::pow(10000.0, static_cast<double>(2 * j) / d);
      table.p(i, 2 * j) = static_cast<T>(std::sin(angle));
      table.p(i, 2 * j + 1) = static_cast<T>(std::cos(angle));
    }
  }
  return table;
}

template <typename T>
RpeTable<T> rpe_learned_table(Matrix<T> p) {
  if (p.rows() < 1) throw ConfigError("positional table needs at least one encoding");
  if (!all_finite<T>(p.data())) throw DataError("non-finite positional table entry");
  return {std::move(p), RpeKind::learned};
}

/// Returns x + p[tau] and the advanced state.
template <typename T>
std::pair<Vector<T>, RpeState> rpe_step(const RpeTable<T>& table, RpeState state,
                                        RowView<T> x) {
  if (x.size() != table.dim()) {
    throw ShapeError(fmt::format("rpe_step: token width {} for table width {}", x.size(),
                                 table.dim()));
  }
  if (state.tau >= table.tokens()) {
    throw ConfigError(fmt::format("rpe index {} outside table of {}", state.tau, table.tokens()));
  }
  Vector<T> out(x.size());
  const auto p = table.p.row(state.tau);
  for (std::size_t c = 0; c < x.size(); ++c) out[c] = x[c] + p[c];
  return {std::move(out), RpeState{(state.tau + 1) % table.tokens()}};
}

/// Row t of X receives p[(tau0 + t) mod T]. With require_unambiguous the
/// window may not exceed the table length.
template <typename T>
Matrix<T> rpe_apply_batch(const RpeTable<T>& table, std::size_t tau0, const Matrix<T>& x,
                          bool require_unambiguous = false) {
  if (x.cols() != table.dim()) {
    throw ShapeError(fmt::format("rpe_apply_batch: token width {} for table width {}", x.cols(),
                                 table.dim()));
  }
  if (require_unambiguous && x.rows() > table.tokens()) {
    throw ConfigError(fmt::format("{} tokens exceed {} positional encodings", x.rows(),
                                  table.tokens()));
  }
  Matrix<T> out(x.rows(), x.cols());
  for (std::size_t t = 0; t < x.rows(); ++t) {
    const auto p = table.p.row((tau0 + t) % table.tokens());
    const auto in = x.row(t);
    auto o = out.row(t);
    for (std::size_t c = 0; c < x.cols(); ++c) o[c] = in[c] + p[c];
  }
  return out;
}

/// Two windows in which the same ordered pair of encoding indices marks
/// different signed offsets between the tokens carrying them.
struct OffsetCollision {
  std::size_t tau_a = 0;
  std::size_t tau_b = 0;
  std::ptrdiff_t offset_first = 0;
  std::ptrdiff_t offset_second = 0;
};

/// Scans every window of n consecutive steps over a table of T encodings and
/// returns the first ambiguous index pair, if any.
inline std::optional<OffsetCollision> find_offset_collision(std::size_t tokens, std::size_t n) {
  if (tokens < 1 || n < 1) throw ConfigError("offset scan needs T >= 1 and n >= 1");
  std::vector<std::optional<std::ptrdiff_t>> seen(tokens * tokens);
  for (std::size_t tau0 = 0; tau0 < tokens; ++tau0) {
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = 0; b < n; ++b) {
        const std::size_t ta = (tau0 + a) % tokens;
        const std::size_t tb = (tau0 + b) % tokens;
        const auto offset = static_cast<std::ptrdiff_t>(b) - static_cast<std::ptrdiff_t>(a);
        auto& slot = seen[ta * tokens + tb];
        if (!slot) {
          slot = offset;
        } else if (*slot != offset) {
          return OffsetCollision{ta, tb, *slot, offset};
        }
      }
    }
  }
  return std::nullopt;
}

}  // namespace cta
