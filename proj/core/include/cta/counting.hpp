#pragma once

// Scalar wrapper that tallies the arithmetic performed through it. Kernels are
// templates over the scalar type; instantiating them with Counted<double>
// yields exact per-call operation counts without a separate code path.
//
// Conventions: subtraction counts as an addition, division as a
// multiplication, negation and comparisons are free.

#include <cmath>
#include <concepts>
#include <cstdint>
#include <type_traits>

namespace cta {

struct OpCount {
  std::uint64_t mults = 0;
  std::uint64_t adds = 0;
  std::uint64_t exps = 0;

  constexpr std::uint64_t total() const noexcept { return mults + adds + exps; }

  constexpr OpCount& operator+=(const OpCount& o) noexcept {
    mults += o.mults;
    adds += o.adds;
    exps += o.exps;
    return *this;
  }
  friend constexpr OpCount operator+(OpCount a, const OpCount& b) noexcept { return a += b; }
  friend constexpr OpCount operator-(const OpCount& a, const OpCount& b) noexcept {
    return {a.mults - b.mults, a.adds - b.adds, a.exps - b.exps};
  }
  friend constexpr bool operator==(const OpCount&, const OpCount&) = default;
};

namespace detail {
inline thread_local OpCount op_tally{};
}  // namespace detail

/// Measures the operations performed on the current thread during its lifetime.
class OpCounter {
 public:
  OpCounter() noexcept : start_(detail::op_tally) {}
  OpCount counted() const noexcept { return detail::op_tally - start_; }

 private:
  OpCount start_;
};

template <std::floating_point T>
class Counted {
 public:
  using value_type = T;

  constexpr Counted() noexcept = default;
  constexpr Counted(T v) noexcept : v_(v) {}  // NOLINT: implicit by intent

  constexpr T value() const noexcept { return v_; }

  friend Counted operator+(Counted a, Counted b) noexcept {
    ++detail::op_tally.adds;
    return a.v_ + b.v_;
  }
  friend Counted operator-(Counted a, Counted b) noexcept {
    ++detail::op_tally.adds;
    return a.v_ - b.v_;
  }
  friend Counted operator*(Counted a, Counted b) noexcept {
    ++detail::op_tally.mults;
    return a.v_ * b.v_;
  }
  friend Counted operator/(Counted a, Counted b) noexcept {
    ++detail::op_tally.mults;
    return a.v_ / b.v_;
  }
  friend constexpr Counted operator-(Counted a) noexcept { return -a.v_; }

  Counted& operator+=(Counted o) noexcept { return *this = *this + o; }
  Counted& operator-=(Counted o) noexcept { return *this = *this - o; }
  Counted& operator*=(Counted o) noexcept { return *this = *this * o; }
  Counted& operator/=(Counted o) noexcept { return *this = *this / o; }

  friend constexpr auto operator<=>(Counted a, Counted b) noexcept { return a.v_ <=> b.v_; }
  friend constexpr bool operator==(Counted a, Counted b) noexcept { return a.v_ == b.v_; }

  friend Counted exp(Counted a) noexcept {
    ++detail::op_tally.exps;
    return std::exp(a.v_);
  }

 private:
  T v_ = T(0);
};

template <typename T>
struct scalar_traits {
  using raw_type = T;
  static constexpr T raw(T v) noexcept { return v; }
};

template <typename T>
struct scalar_traits<Counted<T>> {
  using raw_type = T;
  static constexpr T raw(Counted<T> v) noexcept { return v.value(); }
};

template <typename T>
using raw_scalar_t = typename scalar_traits<T>::raw_type;

template <typename T>
constexpr raw_scalar_t<T> raw_value(T v) noexcept {
  return scalar_traits<T>::raw(v);
}

/// Converts between scalar types without touching the operation tally.
template <typename To, typename From>
constexpr To scalar_cast(From v) noexcept {
  return To(static_cast<raw_scalar_t<To>>(raw_value(v)));
}

}  // namespace cta
