#pragma once

#include <algorithm>
#include <cstddef>
#include <span>

#include <fmt/format.h>

#include "cta/errors.hpp"
#include "cta/linalg.hpp"

namespace cta {

/// Fixed-capacity FIFO of equal-width rows. Rows are addressed by age
/// (0 = oldest); pushing into a full ring overwrites the oldest slot.
template <typename T>
class RowRing {
 public:
  RowRing() = default;
  RowRing(std::size_t capacity, std::size_t width) : slots_(capacity, width) {}

  template <typename U>
  explicit RowRing(const RowRing<U>& other)
      : slots_(matrix_cast<T>(other.storage())), head_(other.head()), size_(other.size()) {}

  std::size_t capacity() const noexcept { return slots_.rows(); }
  std::size_t width() const noexcept { return slots_.cols(); }
  std::size_t size() const noexcept { return size_; }
  bool empty() const noexcept { return size_ == 0; }
  bool full() const noexcept { return size_ == capacity(); }

  /// Physical slot holding the row of the given age.
  std::size_t slot_of(std::size_t age) const noexcept {
    return (head_ + age) % capacity();
  }

  std::span<const T> operator[](std::size_t age) const noexcept {
    return slots_.row(slot_of(age));
  }
  std::span<T> at_age(std::size_t age) noexcept { return slots_.row(slot_of(age)); }

  std::span<const T> oldest() const noexcept { return (*this)[0]; }
  std::span<const T> newest() const noexcept { return (*this)[size_ - 1]; }

  /// Appends a row, evicting the oldest when full. Returns the slot written.
  std::size_t push(std::span<const T> row) {
    if (row.size() != width()) {
      throw ShapeError(fmt::format("ring push: width {} into {}", row.size(), width()));
    }
    if (capacity() == 0) throw StateError("ring push into zero-capacity ring");
    std::size_t slot;
    if (full()) {
      slot = head_;
      head_ = (head_ + 1) % capacity();
    } else {
      slot = (head_ + size_) % capacity();
      ++size_;
    }
    std::ranges::copy(row, slots_.row(slot).begin());
    return slot;
  }

  void clear() noexcept {
    head_ = 0;
    size_ = 0;
  }

  /// Rows oldest to newest.
  Matrix<T> to_matrix() const {
    Matrix<T> out(size_, width());
    for (std::size_t a = 0; a < size_; ++a) std::ranges::copy((*this)[a], out.row(a).begin());
    return out;
  }

  const Matrix<T>& storage() const noexcept { return slots_; }
  std::size_t head() const noexcept { return head_; }

 private:
  Matrix<T> slots_;
  std::size_t head_ = 0;
  std::size_t size_ = 0;
};

}  // namespace cta
