#pragma once

// Scaled dot-product attention over a sliding window of tokens:
//
//  * regular_sda / regular_sda_rowstream recompute the whole window.
//  * CoReState updates cached softmax numerators and denominators for the
//    n-1 previous queries (subtract the evicted key, add the new one) and
//    computes the newest query's row fresh, emitting all n rows per step.
//  * CoSiState caches keys and values and emits only the newest query's row.
//
// Given identical windows, all three produce the same rows up to rounding.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <type_traits>
#include <vector>

#include <fmt/format.h>

#include "cta/counting.hpp"
#include "cta/errors.hpp"
#include "cta/linalg.hpp"
#include "cta/ring.hpp"

namespace cta {

enum class OutputMode { full_window, single };

/// strict: stepping a cold state throws StateError.
/// permissive: cold steps are absorbed and their outputs flagged invalid.
enum class StepPolicy { strict, permissive };

template <typename T>
struct AttnOutput {
  OutputMode mode = OutputMode::full_window;
  Matrix<T> tokens;
  bool valid = true;
};

/// Tracks transient working memory (in scalar words) requested by a kernel.
class WorkspaceMeter {
 public:
  void acquire(std::size_t words) noexcept {
    current_ += words;
    peak_ = std::max(peak_, current_);
  }
  void release(std::size_t words) noexcept { current_ -= std::min(words, current_); }
  std::size_t current() const noexcept { return current_; }
  std::size_t peak() const noexcept { return peak_; }

 private:
  std::size_t current_ = 0;
  std::size_t peak_ = 0;
};

/// 1/sqrt(d), evaluated outside any operation tally.
template <typename T>
T attention_scale(std::size_t d) {
  using R = raw_scalar_t<T>;
  return T(static_cast<R>(1.0 / std::sqrt(static_cast<double>(d))));
}

namespace detail {

// One softmax row: out = sum_i exp(qs.key(i)) value(i) / sum_i exp(qs.key(i)).
// qs must already carry the 1/sqrt(d) factor. Operation order matches the
// corresponding row of regular_sda exactly.
template <typename T, typename KeyAt, typename ValueAt>
void attend_one(std::span<const T> qs, std::size_t count, KeyAt&& key, ValueAt&& value,
                std::span<T> scores, std::span<T> out) {
  for (std::size_t i = 0; i < count; ++i) scores[i] = checked_exp(dot<T>(qs, key(i)));
  T sum = scores[0];
  for (std::size_t i = 1; i < count; ++i) sum += scores[i];
  {
    const std::span<const T> v0 = value(0);
    for (std::size_t c = 0; c < out.size(); ++c) out[c] = scores[0] * v0[c];
  }
  for (std::size_t i = 1; i < count; ++i) {
    const std::span<const T> vi = value(i);
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += scores[i] * vi[c];
  }
  for (std::size_t c = 0; c < out.size(); ++c) out[c] = out[c] / sum;
}

template <typename T>
void check_sda_shapes(const Matrix<T>& q, const Matrix<T>& k, const Matrix<T>& v) {
  if (q.cols() != k.cols() || k.rows() != v.rows()) {
    throw ShapeError(fmt::format("attention shapes Q {}x{}, K {}x{}, V {}x{}", q.rows(), q.cols(),
                                 k.rows(), k.cols(), v.rows(), v.cols()));
  }
  if (k.rows() == 0 || q.cols() == 0) throw ShapeError("attention over an empty window");
}

}  // namespace detail

/// D^-1 A V with A = exp(Q K^T / sqrt(d)). Q may have a different row count
/// than K and V.
template <typename T>
Matrix<T> regular_sda(const Matrix<T>& q, const Matrix<T>& k, const Matrix<T>& v) {
  detail::check_sda_shapes(q, k, v);
  const Matrix<T> qs = scale(q, attention_scale<T>(q.cols()));
  const Matrix<T> a = elementwise_exp(matmul_transposed(qs, k));
  const Vector<T> d = row_sums(a);
  return row_normalize(matmul(a, v), d);
}

/// regular_sda computed one output row at a time; transient memory is one
/// scaled query row, one score row and one accumulator row. Bit-identical to
/// regular_sda.
template <typename T>
Matrix<T> regular_sda_rowstream(const Matrix<T>& q, const Matrix<T>& k, const Matrix<T>& v,
                                WorkspaceMeter* meter = nullptr) {
  detail::check_sda_shapes(q, k, v);
  const std::size_t n = k.rows();
  const T s = attention_scale<T>(q.cols());
  Matrix<T> out(q.rows(), v.cols());

  const std::size_t words = q.cols() + n + v.cols();
  if (meter) meter->acquire(words);
  std::vector<T> qs(q.cols());
  std::vector<T> scores(n);
  std::vector<T> acc(v.cols());
  for (std::size_t r = 0; r < q.rows(); ++r) {
    const auto qr = q.row(r);
    for (std::size_t c = 0; c < qs.size(); ++c) qs[c] = qr[c] * s;
    detail::attend_one<T>(
        qs, n, [&](std::size_t i) { return k.row(i); }, [&](std::size_t i) { return v.row(i); },
        scores, acc);
    std::ranges::copy(acc, out.row(r).begin());
  }
  if (meter) meter->release(words);
  return out;
}

/// Attention output of a single query row against explicit keys and values.
template <typename T>
Vector<T> single_query_sda(RowView<T> q, const Matrix<T>& k, const Matrix<T>& v) {
  if (q.size() != k.cols() || k.rows() != v.rows() || k.rows() == 0) {
    throw ShapeError(fmt::format("single_query_sda: q {}, K {}x{}, V {}x{}", q.size(), k.rows(),
                                 k.cols(), v.rows(), v.cols()));
  }
  const T s = attention_scale<T>(q.size());
  std::vector<T> qs(q.size());
  for (std::size_t c = 0; c < q.size(); ++c) qs[c] = q[c] * s;
  std::vector<T> scores(k.rows());
  Vector<T> out(v.cols());
  detail::attend_one<T>(
      qs, k.rows(), [&](std::size_t i) { return k.row(i); },
      [&](std::size_t i) { return v.row(i); }, scores, out.span());
  return out;
}

/// Retroactive streaming attention state.
///
/// Query memory holds the n-1 most recent queries pre-scaled by 1/sqrt(d).
/// Key and value memories hold up to n tokens: the n-1 most recent plus the
/// one that leaves the window on the next step. Denominators and numerators
/// are stored per query slot and cover every key currently held.
template <typename T>
class CoReState {
 public:
  CoReState(std::size_t n, std::size_t d_qk, std::size_t d_v,
            StepPolicy policy = StepPolicy::strict)
      : n_(n), d_qk_(d_qk), d_v_(d_v), policy_(policy) {
    if (n < 2) throw ConfigError(fmt::format("retroactive attention needs n >= 2, got {}", n));
    if (d_qk == 0 || d_v == 0) throw ConfigError("retroactive attention needs d >= 1");
    q_mem_ = RowRing<T>(n - 1, d_qk);
    k_mem_ = RowRing<T>(n, d_qk);
    v_mem_ = RowRing<T>(n, d_v);
    dsum_.assign(n - 1, T(0));
    av_ = Matrix<T>(n - 1, d_v);
    scale_ = attention_scale<T>(d_qk);
    alloc_scratch();
  }
  CoReState(std::size_t n, std::size_t d, StepPolicy policy = StepPolicy::strict)
      : CoReState(n, d, d, policy) {}

  template <typename U>
  explicit CoReState(const CoReState<U>& o)
      : n_(o.n_),
        d_qk_(o.d_qk_),
        d_v_(o.d_v_),
        policy_(o.policy_),
        q_mem_(o.q_mem_),
        k_mem_(o.k_mem_),
        v_mem_(o.v_mem_),
        av_(matrix_cast<T>(o.av_)),
        steps_seen_(o.steps_seen_),
        reinit_every_(o.reinit_every_),
        since_refresh_(o.since_refresh_) {
    dsum_.reserve(o.dsum_.size());
    for (U v : o.dsum_) dsum_.push_back(scalar_cast<T>(v));
    scale_ = attention_scale<T>(d_qk_);
    alloc_scratch();
  }

  std::size_t window() const noexcept { return n_; }
  std::size_t d_qk() const noexcept { return d_qk_; }
  std::size_t d_v() const noexcept { return d_v_; }
  std::size_t steps_seen() const noexcept { return steps_seen_; }
  bool warm() const noexcept { return steps_seen_ + 1 >= n_; }
  StepPolicy policy() const noexcept { return policy_; }
  void set_policy(StepPolicy p) noexcept { policy_ = p; }

  /// Recompute the caches from the rings every `steps` steps (0 disables).
  void set_reinit_interval(std::size_t steps) noexcept { reinit_every_ = steps; }

  const RowRing<T>& query_memory() const noexcept { return q_mem_; }
  const RowRing<T>& key_memory() const noexcept { return k_mem_; }
  const RowRing<T>& value_memory() const noexcept { return v_mem_; }

  /// Cached softmax denominator of the query with the given age.
  T denominator(std::size_t age) const noexcept { return dsum_[q_mem_.slot_of(age)]; }
  /// Cached un-normalised output row of the query with the given age.
  std::span<const T> numerator(std::size_t age) const noexcept {
    return av_.row(q_mem_.slot_of(age));
  }

  /// Scalars held between steps.
  std::size_t state_words() const noexcept {
    return (n_ - 1) * d_qk_ + n_ * (d_qk_ + d_v_) + (n_ - 1) * (d_v_ + 1);
  }

  /// Absorbs (q, k, v) and returns the attention rows of every query in the
  /// window, oldest first.
  AttnOutput<T> step(std::span<const T> q_new, std::span<const T> k_new,
                     std::span<const T> v_new) {
    if (q_new.size() != d_qk_ || k_new.size() != d_qk_ || v_new.size() != d_v_) {
      throw ShapeError(fmt::format("retroactive step: q {}, k {}, v {} for d_qk {}, d_v {}",
                                   q_new.size(), k_new.size(), v_new.size(), d_qk_, d_v_));
    }
    const bool was_warm = warm();
    if (!was_warm && policy_ == StepPolicy::strict) {
      throw StateError(fmt::format("retroactive step on cold state ({} of {} warmup steps)",
                                   steps_seen_, n_ - 1));
    }
    const std::size_t mq = q_mem_.size();
    const std::size_t mk = k_mem_.size();
    const bool has_old = mk > mq;
    const std::size_t first_key = mk - mq;

    Matrix<T> out(mq + 1, d_v_);

    // Previous queries: subtract the evicted key's contribution, add the new
    // key's, then normalise.
    for (std::size_t j = 0; j < mq; ++j) {
      const std::size_t slot = q_mem_.slot_of(j);
      const auto qj = q_mem_[j];
      T& dj = dsum_[slot];
      auto avj = av_.row(slot);
      const T e_new = checked_exp(dot<T>(qj, k_new));
      if (has_old) {
        const T e_old = checked_exp(dot<T>(qj, k_mem_.oldest()));
        const auto v_old = v_mem_.oldest();
        dj = (dj - e_old) + e_new;
        for (std::size_t c = 0; c < d_v_; ++c) {
          avj[c] = (avj[c] - e_old * v_old[c]) + e_new * v_new[c];
        }
      } else {
        dj = dj + e_new;
        for (std::size_t c = 0; c < d_v_; ++c) avj[c] = avj[c] + e_new * v_new[c];
      }
    }

    // Newest query against the current window of keys and values.
    const std::size_t count = mq + 1;
    for (std::size_t i = 0; i < mq; ++i) {
      scores_[i] = checked_exp(dot<T>(q_new, k_mem_[first_key + i]) * scale_);
    }
    scores_[mq] = checked_exp(dot<T>(q_new, k_new) * scale_);
    T d0 = scores_[0];
    for (std::size_t i = 1; i < count; ++i) d0 += scores_[i];
    auto value_at = [&](std::size_t i) -> std::span<const T> {
      return i < mq ? v_mem_[first_key + i] : v_new;
    };
    {
      const auto v0 = value_at(0);
      for (std::size_t c = 0; c < d_v_; ++c) av0_[c] = scores_[0] * v0[c];
    }
    for (std::size_t i = 1; i < count; ++i) {
      const auto vi = value_at(i);
      for (std::size_t c = 0; c < d_v_; ++c) av0_[c] += scores_[i] * vi[c];
    }

    for (std::size_t j = 0; j < mq; ++j) {
      const std::size_t slot = q_mem_.slot_of(j);
      if (!(raw_value(dsum_[slot]) > 0)) {
        throw DomainError(fmt::format("non-positive softmax denominator {} at row {}",
                                      raw_value(dsum_[slot]), j));
      }
      const T r = T(1) / dsum_[slot];
      const auto avj = av_.row(slot);
      auto o = out.row(j);
      for (std::size_t c = 0; c < d_v_; ++c) o[c] = avj[c] * r;
    }
    {
      const T r = T(1) / d0;
      auto o = out.row(mq);
      for (std::size_t c = 0; c < d_v_; ++c) o[c] = av0_[c] * r;
    }

    for (std::size_t c = 0; c < d_qk_; ++c) qs_[c] = q_new[c] * scale_;
    const std::size_t slot = q_mem_.push(qs_);
    dsum_[slot] = d0;
    std::ranges::copy(av0_, av_.row(slot).begin());
    k_mem_.push(k_new);
    v_mem_.push(v_new);
    ++steps_seen_;

    if (reinit_every_ != 0 && ++since_refresh_ >= reinit_every_) refresh();
    return {OutputMode::full_window, std::move(out), was_warm};
  }

  /// Recomputes denominators and numerators directly from the rings.
  void refresh() {
    for (std::size_t j = 0; j < q_mem_.size(); ++j) {
      const std::size_t slot = q_mem_.slot_of(j);
      const auto qj = q_mem_[j];
      auto avj = av_.row(slot);
      T sum = T(0);
      std::ranges::fill(avj, T(0));
      for (std::size_t i = 0; i < k_mem_.size(); ++i) {
        const T e = checked_exp(dot<T>(qj, k_mem_[i]));
        const auto vi = v_mem_[i];
        if (i == 0) {
          sum = e;
          for (std::size_t c = 0; c < d_v_; ++c) avj[c] = e * vi[c];
        } else {
          sum += e;
          for (std::size_t c = 0; c < d_v_; ++c) avj[c] += e * vi[c];
        }
      }
      dsum_[slot] = sum;
    }
    since_refresh_ = 0;
  }

  /// Loads n-1 warmup tokens and computes the caches from them.
  void warm_start(const Matrix<T>& q, const Matrix<T>& k, const Matrix<T>& v) {
    if (q.rows() != n_ - 1 || k.rows() != n_ - 1 || v.rows() != n_ - 1 || q.cols() != d_qk_ ||
        k.cols() != d_qk_ || v.cols() != d_v_) {
      throw ShapeError(fmt::format(
          "retroactive warmup expects ({0}x{1}, {0}x{1}, {0}x{2}), got ({3}x{4}, {5}x{6}, {7}x{8})",
          n_ - 1, d_qk_, d_v_, q.rows(), q.cols(), k.rows(), k.cols(), v.rows(), v.cols()));
    }
    q_mem_.clear();
    k_mem_.clear();
    v_mem_.clear();
    for (std::size_t r = 0; r + 1 < n_; ++r) {
      for (std::size_t c = 0; c < d_qk_; ++c) qs_[c] = q(r, c) * scale_;
      q_mem_.push(qs_);
      k_mem_.push(k.row(r));
      v_mem_.push(v.row(r));
    }
    steps_seen_ = n_ - 1;
    refresh();
  }

 private:
  template <typename>
  friend class CoReState;

  void alloc_scratch() {
    scores_.assign(n_, T(0));
    av0_.assign(d_v_, T(0));
    qs_.assign(d_qk_, T(0));
  }

  std::size_t n_;
  std::size_t d_qk_;
  std::size_t d_v_;
  StepPolicy policy_;
  RowRing<T> q_mem_;
  RowRing<T> k_mem_;
  RowRing<T> v_mem_;
  std::vector<T> dsum_;
  Matrix<T> av_;
  std::size_t steps_seen_ = 0;
  std::size_t reinit_every_ = 0;
  std::size_t since_refresh_ = 0;
  T scale_{};
  std::vector<T> scores_;
  std::vector<T> av0_;
  std::vector<T> qs_;
};

/// Single-output streaming attention state: caches the n-1 most recent keys
/// and values.
template <typename T>
class CoSiState {
 public:
  CoSiState(std::size_t n, std::size_t d_qk, std::size_t d_v,
            StepPolicy policy = StepPolicy::strict)
      : n_(n), d_qk_(d_qk), d_v_(d_v), policy_(policy) {
    if (n < 2) throw ConfigError(fmt::format("single-output attention needs n >= 2, got {}", n));
    if (d_qk == 0 || d_v == 0) throw ConfigError("single-output attention needs d >= 1");
    k_mem_ = RowRing<T>(n - 1, d_qk);
    v_mem_ = RowRing<T>(n - 1, d_v);
    scale_ = attention_scale<T>(d_qk);
    alloc_scratch();
  }
  CoSiState(std::size_t n, std::size_t d, StepPolicy policy = StepPolicy::strict)
      : CoSiState(n, d, d, policy) {}

  template <typename U>
  explicit CoSiState(const CoSiState<U>& o)
      : n_(o.n_),
        d_qk_(o.d_qk_),
        d_v_(o.d_v_),
        policy_(o.policy_),
        k_mem_(o.k_mem_),
        v_mem_(o.v_mem_),
        steps_seen_(o.steps_seen_) {
    scale_ = attention_scale<T>(d_qk_);
    alloc_scratch();
  }

  std::size_t window() const noexcept { return n_; }
  std::size_t d_qk() const noexcept { return d_qk_; }
  std::size_t d_v() const noexcept { return d_v_; }
  std::size_t steps_seen() const noexcept { return steps_seen_; }
  bool warm() const noexcept { return steps_seen_ + 1 >= n_; }
  StepPolicy policy() const noexcept { return policy_; }
  void set_policy(StepPolicy p) noexcept { policy_ = p; }

  const RowRing<T>& key_memory() const noexcept { return k_mem_; }
  const RowRing<T>& value_memory() const noexcept { return v_mem_; }

  std::size_t state_words() const noexcept { return (n_ - 1) * (d_qk_ + d_v_); }

  /// Attention row of query q against the cached keys/values plus the new pair.
  AttnOutput<T> step(std::span<const T> q, std::span<const T> k_new, std::span<const T> v_new) {
    if (q.size() != d_qk_ || k_new.size() != d_qk_ || v_new.size() != d_v_) {
      throw ShapeError(fmt::format("single-output step: q {}, k {}, v {} for d_qk {}, d_v {}",
                                   q.size(), k_new.size(), v_new.size(), d_qk_, d_v_));
    }
    const bool was_warm = warm();
    if (!was_warm && policy_ == StepPolicy::strict) {
      throw StateError(fmt::format("single-output step on cold state ({} of {} warmup steps)",
                                   steps_seen_, n_ - 1));
    }
    const std::size_t mk = k_mem_.size();
    for (std::size_t c = 0; c < d_qk_; ++c) qs_[c] = q[c] * scale_;
    Matrix<T> out(1, d_v_);
    detail::attend_one<T>(
        qs_, mk + 1,
        [&](std::size_t i) -> std::span<const T> { return i < mk ? k_mem_[i] : k_new; },
        [&](std::size_t i) -> std::span<const T> { return i < mk ? v_mem_[i] : v_new; },
        scores_, out.row(0));
    k_mem_.push(k_new);
    v_mem_.push(v_new);
    ++steps_seen_;
    return {OutputMode::single, std::move(out), was_warm};
  }

  /// Loads n-1 warmup keys and values.
  void warm_start(const Matrix<T>& k, const Matrix<T>& v) {
    if (k.rows() != n_ - 1 || v.rows() != n_ - 1 || k.cols() != d_qk_ || v.cols() != d_v_) {
      throw ShapeError(fmt::format("single-output warmup expects ({0}x{1}, {0}x{2})", n_ - 1,
                                   d_qk_, d_v_));
    }
    k_mem_.clear();
    v_mem_.clear();
    for (std::size_t r = 0; r + 1 < n_; ++r) {
      k_mem_.push(k.row(r));
      v_mem_.push(v.row(r));
    }
    steps_seen_ = n_ - 1;
  }

 private:
  template <typename>
  friend class CoSiState;

  void alloc_scratch() {
    scores_.assign(n_, T(0));
    qs_.assign(d_qk_, T(0));
  }

  std::size_t n_;
  std::size_t d_qk_;
  std::size_t d_v_;
  StepPolicy policy_;
  RowRing<T> k_mem_;
  RowRing<T> v_mem_;
  std::size_t steps_seen_ = 0;
  T scale_{};
  std::vector<T> scores_;
  std::vector<T> qs_;
};

template <typename T>
CoReState<T> core_init(std::size_t n, const Matrix<T>& warmup_q, const Matrix<T>& warmup_k,
                       const Matrix<T>& warmup_v, StepPolicy policy = StepPolicy::strict) {
  CoReState<T> state(n, warmup_q.cols(), warmup_v.cols(), policy);
  state.warm_start(warmup_q, warmup_k, warmup_v);
  return state;
}

template <typename T>
AttnOutput<T> core_step(CoReState<T>& state, RowView<T> q_new, RowView<T> k_new,
                        RowView<T> v_new) {
  return state.step(q_new, k_new, v_new);
}

template <typename T>
CoSiState<T> cosi_init(std::size_t n, const Matrix<T>& warmup_k, const Matrix<T>& warmup_v,
                       StepPolicy policy = StepPolicy::strict) {
  CoSiState<T> state(n, warmup_k.cols(), warmup_v.cols(), policy);
  state.warm_start(warmup_k, warmup_v);
  return state;
}

template <typename T>
AttnOutput<T> cosi_step(CoSiState<T>& state, RowView<T> q, RowView<T> k_new,
                        RowView<T> v_new) {
  return state.step(q, k_new, v_new);
}

template <typename R>
struct CountedResult {
  R output;
  OpCount ops;
};

// Instrumented variants: identical outputs plus exact operation tallies.
CountedResult<Matrix<double>> regular_sda_counted(const Matrix<double>& q,
                                                  const Matrix<double>& k,
                                                  const Matrix<double>& v);
CountedResult<AttnOutput<double>> core_step_counted(CoReState<double>& state,
                                                    std::span<const double> q_new,
                                                    std::span<const double> k_new,
                                                    std::span<const double> v_new);
CountedResult<AttnOutput<double>> cosi_step_counted(CoSiState<double>& state,
                                                    std::span<const double> q,
                                                    std::span<const double> k_new,
                                                    std::span<const double> v_new);

}  // namespace cta
