#pragma once

// Multi-head attention: per-head projections W_Q^i, W_K^i, W_V^i, a regular or
// continual attention per head, head concatenation and the output projection
// W_O. Projections carry no bias. Continual heads cache projected tokens.

#include <cstddef>
#include <span>
#include <type_traits>
#include <variant>
#include <vector>

#include <fmt/format.h>

#include "cta/attention.hpp"
#include "cta/errors.hpp"
#include "cta/linalg.hpp"

namespace cta {

template <typename T>
struct MhaWeights {
  std::vector<Matrix<T>> w_q;  // h x (d x d_K/h)
  std::vector<Matrix<T>> w_k;  // h x (d x d_K/h)
  std::vector<Matrix<T>> w_v;  // h x (d x d_V/h)
  Matrix<T> w_o;               // d_V x d_O

  std::size_t heads() const noexcept { return w_q.size(); }
  std::size_t d_model() const noexcept { return w_q.empty() ? 0 : w_q.front().rows(); }
  std::size_t head_dim_qk() const noexcept { return w_q.empty() ? 0 : w_q.front().cols(); }
  std::size_t head_dim_v() const noexcept { return w_v.empty() ? 0 : w_v.front().cols(); }
  std::size_t d_out() const noexcept { return w_o.cols(); }

  void validate() const {
    const std::size_t h = heads();
    if (h == 0) throw ConfigError("multi-head attention needs at least one head");
    if (w_k.size() != h || w_v.size() != h) {
      throw ConfigError(fmt::format("head count mismatch: {} W_Q, {} W_K, {} W_V", h, w_k.size(),
                                    w_v.size()));
    }
    const std::size_t d = d_model();
    for (std::size_t i = 0; i < h; ++i) {
      if (w_q[i].rows() != d || w_k[i].rows() != d || w_v[i].rows() != d) {
        throw ShapeError(fmt::format("head {} projections must have {} input rows", i, d));
      }
      if (w_q[i].cols() != head_dim_qk() || w_k[i].cols() != head_dim_qk() ||
          w_v[i].cols() != head_dim_v()) {
        throw ShapeError(fmt::format("head {} projection widths differ from head 0", i));
      }
    }
    if (head_dim_qk() == 0 || head_dim_v() == 0) throw ShapeError("empty head projection");
    if (w_o.rows() != h * head_dim_v()) {
      throw ShapeError(fmt::format("W_O has {} rows, expected d_V = {}", w_o.rows(),
                                   h * head_dim_v()));
    }
    for (const auto* group : {&w_q, &w_k, &w_v}) {
      for (const auto& m : *group) {
        if (!all_finite<T>(m.data())) throw DataError("non-finite projection weight");
      }
    }
    if (!all_finite<T>(w_o.data())) throw DataError("non-finite W_O weight");
  }
};

/// Concat_i regular_sda(Q W_Q^i, K W_K^i, V W_V^i) W_O.
template <typename T>
Matrix<T> mha_batch(const MhaWeights<T>& w, const Matrix<T>& q, const Matrix<T>& k,
                    const Matrix<T>& v) {
  w.validate();
  if (q.cols() != w.d_model() || k.cols() != w.d_model() || v.cols() != w.d_model()) {
    throw ShapeError(fmt::format("mha_batch: inputs of width {}/{}/{} for d = {}", q.cols(),
                                 k.cols(), v.cols(), w.d_model()));
  }
  const std::size_t dh = w.head_dim_v();
  Matrix<T> concat(q.rows(), w.heads() * dh);
  for (std::size_t i = 0; i < w.heads(); ++i) {
    const Matrix<T> head =
        regular_sda(matmul(q, w.w_q[i]), matmul(k, w.w_k[i]), matmul(v, w.w_v[i]));
    for (std::size_t r = 0; r < head.rows(); ++r) {
      std::ranges::copy(head.row(r), concat.row(r).begin() + static_cast<std::ptrdiff_t>(i * dh));
    }
  }
  return matmul(concat, w.w_o);
}

/// Multi-head attention output of one query token against explicit key and
/// value token sets (one row of mha_batch).
template <typename T>
Vector<T> mha_single_query(const MhaWeights<T>& w, RowView<T> q, const Matrix<T>& k,
                           const Matrix<T>& v) {
  w.validate();
  const std::size_t dh = w.head_dim_v();
  Vector<T> concat(w.heads() * dh);
  for (std::size_t i = 0; i < w.heads(); ++i) {
    const Vector<T> qi = vecmat<T>(q, w.w_q[i]);
    const Vector<T> head = single_query_sda<T>(qi.span(), matmul(k, w.w_k[i]), matmul(v, w.w_v[i]));
    std::ranges::copy(head, concat.begin() + static_cast<std::ptrdiff_t>(i * dh));
  }
  return vecmat<T>(concat.span(), w.w_o);
}

enum class AttnKind { retroactive, single_output };

/// Per-head continual states sharing one window length.
template <typename T>
class CoMhaState {
 public:
  using Head = std::variant<CoReState<T>, CoSiState<T>>;

  CoMhaState() = default;
  explicit CoMhaState(std::vector<Head> heads) : heads_(std::move(heads)) {}

  CoMhaState(const MhaWeights<T>& w, AttnKind kind, std::size_t n,
             StepPolicy policy = StepPolicy::strict) {
    w.validate();
    heads_.reserve(w.heads());
    for (std::size_t i = 0; i < w.heads(); ++i) {
      if (kind == AttnKind::retroactive) {
        heads_.emplace_back(CoReState<T>(n, w.head_dim_qk(), w.head_dim_v(), policy));
      } else {
        heads_.emplace_back(CoSiState<T>(n, w.head_dim_qk(), w.head_dim_v(), policy));
      }
    }
  }

  std::size_t heads() const noexcept { return heads_.size(); }
  std::vector<Head>& head_states() noexcept { return heads_; }
  const std::vector<Head>& head_states() const noexcept { return heads_; }

  /// Common kind of all heads; ConfigError when heads are mixed or absent.
  AttnKind kind() const {
    if (heads_.empty()) throw ConfigError("continual MHA state has no heads");
    const bool retro = std::holds_alternative<CoReState<T>>(heads_.front());
    for (const auto& h : heads_) {
      if (std::holds_alternative<CoReState<T>>(h) != retro) {
        throw ConfigError("continual MHA state mixes retroactive and single-output heads");
      }
    }
    return retro ? AttnKind::retroactive : AttnKind::single_output;
  }

  bool warm() const {
    if (heads_.empty()) return false;
    const bool first = std::visit([](const auto& s) { return s.warm(); }, heads_.front());
    for (const auto& h : heads_) {
      if (std::visit([](const auto& s) { return s.warm(); }, h) != first) {
        throw StateError("continual MHA heads disagree on warmth");
      }
    }
    return first;
  }

  std::size_t window() const {
    if (heads_.empty()) return 0;
    return std::visit([](const auto& s) { return s.window(); }, heads_.front());
  }

  void set_policy(StepPolicy p) {
    for (auto& h : heads_) std::visit([p](auto& s) { s.set_policy(p); }, h);
  }

 private:
  std::vector<Head> heads_;
};

/// (Concat_i CoAtt(q W_Q^i, k W_K^i, v W_V^i)) W_O for one step.
template <typename T>
AttnOutput<T> comha_step(CoMhaState<T>& state, const MhaWeights<T>& w, RowView<T> q,
                         RowView<T> k, RowView<T> v) {
  const AttnKind kind = state.kind();
  if (state.heads() != w.heads()) {
    throw ConfigError(fmt::format("state has {} heads, weights {}", state.heads(), w.heads()));
  }
  if (q.size() != w.d_model() || k.size() != w.d_model() || v.size() != w.d_model()) {
    throw ShapeError(fmt::format("comha_step: inputs of width {}/{}/{} for d = {}", q.size(),
                                 k.size(), v.size(), w.d_model()));
  }
  const std::size_t dh = w.head_dim_v();
  Matrix<T> concat;
  bool valid = true;
  for (std::size_t i = 0; i < w.heads(); ++i) {
    const Vector<T> qi = vecmat<T>(q, w.w_q[i]);
    const Vector<T> ki = vecmat<T>(k, w.w_k[i]);
    const Vector<T> vi = vecmat<T>(v, w.w_v[i]);
    AttnOutput<T> head = std::visit(
        [&](auto& s) { return s.step(qi.span(), ki.span(), vi.span()); },
        state.head_states()[i]);
    if (i == 0) concat = Matrix<T>(head.tokens.rows(), w.heads() * dh);
    valid = valid && head.valid;
    for (std::size_t r = 0; r < head.tokens.rows(); ++r) {
      std::ranges::copy(head.tokens.row(r),
                        concat.row(r).begin() + static_cast<std::ptrdiff_t>(i * dh));
    }
  }
  const OutputMode mode =
      kind == AttnKind::retroactive ? OutputMode::full_window : OutputMode::single;
  return {mode, matmul(concat, w.w_o), valid};
}

/// Builds a warm continual MHA state from n-1 warmup tokens per input.
template <typename T>
CoMhaState<T> comha_init(const MhaWeights<T>& w, AttnKind kind, std::size_t n,
                         const Matrix<T>& warmup_q, const Matrix<T>& warmup_k,
                         const Matrix<T>& warmup_v, StepPolicy policy = StepPolicy::strict) {
  w.validate();
  std::vector<typename CoMhaState<T>::Head> heads;
  heads.reserve(w.heads());
  for (std::size_t i = 0; i < w.heads(); ++i) {
    const Matrix<T> pk = matmul(warmup_k, w.w_k[i]);
    const Matrix<T> pv = matmul(warmup_v, w.w_v[i]);
    if (kind == AttnKind::retroactive) {
      heads.emplace_back(core_init(n, matmul(warmup_q, w.w_q[i]), pk, pv, policy));
    } else {
      heads.emplace_back(cosi_init(n, pk, pv, policy));
    }
  }
  return CoMhaState<T>(std::move(heads));
}

}  // namespace cta
