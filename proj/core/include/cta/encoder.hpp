#pragma once

// Continual transformer encoder blocks and their multi-block assembly.
//
//   y = LayerNorm(Sel(x) + MHA(x, x, x))
//   z = LayerNorm(y + FF(y)),   FF(y) = GELU(y W1 + b1) W2 + b2
//
// Sel keeps every window token for retroactive and regular blocks and only the
// newest token for single-output blocks. LayerNorm (eps 1e-5) is applied per
// token over the feature dimension, after the residual.

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <type_traits>
#include <vector>

#include <fmt/format.h>

#include "cta/attention.hpp"
#include "cta/errors.hpp"
#include "cta/linalg.hpp"
#include "cta/mha.hpp"
#include "cta/model_config.hpp"
#include "cta/ring.hpp"
#include "cta/rpe.hpp"

namespace cta {

inline constexpr double kLayerNormEps = 1e-5;

template <typename T>
struct EncoderWeights {
  MhaWeights<T> mha;
  Matrix<T> w1;  // d x d_ff
  Vector<T> b1;  // d_ff
  Matrix<T> w2;  // d_ff x d
  Vector<T> b2;  // d
  Vector<T> ln1_gain, ln1_bias;
  Vector<T> ln2_gain, ln2_bias;

  std::size_t d_model() const noexcept { return mha.d_out(); }

  void validate() const {
    mha.validate();
    const std::size_t d = d_model();
    if (mha.d_model() != d) {
      throw ShapeError(fmt::format("encoder MHA maps {} -> {}, residual needs equal widths",
                                   mha.d_model(), d));
    }
    if (w1.rows() != d || w2.cols() != d || w1.cols() != w2.rows() || b1.size() != w1.cols() ||
        b2.size() != d) {
      throw ShapeError(fmt::format("feed-forward shapes W1 {}x{}, b1 {}, W2 {}x{}, b2 {} for d = {}",
                                   w1.rows(), w1.cols(), b1.size(), w2.rows(), w2.cols(),
                                   b2.size(), d));
    }
    for (const auto* v : {&ln1_gain, &ln1_bias, &ln2_gain, &ln2_bias}) {
      if (v->size() != d) throw ShapeError("layer norm parameter width differs from d");
      if (!all_finite<T>(v->span())) throw DataError("non-finite layer norm parameter");
    }
  }
};

template <typename T>
Vector<T> layer_norm(std::span<const T> x, std::span<const T> gain, std::span<const T> bias,
                     double eps = kLayerNormEps) {
  if (gain.size() != x.size() || bias.size() != x.size() || x.empty()) {
    throw ShapeError(fmt::format("layer_norm: x {}, gain {}, bias {}", x.size(), gain.size(),
                                 bias.size()));
  }
  const T count = static_cast<T>(x.size());
  T mean = x[0];
  for (std::size_t i = 1; i < x.size(); ++i) mean += x[i];
  mean /= count;
  T var = T(0);
  for (T v : x) var += (v - mean) * (v - mean);
  var /= count;
  const T inv = T(1) / std::sqrt(var + static_cast<T>(eps));
  Vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - mean) * inv * gain[i] + bias[i];
  return out;
}

template <typename T>
T gelu(T x) {
  return static_cast<T>(0.5) * x * (T(1) + std::erf(x / std::sqrt(static_cast<T>(2))));
}

template <typename T>
Vector<T> feed_forward(const EncoderWeights<T>& w, RowView<T> x) {
  if (x.size() != w.w1.rows()) {
    throw ShapeError(fmt::format("feed_forward: input {} for W1 with {} rows", x.size(),
                                 w.w1.rows()));
  }
  Vector<T> hidden = vecmat<T>(x, w.w1);
  for (std::size_t i = 0; i < hidden.size(); ++i) hidden[i] = gelu(hidden[i] + w.b1[i]);
  Vector<T> out = vecmat<T>(hidden.span(), w.w2);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += w.b2[i];
  return out;
}

/// Residual, normalisation and feed-forward stage for one token.
template <typename T>
Vector<T> encoder_token(const EncoderWeights<T>& w, RowView<T> residual,
                        RowView<T> attended) {
  if (residual.size() != attended.size()) throw ShapeError("encoder_token: width mismatch");
  Vector<T> sum(residual.size());
  for (std::size_t i = 0; i < sum.size(); ++i) sum[i] = residual[i] + attended[i];
  const Vector<T> y = layer_norm<T>(sum.span(), w.ln1_gain.span(), w.ln1_bias.span());
  const Vector<T> ff = feed_forward(w, y.span());
  for (std::size_t i = 0; i < sum.size(); ++i) sum[i] = y[i] + ff[i];
  return layer_norm<T>(sum.span(), w.ln2_gain.span(), w.ln2_bias.span());
}

/// Regular (non-continual) encoder block over a token sequence.
template <typename T>
Matrix<T> encoder_block_batch(const EncoderWeights<T>& w, const Matrix<T>& x) {
  w.validate();
  if (x.cols() != w.d_model() || x.rows() == 0) {
    throw ShapeError(fmt::format("encoder_block_batch: {}x{} input for d = {}", x.rows(),
                                 x.cols(), w.d_model()));
  }
  const Matrix<T> attended = mha_batch(w.mha, x, x, x);
  Matrix<T> out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const Vector<T> z = encoder_token(w, x.row(r), attended.row(r));
    std::ranges::copy(z, out.row(r).begin());
  }
  return out;
}

/// Streaming state of one encoder block fed directly by the token stream.
template <typename T>
class EncoderBlockState {
 public:
  EncoderBlockState(const EncoderWeights<T>& w, AttnKind kind, std::size_t n,
                    StepPolicy policy = StepPolicy::strict)
      : kind_(kind), attn_(w.mha, kind, n, policy) {
    if (kind == AttnKind::retroactive) inputs_ = RowRing<T>(n, w.d_model());
  }

  AttnKind kind() const noexcept { return kind_; }
  bool warm() const { return attn_.warm(); }
  std::size_t window() const { return attn_.window(); }
  void set_policy(StepPolicy p) { attn_.set_policy(p); }
  CoMhaState<T>& attention() noexcept { return attn_; }

  /// Retroactive blocks return the window's n tokens, single-output blocks
  /// the newest token's output.
  AttnOutput<T> step(const EncoderWeights<T>& w, std::span<const T> x) {
    if (x.size() != w.d_model()) {
      throw ShapeError(fmt::format("encoder block step: token {} for d = {}", x.size(),
                                   w.d_model()));
    }
    AttnOutput<T> attended = comha_step(attn_, w.mha, x, x, x);
    Matrix<T> out(attended.tokens.rows(), w.d_model());
    if (kind_ == AttnKind::retroactive) {
      inputs_.push(x);
      for (std::size_t r = 0; r < out.rows(); ++r) {
        const Vector<T> z = encoder_token(w, inputs_[r], attended.tokens.row(r));
        std::ranges::copy(z, out.row(r).begin());
      }
    } else {
      const Vector<T> z = encoder_token(w, x, attended.tokens.row(0));
      std::ranges::copy(z, out.row(0).begin());
    }
    return {attended.mode, std::move(out), attended.valid};
  }

 private:
  AttnKind kind_;
  CoMhaState<T> attn_;
  RowRing<T> inputs_;
};

template <typename T>
AttnOutput<T> encoder_block_step(EncoderBlockState<T>& state, const EncoderWeights<T>& w,
                                 RowView<T> x) {
  return state.step(w, x);
}

template <typename T>
struct ModelWeights {
  std::vector<EncoderWeights<T>> blocks;
  RpeTable<T> rpe;
  std::optional<Vector<T>> class_token;
};

namespace detail {

template <typename T>
void check_model(const ModelConfig& cfg, const ModelWeights<T>& w) {
  cfg.validate();
  if (w.blocks.size() != cfg.blocks.size()) {
    throw ConfigError(fmt::format("config has {} blocks, weights {}", cfg.blocks.size(),
                                  w.blocks.size()));
  }
  if (w.rpe.dim() != cfg.d) throw ShapeError("positional table width differs from d");
  if (w.rpe.tokens() != cfg.rpe_table_size()) {
    throw ConfigError(fmt::format("positional table holds {} encodings, config expects {}",
                                  w.rpe.tokens(), cfg.rpe_table_size()));
  }
  if (cfg.class_token_before && (!w.class_token || w.class_token->size() != cfg.d)) {
    throw ConfigError("class token configured but absent or of wrong width");
  }
}

}  // namespace detail

/// Streaming state of a whole model: positional counter plus the states of
/// the blocks that consume the stream directly.
template <typename T>
class ModelState {
 public:
  ModelState(const ModelConfig& cfg, const ModelWeights<T>& w, std::size_t tau0 = 0,
             StepPolicy policy = StepPolicy::strict)
      : cfg_(cfg), policy_(policy) {
    detail::check_model(cfg, w);
    rpe_.tau = tau0 % w.rpe.tokens();
    for (std::size_t b = 0; b < cfg.blocks.size(); ++b) {
      const BlockKind kind = cfg.blocks[b];
      if (b == 0 && kind == BlockKind::regular) {
        window_.emplace(cfg.n, cfg.d);
      }
      if (b == 0 || cfg.transformer_xl) {
        if (kind == BlockKind::retroactive) {
          cached_.emplace_back(w.blocks[b], AttnKind::retroactive, cfg.n, StepPolicy::permissive);
        } else if (kind == BlockKind::single_output) {
          cached_.emplace_back(w.blocks[b], AttnKind::single_output, cfg.n,
                               StepPolicy::permissive);
        }
      }
    }
  }

  const ModelConfig& config() const noexcept { return cfg_; }
  std::size_t steps_seen() const noexcept { return steps_; }

  /// Stream steps consumed before the first valid prediction.
  std::size_t warmup_steps() const noexcept {
    const std::size_t per_block = cfg_.n - 1;
    return cfg_.transformer_xl ? per_block * cfg_.blocks.size() : per_block;
  }
  bool warm() const noexcept { return steps_ >= warmup_steps(); }

  /// Positional index the next token will receive.
  std::size_t next_tau() const noexcept { return rpe_.tau; }

  /// Positional index of the oldest token in the current window.
  std::size_t window_tau0() const noexcept {
    const std::size_t t = cfg_.rpe_table_size();
    const std::size_t back = std::min(steps_, cfg_.n) % t;
    return (rpe_.tau + t - back) % t;
  }

  /// Consumes one raw token; returns the prediction once every block is warm.
  std::optional<Vector<T>> feed(const ModelWeights<T>& w, std::span<const T> x_raw) {
    if (x_raw.size() != cfg_.d) {
      throw ShapeError(fmt::format("model token width {} for d = {}", x_raw.size(), cfg_.d));
    }
    auto [x, next] = rpe_step(w.rpe, rpe_, x_raw);
    rpe_ = next;
    ++steps_;

    Matrix<T> tokens;
    std::size_t cached_index = 0;
    for (std::size_t b = 0; b < cfg_.blocks.size(); ++b) {
      const auto& bw = w.blocks[b];
      if (cfg_.class_token_before == b) tokens.append_row(w.class_token->span());
      const BlockKind kind = cfg_.blocks[b];
      const bool streams = b == 0 || cfg_.transformer_xl;

      if (streams && kind != BlockKind::regular) {
        const std::span<const T> input = b == 0 ? x.span() : tokens.row(tokens.rows() - 1);
        const Vector<T> in(input);
        AttnOutput<T> out = cached_[cached_index++].step(bw, in.span());
        if (!out.valid) return std::nullopt;
        tokens = std::move(out.tokens);
      } else if (streams) {
        window_->push(x.span());
        if (!window_->full()) return std::nullopt;
        tokens = encoder_block_batch(bw, window_->to_matrix());
      } else if (kind == BlockKind::single_output) {
        const Vector<T> query(tokens.row(tokens.rows() - 1));
        const Vector<T> attended = mha_single_query<T>(bw.mha, query.span(), tokens, tokens);
        tokens = Matrix<T>::from_row(encoder_token(bw, query.span(), attended.span()).span());
      } else {
        tokens = encoder_block_batch(bw, tokens);
      }
    }
    return Vector<T>(tokens.row(tokens.rows() - 1));
  }

  StepPolicy policy() const noexcept { return policy_; }

 private:
  ModelConfig cfg_;
  StepPolicy policy_;
  RpeState rpe_;
  std::size_t steps_ = 0;
  std::vector<EncoderBlockState<T>> cached_;
  std::optional<RowRing<T>> window_;
};

/// Feeds warmup tokens (rows of x_raw) without producing predictions.
template <typename T>
void model_warmup(ModelState<T>& state, const ModelWeights<T>& w, const Matrix<T>& x_raw) {
  for (std::size_t r = 0; r < x_raw.rows(); ++r) state.feed(w, x_raw.row(r));
}

/// One streaming step on a warm model. Returns the prediction token: the class
/// token's output when configured, otherwise the newest token's output.
template <typename T>
Vector<T> model_step(ModelState<T>& state, const ModelWeights<T>& w, RowView<T> x_raw) {
  if (!state.warm() && state.policy() == StepPolicy::strict) {
    throw StateError(fmt::format("model step on cold state ({} of {} warmup steps)",
                                 state.steps_seen(), state.warmup_steps()));
  }
  auto out = state.feed(w, x_raw);
  if (!out) throw StateError("model produced no prediction after warmup");
  return std::move(*out);
}

/// Non-continual reference: positional encoding from tau0, regular blocks,
/// class token appended at the configured block input.
template <typename T>
Vector<T> model_batch(const ModelConfig& cfg, const ModelWeights<T>& w, const Matrix<T>& x_raw,
                      std::size_t tau0) {
  detail::check_model(cfg, w);
  if (x_raw.rows() != cfg.n || x_raw.cols() != cfg.d) {
    throw ShapeError(fmt::format("model_batch: {}x{} input for n = {}, d = {}", x_raw.rows(),
                                 x_raw.cols(), cfg.n, cfg.d));
  }
  Matrix<T> tokens = rpe_apply_batch(w.rpe, tau0, x_raw);
  for (std::size_t b = 0; b < cfg.blocks.size(); ++b) {
    if (cfg.class_token_before == b) tokens.append_row(w.class_token->span());
    tokens = encoder_block_batch(w.blocks[b], tokens);
  }
  return Vector<T>(tokens.row(tokens.rows() - 1));
}

}  // namespace cta
