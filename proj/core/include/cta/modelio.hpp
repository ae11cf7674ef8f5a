#pragma once

// Weight files.
//
//   bytes 0..3   "CTWS"
//   byte  4      format version (1)
//   bytes 5..8   manifest length L, uint32 little-endian
//   L bytes      UTF-8 manifest
//   rest         blob of little-endian scalars
//
// Manifest lines:
//
//   activation gelu
//   tensor <name> <f32|f64> <rows> <cols> <offset>
//
// Offsets are byte positions inside the blob. Vectors are stored as 1 x len.
// All tensors in one file share a dtype.
//
// Tensor names: block<b>.mha.w_q.<i>, block<b>.mha.w_k.<i>, block<b>.mha.w_v.<i>,
// block<b>.mha.w_o, block<b>.ff.{w1,b1,w2,b2}, block<b>.ln1.{gain,bias},
// block<b>.ln2.{gain,bias}, rpe.table, cls.token.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>

#include "cta/encoder.hpp"
#include "cta/errors.hpp"
#include "cta/linalg.hpp"
#include "cta/model_config.hpp"
#include "cta/rpe.hpp"

namespace cta {

enum class DType { f32, f64 };

std::string_view to_string(DType t) noexcept;
inline std::size_t dtype_size(DType t) noexcept { return t == DType::f32 ? 4 : 8; }

struct TensorInfo {
  std::string name;
  DType dtype = DType::f64;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t offset = 0;

  std::size_t bytes() const noexcept { return rows * cols * dtype_size(dtype); }
};

/// Named tensors. Values are held as doubles; an f32 store rounds to float on
/// insertion so that save/load round trips are bit-exact.
class WeightStore {
 public:
  explicit WeightStore(DType dtype = DType::f64, std::string activation = "gelu")
      : dtype_(dtype), activation_(std::move(activation)) {}

  DType dtype() const noexcept { return dtype_; }
  const std::string& activation() const noexcept { return activation_; }

  void put(const std::string& name, Matrix<double> values);
  void put(const std::string& name, const Vector<double>& values);

  bool contains(std::string_view name) const;
  std::size_t size() const noexcept { return tensors_.size(); }
  /// Tensor names in insertion order.
  std::vector<std::string> names() const;
  /// Manifest entries with offsets as written by serialize_weights.
  std::vector<TensorInfo> manifest() const;

  /// MissingTensorError when absent.
  const Matrix<double>& raw(std::string_view name) const;

  template <typename T>
  Matrix<T> matrix(std::string_view name, std::size_t rows, std::size_t cols) const {
    const Matrix<double>& m = raw(name);
    if (m.rows() != rows || m.cols() != cols) {
      throw ShapeError(fmt::format("tensor '{}' has shape {}x{}, expected {}x{}", name, m.rows(),
                                   m.cols(), rows, cols));
    }
    return matrix_cast<T>(m);
  }

  template <typename T>
  Vector<T> vector(std::string_view name, std::size_t len) const {
    const Matrix<T> m = matrix<T>(name, 1, len);
    return Vector<T>(m.row(0));
  }

  friend bool operator==(const WeightStore& a, const WeightStore& b);

 private:
  struct Entry {
    std::string name;
    Matrix<double> values;
  };
  DType dtype_;
  std::string activation_;
  std::vector<Entry> tensors_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

std::vector<std::uint8_t> serialize_weights(const WeightStore& store);
WeightStore parse_weights(std::span<const std::uint8_t> bytes);
void save_weights(const std::filesystem::path& path, const WeightStore& store);
WeightStore load_weights(const std::filesystem::path& path);

/// Tensor names (and shapes) a configuration reads from a store.
std::vector<TensorInfo> required_tensors(const ModelConfig& cfg);

/// Seeded uniform weights in [-0.1, 0.1]; layer-norm gains are 1 + U[-0.1, 0.1].
WeightStore init_random_weights(const ModelConfig& cfg, std::uint64_t seed,
                                DType dtype = DType::f64);

/// The single conversion from a store into typed model weights, shared by
/// the batch and streaming paths.
template <typename T>
ModelWeights<T> load_model_weights(const ModelConfig& cfg, const WeightStore& store) {
  cfg.validate();
  if (store.activation() != "gelu") {
    throw ConfigError(fmt::format("unsupported activation '{}'", store.activation()));
  }
  const std::size_t d = cfg.d, h = cfg.heads, dh = cfg.d / cfg.heads, dff = cfg.ff_dim();
  ModelWeights<T> w;
  for (std::size_t b = 0; b < cfg.blocks.size(); ++b) {
    const std::string p = fmt::format("block{}.", b);
    EncoderWeights<T> e;
    for (std::size_t i = 0; i < h; ++i) {
      e.mha.w_q.push_back(store.matrix<T>(fmt::format("{}mha.w_q.{}", p, i), d, dh));
      e.mha.w_k.push_back(store.matrix<T>(fmt::format("{}mha.w_k.{}", p, i), d, dh));
      e.mha.w_v.push_back(store.matrix<T>(fmt::format("{}mha.w_v.{}", p, i), d, dh));
    }
    e.mha.w_o = store.matrix<T>(p + "mha.w_o", d, d);
    e.w1 = store.matrix<T>(p + "ff.w1", d, dff);
    e.b1 = store.vector<T>(p + "ff.b1", dff);
    e.w2 = store.matrix<T>(p + "ff.w2", dff, d);
    e.b2 = store.vector<T>(p + "ff.b2", d);
    e.ln1_gain = store.vector<T>(p + "ln1.gain", d);
    e.ln1_bias = store.vector<T>(p + "ln1.bias", d);
    e.ln2_gain = store.vector<T>(p + "ln2.gain", d);
    e.ln2_bias = store.vector<T>(p + "ln2.bias", d);
    e.validate();
    w.blocks.push_back(std::move(e));
  }
  if (cfg.rpe_kind == RpeKind::learned) {
    w.rpe = rpe_learned_table(store.matrix<T>("rpe.table", cfg.rpe_table_size(), d));
  } else {
    w.rpe = rpe_fixed_table<T>(cfg.rpe_table_size(), d);
  }
  if (cfg.class_token_before) w.class_token = store.vector<T>("cls.token", d);
  return w;
}

}  // namespace cta
