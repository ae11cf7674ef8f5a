#pragma once

// Architecture description of a continual transformer encoder stack.
//
// Text form (one `key = value` per line, `#` starts a comment):
//
//   n              = 16                      window length, >= 2
//   d              = 32                      token dimension
//   heads          = 4                       divides d
//   d_ff           = 64                      feed-forward width (default 4d)
//   blocks         = retroactive, single_output
//   class_token    = none | before_block_<k> (1-based, k >= 2)
//   rpe_tokens     = auto | <T>              auto means 2n-1
//   rpe_kind       = fixed | learned
//   precision      = f64 | f32
//   transformer_xl = false | true            allow stacked single_output blocks

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cta/rpe.hpp"

namespace cta {

enum class BlockKind { retroactive, single_output, regular };
enum class Precision { f32, f64 };

struct ModelConfig {
  std::size_t n = 0;
  std::size_t d = 0;
  std::size_t heads = 1;
  std::size_t d_ff = 0;
  std::vector<BlockKind> blocks;
  /// 0-based index of the block whose input gains the class token.
  std::optional<std::size_t> class_token_before;
  /// Number of positional encodings; 0 selects 2n-1.
  std::size_t rpe_tokens = 0;
  RpeKind rpe_kind = RpeKind::fixed_sinusoidal;
  Precision precision = Precision::f64;
  bool transformer_xl = false;

  std::size_t rpe_table_size() const noexcept { return rpe_tokens != 0 ? rpe_tokens : 2 * n - 1; }
  std::size_t ff_dim() const noexcept { return d_ff != 0 ? d_ff : 4 * d; }

  /// Throws ConfigError describing the first violated rule.
  void validate() const;

  /// Single single-output block.
  static ModelConfig one_block(std::size_t n, std::size_t d, std::size_t heads, std::size_t d_ff);
  /// Retroactive block followed by a single-output block.
  static ModelConfig two_block(std::size_t n, std::size_t d, std::size_t heads, std::size_t d_ff,
                               bool class_token = false);
};

std::string_view to_string(BlockKind kind) noexcept;
std::string_view to_string(Precision p) noexcept;

ModelConfig parse_model_config(std::string_view text);
ModelConfig load_model_config(const std::filesystem::path& path);
std::string format_model_config(const ModelConfig& cfg);

}  // namespace cta
