#pragma once

// Token streams: CSV (one token per line, comma-separated decimals, no header,
// LF endings) or raw (contiguous little-endian f32, row-major).

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <string_view>

#include "cta/linalg.hpp"

namespace cta {

enum class StreamFormat { csv, raw_f32 };

struct TokenStream {
  std::size_t d = 0;
  Matrix<double> tokens;  // one row per token
  StreamFormat format = StreamFormat::csv;

  std::size_t size() const noexcept { return tokens.rows(); }
};

/// `.csv` selects CSV; anything else is read as raw f32.
StreamFormat stream_format_for(const std::filesystem::path& path);

/// d == 0 infers the width from the first CSV record.
TokenStream parse_csv_tokens(std::string_view text, std::size_t d);
TokenStream parse_raw_tokens(std::span<const std::uint8_t> bytes, std::size_t d);
TokenStream read_token_stream(const std::filesystem::path& path, std::size_t d,
                              std::optional<StreamFormat> format = std::nullopt);

void write_csv_tokens(std::ostream& out, const Matrix<double>& tokens);
void write_raw_tokens(const std::filesystem::path& path, const Matrix<double>& tokens);

}  // namespace cta
