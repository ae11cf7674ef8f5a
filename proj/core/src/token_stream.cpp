#include "cta/token_stream.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "cta/errors.hpp"

namespace cta {

namespace {

double parse_scalar(std::string_view field, std::size_t line) {
  while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
  while (!field.empty() && (field.back() == ' ' || field.back() == '\t')) field.remove_suffix(1);
  // from_chars accepts "inf"/"nan" spellings, which are rejected below as data errors.
  double v = 0.0;
  const auto* end = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(field.data(), end, v);
  if (field.empty() || ec != std::errc() || ptr != end) {
    throw FormatError(fmt::format("line {}: '{}' is not a number", line, field));
  }
  if (!std::isfinite(v)) throw DataError(fmt::format("line {}: non-finite value '{}'", line, field));
  return v;
}

}  // namespace

StreamFormat stream_format_for(const std::filesystem::path& path) {
  return path.extension() == ".csv" ? StreamFormat::csv : StreamFormat::raw_f32;
}

TokenStream parse_csv_tokens(std::string_view text, std::size_t d) {
  TokenStream stream{d, Matrix<double>(0, d), StreamFormat::csv};
  std::vector<double> row;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    row.clear();
    while (true) {
      const auto comma = line.find(',');
      row.push_back(parse_scalar(line.substr(0, comma), line_no));
      if (comma == std::string_view::npos) break;
      line = line.substr(comma + 1);
    }
    if (stream.d == 0) stream.d = row.size();
    if (row.size() != stream.d) {
      throw FormatError(fmt::format("line {}: {} values, expected {}", line_no, row.size(), stream.d));
    }
    stream.tokens.append_row(row);
  }
  return stream;
}

TokenStream parse_raw_tokens(std::span<const std::uint8_t> bytes, std::size_t d) {
  if (d == 0) throw FormatError("raw token streams need an explicit width");
  const std::size_t record = 4 * d;
  if (bytes.size() % record != 0) {
    throw FormatError(fmt::format("raw stream of {} bytes is not a multiple of {}-byte records",
                                  bytes.size(), record));
  }
  TokenStream stream{d, Matrix<double>(bytes.size() / record, d), StreamFormat::raw_f32};
  for (std::size_t i = 0; i < stream.tokens.size(); ++i) {
    std::uint32_t bits = 0;
    for (std::size_t b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(bytes[4 * i + b]) << (8 * b);
    const float v = std::bit_cast<float>(bits);
    if (!std::isfinite(v)) {
      throw DataError(fmt::format("record {}: non-finite value", i / d + 1));
    }
    stream.tokens.data()[i] = v;
  }
  return stream;
}

TokenStream read_token_stream(const std::filesystem::path& path, std::size_t d,
                              std::optional<StreamFormat> format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(fmt::format("cannot open token stream '{}'", path.string()));
  const std::vector<char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  if (format.value_or(stream_format_for(path)) == StreamFormat::csv) {
    return parse_csv_tokens(std::string_view(bytes.data(), bytes.size()), d);
  }
  return parse_raw_tokens(
      std::span(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()), d);
}

void write_csv_tokens(std::ostream& out, const Matrix<double>& tokens) {
  for (std::size_t r = 0; r < tokens.rows(); ++r) {
    const auto row = tokens.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << fmt::format("{}", row[c]);
    out << '\n';
  }
}

void write_raw_tokens(const std::filesystem::path& path, const Matrix<double>& tokens) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError(fmt::format("cannot write '{}'", path.string()));
  for (double v : tokens.data()) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    for (std::size_t b = 0; b < 4; ++b) out.put(static_cast<char>((bits >> (8 * b)) & 0xFF));
  }
}

}  // namespace cta
