#include <charconv>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "cta/cli/commands.hpp"
#include "cta/errors.hpp"

namespace cta::cli {

namespace {

constexpr std::size_t kMaxRangeItems = 1'000'000;

std::size_t parse_positive(std::string_view text, std::string_view whole) {
  std::size_t value = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (text.empty() || ec != std::errc() || ptr != end) {
    throw ConfigError(fmt::format("invalid range '{}': '{}' is not a non-negative integer", whole,
                                  text));
  }
  if (value == 0) throw ConfigError(fmt::format("invalid range '{}': sizes start at 1", whole));
  return value;
}

void expand_item(std::string_view item, std::string_view whole, std::vector<std::size_t>& out) {
  const auto c1 = item.find(':');
  if (c1 == std::string_view::npos) {
    out.push_back(parse_positive(item, whole));
    return;
  }
  const auto c2 = item.find(':', c1 + 1);
  const std::size_t lo = parse_positive(item.substr(0, c1), whole);
  const std::size_t hi = parse_positive(
      item.substr(c1 + 1, c2 == std::string_view::npos ? std::string_view::npos : c2 - c1 - 1),
      whole);
  if (lo > hi) throw ConfigError(fmt::format("invalid range '{}': {} > {}", whole, lo, hi));

  std::string_view step = c2 == std::string_view::npos ? "1" : item.substr(c2 + 1);
  const bool geometric = !step.empty() && step.front() == 'x';
  if (geometric) step.remove_prefix(1);
  const std::size_t s = parse_positive(step, whole);
  if (geometric && s < 2) {
    throw ConfigError(fmt::format("invalid range '{}': growth factor must be >= 2", whole));
  }
  for (std::size_t v = lo; v <= hi;) {
    if (out.size() >= kMaxRangeItems) {
      throw ConfigError(fmt::format("range '{}' expands to too many values", whole));
    }
    out.push_back(v);
    const std::size_t next = geometric ? v * s : v + s;
    if (next <= v) break;  // overflow
    v = next;
  }
}

}  // namespace

std::vector<std::size_t> parse_size_range(std::string_view text) {
  std::vector<std::size_t> out;
  std::string_view rest = text;
  while (true) {
    const auto comma = rest.find(',');
    expand_item(rest.substr(0, comma), text, out);
    if (comma == std::string_view::npos) break;
    rest = rest.substr(comma + 1);
  }
  return out;
}

std::string format_sig3(double value) {
  if (value == 0.0 || !std::isfinite(value)) return fmt::format("{}", value);
  // Round through scientific notation, then print it positionally.
  const double rounded = std::stod(fmt::format("{:.2e}", value));
  const int exponent = static_cast<int>(std::floor(std::log10(std::fabs(rounded))));
  const int decimals = std::max(0, 2 - exponent);
  return fmt::format("{:.{}f}", rounded, decimals);
}

}  // namespace cta::cli
