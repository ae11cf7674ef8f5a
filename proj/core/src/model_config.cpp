#include "cta/model_config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "cta/errors.hpp"

namespace cta {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::size_t parse_count(std::string_view value, std::size_t line) {
  std::size_t out = 0;
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError(fmt::format("line {}: expected a non-negative integer, got '{}'", line, value));
  }
  return out;
}

bool parse_bool(std::string_view value, std::size_t line) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError(fmt::format("line {}: expected true/false, got '{}'", line, value));
}

BlockKind parse_block(std::string_view value, std::size_t line) {
  if (value == "retroactive") return BlockKind::retroactive;
  if (value == "single_output") return BlockKind::single_output;
  if (value == "regular") return BlockKind::regular;
  throw ConfigError(fmt::format("line {}: unknown block kind '{}'", line, value));
}

}  // namespace

std::string_view to_string(BlockKind kind) noexcept {
  switch (kind) {
    case BlockKind::retroactive:
      return "retroactive";
    case BlockKind::single_output:
      return "single_output";
    case BlockKind::regular:
      return "regular";
  }
  return "?";
}

std::string_view to_string(Precision p) noexcept { return p == Precision::f32 ? "f32" : "f64"; }

void ModelConfig::validate() const {
  if (n < 2) throw ConfigError(fmt::format("window n must be >= 2, got {}", n));
  if (d < 1) throw ConfigError("token dimension d must be >= 1");
  if (heads < 1 || d % heads != 0) {
    throw ConfigError(fmt::format("heads ({}) must divide d ({})", heads, d));
  }
  if (blocks.empty()) throw ConfigError("at least one block is required");
  if (rpe_kind == RpeKind::fixed_sinusoidal && (d < 2 || d % 2 != 0)) {
    throw ConfigError(fmt::format("fixed positional encoding needs an even d, got {}", d));
  }

  const auto count = [&](BlockKind k) { return std::ranges::count(blocks, k); };
  if (count(BlockKind::retroactive) > 1) throw ConfigError("at most one retroactive block");
  if (count(BlockKind::retroactive) == 1 && blocks.front() != BlockKind::retroactive) {
    throw ConfigError("a retroactive block must be the first block");
  }

  if (transformer_xl) {
    if (count(BlockKind::single_output) != static_cast<std::ptrdiff_t>(blocks.size())) {
      throw ConfigError("transformer_xl stacking requires every block to be single_output");
    }
    if (class_token_before) throw ConfigError("class token is not supported with transformer_xl");
  } else {
    if (count(BlockKind::single_output) > 1) {
      throw ConfigError("stacked single_output blocks require transformer_xl = true");
    }
    if (count(BlockKind::single_output) == 1 && blocks.back() != BlockKind::single_output) {
      throw ConfigError("a single_output block must be the last block");
    }
  }

  if (class_token_before) {
    if (*class_token_before == 0) {
      throw ConfigError(
          "class token before the first block would double the number of input steps");
    }
    if (*class_token_before >= blocks.size()) {
      throw ConfigError(fmt::format("class token before block {} of {}", *class_token_before + 1,
                                    blocks.size()));
    }
  }
}

ModelConfig ModelConfig::one_block(std::size_t n, std::size_t d, std::size_t heads,
                                   std::size_t d_ff) {
  ModelConfig cfg;
  cfg.n = n;
  cfg.d = d;
  cfg.heads = heads;
  cfg.d_ff = d_ff;
  cfg.blocks = {BlockKind::single_output};
  return cfg;
}

ModelConfig ModelConfig::two_block(std::size_t n, std::size_t d, std::size_t heads,
                                   std::size_t d_ff, bool class_token) {
  ModelConfig cfg = one_block(n, d, heads, d_ff);
  cfg.blocks = {BlockKind::retroactive, BlockKind::single_output};
  if (class_token) cfg.class_token_before = 1;
  return cfg;
}

ModelConfig parse_model_config(std::string_view text) {
  ModelConfig cfg;
  bool seen_n = false, seen_d = false, seen_blocks = false;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(fmt::format("line {}: expected 'key = value'", line_no));
    }
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (key == "n") {
      cfg.n = parse_count(value, line_no);
      seen_n = true;
    } else if (key == "d") {
      cfg.d = parse_count(value, line_no);
      seen_d = true;
    } else if (key == "heads") {
      cfg.heads = parse_count(value, line_no);
    } else if (key == "d_ff") {
      cfg.d_ff = parse_count(value, line_no);
    } else if (key == "blocks") {
      cfg.blocks.clear();
      std::string_view rest = value;
      while (!rest.empty()) {
        const auto comma = rest.find(',');
        cfg.blocks.push_back(parse_block(trim(rest.substr(0, comma)), line_no));
        if (comma == std::string_view::npos) break;
        rest = rest.substr(comma + 1);
      }
      seen_blocks = true;
    } else if (key == "class_token") {
      constexpr std::string_view prefix = "before_block_";
      if (value == "none") {
        cfg.class_token_before.reset();
      } else if (value.starts_with(prefix)) {
        const std::size_t k = parse_count(value.substr(prefix.size()), line_no);
        if (k < 1) throw ConfigError(fmt::format("line {}: blocks are numbered from 1", line_no));
        cfg.class_token_before = k - 1;
      } else {
        throw ConfigError(fmt::format("line {}: class_token must be none or before_block_<k>",
                                      line_no));
      }
    } else if (key == "rpe_tokens") {
      cfg.rpe_tokens = value == "auto" ? 0 : parse_count(value, line_no);
    } else if (key == "rpe_kind") {
      if (value == "fixed") {
        cfg.rpe_kind = RpeKind::fixed_sinusoidal;
      } else if (value == "learned") {
        cfg.rpe_kind = RpeKind::learned;
      } else {
        throw ConfigError(fmt::format("line {}: rpe_kind must be fixed or learned", line_no));
      }
    } else if (key == "precision") {
      if (value == "f64") {
        cfg.precision = Precision::f64;
      } else if (value == "f32") {
        cfg.precision = Precision::f32;
      } else {
        throw ConfigError(fmt::format("line {}: precision must be f32 or f64", line_no));
      }
    } else if (key == "transformer_xl") {
      cfg.transformer_xl = parse_bool(value, line_no);
    } else {
      throw ConfigError(fmt::format("line {}: unknown key '{}'", line_no, key));
    }
  }
  if (!seen_n || !seen_d || !seen_blocks) {
    throw ConfigError("config requires n, d and blocks");
  }
  cfg.validate();
  return cfg;
}

ModelConfig load_model_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(fmt::format("cannot open config '{}'", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_model_config(ss.str());
}

std::string format_model_config(const ModelConfig& cfg) {
  std::string blocks;
  for (std::size_t i = 0; i < cfg.blocks.size(); ++i) {
    if (i) blocks += ", ";
    blocks += to_string(cfg.blocks[i]);
  }
  std::string out;
  out += fmt::format("n = {}\n", cfg.n);
  out += fmt::format("d = {}\n", cfg.d);
  out += fmt::format("heads = {}\n", cfg.heads);
  out += fmt::format("d_ff = {}\n", cfg.ff_dim());
  out += fmt::format("blocks = {}\n", blocks);
  out += fmt::format("class_token = {}\n",
                     cfg.class_token_before
                         ? fmt::format("before_block_{}", *cfg.class_token_before + 1)
                         : std::string("none"));
  out += fmt::format("rpe_tokens = {}\n", cfg.rpe_table_size());
  out += fmt::format("rpe_kind = {}\n",
                     cfg.rpe_kind == RpeKind::learned ? "learned" : "fixed");
  out += fmt::format("precision = {}\n", to_string(cfg.precision));
  out += fmt::format("transformer_xl = {}\n", cfg.transformer_xl ? "true" : "false");
  return out;
}

}  // namespace cta
