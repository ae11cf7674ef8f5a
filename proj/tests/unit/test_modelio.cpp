#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "cta/model_config.hpp"
#include "cta/modelio.hpp"
#include "cta/token_stream.hpp"
#include "random.hpp"

using cta::BlockKind;
using cta::DType;
using cta::ModelConfig;
using cta::WeightStore;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() /
         ("cta_test_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
          name);
}

void write_file(const std::filesystem::path& p, std::string_view bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

// Rewrites the manifest of a serialized store through `edit`.
std::vector<std::uint8_t> edit_manifest(const std::vector<std::uint8_t>& bytes,
                                        const std::function<std::string(std::string)>& edit) {
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i) len |= std::uint32_t(bytes[5 + i]) << (8 * i);
  std::string manifest(bytes.begin() + 9, bytes.begin() + 9 + len);
  manifest = edit(manifest);
  std::vector<std::uint8_t> out(bytes.begin(), bytes.begin() + 5);
  const auto n = static_cast<std::uint32_t>(manifest.size());
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(n >> (8 * i)));
  out.insert(out.end(), manifest.begin(), manifest.end());
  out.insert(out.end(), bytes.begin() + 9 + len, bytes.end());
  return out;
}

}  // namespace

TEST(ModelConfigText, ParsesDocumentedKeys) {
  const auto cfg = cta::parse_model_config(R"(# two block model
n = 16
d = 32
heads = 4
d_ff = 64
blocks = retroactive, single_output
class_token = before_block_2
rpe_tokens = auto
rpe_kind = fixed
precision = f32
)");
  EXPECT_EQ(cfg.n, 16u);
  EXPECT_EQ(cfg.heads, 4u);
  EXPECT_EQ(cfg.blocks, (std::vector<BlockKind>{BlockKind::retroactive, BlockKind::single_output}));
  EXPECT_EQ(cfg.class_token_before, std::optional<std::size_t>(1));
  EXPECT_EQ(cfg.rpe_table_size(), 31u);
  EXPECT_EQ(cfg.precision, cta::Precision::f32);
  EXPECT_EQ(cta::parse_model_config(cta::format_model_config(cfg)).ff_dim(), 64u);
}

TEST(ModelConfigText, RejectsBadInput) {
  EXPECT_THROW(cta::parse_model_config("n = 4\nd = 4\n"), cta::ConfigError);
  EXPECT_THROW(cta::parse_model_config("n = 4\nd = 4\nblocks = single_output\nfoo = 1\n"),
               cta::ConfigError);
  EXPECT_THROW(cta::parse_model_config("n = x\nd = 4\nblocks = single_output\n"), cta::ConfigError);
  try {
    cta::parse_model_config("n = 4\nd = 4\nblocks = bogus\n");
    FAIL();
  } catch (const cta::ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
}

TEST(ModelConfigRules, LayoutConstraints) {
  ModelConfig cfg = ModelConfig::two_block(4, 4, 2, 8);
  EXPECT_NO_THROW(cfg.validate());
  cfg.blocks = {BlockKind::single_output, BlockKind::retroactive};
  EXPECT_THROW(cfg.validate(), cta::ConfigError);
  cfg.blocks = {BlockKind::retroactive, BlockKind::retroactive};
  EXPECT_THROW(cfg.validate(), cta::ConfigError);
  cfg.blocks = {BlockKind::retroactive, BlockKind::single_output};
  cfg.class_token_before = 0;
  EXPECT_THROW(cfg.validate(), cta::ConfigError);
  cfg.class_token_before = 2;
  EXPECT_THROW(cfg.validate(), cta::ConfigError);
  cfg.class_token_before.reset();
  cfg.heads = 3;
  EXPECT_THROW(cfg.validate(), cta::ConfigError);
  cfg.heads = 1;
  cfg.n = 1;
  EXPECT_THROW(cfg.validate(), cta::ConfigError);
  cfg.n = 4;
  cfg.d = 3;
  EXPECT_THROW(cfg.validate(), cta::ConfigError);
  cfg.rpe_kind = cta::RpeKind::learned;
  EXPECT_NO_THROW(cfg.validate());
}

TEST(Weights, RoundTripIsBitExact) {
  for (DType dt : {DType::f64, DType::f32}) {
    const auto cfg = ModelConfig::two_block(4, 6, 2, 12, true);
    const auto store = cta::init_random_weights(cfg, 0, dt);
    const auto path = temp_path(std::string("rt_") + std::string(cta::to_string(dt)));
    cta::save_weights(path, store);
    const auto loaded = cta::load_weights(path);
    EXPECT_TRUE(loaded == store);
    EXPECT_EQ(loaded.dtype(), dt);
    std::filesystem::remove(path);
  }
}

TEST(Weights, SeedDeterminism) {
  const auto cfg = ModelConfig::one_block(4, 4, 1, 8);
  EXPECT_TRUE(cta::init_random_weights(cfg, 0) == cta::init_random_weights(cfg, 0));
  EXPECT_FALSE(cta::init_random_weights(cfg, 0) == cta::init_random_weights(cfg, 1));
}

TEST(Weights, ValuesWithinInitialisationRange) {
  const auto store = cta::init_random_weights(ModelConfig::two_block(4, 4, 2, 8, true), 3);
  for (const auto& name : store.names()) {
    const double centre = name.ends_with(".gain") ? 1.0 : 0.0;
    for (double v : store.raw(name).data()) EXPECT_LE(std::abs(v - centre), 0.1) << name;
  }
}

TEST(Weights, NamingScheme) {
  auto cfg = ModelConfig::two_block(4, 4, 2, 8, true);
  cfg.rpe_kind = cta::RpeKind::learned;
  const auto store = cta::init_random_weights(cfg, 1);
  for (const char* name : {"block0.mha.w_q.0", "block0.mha.w_k.1", "block1.mha.w_o", "block0.ff.w1",
                           "block1.ln2.bias", "rpe.table", "cls.token"}) {
    EXPECT_TRUE(store.contains(name)) << name;
  }
  EXPECT_EQ(store.raw("rpe.table").rows(), 7u);
}

TEST(Weights, GeneratedStoreLoadsThroughValidation) {
  const auto cfg = ModelConfig::two_block(4, 4, 2, 8, true);
  const auto store = cta::parse_weights(cta::serialize_weights(cta::init_random_weights(cfg, 5)));
  EXPECT_NO_THROW(cta::load_model_weights<double>(cfg, store));
  EXPECT_NO_THROW(cta::load_model_weights<float>(cfg, store));
}

TEST(Weights, MissingTensorIsNamed) {
  const auto cfg = ModelConfig::two_block(4, 4, 2, 8, true);
  const auto full = cta::init_random_weights(cfg, 5);
  WeightStore partial;
  for (const auto& name : full.names()) {
    if (name != "cls.token") partial.put(name, full.raw(name));
  }
  try {
    (void)cta::load_model_weights<double>(cfg, partial);
    FAIL();
  } catch (const cta::MissingTensorError& e) {
    EXPECT_EQ(e.name(), "cls.token");
  }
}

TEST(Weights, ShapeMismatchIsNamed) {
  const auto cfg = ModelConfig::one_block(4, 4, 1, 8);
  auto store = cta::init_random_weights(cfg, 5);
  store.put("block0.ff.w1", cta::Matrix<double>(4, 9));
  try {
    (void)cta::load_model_weights<double>(cfg, store);
    FAIL();
  } catch (const cta::ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("block0.ff.w1"), std::string::npos);
  }
}

TEST(Weights, CorruptFilesAreFormatErrors) {
  const auto bytes = cta::serialize_weights(cta::init_random_weights(ModelConfig::one_block(4, 4, 1, 8), 2));
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(cta::parse_weights(bad_magic), cta::FormatError);
  auto bad_version = bytes;
  bad_version[4] = 9;
  EXPECT_THROW(cta::parse_weights(bad_version), cta::FormatError);
  const std::vector<std::uint8_t> truncated(bytes.begin(), bytes.end() - 3);
  EXPECT_THROW(cta::parse_weights(truncated), cta::FormatError);
  const std::vector<std::uint8_t> header_only(bytes.begin(), bytes.begin() + 12);
  EXPECT_THROW(cta::parse_weights(header_only), cta::FormatError);

  const auto shifted = edit_manifest(bytes, [](std::string m) {
    const auto pos = m.find("block0.mha.w_k.0");
    const auto end = m.find('\n', pos);
    const auto last_space = m.rfind(' ', end);
    return m.replace(last_space + 1, end - last_space - 1, "8");
  });
  EXPECT_THROW(cta::parse_weights(shifted), cta::FormatError);
  const auto beyond = edit_manifest(bytes, [](std::string m) {
    const auto pos = m.find("block0.mha.w_q.0");
    const auto end = m.find('\n', pos);
    const auto last_space = m.rfind(' ', end);
    return m.replace(last_space + 1, end - last_space - 1, "99999999");
  });
  EXPECT_THROW(cta::parse_weights(beyond), cta::FormatError);
  const auto mixed = edit_manifest(bytes, [](std::string m) {
    const auto pos = m.find(" f64 ");
    return m.replace(pos, 5, " f32 ");
  });
  EXPECT_THROW(cta::parse_weights(mixed), cta::FormatError);
  const auto dup = edit_manifest(bytes, [](std::string m) {
    const auto pos = m.find("block0.mha.w_k.0");
    return m.replace(pos, 16, "block0.mha.w_q.0");
  });
  EXPECT_THROW(cta::parse_weights(dup), cta::FormatError);
  const auto junk = edit_manifest(bytes, [](std::string m) { return m + "bogus line\n"; });
  EXPECT_THROW(cta::parse_weights(junk), cta::FormatError);
  EXPECT_THROW(cta::load_weights("/nonexistent/weights.ctws"), cta::FormatError);
}

TEST(Weights, NonFiniteValuesAreDataErrors) {
  WeightStore store;
  cta::Matrix<double> m(1, 2);
  m(0, 1) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(store.put("x", m), cta::DataError);
  store.put("x", cta::Matrix<double>(1, 2));
  auto bytes = cta::serialize_weights(store);
  const std::uint64_t nan_bits = 0x7ff8000000000000ULL;
  for (int i = 0; i < 8; ++i) bytes[bytes.size() - 8 + i] = std::uint8_t(nan_bits >> (8 * i));
  EXPECT_THROW(cta::parse_weights(bytes), cta::DataError);
}

TEST(TokenStreams, CsvOfThreeTokens) {
  const auto s = cta::parse_csv_tokens("1,2\n3.5,-4\n0,1e-3\n", 2);
  EXPECT_EQ(s.size(), 3u);
  EXPECT_EQ(s.tokens(1, 0), 3.5);
  EXPECT_EQ(s.format, cta::StreamFormat::csv);
}

TEST(TokenStreams, RawOfTwentyFourBytes) {
  const auto path = temp_path("raw.f32");
  cta::write_raw_tokens(path, cta::Matrix<double>{{1, 2}, {3, 4}, {5, 6}});
  EXPECT_EQ(std::filesystem::file_size(path), 24u);
  const auto s = cta::read_token_stream(path, 2);
  EXPECT_EQ(s.size(), 3u);
  EXPECT_EQ(s.tokens(2, 1), 6.0);
  EXPECT_EQ(s.format, cta::StreamFormat::raw_f32);
  std::filesystem::remove(path);
}

TEST(TokenStreams, CsvAndRawAgreeWithinSinglePrecision) {
  std::mt19937_64 rng(19);
  const auto m = testing_support::random_matrix(rng, 10, 3);
  const auto csv = temp_path("x.csv"), raw = temp_path("x.bin");
  {
    std::ofstream out(csv);
    cta::write_csv_tokens(out, m);
  }
  cta::write_raw_tokens(raw, m);
  const auto a = cta::read_token_stream(csv, 3);
  const auto b = cta::read_token_stream(raw, 3);
  EXPECT_EQ(a.tokens, m);
  EXPECT_LT(cta::max_relative_error(b.tokens, a.tokens), 1e-7);
  std::filesystem::remove(csv);
  std::filesystem::remove(raw);
}

TEST(TokenStreams, WidthMismatchReportsLine) {
  try {
    (void)cta::parse_csv_tokens("1,2\n3,4\n5\n", 2);
    FAIL();
  } catch (const cta::FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
  EXPECT_THROW(cta::parse_csv_tokens("1,abc\n", 2), cta::FormatError);
  const std::vector<std::uint8_t> odd(7);
  EXPECT_THROW(cta::parse_raw_tokens(odd, 2), cta::FormatError);
}

TEST(TokenStreams, NonFiniteIsDataError) {
  EXPECT_THROW(cta::parse_csv_tokens("1,inf\n", 2), cta::DataError);
  EXPECT_THROW(cta::parse_csv_tokens("nan,1\n", 2), cta::DataError);
  std::vector<std::uint8_t> raw(8, 0);
  raw[6] = 0xC0;
  raw[7] = 0x7F;
  EXPECT_THROW(cta::parse_raw_tokens(raw, 2), cta::DataError);
}
