#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cta/encoder.hpp"
#include "cta/modelio.hpp"
#include "oracle.hpp"
#include "random.hpp"

using cta::AttnKind;
using cta::BlockKind;
using cta::Matrix;
using cta::ModelConfig;
using cta::Vector;
using testing_support::random_matrix;
using testing_support::rows;

namespace {

cta::EncoderWeights<double> random_block(std::mt19937_64& rng, std::size_t d, std::size_t h,
                                         std::size_t dff) {
  cta::EncoderWeights<double> w;
  w.mha = testing_support::random_mha(rng, d, h);
  w.w1 = random_matrix(rng, d, dff, -0.5, 0.5);
  w.b1 = testing_support::random_vector(rng, dff, -0.1, 0.1);
  w.w2 = random_matrix(rng, dff, d, -0.5, 0.5);
  w.b2 = testing_support::random_vector(rng, d, -0.1, 0.1);
  w.ln1_gain = testing_support::random_vector(rng, d, 0.8, 1.2);
  w.ln1_bias = testing_support::random_vector(rng, d, -0.1, 0.1);
  w.ln2_gain = testing_support::random_vector(rng, d, 0.8, 1.2);
  w.ln2_bias = testing_support::random_vector(rng, d, -0.1, 0.1);
  return w;
}

cta::EncoderWeights<double> zero_block(std::size_t d, std::size_t dff) {
  cta::EncoderWeights<double> w;
  w.mha.w_q = {Matrix<double>(d, d)};
  w.mha.w_k = {Matrix<double>(d, d)};
  w.mha.w_v = {Matrix<double>(d, d)};
  w.mha.w_o = Matrix<double>(d, d);
  w.w1 = Matrix<double>(d, dff);
  w.b1 = Vector<double>(dff);
  w.w2 = Matrix<double>(dff, d);
  w.b2 = Vector<double>(d);
  w.ln1_gain = w.ln2_gain = Vector<double>(d, 1.0);
  w.ln1_bias = w.ln2_bias = Vector<double>(d);
  return w;
}

}  // namespace

TEST(LayerNorm, ConstantVectorMapsToZero) {
  const std::vector<double> x(5, 3.0), g(5, 1.0), b(5, 0.0);
  for (double v : cta::layer_norm<double>(x, g, b)) EXPECT_EQ(v, 0.0);
}

TEST(LayerNorm, UnitVarianceUnchanged) {
  const std::vector<double> x{1, -1}, g{1, 1}, b{0, 0};
  const auto y = cta::layer_norm<double>(x, g, b, 0.0);
  EXPECT_DOUBLE_EQ(y[0], 1.0);
  EXPECT_DOUBLE_EQ(y[1], -1.0);
}

TEST(LayerNorm, MatchesScalarOracle) {
  std::mt19937_64 rng(2);
  const auto x = testing_support::random_vector(rng, 8, -3, 3);
  const auto g = testing_support::random_vector(rng, 8);
  const auto b = testing_support::random_vector(rng, 8);
  EXPECT_LT(oracle::rel_error(oracle::from(cta::layer_norm<double>(x, g, b)),
                              oracle::layer_norm(oracle::from(x), oracle::from(g), oracle::from(b))),
            1e-14);
}

TEST(LayerNorm, ShapeMismatch) {
  const std::vector<double> x(3), g(2), b(3);
  EXPECT_THROW(cta::layer_norm<double>(x, g, b), cta::ShapeError);
}

TEST(FeedForward, ZeroWeightsGiveZero) {
  const auto w = zero_block(4, 8);
  const std::vector<double> x{1, 2, 3, 4};
  for (double v : cta::feed_forward<double>(w, x)) EXPECT_EQ(v, 0.0);
}

TEST(FeedForward, GeluIsNearIdentityForLargeInputs) {
  auto w = zero_block(3, 3);
  w.w1 = Matrix<double>::identity(3);
  w.w2 = Matrix<double>::identity(3);
  const std::vector<double> x{10, 20, 30};
  const auto y = cta::feed_forward<double>(w, x);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(y[i], x[i], 1e-12);
}

TEST(FeedForward, MatchesScalarOracle) {
  std::mt19937_64 rng(6);
  const auto w = random_block(rng, 4, 1, 8);
  const auto x = testing_support::random_vector(rng, 4);
  EXPECT_LT(oracle::rel_error(oracle::from(cta::feed_forward<double>(w, x)),
                              oracle::feed_forward(oracle::from(w), oracle::from(x))),
            1e-14);
}

TEST(EncoderBlockBatch, ZeroWeightsReduceToDoubleLayerNorm) {
  std::mt19937_64 rng(3);
  const auto w = zero_block(4, 8);
  const auto x = random_matrix(rng, 5, 4);
  const auto out = cta::encoder_block_batch(w, x);
  const std::vector<double> g(4, 1.0), b(4, 0.0);
  for (std::size_t r = 0; r < 5; ++r) {
    const auto once = cta::layer_norm<double>(x.row(r), g, b);
    const auto twice = cta::layer_norm<double>(once.span(), g, b);
    EXPECT_LT(cta::max_relative_error<double>(out.row(r), twice.span()), 1e-15);
  }
}

TEST(EncoderBlockBatch, SingleToken) {
  std::mt19937_64 rng(4);
  const auto w = random_block(rng, 4, 2, 6);
  const auto x = random_matrix(rng, 1, 4);
  // One token attends only to itself with weight 1.
  std::vector<double> concat;
  for (std::size_t i = 0; i < 2; ++i) {
    const auto vi = cta::matmul(x, w.mha.w_v[i]);
    concat.insert(concat.end(), vi.row(0).begin(), vi.row(0).end());
  }
  const Matrix<double> heads(1, concat.size(), concat);
  EXPECT_LT(cta::max_relative_error(cta::mha_batch(w.mha, x, x, x), cta::matmul(heads, w.mha.w_o)),
            1e-15);
  const auto out = cta::encoder_block_batch(w, x);
  const auto expect = oracle::encoder_block(oracle::from(w), oracle::from(x));
  EXPECT_LT(oracle::rel_error(oracle::from(out), expect), 1e-14);
}

TEST(EncoderBlockBatch, MatchesComposedOracle) {
  std::mt19937_64 rng(8);
  const auto w = random_block(rng, 4, 2, 8);
  const auto x = random_matrix(rng, 6, 4);
  EXPECT_LT(oracle::rel_error(oracle::from(cta::encoder_block_batch(w, x)),
                              oracle::encoder_block(oracle::from(w), oracle::from(x))),
            1e-13);
}

class EncoderStep : public ::testing::TestWithParam<AttnKind> {};

TEST_P(EncoderStep, MatchesBatchBlockOnWindow) {
  const AttnKind kind = GetParam();
  std::mt19937_64 rng(10);
  const std::size_t n = 6, d = 8, total = 25;
  const auto w = random_block(rng, d, 2, 16);
  const auto x = random_matrix(rng, total, d);
  cta::EncoderBlockState<double> s(w, kind, n, cta::StepPolicy::permissive);
  for (std::size_t t = 0; t < total; ++t) {
    const auto out = cta::encoder_block_step(s, w, x.row(t));
    if (!out.valid) continue;
    const auto expect = cta::encoder_block_batch(w, rows(x, t + 1 - n, n));
    if (kind == AttnKind::retroactive) {
      EXPECT_LT(cta::max_relative_error(out.tokens, expect), 1e-9);
    } else {
      EXPECT_LT(cta::max_relative_error<double>(out.tokens.row(0), expect.row(n - 1)), 1e-9);
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Kinds, EncoderStep,
                         ::testing::Values(AttnKind::retroactive, AttnKind::single_output));

TEST(EncoderStep, ConstantStreamGivesConstantOutput) {
  std::mt19937_64 rng(11);
  const std::size_t n = 4, d = 4;
  const auto w = random_block(rng, d, 1, 8);
  const auto x = testing_support::random_vector(rng, d);
  cta::EncoderBlockState<double> s(w, AttnKind::single_output, n, cta::StepPolicy::permissive);
  std::optional<Matrix<double>> first;
  for (int t = 0; t < 12; ++t) {
    const auto out = s.step(w, x);
    if (!out.valid) continue;
    if (!first) first = out.tokens;
    EXPECT_LT(cta::max_relative_error(out.tokens, *first), 1e-14);
  }
}

namespace {

struct ModelFixture {
  ModelConfig cfg;
  cta::WeightStore store;
  cta::ModelWeights<double> w;
};

ModelFixture make_model(ModelConfig cfg, std::uint64_t seed) {
  auto store = cta::init_random_weights(cfg, seed);
  auto w = cta::load_model_weights<double>(cfg, store);
  return {std::move(cfg), std::move(store), std::move(w)};
}

oracle::Vec oracle_model(const ModelFixture& f, const Matrix<double>& window, std::size_t tau0) {
  std::vector<oracle::Block> blocks;
  for (const auto& b : f.w.blocks) blocks.push_back(oracle::from(b));
  const oracle::Mat table = f.cfg.rpe_kind == cta::RpeKind::learned
                                ? oracle::from(f.w.rpe.p)
                                : oracle::sinusoid_table(f.cfg.rpe_table_size(), f.cfg.d);
  const oracle::Vec cls = f.w.class_token ? oracle::from(*f.w.class_token) : oracle::Vec{};
  return oracle::model(blocks, table, tau0, oracle::from(window), f.cfg.class_token_before, cls);
}

double stream_check(const ModelFixture& f, std::size_t steps, std::uint64_t seed,
                    std::size_t tau0 = 0, bool use_oracle = false) {
  std::mt19937_64 rng(seed);
  const auto x = random_matrix(rng, steps, f.cfg.d);
  cta::ModelState<double> state(f.cfg, f.w, tau0);
  cta::model_warmup(state, f.w, rows(x, 0, state.warmup_steps()));
  double worst = 0;
  for (std::size_t t = state.warmup_steps(); t < steps; ++t) {
    const auto y = cta::model_step(state, f.w, x.row(t));
    const auto win = rows(x, t + 1 - f.cfg.n, f.cfg.n);
    const auto expect = cta::model_batch(f.cfg, f.w, win, state.window_tau0());
    worst = std::max(worst, cta::max_relative_error<double>(y.span(), expect.span()));
    if (use_oracle) {
      worst = std::max(worst, oracle::rel_error(oracle::from(expect),
                                                oracle_model(f, win, state.window_tau0())));
    }
  }
  return worst;
}

}  // namespace

TEST(Model, OneBlockMatchesBatch) {
  const auto f = make_model(ModelConfig::one_block(8, 8, 2, 16), 1);
  EXPECT_LT(stream_check(f, 30, 2, 0, true), 1e-8);
}

TEST(Model, TwoBlockMatchesBatch) {
  const auto f = make_model(ModelConfig::two_block(8, 8, 2, 16), 3);
  EXPECT_LT(stream_check(f, 30, 4, 5, true), 1e-8);
}

TEST(Model, TwoBlockWithClassTokenMatchesBatch) {
  const auto f = make_model(ModelConfig::two_block(6, 8, 4, 16, true), 30);
  EXPECT_LT(stream_check(f, 30, 31, 0, true), 1e-8);
}

TEST(Model, ClassTokenAddsExactlyOneToken) {
  const auto f = make_model(ModelConfig::two_block(5, 4, 1, 8, true), 7);
  std::mt19937_64 rng(8);
  const auto x = random_matrix(rng, 5, 4);
  // The prediction is the class token's output, which differs from the last
  // input token's output in the unconfigured model.
  auto plain_cfg = f.cfg;
  plain_cfg.class_token_before.reset();
  const auto w_plain = cta::load_model_weights<double>(plain_cfg, f.store);
  EXPECT_NE(cta::model_batch(f.cfg, f.w, x, 0), cta::model_batch(plain_cfg, w_plain, x, 0));
  const auto expect = oracle_model(f, x, 0);
  EXPECT_LT(oracle::rel_error(oracle::from(cta::model_batch(f.cfg, f.w, x, 0)), expect), 1e-13);
}

TEST(Model, LearnedTableAndMiddleRegularBlock) {
  ModelConfig cfg;
  cfg.n = 5;
  cfg.d = 6;
  cfg.heads = 3;
  cfg.blocks = {BlockKind::retroactive, BlockKind::regular, BlockKind::single_output};
  cfg.class_token_before = 1;
  cfg.rpe_kind = cta::RpeKind::learned;
  const auto f = make_model(cfg, 12);
  EXPECT_LT(stream_check(f, 25, 13, 3, true), 1e-8);
}

TEST(Model, RegularFirstBlock) {
  ModelConfig cfg;
  cfg.n = 4;
  cfg.d = 4;
  cfg.blocks = {BlockKind::regular, BlockKind::single_output};
  const auto f = make_model(cfg, 14);
  EXPECT_LT(stream_check(f, 20, 15), 1e-8);
}

TEST(Model, ConstantInputConstantPrediction) {
  const auto f = make_model(ModelConfig::two_block(4, 4, 2, 8), 9);
  // Constant tokens with a zero positional table give a constant window.
  auto w = f.w;
  w.rpe = cta::rpe_learned_table(Matrix<double>(f.cfg.rpe_table_size(), 4));
  Matrix<double> x(4, 4, 0.3);
  cta::ModelState<double> state(f.cfg, w);
  cta::model_warmup(state, w, rows(x, 0, 3));
  const auto first = cta::model_step(state, w, x.row(0));
  for (int t = 0; t < 5; ++t) {
    EXPECT_LT(cta::max_relative_error<double>(cta::model_step(state, w, x.row(0)).span(),
                                              first.span()),
              1e-14);
  }
  const auto batch = cta::model_batch(f.cfg, w, x, 0);
  EXPECT_LT(cta::max_relative_error<double>(batch.span(), first.span()), 1e-12);
}

TEST(Model, ColdStrictStepThrows) {
  const auto f = make_model(ModelConfig::one_block(4, 4, 1, 8), 1);
  cta::ModelState<double> state(f.cfg, f.w);
  const std::vector<double> x(4, 0.0);
  EXPECT_THROW(cta::model_step<double>(state, f.w, x), cta::StateError);
}

TEST(Model, TransformerXlStacksSingleOutputBlocks) {
  ModelConfig cfg = ModelConfig::one_block(4, 4, 1, 8);
  cfg.blocks = {BlockKind::single_output, BlockKind::single_output};
  EXPECT_THROW(cfg.validate(), cta::ConfigError);
  cfg.transformer_xl = true;
  const auto f = make_model(cfg, 5);
  cta::ModelState<double> state(f.cfg, f.w);
  EXPECT_EQ(state.warmup_steps(), 6u);
  std::mt19937_64 rng(6);
  const auto x = random_matrix(rng, 12, 4);
  cta::model_warmup(state, f.w, rows(x, 0, 6));
  for (std::size_t t = 6; t < 12; ++t) {
    const auto y = cta::model_step(state, f.w, x.row(t));
    EXPECT_TRUE(cta::all_finite<double>(y.span()));
  }
}

TEST(Model, WeightMismatchRejected) {
  const auto f = make_model(ModelConfig::two_block(4, 4, 1, 8), 1);
  auto w = f.w;
  w.blocks.pop_back();
  EXPECT_THROW(cta::ModelState<double>(f.cfg, w), cta::ConfigError);
  auto cfg = f.cfg;
  cfg.rpe_tokens = 4;
  EXPECT_THROW(cta::ModelState<double>(cfg, f.w), cta::ConfigError);
}
