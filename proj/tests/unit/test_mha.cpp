#include <gtest/gtest.h>

#include <random>

#include "cta/mha.hpp"
#include "oracle.hpp"
#include "random.hpp"

using cta::AttnKind;
using cta::Matrix;
using testing_support::random_matrix;
using testing_support::random_mha;
using testing_support::rows;

namespace {

cta::MhaWeights<double> identity_mha(std::size_t d) {
  cta::MhaWeights<double> w;
  w.w_q = {Matrix<double>::identity(d)};
  w.w_k = {Matrix<double>::identity(d)};
  w.w_v = {Matrix<double>::identity(d)};
  w.w_o = Matrix<double>::identity(d);
  return w;
}

}  // namespace

TEST(MhaBatch, IdentityProjectionsReduceToAttention) {
  std::mt19937_64 rng(1);
  const auto x = random_matrix(rng, 5, 3);
  const auto y = random_matrix(rng, 5, 3);
  EXPECT_EQ(cta::mha_batch(identity_mha(3), x, y, x), cta::regular_sda(x, y, x));
}

TEST(MhaBatch, HeadsConcatenateInOrder) {
  std::mt19937_64 rng(2);
  const std::size_t d = 4;
  auto w = random_mha(rng, d, 2);
  w.w_o = Matrix<double>::identity(d);
  const auto x = random_matrix(rng, 6, d);
  const auto out = cta::mha_batch(w, x, x, x);
  for (std::size_t i = 0; i < 2; ++i) {
    const auto head = cta::regular_sda(cta::matmul(x, w.w_q[i]), cta::matmul(x, w.w_k[i]),
                                       cta::matmul(x, w.w_v[i]));
    EXPECT_EQ(cta::column_block(out, 2 * i, 2), head);
  }
}

TEST(MhaBatch, MatchesPerHeadScalarOracle) {
  std::mt19937_64 rng(13);
  const auto w = random_mha(rng, 4, 2);
  const auto q = random_matrix(rng, 4, 4);
  const auto k = random_matrix(rng, 4, 4);
  const auto v = random_matrix(rng, 4, 4);
  EXPECT_LT(oracle::rel_error(oracle::from(cta::mha_batch(w, q, k, v)),
                              oracle::mha(oracle::from(w), oracle::from(q), oracle::from(k),
                                          oracle::from(v))),
            1e-14);
}

TEST(MhaWeights, Validation) {
  std::mt19937_64 rng(3);
  auto w = random_mha(rng, 4, 2);
  w.w_o = Matrix<double>(3, 4);
  EXPECT_THROW(w.validate(), cta::ShapeError);
  w = random_mha(rng, 4, 2);
  w.w_k.pop_back();
  EXPECT_THROW(w.validate(), cta::ConfigError);
  w = random_mha(rng, 4, 2);
  w.w_q[1](0, 0) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(w.validate(), cta::DataError);
}

TEST(CoMha, IdentityReducesToSingleHeadStates) {
  std::mt19937_64 rng(4);
  const std::size_t n = 4, d = 3;
  const auto w = identity_mha(d);
  cta::CoMhaState<double> m(w, AttnKind::retroactive, n, cta::StepPolicy::permissive);
  cta::CoReState<double> s(n, d, cta::StepPolicy::permissive);
  for (int t = 0; t < 10; ++t) {
    const auto x = testing_support::random_vector(rng, d);
    const auto a = cta::comha_step(m, w, x, x, x);
    const auto b = s.step(x, x, x);
    ASSERT_EQ(a.valid, b.valid);
    if (a.valid) {
      EXPECT_LT(cta::max_relative_error(a.tokens, b.tokens), 1e-15);
    }
  }
}

class CoMhaWindow : public ::testing::TestWithParam<AttnKind> {};

TEST_P(CoMhaWindow, MatchesSlidingBatch) {
  const AttnKind kind = GetParam();
  std::mt19937_64 rng(21);
  const std::size_t n = 8, d = 8, h = 4, total = 30;
  const auto w = random_mha(rng, d, h);
  const auto x = random_matrix(rng, total, d);
  auto state = cta::comha_init(w, kind, n, rows(x, 0, n - 1), rows(x, 0, n - 1), rows(x, 0, n - 1));
  ASSERT_EQ(state.kind(), kind);
  for (std::size_t t = n - 1; t < total; ++t) {
    const auto out = cta::comha_step(state, w, x.row(t), x.row(t), x.row(t));
    const auto win = rows(x, t + 1 - n, n);
    const auto expect = cta::mha_batch(w, win, win, win);
    if (kind == AttnKind::retroactive) {
      EXPECT_EQ(out.tokens.rows(), n);
      EXPECT_LT(cta::max_relative_error(out.tokens, expect), 1e-10);
    } else {
      EXPECT_EQ(out.tokens.rows(), 1u);
      EXPECT_LT(cta::max_relative_error<double>(out.tokens.row(0), expect.row(n - 1)), 1e-10);
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Kinds, CoMhaWindow,
                         ::testing::Values(AttnKind::retroactive, AttnKind::single_output));

TEST(CoMha, MixedHeadsRejected) {
  std::vector<cta::CoMhaState<double>::Head> heads;
  heads.emplace_back(cta::CoReState<double>(3, 2));
  heads.emplace_back(cta::CoSiState<double>(3, 2));
  cta::CoMhaState<double> state(std::move(heads));
  EXPECT_THROW(state.kind(), cta::ConfigError);
}

TEST(CoMha, ColdStrictStateThrows) {
  std::mt19937_64 rng(5);
  const auto w = random_mha(rng, 4, 2);
  cta::CoMhaState<double> state(w, AttnKind::single_output, 3);
  const auto x = testing_support::random_vector(rng, 4);
  EXPECT_THROW(cta::comha_step(state, w, x.span(), x.span(), x.span()), cta::StateError);
}

TEST(MhaSingleQuery, EqualsBatchRow) {
  std::mt19937_64 rng(6);
  const auto w = random_mha(rng, 6, 3);
  const auto x = random_matrix(rng, 5, 6);
  const auto batch = cta::mha_batch(w, x, x, x);
  for (std::size_t r = 0; r < 5; ++r) {
    EXPECT_LT(cta::max_relative_error<double>(cta::mha_single_query<double>(w, x.row(r), x, x).span(),
                                              batch.row(r)),
              1e-14);
  }
}
