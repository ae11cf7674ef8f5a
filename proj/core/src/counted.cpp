#include "cta/attention.hpp"

namespace cta {

namespace {

using CD = Counted<double>;

template <typename F>
auto tallied(F&& f) {
  OpCounter counter;
  auto result = f();
  return std::pair{std::move(result), counter.counted()};
}

AttnOutput<double> to_double(AttnOutput<CD>&& o) {
  return {o.mode, matrix_cast<double>(o.tokens), o.valid};
}

std::vector<CD> to_counted(std::span<const double> v) { return {v.begin(), v.end()}; }

}  // namespace

CountedResult<Matrix<double>> regular_sda_counted(const Matrix<double>& q,
                                                  const Matrix<double>& k,
                                                  const Matrix<double>& v) {
  const auto qc = matrix_cast<CD>(q);
  const auto kc = matrix_cast<CD>(k);
  const auto vc = matrix_cast<CD>(v);
  auto [out, ops] = tallied([&] { return regular_sda(qc, kc, vc); });
  return {matrix_cast<double>(out), ops};
}

CountedResult<AttnOutput<double>> core_step_counted(CoReState<double>& state,
                                                    std::span<const double> q_new,
                                                    std::span<const double> k_new,
                                                    std::span<const double> v_new) {
  CoReState<CD> counted_state(state);
  const auto q = to_counted(q_new);
  const auto k = to_counted(k_new);
  const auto v = to_counted(v_new);
  auto [out, ops] = tallied([&] {
    return counted_state.step(std::span<const CD>(q), std::span<const CD>(k),
                              std::span<const CD>(v));
  });
  state = CoReState<double>(counted_state);
  return {to_double(std::move(out)), ops};
}

CountedResult<AttnOutput<double>> cosi_step_counted(CoSiState<double>& state,
                                                    std::span<const double> q,
                                                    std::span<const double> k_new,
                                                    std::span<const double> v_new) {
  CoSiState<CD> counted_state(state);
  const auto qc = to_counted(q);
  const auto k = to_counted(k_new);
  const auto v = to_counted(v_new);
  auto [out, ops] = tallied([&] {
    return counted_state.step(std::span<const CD>(qc), std::span<const CD>(k),
                              std::span<const CD>(v));
  });
  state = CoSiState<double>(counted_state);
  return {to_double(std::move(out)), ops};
}

}  // namespace cta
