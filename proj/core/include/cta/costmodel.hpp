#pragma once

// Closed-form operation and memory accounting for one attention step over a
// window of n tokens of dimension d (d_qk = d_v = d).
//
// FLOPs are mults + adds + exps with unit weights. Memory is in scalar words:
// state_words persist between steps, transient_words are scratch per step.

#include <cstddef>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cta/counting.hpp"

namespace cta {

enum class Variant { regular, core, cosi };

std::string_view to_string(Variant v) noexcept;
/// ConfigError for unknown names.
Variant parse_variant(std::string_view name);

struct CostReport {
  Variant variant = Variant::regular;
  std::size_t n = 0;
  std::size_t d = 0;
  OpCount ops;
  std::uint64_t flops_total = 0;
  std::uint64_t state_words = 0;
  std::uint64_t transient_words = 0;
};

/// 2n^2 d + 2nd mults, 2n^2 d - nd - n adds, n^2 exps. The regular path keeps
/// the last n-1 tokens of Q, K and V and materialises the n x n score map.
CostReport cost_regular(std::size_t n, std::size_t d);
/// 7nd + 2n - 3d mults, 6nd + 3n - 6d - 3 adds, 3n - 2 exps.
CostReport cost_core(std::size_t n, std::size_t d);
/// 2nd + 2d mults, 2nd - d - 1 adds, n exps.
CostReport cost_cosi(std::size_t n, std::size_t d);
CostReport cost(Variant v, std::size_t n, std::size_t d);

struct EquationCost {
  std::string label;
  OpCount ops;
};

/// Per-equation rows whose sums equal the totals above.
std::vector<EquationCost> cost_breakdown(Variant v, std::size_t n, std::size_t d);

/// flops_total(a) / flops_total(b).
double cost_ratio(Variant a, Variant b, std::size_t n, std::size_t d);

/// One report per (n, d, variant), n outermost, variants in declaration order.
std::vector<CostReport> cost_sweep(std::span<const std::size_t> ns,
                                   std::span<const std::size_t> ds);

inline constexpr std::string_view kCostCsvHeader =
    "variant,n,d,mults,adds,exps,flops,state_words,transient_words";
void write_cost_csv(std::ostream& out, std::span<const CostReport> rows);

/// Least-squares slope of log(y) against log(x).
double loglog_slope(std::span<const double> x, std::span<const double> y);

}  // namespace cta
