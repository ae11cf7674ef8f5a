#include "cta/costmodel.hpp"

#include <cmath>
#include <cstdint>

#include <fmt/format.h>

#include "cta/errors.hpp"

namespace cta {

namespace {

using i64 = std::int64_t;

void check_dims(std::size_t n, std::size_t d) {
  if (n < 1 || d < 1) throw ConfigError(fmt::format("cost model needs n, d >= 1, got {}, {}", n, d));
}

std::uint64_t nonneg(i64 v) {
  if (v < 0) throw RangeError("negative operation count");
  return static_cast<std::uint64_t>(v);
}

OpCount ops(i64 m, i64 a, i64 e) { return {nonneg(m), nonneg(a), nonneg(e)}; }

CostReport report(Variant v, std::size_t n, std::size_t d, OpCount o, i64 state, i64 transient) {
  return {v, n, d, o, o.total(), nonneg(state), nonneg(transient)};
}

}  // namespace

std::string_view to_string(Variant v) noexcept {
  switch (v) {
    case Variant::regular:
      return "regular";
    case Variant::core:
      return "core";
    case Variant::cosi:
      return "cosi";
  }
  return "?";
}

Variant parse_variant(std::string_view name) {
  if (name == "regular") return Variant::regular;
  if (name == "core") return Variant::core;
  if (name == "cosi") return Variant::cosi;
  throw ConfigError(fmt::format("unknown variant '{}'", name));
}

std::vector<EquationCost> cost_breakdown(Variant v, std::size_t n_, std::size_t d_) {
  check_dims(n_, d_);
  const i64 n = static_cast<i64>(n_), d = static_cast<i64>(d_);
  switch (v) {
    case Variant::regular:
      return {
          {"scores", ops(n * n * d + n * d, n * d * (n - 1), 0)},
          {"values", ops(n * n * d + n * d, n * n * (d - 1), n * n)},
          {"normalize", ops(0, n * (n - 1), 0)},
      };
    case Variant::core:
      return {
          {"denominator update", ops(2 * (n - 1) * d, 2 * (n - 2) * d + 2 * (n - 1), 2 * (n - 1))},
          {"newest denominator", ops(n * d + n + d, n * d + (n - 1) + d, n)},
          {"numerator update", ops(2 * (n - 1) * d, 2 * (n - 1) * d, 0)},
          {"newest numerator", ops(n * d, (n - 1) * d, 0)},
          {"normalize", ops(n * d + n, 0, 0)},
      };
    case Variant::cosi:
      return {
          {"denominator", ops(n * d + d, (n - 1) * d + n - 1, 0)},
          {"numerator", ops(n * d + d, n * (d - 1), n)},
      };
  }
  return {};
}

CostReport cost_regular(std::size_t n_, std::size_t d_) {
  check_dims(n_, d_);
  const i64 n = static_cast<i64>(n_), d = static_cast<i64>(d_);
  return report(Variant::regular, n_, d_,
                ops(2 * n * n * d + 2 * n * d, 2 * n * n * d - n * d - n, n * n),
                3 * (n - 1) * d, n * n);
}

CostReport cost_core(std::size_t n_, std::size_t d_) {
  check_dims(n_, d_);
  const i64 n = static_cast<i64>(n_), d = static_cast<i64>(d_);
  return report(Variant::core, n_, d_,
                ops(7 * n * d + 2 * n - 3 * d, 6 * n * d + 3 * n - 6 * d - 3, 3 * n - 2),
                (n - 1) * (4 * d + 1), 3 * n - 2);
}

CostReport cost_cosi(std::size_t n_, std::size_t d_) {
  check_dims(n_, d_);
  const i64 n = static_cast<i64>(n_), d = static_cast<i64>(d_);
  return report(Variant::cosi, n_, d_, ops(2 * n * d + 2 * d, 2 * n * d - d - 1, n),
                2 * (n - 1) * d, n);
}

CostReport cost(Variant v, std::size_t n, std::size_t d) {
  switch (v) {
    case Variant::regular:
      return cost_regular(n, d);
    case Variant::core:
      return cost_core(n, d);
    case Variant::cosi:
      return cost_cosi(n, d);
  }
  throw ConfigError("unknown variant");
}

double cost_ratio(Variant a, Variant b, std::size_t n, std::size_t d) {
  return static_cast<double>(cost(a, n, d).flops_total) /
         static_cast<double>(cost(b, n, d).flops_total);
}

std::vector<CostReport> cost_sweep(std::span<const std::size_t> ns,
                                   std::span<const std::size_t> ds) {
  if (ns.empty() || ds.empty()) throw ConfigError("cost sweep needs non-empty n and d ranges");
  std::vector<CostReport> out;
  out.reserve(3 * ns.size() * ds.size());
  for (std::size_t n : ns) {
    for (std::size_t d : ds) {
      for (Variant v : {Variant::regular, Variant::core, Variant::cosi}) out.push_back(cost(v, n, d));
    }
  }
  return out;
}

void write_cost_csv(std::ostream& out, std::span<const CostReport> rows) {
  out << kCostCsvHeader << '\n';
  for (const auto& r : rows) {
    out << fmt::format("{},{},{},{},{},{},{},{},{}\n", to_string(r.variant), r.n, r.d, r.ops.mults,
                       r.ops.adds, r.ops.exps, r.flops_total, r.state_words, r.transient_words);
  }
}

double loglog_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw ShapeError("slope fit needs two equally sized series of at least 2 points");
  }
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0) || !(y[i] > 0)) throw DomainError("log-log fit needs positive values");
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lx = std::log(x[i]) - mx;
    sxy += lx * (std::log(y[i]) - my);
    sxx += lx * lx;
  }
  if (sxx == 0) throw DomainError("log-log fit needs distinct x values");
  return sxy / sxx;
}

}  // namespace cta
