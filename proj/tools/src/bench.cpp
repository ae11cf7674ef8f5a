#include <algorithm>
#include <chrono>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <random>
#include <thread>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "cta/attention.hpp"
#include "cta/cli/commands.hpp"
#include "cta/cli/exit_codes.hpp"
#include "cta/errors.hpp"
#include "cta/ring.hpp"
#include "random_fill.hpp"

namespace cta::cli {

namespace {

using Clock = std::chrono::steady_clock;

// Inputs cycle through a fixed pool so that drawing random numbers stays out
// of the timed region.
constexpr std::size_t kPoolRows = 97;

template <typename T>
struct Pool {
  Matrix<T> q, k, v;
  std::size_t next = 0;

  Pool(std::uint64_t seed, std::size_t d) {
    std::mt19937_64 rng(seed);
    q = detail::random_matrix<T>(rng, kPoolRows, d);
    k = detail::random_matrix<T>(rng, kPoolRows, d);
    v = detail::random_matrix<T>(rng, kPoolRows, d);
  }
  std::size_t take() {
    const std::size_t r = next;
    next = (next + 1) % kPoolRows;
    return r;
  }
  /// The first `count` pool rows of m, wrapping; leaves `next` just past them.
  Matrix<T> head(const Matrix<T>& m, std::size_t count) {
    Matrix<T> out(count, m.cols());
    for (std::size_t r = 0; r < count; ++r) {
      std::ranges::copy(m.row(r % kPoolRows), out.row(r).begin());
    }
    next = count % kPoolRows;
    return out;
  }
};

/// Per-step wall times in microseconds for one independent instance.
template <typename T>
std::vector<double> time_instance(Variant variant, std::size_t n, std::size_t d,
                                  std::size_t warmup, std::size_t steps, std::uint64_t seed) {
  Pool<T> pool(seed, d);
  T sink{};
  std::vector<double> samples;
  samples.reserve(steps);

  const auto run = [&](auto&& step_once) {
    for (std::size_t s = 0; s < warmup; ++s) step_once();
    for (std::size_t s = 0; s < steps; ++s) {
      const auto t0 = Clock::now();
      step_once();
      const auto t1 = Clock::now();
      samples.push_back(std::chrono::duration<double, std::micro>(t1 - t0).count());
    }
  };

  switch (variant) {
    case Variant::regular: {
      RowRing<T> q(n, d), k(n, d), v(n, d);
      for (std::size_t r = 0; r + 1 < n; ++r) {
        const std::size_t i = pool.take();
        q.push(pool.q.row(i));
        k.push(pool.k.row(i));
        v.push(pool.v.row(i));
      }
      run([&] {
        const std::size_t i = pool.take();
        q.push(pool.q.row(i));
        k.push(pool.k.row(i));
        v.push(pool.v.row(i));
        const Matrix<T> out = regular_sda(q.to_matrix(), k.to_matrix(), v.to_matrix());
        sink += out.data()[0];
      });
      break;
    }
    case Variant::core: {
      CoReState<T> state =
          core_init(n, pool.head(pool.q, n - 1), pool.head(pool.k, n - 1),
                    pool.head(pool.v, n - 1));
      run([&] {
        const std::size_t i = pool.take();
        sink += core_step<T>(state, pool.q.row(i), pool.k.row(i), pool.v.row(i)).tokens.data()[0];
      });
      break;
    }
    case Variant::cosi: {
      CoSiState<T> state = cosi_init(n, pool.head(pool.k, n - 1), pool.head(pool.v, n - 1));
      run([&] {
        const std::size_t i = pool.take();
        sink += cosi_step<T>(state, pool.q.row(i), pool.k.row(i), pool.v.row(i)).tokens.data()[0];
      });
      break;
    }
  }
  // Keeps the kernels observable to the optimiser.
  if (!std::isfinite(static_cast<double>(sink))) samples.push_back(0.0);
  return samples;
}

double percentile(std::vector<double>& v, double p) {
  if (v.empty()) return 0.0;
  const auto idx = static_cast<std::size_t>(std::ceil(p * static_cast<double>(v.size()))) - 1;
  const auto pos = v.begin() + static_cast<std::ptrdiff_t>(std::min(idx, v.size() - 1));
  std::nth_element(v.begin(), pos, v.end());
  return *pos;
}

template <typename T>
BenchRow measure(const BenchOptions& opts, Variant variant, std::size_t n, std::size_t d,
                 std::size_t threads) {
  const std::size_t warmup = opts.warmup.value_or(n);
  std::vector<std::vector<double>> per_thread(threads);
  const auto t0 = Clock::now();
  {
    std::vector<std::jthread> workers;
    for (std::size_t t = 0; t < threads; ++t) {
      const std::uint64_t seed = opts.seed * 1'000'003ULL + t * 7919ULL + n * 31ULL + d;
      workers.emplace_back([&, t, seed] {
        per_thread[t] = time_instance<T>(variant, n, d, warmup, opts.steps, seed);
      });
    }
  }
  const double wall = std::chrono::duration<double>(Clock::now() - t0).count();
  std::vector<double> all;
  for (auto& s : per_thread) all.insert(all.end(), s.begin(), s.end());

  BenchRow row;
  row.variant = variant;
  row.n = n;
  row.d = d;
  row.threads = threads;
  row.steps = opts.steps;
  row.median_us = percentile(all, 0.5);
  row.p95_us = percentile(all, 0.95);
  // Wall time includes warmup, so this slightly understates throughput.
  row.steps_per_sec = wall > 0 ? static_cast<double>(threads * opts.steps) / wall : 0.0;
  return row;
}

}  // namespace

std::size_t bench_threads(std::size_t requested) {
  if (requested == 0) throw ConfigError("--parallel must be at least 1");
  const char* cap = std::getenv("CTA_THREADS");
  if (cap == nullptr || *cap == '\0') return requested;
  std::size_t limit = 0;
  const std::string_view text(cap);
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), limit);
  if (ec != std::errc() || ptr != text.data() + text.size() || limit == 0) {
    throw ConfigError(fmt::format("CTA_THREADS must be a positive integer, got '{}'", text));
  }
  return std::min(requested, limit);
}

BenchReport run_bench(const BenchOptions& opts) {
  if (opts.ns.empty() || opts.ds.empty() || opts.variants.empty()) {
    throw ConfigError("bench needs at least one variant, n and d");
  }
  if (opts.steps < 1) throw ConfigError("bench needs at least one timed step");
  for (const std::size_t n : opts.ns) {
    if (n < 2) throw ConfigError(fmt::format("bench window n must be >= 2, got {}", n));
  }
  const std::size_t threads = bench_threads(opts.parallel);

  BenchReport report;
  for (const Variant v : opts.variants) {
    for (const std::size_t d : opts.ds) {
      for (const std::size_t n : opts.ns) {
        report.rows.push_back(opts.precision == Precision::f32
                                  ? measure<float>(opts, v, n, d, threads)
                                  : measure<double>(opts, v, n, d, threads));
      }
      if (opts.ns.size() < 2) continue;
      std::vector<double> xs, ys;
      for (const auto& r : report.rows) {
        if (r.variant == v && r.d == d) {
          xs.push_back(static_cast<double>(r.n));
          ys.push_back(std::max(r.median_us, 1e-3));
        }
      }
      report.slopes.push_back({v, d, loglog_slope(xs, ys)});
    }
  }
  return report;
}

int cmd_bench(const BenchOptions& opts, std::ostream& out, std::ostream& /*err*/) {
  const BenchReport report = run_bench(opts);

  const auto write_rows = [&](std::ostream& os) {
    fmt::print(os, "variant,n,d,precision,threads,steps,median_us,p95_us,steps_per_sec\n");
    for (const auto& r : report.rows) {
      fmt::print(os, "{},{},{},{},{},{},{:.3f},{:.3f},{:.1f}\n", to_string(r.variant), r.n, r.d,
                 to_string(opts.precision), r.threads, r.steps, r.median_us, r.p95_us,
                 r.steps_per_sec);
    }
  };
  if (opts.output) {
    std::ofstream file(*opts.output);
    if (!file) throw FormatError(fmt::format("cannot write '{}'", opts.output->string()));
    write_rows(file);
  } else {
    write_rows(out);
    if (!report.slopes.empty()) out << '\n';
  }
  if (!report.slopes.empty()) {
    fmt::print(out, "variant,d,loglog_slope_vs_n\n");
    for (const auto& s : report.slopes) {
      fmt::print(out, "{},{},{:.3f}\n", to_string(s.variant), s.d, s.slope);
    }
  }
  return kExitOk;
}

}  // namespace cta::cli
