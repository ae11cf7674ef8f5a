#pragma once

// Subcommands of the `cta` tool. Each takes parsed options and output streams
// and returns a process exit code (see exit_codes.hpp).

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "cta/costmodel.hpp"
#include "cta/model_config.hpp"
#include "cta/modelio.hpp"
#include "cta/token_stream.hpp"

namespace cta::cli {

/// Parses "8", "2,4,16", "lo:hi" (step 1), "lo:hi:step" or "lo:hi:xF"
/// (geometric, factor F). ConfigError on malformed or empty ranges.
std::vector<std::size_t> parse_size_range(std::string_view text);

/// Rounds to three significant figures and prints without an exponent.
std::string format_sig3(double value);

// verify

struct VerifyOptions {
  std::uint64_t seed = 0;
  Precision precision = Precision::f64;
  std::optional<double> tol_attention;  // default 1e-10 (f64) / 1e-4 (f32)
  std::optional<double> tol_model;      // default 1e-8 (f64) / 1e-4 (f32)
  std::optional<double> tol_drift;      // default 1e-6 (f64) / 1e-4 (f32)
  std::size_t attention_instances = 200;
  std::size_t model_instances = 50;
  std::size_t drift_steps = 10000;
  std::string inject_fault;  // check name whose output gets one sign flipped
};

struct CheckResult {
  std::string name;
  double max_error = 0.0;
  double tolerance = 0.0;
  std::size_t cases = 0;
  bool passed = false;
};

std::vector<CheckResult> run_verify_checks(const VerifyOptions& opts);
int cmd_verify(const VerifyOptions& opts, std::ostream& out, std::ostream& err);

// flops

struct FlopsOptions {
  std::vector<std::size_t> ns{100};
  std::vector<std::size_t> ds{100};
  bool ratios = false;
  bool breakdown = false;
  std::optional<std::filesystem::path> output;
};

int cmd_flops(const FlopsOptions& opts, std::ostream& out, std::ostream& err);

// bench

struct BenchOptions {
  std::vector<std::size_t> ns{16, 32, 64, 128};
  std::vector<std::size_t> ds{32};
  std::vector<Variant> variants{Variant::regular, Variant::core, Variant::cosi};
  std::size_t steps = 1000;
  std::optional<std::size_t> warmup;  // default: n steps
  Precision precision = Precision::f32;
  std::size_t parallel = 1;
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> output;
};

struct BenchRow {
  Variant variant = Variant::regular;
  std::size_t n = 0;
  std::size_t d = 0;
  std::size_t threads = 1;
  std::size_t steps = 0;
  double median_us = 0.0;
  double p95_us = 0.0;
  double steps_per_sec = 0.0;
};

struct BenchSlope {
  Variant variant = Variant::regular;
  std::size_t d = 0;
  double slope = 0.0;
};

struct BenchReport {
  std::vector<BenchRow> rows;
  std::vector<BenchSlope> slopes;  // log-log fit of median time against n
};

/// Worker threads after applying the CTA_THREADS cap.
std::size_t bench_threads(std::size_t requested);
BenchReport run_bench(const BenchOptions& opts);
int cmd_bench(const BenchOptions& opts, std::ostream& out, std::ostream& err);

// run

struct RunOptions {
  std::filesystem::path config;
  std::filesystem::path weights;
  std::filesystem::path stream;
  std::optional<StreamFormat> format;
  std::size_t tau0 = 0;
  bool oracle = false;
  std::optional<std::filesystem::path> output;
};

int cmd_run(const RunOptions& opts, std::ostream& out, std::ostream& err);

// init-weights

struct InitWeightsOptions {
  std::filesystem::path config;
  std::filesystem::path output;
  std::uint64_t seed = 0;
  std::optional<DType> dtype;  // default follows the config precision
};

int cmd_init_weights(const InitWeightsOptions& opts, std::ostream& out, std::ostream& err);

/// Full command line entry point; maps exceptions to exit codes.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cta::cli
