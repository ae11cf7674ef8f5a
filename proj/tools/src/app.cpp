#include <algorithm>
#include <exception>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "cta/cli/commands.hpp"
#include "cta/cli/exit_codes.hpp"
#include "cta/errors.hpp"

namespace cta::cli {

namespace {

const std::map<std::string, Precision> kPrecisions{{"f32", Precision::f32},
                                                   {"f64", Precision::f64}};
const std::map<std::string, DType> kDTypes{{"f32", DType::f32}, {"f64", DType::f64}};
const std::map<std::string, StreamFormat> kFormats{{"csv", StreamFormat::csv},
                                                   {"raw", StreamFormat::raw_f32}};

std::vector<Variant> parse_variants(const std::string& text) {
  std::vector<Variant> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_variant(item));
  if (out.empty()) throw ConfigError("empty variant list");
  return out;
}

struct Parsed {
  VerifyOptions verify;
  FlopsOptions flops;
  BenchOptions bench;
  RunOptions run;
  InitWeightsOptions init;
  std::string flops_n = "100,1000", flops_d = "100,1000";
  std::string bench_n = "16,32,64,128", bench_d = "32", bench_variants = "regular,core,cosi";
  std::string flops_output, bench_output, run_output;
  std::optional<std::string> run_format;
  std::optional<std::string> init_dtype;
  std::string verify_precision = "f64", bench_precision = "f32";
  std::optional<std::size_t> bench_warmup;
};

void build(CLI::App& app, Parsed& p) {
  app.require_subcommand(1);
  app.set_version_flag("--version", "cta 1.0.0");

  auto* verify = app.add_subcommand("verify", "Check continual kernels against batch recomputation");
  verify->add_option("--seed", p.verify.seed, "Seed for random instances")->capture_default_str();
  verify->add_option("--precision", p.verify_precision, "f64 or f32")
      ->check(CLI::IsMember({"f32", "f64"}))
      ->capture_default_str();
  verify->add_option("--tol-attention", p.verify.tol_attention,
                     "Attention/MHA tolerance (default 1e-10, f32 1e-4)");
  verify->add_option("--tol-model", p.verify.tol_model, "Model tolerance (default 1e-8, f32 1e-4)");
  verify->add_option("--tol-drift", p.verify.tol_drift, "Drift tolerance (default 1e-6, f32 1e-4)");
  verify->add_option("--attention-instances", p.verify.attention_instances)->capture_default_str();
  verify->add_option("--model-instances", p.verify.model_instances)->capture_default_str();
  verify->add_option("--drift-steps", p.verify.drift_steps)->capture_default_str();
  // Test hook: corrupt one output of the named check.
  verify->add_option("--inject-fault", p.verify.inject_fault)->group("");

  auto* flops = app.add_subcommand("flops", "Analytical per-step cost table (CSV)");
  flops->add_option("--n", p.flops_n, "Window sizes: list, lo:hi, lo:hi:step or lo:hi:xF")
      ->capture_default_str();
  flops->add_option("--d", p.flops_d, "Token dimensions, same syntax")->capture_default_str();
  flops->add_flag("--ratios", p.flops.ratios, "Print regular/core and regular/cosi ratios");
  flops->add_flag("--breakdown", p.flops.breakdown, "Per-term counts");
  flops->add_option("--output,-o", p.flops_output, "CSV path (default stdout)");

  auto* bench = app.add_subcommand("bench", "Per-step wall time of the attention variants (CSV)");
  bench->add_option("--n", p.bench_n, "Window sizes")->capture_default_str();
  bench->add_option("--d", p.bench_d, "Token dimensions")->capture_default_str();
  bench->add_option("--variants", p.bench_variants, "Comma list of regular,core,cosi")
      ->capture_default_str();
  bench->add_option("--steps", p.bench.steps, "Timed steps per instance")
      ->check(CLI::Range(std::size_t{1000}, std::numeric_limits<std::size_t>::max()))
      ->capture_default_str();
  bench->add_option("--warmup", p.bench_warmup, "Untimed steps after filling (default n)");
  bench->add_option("--precision", p.bench_precision, "f32 or f64")
      ->check(CLI::IsMember({"f32", "f64"}))
      ->capture_default_str();
  bench->add_option("--parallel", p.bench.parallel,
                    "Independent instances on separate threads (capped by CTA_THREADS)")
      ->capture_default_str();
  bench->add_option("--seed", p.bench.seed)->capture_default_str();
  bench->add_option("--output,-o", p.bench_output, "CSV path (default stdout)");

  auto* run = app.add_subcommand("run", "Stream tokens through a model (CSV)");
  run->add_option("--config", p.run.config, "Model config")->required()->check(CLI::ExistingFile);
  run->add_option("--weights", p.run.weights, "Weight file")->required()->check(CLI::ExistingFile);
  run->add_option("--stream", p.run.stream, "Token stream (.csv or raw f32)")
      ->required()
      ->check(CLI::ExistingFile);
  run->add_option("--format", p.run_format, "csv or raw (default by extension)")
      ->check(CLI::IsMember({"csv", "raw"}));
  run->add_option("--tau0", p.run.tau0, "Positional index of the first token")
      ->capture_default_str();
  run->add_flag("--oracle", p.run.oracle, "Append deviation from batch recomputation");
  run->add_option("--output,-o", p.run_output, "CSV path (default stdout)");

  auto* init = app.add_subcommand("init-weights", "Write seeded random weights for a config");
  init->add_option("--config", p.init.config, "Model config")->required()->check(CLI::ExistingFile);
  init->add_option("--seed", p.init.seed)->capture_default_str();
  init->add_option("--dtype", p.init_dtype, "f32 or f64 (default from config precision)")
      ->check(CLI::IsMember({"f32", "f64"}));
  init->add_option("--output,-o", p.init.output, "Weight file path")->required();
}

int dispatch(CLI::App& app, Parsed& p, std::ostream& out, std::ostream& err) {
  if (app.got_subcommand("verify")) {
    p.verify.precision = kPrecisions.at(p.verify_precision);
    return cmd_verify(p.verify, out, err);
  }
  if (app.got_subcommand("flops")) {
    p.flops.ns = parse_size_range(p.flops_n);
    p.flops.ds = parse_size_range(p.flops_d);
    if (!p.flops_output.empty()) p.flops.output = p.flops_output;
    return cmd_flops(p.flops, out, err);
  }
  if (app.got_subcommand("bench")) {
    p.bench.ns = parse_size_range(p.bench_n);
    p.bench.ds = parse_size_range(p.bench_d);
    p.bench.variants = parse_variants(p.bench_variants);
    p.bench.precision = kPrecisions.at(p.bench_precision);
    p.bench.warmup = p.bench_warmup;
    if (!p.bench_output.empty()) p.bench.output = p.bench_output;
    return cmd_bench(p.bench, out, err);
  }
  if (app.got_subcommand("run")) {
    if (p.run_format) p.run.format = kFormats.at(*p.run_format);
    if (!p.run_output.empty()) p.run.output = p.run_output;
    return cmd_run(p.run, out, err);
  }
  if (p.init_dtype) p.init.dtype = kDTypes.at(*p.init_dtype);
  return cmd_init_weights(p.init, out, err);
}

int run_parsed(std::vector<std::string> reversed_args, std::ostream& out, std::ostream& err) {
  CLI::App app("Continual attention kernels: verification, cost model, benchmarks, inference",
               "cta");
  Parsed p;
  build(app, p);
  try {
    app.parse(reversed_args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }
  try {
    return dispatch(app, p, out, err);
  } catch (const ConfigError& e) {
    fmt::print(err, "cta: configuration error: {}\n", e.what());
    return kExitUsage;
  } catch (const ShapeError& e) {
    fmt::print(err, "cta: configuration error: {}\n", e.what());
    return kExitUsage;
  } catch (const FormatError& e) {
    fmt::print(err, "cta: I/O or format error: {}\n", e.what());
    return kExitFormat;
  } catch (const DataError& e) {
    fmt::print(err, "cta: data error: {}\n", e.what());
    return kExitFormat;
  } catch (const std::exception& e) {
    fmt::print(err, "cta: {}\n", e.what());
    return kExitVerifyFailed;
  }
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = argc - 1; i > 0; --i) args.emplace_back(argv[i]);
  return run_parsed(std::move(args), out, err);
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  return run_parsed({args.rbegin(), args.rend()}, out, err);
}

}  // namespace cta::cli
