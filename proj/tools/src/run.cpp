#include <deque>
#include <fstream>
#include <memory>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "cta/cli/commands.hpp"
#include "cta/cli/exit_codes.hpp"
#include "cta/encoder.hpp"
#include "cta/errors.hpp"
#include "cta/token_stream.hpp"

namespace cta::cli {

namespace {

template <typename T>
void stream_model(const ModelConfig& cfg, const WeightStore& store, const TokenStream& stream,
                  const RunOptions& opts, std::ostream& out) {
  const ModelWeights<T> w = load_model_weights<T>(cfg, store);
  std::optional<ModelWeights<double>> reference;
  if (opts.oracle) reference = load_model_weights<double>(cfg, store);

  fmt::print(out, "step");
  for (std::size_t c = 0; c < cfg.d; ++c) fmt::print(out, ",y{}", c);
  fmt::print(out, "{}\n", opts.oracle ? ",max_rel_dev" : "");

  ModelState<T> state(cfg, w, opts.tau0);
  std::deque<std::size_t> window;  // stream rows inside the receptive field
  Vector<T> x(cfg.d);
  for (std::size_t t = 0; t < stream.size(); ++t) {
    const auto row = stream.tokens.row(t);
    for (std::size_t c = 0; c < cfg.d; ++c) x[c] = static_cast<T>(row[c]);
    window.push_back(t);
    if (window.size() > cfg.n) window.pop_front();
    if (!state.warm()) {
      state.feed(w, x.span());
      continue;
    }
    const Vector<T> y = model_step<T>(state, w, x.span());
    fmt::print(out, "{}", t);
    for (std::size_t c = 0; c < cfg.d; ++c) fmt::print(out, ",{}", y[c]);
    if (reference) {
      Matrix<double> xs(cfg.n, cfg.d);
      for (std::size_t r = 0; r < cfg.n; ++r) {
        const auto src = stream.tokens.row(window[r]);
        // Round through T so the reference sees the same inputs.
        for (std::size_t c = 0; c < cfg.d; ++c) xs(r, c) = static_cast<double>(static_cast<T>(src[c]));
      }
      const Vector<double> ref = model_batch(cfg, *reference, xs, state.window_tau0());
      const Vector<double> yd = vector_cast<double>(y);
      fmt::print(out, ",{:.3e}", max_relative_error<double>(yd.span(), ref.span()));
    }
    fmt::print(out, "\n");
  }
}

}  // namespace

int cmd_run(const RunOptions& opts, std::ostream& out, std::ostream& /*err*/) {
  const ModelConfig cfg = load_model_config(opts.config);
  const WeightStore store = load_weights(opts.weights);
  if (opts.oracle && cfg.transformer_xl) {
    throw ConfigError("--oracle needs a window-bounded model; transformer_xl stacks are not");
  }

  const StreamFormat format = opts.format.value_or(stream_format_for(opts.stream));
  // CSV width is inferred so that a mismatch is reported against the config.
  const TokenStream stream =
      read_token_stream(opts.stream, format == StreamFormat::csv ? 0 : cfg.d, format);
  if (stream.size() != 0 && stream.d != cfg.d) {
    throw ConfigError(fmt::format("stream tokens have {} values, config d = {}", stream.d, cfg.d));
  }

  std::unique_ptr<std::ofstream> file;
  if (opts.output) {
    file = std::make_unique<std::ofstream>(*opts.output);
    if (!*file) throw FormatError(fmt::format("cannot write '{}'", opts.output->string()));
  }
  std::ostream& sink = file ? *file : out;
  if (cfg.precision == Precision::f32) {
    stream_model<float>(cfg, store, stream, opts, sink);
  } else {
    stream_model<double>(cfg, store, stream, opts, sink);
  }
  if (file && !*file) throw FormatError(fmt::format("failed writing '{}'", opts.output->string()));
  return kExitOk;
}

int cmd_init_weights(const InitWeightsOptions& opts, std::ostream& out, std::ostream& /*err*/) {
  const ModelConfig cfg = load_model_config(opts.config);
  const DType dtype =
      opts.dtype.value_or(cfg.precision == Precision::f32 ? DType::f32 : DType::f64);
  const WeightStore store = init_random_weights(cfg, opts.seed, dtype);
  save_weights(opts.output, store);
  fmt::print(out, "wrote {} tensors ({}) to {}\n", store.size(), to_string(dtype),
             opts.output.string());
  return kExitOk;
}

}  // namespace cta::cli
