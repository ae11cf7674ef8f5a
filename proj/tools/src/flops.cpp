#include <fstream>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "cta/cli/commands.hpp"
#include "cta/cli/exit_codes.hpp"
#include "cta/errors.hpp"

namespace cta::cli {

int cmd_flops(const FlopsOptions& opts, std::ostream& out, std::ostream& /*err*/) {
  const auto rows = cost_sweep(opts.ns, opts.ds);

  if (opts.output) {
    std::ofstream file(*opts.output);
    if (!file) throw FormatError(fmt::format("cannot write '{}'", opts.output->string()));
    write_cost_csv(file, rows);
    if (!file) throw FormatError(fmt::format("failed writing '{}'", opts.output->string()));
  } else if (!opts.ratios && !opts.breakdown) {
    write_cost_csv(out, rows);
  }

  if (opts.breakdown) {
    fmt::print(out, "variant,n,d,term,mults,adds,exps\n");
    for (const std::size_t n : opts.ns) {
      for (const std::size_t d : opts.ds) {
        for (const Variant v : {Variant::regular, Variant::core, Variant::cosi}) {
          for (const auto& term : cost_breakdown(v, n, d)) {
            fmt::print(out, "{},{},{},{},{},{},{}\n", to_string(v), n, d, term.label,
                       term.ops.mults, term.ops.adds, term.ops.exps);
          }
        }
      }
    }
  }

  if (opts.ratios) {
    for (const std::size_t n : opts.ns) {
      for (const std::size_t d : opts.ds) {
        for (const Variant v : {Variant::core, Variant::cosi}) {
          fmt::print(out, "regular/{} = {} (n={}, d={})\n", to_string(v),
                     format_sig3(cost_ratio(Variant::regular, v, n, d)), n, d);
        }
      }
    }
  }
  return kExitOk;
}

}  // namespace cta::cli
