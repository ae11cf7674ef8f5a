#include <array>
#include <cmath>
#include <cstring>
#include <functional>
#include <cstdint>
#include <deque>
#include <random>
#include <set>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "cta/attention.hpp"
#include "cta/cli/commands.hpp"
#include "cta/cli/exit_codes.hpp"
#include "cta/encoder.hpp"
#include "cta/mha.hpp"
#include "cta/modelio.hpp"
#include "cta/rpe.hpp"
#include "random_fill.hpp"

namespace cta::cli {

namespace {

using detail::random_matrix;
using detail::rows;

constexpr std::array<std::size_t, 4> kWindows{2, 4, 16, 64};
constexpr std::array<std::size_t, 4> kDims{1, 2, 8, 64};
constexpr std::array<std::size_t, 3> kHeads{1, 2, 4};

const std::set<std::string, std::less<>> kCheckNames{
    "attention.core", "attention.cosi", "mha.core",        "mha.cosi",
    "model.b1",       "model.b2",       "model.b2_cls",    "drift.core",
    "rpe.consistency", "rpe.unambiguous", "rowstream.regular"};

struct Tolerances {
  double attention;
  double model;
  double drift;
};

Tolerances resolve(const VerifyOptions& o) {
  const bool f32 = o.precision == Precision::f32;
  return {o.tol_attention.value_or(f32 ? 1e-4 : 1e-10), o.tol_model.value_or(f32 ? 1e-4 : 1e-8),
          o.tol_drift.value_or(f32 ? 1e-4 : 1e-6)};
}

std::uint64_t instance_seed(std::uint64_t seed, std::string_view check, std::size_t i) {
  return seed * 1'000'003ULL + std::hash<std::string_view>{}(check) % 100'003ULL + i * 7919ULL;
}

/// Tracks the worst error of one check.
class Tally {
 public:
  Tally(std::string name, double tol, const std::string& fault)
      : name_(std::move(name)), tol_(tol), fault_(fault == name_) {}

  /// Negates the first element of the first output handed over while a fault
  /// is armed. The +1 keeps an exact zero from surviving the flip.
  template <typename T>
  void maybe_corrupt(Matrix<T>& m) {
    if (fault_ && m.size() != 0) {
      m.data()[0] = -m.data()[0] + T(1);
      fault_ = false;
    }
  }

  void record(double err) {
    worst_ = std::max(worst_, err);
    ++cases_;
  }
  void case_done() { ++instances_; }

  CheckResult result() const {
    return {name_, worst_, tol_, instances_ ? instances_ : cases_, worst_ <= tol_};
  }

 private:
  std::string name_;
  double tol_;
  bool fault_;
  double worst_ = 0.0;
  std::size_t cases_ = 0;
  std::size_t instances_ = 0;
};

template <typename T>
Matrix<double> widen(const Matrix<T>& m) {
  return matrix_cast<double>(m);
}

template <typename T>
void check_attention(const VerifyOptions& opts, double tol, std::vector<CheckResult>& out) {
  Tally core("attention.core", tol, opts.inject_fault);
  Tally cosi("attention.cosi", tol, opts.inject_fault);
  Tally mcore("mha.core", tol, opts.inject_fault);
  Tally mcosi("mha.cosi", tol, opts.inject_fault);

  for (std::size_t i = 0; i < opts.attention_instances; ++i) {
    const std::size_t n = kWindows[i % kWindows.size()];
    const std::size_t d = kDims[(i / kWindows.size()) % kDims.size()];
    const std::size_t h = kHeads[(i / (kWindows.size() * kDims.size())) % kHeads.size()];
    // Enough steps to cycle every ring slot on small windows and to start
    // evicting on large ones.
    const std::size_t steps = std::min<std::size_t>(n + 1, 12);
    std::mt19937_64 rng(instance_seed(opts.seed, "attention", i));
    const std::size_t len = n - 1 + steps;
    const Matrix<T> q = random_matrix<T>(rng, len, d);
    const Matrix<T> k = random_matrix<T>(rng, len, d);
    const Matrix<T> v = random_matrix<T>(rng, len, d);
    const MhaWeights<T> w = detail::random_mha<T>(rng, d, h);
    const MhaWeights<double> wd = detail::widen(w);

    CoReState<T> cr = core_init(n, rows(q, 0, n - 1), rows(k, 0, n - 1), rows(v, 0, n - 1));
    CoSiState<T> cs = cosi_init(n, rows(k, 0, n - 1), rows(v, 0, n - 1));
    CoMhaState<T> mr = comha_init(w, AttnKind::retroactive, n, rows(q, 0, n - 1),
                                  rows(k, 0, n - 1), rows(v, 0, n - 1));
    CoMhaState<T> ms = comha_init(w, AttnKind::single_output, n, rows(q, 0, n - 1),
                                  rows(k, 0, n - 1), rows(v, 0, n - 1));

    for (std::size_t t = n - 1; t < len; ++t) {
      const std::size_t first = t + 1 - n;
      const Matrix<double> wq = widen(rows(q, first, n));
      const Matrix<double> wk = widen(rows(k, first, n));
      const Matrix<double> wv = widen(rows(v, first, n));
      const Matrix<double> ref = regular_sda(wq, wk, wv);
      const Matrix<double> mref = mha_batch(wd, wq, wk, wv);

      Matrix<T> a = core_step<T>(cr, q.row(t), k.row(t), v.row(t)).tokens;
      core.maybe_corrupt(a);
      core.record(max_relative_error(widen(a), ref));

      Matrix<T> b = cosi_step<T>(cs, q.row(t), k.row(t), v.row(t)).tokens;
      cosi.maybe_corrupt(b);
      cosi.record(max_relative_error(widen(b), rows(ref, n - 1, 1)));

      Matrix<T> c = comha_step<T>(mr, w, q.row(t), k.row(t), v.row(t)).tokens;
      mcore.maybe_corrupt(c);
      mcore.record(max_relative_error(widen(c), mref));

      Matrix<T> e = comha_step<T>(ms, w, q.row(t), k.row(t), v.row(t)).tokens;
      mcosi.maybe_corrupt(e);
      mcosi.record(max_relative_error(widen(e), rows(mref, n - 1, 1)));
    }
    for (Tally* tl : {&core, &cosi, &mcore, &mcosi}) tl->case_done();
  }
  for (Tally* tl : {&core, &cosi, &mcore, &mcosi}) out.push_back(tl->result());
}

template <typename T>
void check_models(const VerifyOptions& opts, double tol, std::vector<CheckResult>& out) {
  struct Variant {
    const char* name;
    bool two_block;
    bool class_token;
  };
  constexpr std::array<Variant, 3> kVariants{
      {{"model.b1", false, false}, {"model.b2", true, false}, {"model.b2_cls", true, true}}};
  const DType dtype = std::is_same_v<T, float> ? DType::f32 : DType::f64;

  for (std::size_t vi = 0; vi < kVariants.size(); ++vi) {
    const Variant& var = kVariants[vi];
    Tally tally(var.name, tol, opts.inject_fault);
    // Instances are split across the variants, the remainder going first.
    const std::size_t count =
        opts.model_instances / 3 + (vi < opts.model_instances % 3 ? 1 : 0);
    for (std::size_t i = 0; i < count; ++i) {
      std::mt19937_64 rng(instance_seed(opts.seed, var.name, i));
      constexpr std::array<std::size_t, 6> ns{2, 3, 4, 5, 8, 16};
      constexpr std::array<std::size_t, 4> ds{2, 4, 8, 16};
      const std::size_t n = ns[rng() % ns.size()];
      const std::size_t d = ds[rng() % ds.size()];
      std::size_t h = std::size_t{1} << (rng() % 3);
      while (d % h != 0) h /= 2;

      ModelConfig cfg = var.two_block ? ModelConfig::two_block(n, d, h, 2 * d, var.class_token)
                                      : ModelConfig::one_block(n, d, h, 2 * d);
      const WeightStore store = init_random_weights(cfg, rng(), dtype);
      const ModelWeights<T> w = load_model_weights<T>(cfg, store);
      const ModelWeights<double> wd = load_model_weights<double>(cfg, store);
      const std::size_t tau0 = rng() % cfg.rpe_table_size();

      ModelState<T> state(cfg, w, tau0);
      const std::size_t steps = n + 2;
      const Matrix<T> x = random_matrix<T>(rng, state.warmup_steps() + steps, d);
      model_warmup(state, w, rows(x, 0, state.warmup_steps()));
      for (std::size_t t = state.warmup_steps(); t < x.rows(); ++t) {
        Vector<T> y = model_step<T>(state, w, x.row(t));
        Matrix<T> ym = Matrix<T>::from_row(y.span());
        tally.maybe_corrupt(ym);
        const Matrix<double> window = widen(rows(x, t + 1 - n, n));
        const Vector<double> ref = model_batch(cfg, wd, window, state.window_tau0());
        tally.record(max_relative_error<double>(widen(ym).row(0), ref.span()));
      }
      tally.case_done();
    }
    out.push_back(tally.result());
  }
}

template <typename T>
void check_drift(const VerifyOptions& opts, double tol, std::vector<CheckResult>& out) {
  Tally tally("drift.core", tol, opts.inject_fault);
  constexpr std::size_t n = 64, d = 16;
  constexpr std::size_t sample_every = 1000;
  std::mt19937_64 rng(instance_seed(opts.seed, "drift", 0));
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const auto draw = [&] {
    std::array<Matrix<T>, 3> m{Matrix<T>(1, d), Matrix<T>(1, d), Matrix<T>(1, d)};
    for (auto& x : m) {
      for (T& c : x.data()) c = static_cast<T>(u(rng));
    }
    return m;
  };

  std::deque<std::array<Matrix<T>, 3>> window;
  Matrix<T> q0(n - 1, d), k0(n - 1, d), v0(n - 1, d);
  for (std::size_t r = 0; r + 1 < n; ++r) {
    auto row = draw();
    std::ranges::copy(row[0].row(0), q0.row(r).begin());
    std::ranges::copy(row[1].row(0), k0.row(r).begin());
    std::ranges::copy(row[2].row(0), v0.row(r).begin());
    window.push_back(std::move(row));
  }
  CoReState<T> state = core_init(n, q0, k0, v0);
  for (std::size_t t = 1; t <= opts.drift_steps; ++t) {
    auto row = draw();
    Matrix<T> y = core_step<T>(state, row[0].row(0), row[1].row(0), row[2].row(0)).tokens;
    window.push_back(std::move(row));
    if (window.size() > n) window.pop_front();
    if (t % sample_every != 0 && t != opts.drift_steps) continue;
    Matrix<double> q(n, d), k(n, d), v(n, d);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < d; ++c) {
        q(r, c) = window[r][0](0, c);
        k(r, c) = window[r][1](0, c);
        v(r, c) = window[r][2](0, c);
      }
    }
    tally.maybe_corrupt(y);
    tally.record(max_relative_error(widen(y), regular_sda(q, k, v)));
  }
  tally.case_done();
  out.push_back(tally.result());
}

template <typename T>
void check_rpe(const VerifyOptions& opts, std::vector<CheckResult>& out) {
  Tally consistency("rpe.consistency", 0.0, opts.inject_fault);
  std::mt19937_64 rng(instance_seed(opts.seed, "rpe", 0));
  for (const std::size_t n : {2, 3, 8, 16}) {
    for (const std::size_t tokens : {2 * n - 1, n, std::size_t{5}}) {
      const RpeTable<T> table = rpe_fixed_table<T>(tokens, 8);
      const std::size_t tau0 = rng() % tokens;
      const Matrix<T> x = random_matrix<T>(rng, 3 * tokens + 2, 8);
      const Matrix<T> batch = rpe_apply_batch(table, tau0, x);
      Matrix<T> stepped(x.rows(), x.cols());
      RpeState s{tau0};
      for (std::size_t t = 0; t < x.rows(); ++t) {
        auto [y, next] = rpe_step<T>(table, s, x.row(t));
        std::ranges::copy(y.span(), stepped.row(t).begin());
        s = next;
      }
      consistency.maybe_corrupt(stepped);
      double worst = 0.0;
      for (std::size_t i = 0; i < batch.size(); ++i) {
        worst = std::max(worst, std::fabs(static_cast<double>(stepped.data()[i]) -
                                          static_cast<double>(batch.data()[i])));
      }
      consistency.record(worst);
      consistency.case_done();
    }
  }
  out.push_back(consistency.result());

  // Offsets must be recoverable from index pairs with 2n-1 encodings and
  // must collide with n. The error is the number of windows violating that.
  Tally unambiguous("rpe.unambiguous", 0.0, opts.inject_fault);
  const bool fault = opts.inject_fault == "rpe.unambiguous";
  for (std::size_t n = 2; n <= 64; ++n) {
    const std::size_t tokens = fault && n == 2 ? n : 2 * n - 1;
    const bool clean = !find_offset_collision(tokens, n).has_value();
    const bool collides = find_offset_collision(n, n).has_value();
    unambiguous.record(static_cast<double>(!clean) + static_cast<double>(!collides));
    unambiguous.case_done();
  }
  out.push_back(unambiguous.result());
}

template <typename T>
void check_rowstream(const VerifyOptions& opts, std::vector<CheckResult>& out) {
  Tally tally("rowstream.regular", 0.0, opts.inject_fault);
  std::mt19937_64 rng(instance_seed(opts.seed, "rowstream", 0));
  for (const std::size_t n : {1, 2, 16, 64}) {
    for (const std::size_t d : {1, 8, 64}) {
      const Matrix<T> q = random_matrix<T>(rng, n, d);
      const Matrix<T> k = random_matrix<T>(rng, n, d);
      const Matrix<T> v = random_matrix<T>(rng, n, d);
      const Matrix<T> full = regular_sda(q, k, v);
      Matrix<T> streamed = regular_sda_rowstream(q, k, v);
      tally.maybe_corrupt(streamed);
      // Bitwise identity: any differing element counts.
      double differing = 0.0;
      for (std::size_t i = 0; i < full.size(); ++i) {
        differing += std::memcmp(&full.data()[i], &streamed.data()[i], sizeof(T)) != 0;
      }
      tally.record(differing);
      tally.case_done();
    }
  }
  out.push_back(tally.result());
}

template <typename T>
std::vector<CheckResult> run_all(const VerifyOptions& opts) {
  const Tolerances tol = resolve(opts);
  std::vector<CheckResult> out;
  check_attention<T>(opts, tol.attention, out);
  check_models<T>(opts, tol.model, out);
  check_drift<T>(opts, tol.drift, out);
  check_rpe<T>(opts, out);
  check_rowstream<T>(opts, out);
  return out;
}

}  // namespace

std::vector<CheckResult> run_verify_checks(const VerifyOptions& opts) {
  if (!opts.inject_fault.empty() && !kCheckNames.contains(opts.inject_fault)) {
    throw ConfigError(fmt::format("unknown check '{}' for fault injection", opts.inject_fault));
  }
  return opts.precision == Precision::f32 ? run_all<float>(opts) : run_all<double>(opts);
}

int cmd_verify(const VerifyOptions& opts, std::ostream& out, std::ostream& err) {
  const auto results = run_verify_checks(opts);
  fmt::print(out, "check,cases,max_rel_error,tolerance,status\n");
  bool ok = true;
  for (const auto& r : results) {
    fmt::print(out, "{},{},{:.3e},{:.1e},{}\n", r.name, r.cases, r.max_error, r.tolerance,
               r.passed ? "pass" : "FAIL");
    ok = ok && r.passed;
  }
  for (const auto& r : results) {
    if (!r.passed) {
      fmt::print(err, "verify: check '{}' failed: max error {:.3e} exceeds tolerance {:.1e}\n",
                 r.name, r.max_error, r.tolerance);
    }
  }
  return ok ? kExitOk : kExitVerifyFailed;
}

}  // namespace cta::cli
