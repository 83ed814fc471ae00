// SPDX-License-Identifier: Apache-2.0
//
// Local SGD engine: M nodes step independently on their own random streams
// and are replaced by their average at each synchronization timestamp. The
// minibatch SGD baseline shares the stream layout (stream id == node index)
// so that Local SGD with a sync at every step reproduces it.
#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "localsgd/dataio.hpp"
#include "localsgd/error.hpp"
#include "localsgd/numkit.hpp"
#include "localsgd/objective.hpp"
#include "localsgd/textio.hpp"

namespace localsgd {

// ---------------------------------------------------------------------------
// Synchronization schedule

class SyncSchedule {
 public:
  /// Syncs at H, 2H, ... and at T when H does not divide T.
  static SyncSchedule uniform(std::size_t T, std::size_t H) {
    if (T == 0 || H == 0) throw ConfigError("schedule: T and H must be positive");
    std::vector<std::size_t> steps;
    for (std::size_t t = H; t < T; t += H) steps.push_back(t);
    steps.push_back(T);
    return SyncSchedule(std::move(steps), H);
  }

  /// A single synchronization at the end of training.
  static SyncSchedule one_shot(std::size_t T) { return uniform(T, std::max<std::size_t>(T, 1)); }

  /// Explicit timestamps. H defaults to the largest gap; a declared H must
  /// not be smaller than it.
  static SyncSchedule from_steps(std::vector<std::size_t> steps,
                                 std::optional<std::size_t> declared_H = std::nullopt) {
    if (steps.empty()) throw ConfigError("schedule: no synchronization steps");
    std::size_t gap = steps.front();
    if (steps.front() == 0) throw ConfigError("schedule: first sync step must be >= 1");
    for (std::size_t k = 1; k < steps.size(); ++k) {
      if (steps[k] <= steps[k - 1]) throw ConfigError("schedule: steps not strictly increasing");
      gap = std::max(gap, steps[k] - steps[k - 1]);
    }
    const std::size_t H = declared_H.value_or(gap);
    if (H < gap)
      throw ConfigError("schedule: declared H=" + std::to_string(H) + " below the largest gap " +
                        std::to_string(gap));
    return SyncSchedule(std::move(steps), H);
  }

  const std::vector<std::size_t>& steps() const noexcept { return steps_; }
  std::size_t H() const noexcept { return H_; }
  std::size_t T() const noexcept { return steps_.back(); }
  std::size_t rounds() const noexcept { return steps_.size(); }

  std::size_t max_gap() const noexcept {
    std::size_t gap = steps_.front();
    for (std::size_t k = 1; k < steps_.size(); ++k) gap = std::max(gap, steps_[k] - steps_[k - 1]);
    return gap;
  }

  bool is_sync(std::size_t t) const {
    return std::binary_search(steps_.begin(), steps_.end(), t);
  }

  /// Number of synchronizations at timestamps <= t.
  std::size_t rounds_through(std::size_t t) const {
    return static_cast<std::size_t>(std::upper_bound(steps_.begin(), steps_.end(), t) -
                                    steps_.begin());
  }

  std::string describe() const {
    std::string s;
    for (std::size_t k = 0; k < steps_.size(); ++k) {
      if (k) s += ',';
      s += std::to_string(steps_[k]);
      if (k == 15 && steps_.size() > 17) {
        s += ",...," + std::to_string(steps_.back());
        break;
      }
    }
    return s;
  }

 private:
  SyncSchedule(std::vector<std::size_t> steps, std::size_t H) : steps_(std::move(steps)), H_(H) {}

  std::vector<std::size_t> steps_;
  std::size_t H_;
};

// ---------------------------------------------------------------------------
// Configuration and traces

/// Deliberate defects for mutation checks of the verification suite.
enum class FaultInjection { None, SkipAveraging };

struct RecordOptions {
  std::size_t record_every = 0;  // 0 = ceil(T / 1000)
  bool record_sync_steps = true;
  bool track_subopt = true;      // f(x_hat_t) costs a full pass over the data
  bool keep_iterates = false;    // store x_hat_t for each recorded row
};

struct RunConfig {
  std::size_t M = 1;
  std::size_t T = 1;
  SyncSchedule schedule = SyncSchedule::uniform(1, 1);
  double gamma = 0.0;
  std::size_t batch = 1;
  Regime regime = Regime::Identical;
  GradientMode gradient_mode = GradientMode::Stochastic;
  std::uint64_t seed = 0;
  DenseVector x0;
  RecordOptions record;
  FaultInjection fault = FaultInjection::None;

  std::size_t record_every() const noexcept {
    return record.record_every ? record.record_every : std::max<std::size_t>(1, (T + 999) / 1000);
  }
};

inline KeyValues config_key_values(const RunConfig& c) {
  KeyValues kv;
  kv.set("M", c.M).set("T", c.T).set("H", c.schedule.H());
  kv.set("sync_steps", c.schedule.describe()).set("comm_rounds", c.schedule.rounds());
  kv.set("gamma", c.gamma).set("batch", c.batch);
  kv.set("regime", to_string(c.regime)).set("gradient_mode", to_string(c.gradient_mode));
  kv.set("seed", c.seed).set("record_every", c.record_every());
  kv.set("x0_norm_sq", norm_sq(c.x0));
  if (c.fault != FaultInjection::None) kv.set("fault_injection", "skip_averaging");
  return kv;
}

/// Distance and suboptimality are measured against this point.
struct Optimum {
  DenseVector x_star;
  double f_star = 0.0;
};

struct TraceRow {
  std::size_t t = 0;
  std::size_t round = 0;  // synchronizations completed through t
  bool synced = false;    // t is a synchronization timestamp
  double V = 0.0;
  double dist_sq = 0.0;
  double subopt = 0.0;
  double grad_sq = 0.0;   // |mean_m g_t^m|^2 for the step t -> t+1; NaN at t == T
};

struct TraceSummary {
  double bar_x_subopt = 0.0;        // x_bar over t = 1..T
  double bar_x_subopt_from0 = 0.0;  // x_bar over t = 0..T-1
  double final_dist_sq = 0.0;
  double final_subopt = 0.0;
  std::size_t comm_rounds = 0;
  std::size_t T = 0;
};

struct Trace {
  std::vector<TraceRow> rows;
  TraceSummary summary;
  RunConfig config;
  KeyValues metadata;
  std::vector<DenseVector> iterates;  // x_hat_t per row when keep_iterates
};

/// State after a step, handed to an optional observer.
struct StepView {
  std::size_t t;  // the new time index (the step just taken was t-1 -> t)
  std::span<const DenseVector> nodes;
  std::span<const DenseVector> grads;
  const DenseVector& xhat_prev;
  const DenseVector& xhat;
  bool synced;
};

using StepObserver = std::function<void(const StepView&)>;

template <class O>
concept GradientOracle =
    requires(const O& o, std::size_t node, const DenseVector& x, RngStream& rng,
             GradientMode mode, std::size_t batch, DenseVector& out) {
      { o.dim() } -> std::convertible_to<std::size_t>;
      { o.num_nodes() } -> std::convertible_to<std::size_t>;
      { o.regime() } -> std::same_as<Regime>;
      { o.value(x) } -> std::convertible_to<double>;
      o.node_gradient(node, x, rng, mode, batch, out);
    };

/// (1/M) sum_m |x^m - x_hat|^2; exactly zero when all iterates are equal.
inline double compute_Vt(std::span<const DenseVector> iterates) {
  if (iterates.empty()) throw ConfigError("compute_Vt: no iterates");
  const std::size_t d = iterates.front().dim();
  bool all_equal = true;
  for (const auto& x : iterates) {
    require_same_dim(d, x.dim());
    all_equal = all_equal && x == iterates.front();
  }
  if (all_equal) return 0.0;
  const DenseVector xhat = mean_of(iterates);
  double s = 0.0;
  for (const auto& x : iterates) s += dist_sq(x, xhat);
  return s / static_cast<double>(iterates.size());
}

namespace detail {

constexpr double kDivergenceNorm = 1e100;

template <GradientOracle O>
void check_run(const O& oracle, const Optimum& opt, const RunConfig& cfg) {
  if (cfg.M == 0 || cfg.T == 0) throw ConfigError("run: M and T must be positive");
  if (oracle.num_nodes() != cfg.M)
    throw ConfigError("run: config M=" + std::to_string(cfg.M) + " but the problem has " +
                      std::to_string(oracle.num_nodes()) + " nodes");
  if (oracle.regime() != cfg.regime) throw ConfigError("run: regime differs from the problem's");
  require_same_dim(oracle.dim(), cfg.x0.dim());
  require_same_dim(oracle.dim(), opt.x_star.dim());
  if (cfg.schedule.T() != cfg.T) throw ConfigError("run: schedule must end at T");
  if (!(cfg.gamma >= 0.0) || !std::isfinite(cfg.gamma))
    throw ConfigError("run: gamma must be finite and >= 0");
  if (cfg.gradient_mode == GradientMode::Stochastic && cfg.batch == 0)
    throw ConfigError("run: batch must be >= 1");
}

inline bool is_recorded(const RunConfig& cfg, std::size_t t) {
  if (t == 0 || t == cfg.T) return true;
  if (t % cfg.record_every() == 0) return true;
  return cfg.record.record_sync_steps && cfg.schedule.is_sync(t);
}

template <GradientOracle O>
TraceRow make_row(const O& oracle, const Optimum& opt, const RunConfig& cfg, std::size_t t,
                  bool synced, std::size_t round, double V, const DenseVector& xhat) {
  TraceRow r;
  r.t = t;
  r.round = round;
  r.synced = synced;
  r.V = V;
  r.dist_sq = dist_sq(xhat, opt.x_star);
  r.subopt = cfg.record.track_subopt ? oracle.value(xhat) - opt.f_star
                                     : std::numeric_limits<double>::quiet_NaN();
  r.grad_sq = std::numeric_limits<double>::quiet_NaN();
  return r;
}

inline void guard(const DenseVector& x, std::size_t t, std::size_t node) {
  if (!x.all_finite() || norm_sq(x) > kDivergenceNorm * kDivergenceNorm)
    throw DivergenceError(t, node);
}

inline double mean_grad_sq(std::span<const DenseVector> grads, DenseVector& scratch) {
  scratch = mean_of(grads);
  return norm_sq(scratch);
}

}  // namespace detail

/// Runs Local SGD for cfg.T steps and records the trace.
template <GradientOracle O>
Trace run_local_sgd(const O& oracle, const Optimum& opt, const RunConfig& cfg,
                    const StepObserver& observer = {}) {
  detail::check_run(oracle, opt, cfg);
  const std::size_t M = cfg.M;
  const std::size_t d = oracle.dim();

  std::vector<DenseVector> nodes(M, cfg.x0);
  std::vector<DenseVector> grads(M, DenseVector(d));
  std::vector<RngStream> rngs;
  rngs.reserve(M);
  for (std::size_t m = 0; m < M; ++m) rngs.emplace_back(cfg.seed, m);

  Trace tr;
  tr.config = cfg;
  DenseVector xhat = cfg.x0;
  DenseVector xhat_prev = xhat;
  DenseVector bar_from1(d), bar_from0(d), scratch;
  double V = 0.0;
  bool synced = false;

  auto record = [&](std::size_t t) {
    tr.rows.push_back(detail::make_row(oracle, opt, cfg, t, synced, cfg.schedule.rounds_through(t),
                                       V, xhat));
    if (cfg.record.keep_iterates) tr.iterates.push_back(xhat);
  };
  record(0);

  for (std::size_t t = 0; t < cfg.T; ++t) {
    axpy_inplace(1.0, xhat, bar_from0);
    for (std::size_t m = 0; m < M; ++m)
      oracle.node_gradient(m, nodes[m], rngs[m], cfg.gradient_mode, cfg.batch, grads[m]);
    if (!tr.rows.empty() && tr.rows.back().t == t)
      tr.rows.back().grad_sq = detail::mean_grad_sq(grads, scratch);
    for (std::size_t m = 0; m < M; ++m) {
      axpy_inplace(-cfg.gamma, grads[m], nodes[m]);
      detail::guard(nodes[m], t + 1, m);
    }

    xhat_prev = xhat;
    synced = cfg.schedule.is_sync(t + 1);
    xhat = mean_of(nodes);
    if (synced && cfg.fault != FaultInjection::SkipAveraging) {
      for (auto& x : nodes) x = xhat;
      V = 0.0;
    } else {
      V = compute_Vt(nodes);
    }
    axpy_inplace(1.0, xhat, bar_from1);

    if (observer) observer({t + 1, nodes, grads, xhat_prev, xhat, synced});
    if (detail::is_recorded(cfg, t + 1)) record(t + 1);
  }

  const double invT = 1.0 / static_cast<double>(cfg.T);
  scale_inplace(invT, bar_from1);
  scale_inplace(invT, bar_from0);
  tr.summary.bar_x_subopt = oracle.value(bar_from1) - opt.f_star;
  tr.summary.bar_x_subopt_from0 = oracle.value(bar_from0) - opt.f_star;
  tr.summary.final_dist_sq = tr.rows.back().dist_sq;
  tr.summary.final_subopt = cfg.record.track_subopt ? tr.rows.back().subopt
                                                    : oracle.value(xhat) - opt.f_star;
  tr.summary.comm_rounds = cfg.schedule.rounds();
  tr.summary.T = cfg.T;
  return tr;
}

/// Minibatch SGD: one shared iterate stepped by the mean of the M node
/// gradients. Every step is a communication round.
template <GradientOracle O>
Trace run_minibatch_sgd(const O& oracle, const Optimum& opt, const RunConfig& cfg_in,
                        const StepObserver& observer = {}) {
  RunConfig cfg = cfg_in;
  cfg.schedule = SyncSchedule::uniform(cfg.T, 1);
  detail::check_run(oracle, opt, cfg);
  const std::size_t M = cfg.M;
  const std::size_t d = oracle.dim();

  std::vector<DenseVector> grads(M, DenseVector(d));
  std::vector<RngStream> rngs;
  rngs.reserve(M);
  for (std::size_t m = 0; m < M; ++m) rngs.emplace_back(cfg.seed, m);

  Trace tr;
  tr.config = cfg;
  DenseVector x = cfg.x0;
  DenseVector x_prev = x;
  DenseVector bar_from1(d), bar_from0(d), g;
  bool synced = false;

  auto record = [&](std::size_t t) {
    tr.rows.push_back(detail::make_row(oracle, opt, cfg, t, synced, t, 0.0, x));
    if (cfg.record.keep_iterates) tr.iterates.push_back(x);
  };
  record(0);

  for (std::size_t t = 0; t < cfg.T; ++t) {
    axpy_inplace(1.0, x, bar_from0);
    for (std::size_t m = 0; m < M; ++m)
      oracle.node_gradient(m, x, rngs[m], cfg.gradient_mode, cfg.batch, grads[m]);
    g = mean_of(grads);
    if (!tr.rows.empty() && tr.rows.back().t == t) tr.rows.back().grad_sq = norm_sq(g);
    x_prev = x;
    axpy_inplace(-cfg.gamma, g, x);
    detail::guard(x, t + 1, 0);
    synced = true;
    axpy_inplace(1.0, x, bar_from1);
    if (observer) {
      const DenseVector single[1] = {x};
      observer({t + 1, single, grads, x_prev, x, true});
    }
    if (detail::is_recorded(cfg, t + 1)) record(t + 1);
  }

  const double invT = 1.0 / static_cast<double>(cfg.T);
  scale_inplace(invT, bar_from1);
  scale_inplace(invT, bar_from0);
  tr.summary.bar_x_subopt = oracle.value(bar_from1) - opt.f_star;
  tr.summary.bar_x_subopt_from0 = oracle.value(bar_from0) - opt.f_star;
  tr.summary.final_dist_sq = tr.rows.back().dist_sq;
  tr.summary.final_subopt = cfg.record.track_subopt ? tr.rows.back().subopt
                                                    : oracle.value(x) - opt.f_star;
  tr.summary.comm_rounds = cfg.T;
  tr.summary.T = cfg.T;
  return tr;
}

// ---------------------------------------------------------------------------
// Replicated runs

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

/// Sample mean and standard error (n-1 denominator) in input order.
inline MeanSe mean_se(std::span<const double> xs) {
  if (xs.empty()) return {std::numeric_limits<double>::quiet_NaN(), 0.0};
  if (std::all_of(xs.begin(), xs.end(), [&](double v) { return v == xs.front(); }))
    return {xs.front(), 0.0};
  double s = 0.0;
  for (double v : xs) s += v;
  const double n = static_cast<double>(xs.size());
  const double mean = s / n;
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double v : xs) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / (n - 1.0) / n)};
}

struct AggregateRow {
  std::size_t t = 0;
  std::size_t round = 0;
  bool synced = false;
  MeanSe V, dist_sq, subopt, grad_sq;
};

struct AggregateTrace {
  std::vector<AggregateRow> rows;
  MeanSe bar_x_subopt, bar_x_subopt_from0, final_dist_sq, final_subopt;
  std::size_t comm_rounds = 0;
  std::size_t T = 0;
  std::vector<std::uint64_t> seeds;
  RunConfig config;
  KeyValues metadata;
};

/// Per-step mean and standard error over traces recorded on the same grid.
inline AggregateTrace aggregate(std::span<const Trace> traces) {
  if (traces.empty()) throw ConfigError("aggregate: no traces");
  const auto& first = traces.front();
  for (const auto& tr : traces) {
    if (tr.rows.size() != first.rows.size())
      throw ConfigError("aggregate: traces have mismatched recording grids");
    for (std::size_t k = 0; k < tr.rows.size(); ++k)
      if (tr.rows[k].t != first.rows[k].t)
        throw ConfigError("aggregate: traces have mismatched recording grids");
  }
  AggregateTrace agg;
  agg.config = first.config;
  agg.metadata = first.metadata;
  agg.comm_rounds = first.summary.comm_rounds;
  agg.T = first.summary.T;
  std::vector<double> buf(traces.size());
  auto col = [&](auto&& get) {
    for (std::size_t s = 0; s < traces.size(); ++s) buf[s] = get(traces[s]);
    return mean_se(buf);
  };
  for (std::size_t k = 0; k < first.rows.size(); ++k) {
    AggregateRow r;
    r.t = first.rows[k].t;
    r.round = first.rows[k].round;
    r.synced = first.rows[k].synced;
    r.V = col([k](const Trace& tr) { return tr.rows[k].V; });
    r.dist_sq = col([k](const Trace& tr) { return tr.rows[k].dist_sq; });
    r.subopt = col([k](const Trace& tr) { return tr.rows[k].subopt; });
    r.grad_sq = col([k](const Trace& tr) { return tr.rows[k].grad_sq; });
    agg.rows.push_back(r);
  }
  agg.bar_x_subopt = col([](const Trace& tr) { return tr.summary.bar_x_subopt; });
  agg.bar_x_subopt_from0 = col([](const Trace& tr) { return tr.summary.bar_x_subopt_from0; });
  agg.final_dist_sq = col([](const Trace& tr) { return tr.summary.final_dist_sq; });
  agg.final_subopt = col([](const Trace& tr) { return tr.summary.final_subopt; });
  for (const auto& tr : traces) agg.seeds.push_back(tr.config.seed);
  return agg;
}

enum class Engine { LocalSgd, MinibatchSgd };

/// One entry per seed: the trace, or the error that stopped the run.
struct SeedOutcome {
  std::uint64_t seed = 0;
  std::optional<Trace> trace;
  std::exception_ptr error;
};

/// Runs one trace per seed on a worker pool. Failures are kept per seed.
template <GradientOracle O>
std::vector<SeedOutcome> run_seed_outcomes(const O& oracle, const Optimum& opt,
                                           const RunConfig& cfg,
                                           std::span<const std::uint64_t> seeds,
                                           Engine engine = Engine::LocalSgd,
                                           std::size_t threads = 0) {
  std::vector<SeedOutcome> out(seeds.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < seeds.size(); i = next++) {
      out[i].seed = seeds[i];
      try {
        RunConfig c = cfg;
        c.seed = seeds[i];
        out[i].trace = engine == Engine::LocalSgd ? run_local_sgd(oracle, opt, c)
                                                  : run_minibatch_sgd(oracle, opt, c);
      } catch (...) {
        out[i].error = std::current_exception();
      }
    }
  };
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, seeds.size());
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t k = 0; k < threads; ++k) pool.emplace_back(worker);
  }
  return out;
}

/// Runs one trace per seed (concurrently); rethrows the first failure in
/// seed-list order.
template <GradientOracle O>
std::vector<Trace> run_seeds(const O& oracle, const Optimum& opt, const RunConfig& cfg,
                             std::span<const std::uint64_t> seeds,
                             Engine engine = Engine::LocalSgd, std::size_t threads = 0) {
  auto outcomes = run_seed_outcomes(oracle, opt, cfg, seeds, engine, threads);
  std::vector<Trace> out;
  out.reserve(outcomes.size());
  for (auto& o : outcomes) {
    if (o.error) std::rethrow_exception(o.error);
    out.push_back(std::move(*o.trace));
  }
  return out;
}

template <GradientOracle O>
AggregateTrace run_replicated(const O& oracle, const Optimum& opt, const RunConfig& cfg,
                              std::span<const std::uint64_t> seeds,
                              Engine engine = Engine::LocalSgd, std::size_t threads = 0) {
  if (seeds.size() < 2) throw ConfigError("run_replicated: need at least two seeds");
  const auto traces = run_seeds(oracle, opt, cfg, seeds, engine, threads);
  return aggregate(traces);
}

inline std::vector<std::uint64_t> seed_range(std::uint64_t first, std::size_t count) {
  std::vector<std::uint64_t> s(count);
  for (std::size_t k = 0; k < count; ++k) s[k] = first + k;
  return s;
}

// ---------------------------------------------------------------------------
// CSV

inline void write_trace_csv(std::ostream& os, const Trace& tr) {
  config_key_values(tr.config).write(os, "# ");
  tr.metadata.write(os, "# ");
  os << "# bar_x_subopt = " << format_double(tr.summary.bar_x_subopt) << '\n';
  os << "# bar_x_subopt_from0 = " << format_double(tr.summary.bar_x_subopt_from0) << '\n';
  os << "t,synced,V_t,dist_sq,subopt,round,grad_sq\n";
  for (const auto& r : tr.rows)
    os << r.t << ',' << (r.synced ? 1 : 0) << ',' << format_double(r.V) << ','
       << format_double(r.dist_sq) << ',' << format_double(r.subopt) << ',' << r.round << ','
       << format_double(r.grad_sq) << '\n';
}

inline void write_aggregate_csv(std::ostream& os, const AggregateTrace& agg) {
  config_key_values(agg.config).write(os, "# ");
  agg.metadata.write(os, "# ");
  os << "# seeds = " << agg.seeds.size() << '\n';
  os << "# bar_x_subopt_mean = " << format_double(agg.bar_x_subopt.mean) << '\n';
  os << "# bar_x_subopt_se = " << format_double(agg.bar_x_subopt.se) << '\n';
  os << "# bar_x_subopt_from0_mean = " << format_double(agg.bar_x_subopt_from0.mean) << '\n';
  os << "# bar_x_subopt_from0_se = " << format_double(agg.bar_x_subopt_from0.se) << '\n';
  os << "t,round,synced,V_mean,V_se,dist_sq_mean,dist_sq_se,subopt_mean,subopt_se,"
        "grad_sq_mean,grad_sq_se\n";
  for (const auto& r : agg.rows)
    os << r.t << ',' << r.round << ',' << (r.synced ? 1 : 0) << ',' << format_double(r.V.mean)
       << ',' << format_double(r.V.se) << ',' << format_double(r.dist_sq.mean) << ','
       << format_double(r.dist_sq.se) << ',' << format_double(r.subopt.mean) << ','
       << format_double(r.subopt.se) << ',' << format_double(r.grad_sq.mean) << ','
       << format_double(r.grad_sq.se) << '\n';
}

}  // namespace localsgd
