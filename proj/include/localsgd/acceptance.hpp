// SPDX-License-Identifier: Apache-2.0
//
// The acceptance criteria as executable checks. Each returns PASS, FAIL or
// SKIP with a one-line explanation; runtimes are compared to their budgets.
#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "localsgd/dataio.hpp"
#include "localsgd/objective.hpp"
#include "localsgd/quadratic.hpp"
#include "localsgd/simulator.hpp"
#include "localsgd/synthetic.hpp"
#include "localsgd/theory.hpp"

namespace localsgd::acceptance {

enum class Status { Pass, Fail, Skip };

inline const char* to_string(Status s) {
  switch (s) {
    case Status::Pass: return "PASS";
    case Status::Fail: return "FAIL";
    case Status::Skip: return "SKIP";
  }
  return "?";
}

struct Result {
  int id = 0;
  std::string name;
  Status status = Status::Fail;
  std::string details;
  double seconds = 0.0;
  double budget_seconds = 0.0;
};

struct Options {
  std::size_t seeds = 200;        // Monte-Carlo replicates for the bound checks
  std::size_t protocol_seeds = 20;
  bool inject_fault = false;      // skip averaging at sync steps
  std::size_t threads = 0;
  std::filesystem::path data_dir = "data";
  std::vector<int> only;          // empty: all criteria
};

struct Outcome {
  Status status = Status::Fail;
  std::string details;
};

inline Outcome pass(std::string d) { return {Status::Pass, std::move(d)}; }
inline Outcome fail(std::string d) { return {Status::Fail, std::move(d)}; }
inline Outcome check(bool ok, std::string d) { return {ok ? Status::Pass : Status::Fail, std::move(d)}; }

namespace detail {

inline std::shared_ptr<const Dataset> synthetic(std::size_t n, std::size_t d, std::uint64_t seed,
                                                SortOrder sort = SortOrder::None) {
  SyntheticSpec s;
  s.n = n;
  s.d = d;
  s.seed = seed;
  s.sort = sort;
  return std::make_shared<const Dataset>(make_synthetic(s));
}

inline Optimum optimum_of(const ReferenceSolution& r) { return {r.x_star, r.f_star}; }

inline RunConfig base_config(const Options& o, std::size_t M, std::size_t T, std::size_t H,
                             double gamma, std::size_t dim) {
  RunConfig c;
  c.M = M;
  c.T = T;
  c.schedule = SyncSchedule::uniform(T, H);
  c.gamma = gamma;
  c.x0 = DenseVector(dim);
  if (o.inject_fault) c.fault = FaultInjection::SkipAveraging;
  return c;
}

inline double rel_diff(const DenseVector& a, const DenseVector& b) {
  const double diff = std::sqrt(dist_sq(a, b));
  if (diff == 0.0) return 0.0;
  return diff / std::max(std::sqrt(norm_sq(a)), std::sqrt(norm_sq(b)));
}

}  // namespace detail

// 1. Analytic vs central-difference sample gradients.
inline Outcome gradient_correctness(const Options&) {
  const auto data = detail::synthetic(1000, 20, 11);
  const Problem p = make_problem(data, 1, Regime::Identical, default_lambda(*data));
  RngStream rng(2024, 1);
  const double eps = 1e-6;
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const std::size_t i = rng.draw_index(data->size());
    DenseVector x(p.dim());
    for (std::size_t j = 0; j < p.dim(); ++j) x[j] = rng.next_normal_pair().first;
    const auto& s = data->samples[i];
    auto f = [&](const DenseVector& z) {
      return sample_data_loss(s, z) + 0.5 * p.lambda() * norm_sq(z);
    };
    const DenseVector g = sample_grad(p, i, x);
    DenseVector fd(p.dim());
    for (std::size_t j = 0; j < p.dim(); ++j) {
      DenseVector xp = x, xm = x;
      xp[j] += eps;
      xm[j] -= eps;
      fd[j] = (f(xp) - f(xm)) / (2.0 * eps);
    }
    worst = std::max(worst, detail::rel_diff(g, fd));
  }
  return check(worst <= 1e-6, "max relative error " + format_double(worst) + " (tol 1e-6)");
}

// 2. Local SGD with H = 1 reproduces minibatch SGD step for step.
inline Outcome engine_equivalence(const Options& o) {
  const auto data = detail::synthetic(1000, 20, 12);
  const Problem p = make_problem(data, 4, Regime::Identical, default_lambda(*data));
  const auto ref = solve_reference(p, 1e-10, {.nesterov = true});
  RunConfig c = detail::base_config(o, 4, 500, 1, 1.0 / p.L(), p.dim());
  c.record.record_every = 1;
  c.record.track_subopt = false;
  c.record.keep_iterates = true;
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    c.seed = seed;
    const Trace a = run_local_sgd(p, detail::optimum_of(ref), c);
    const Trace b = run_minibatch_sgd(p, detail::optimum_of(ref), c);
    if (a.iterates.size() != b.iterates.size()) return fail("recording grids differ");
    for (std::size_t k = 0; k < a.iterates.size(); ++k)
      worst = std::max(worst, detail::rel_diff(a.iterates[k], b.iterates[k]));
  }
  return check(worst <= 1e-12,
               "max per-step relative difference " + format_double(worst) + " (tol 1e-12)");
}

// 3. V_t is exactly zero at every synchronization over random schedules.
inline Outcome sync_invariant(const Options& o) {
  const auto iid = detail::synthetic(400, 10, 13);
  const auto sorted = detail::synthetic(400, 10, 13, SortOrder::ByLabel);
  RngStream rng(3, 3);
  std::size_t checked = 0, nonzero = 0;
  for (int k = 0; k < 100; ++k) {
    const std::size_t M = 1 + rng.draw_index(8);
    const std::size_t T = 1 + rng.draw_index(300);
    const Regime regime = rng.draw_index(2) ? Regime::Heterogeneous : Regime::Identical;
    std::vector<std::size_t> steps;
    const double density = 0.02 + 0.5 * rng.next_uniform();
    for (std::size_t t = 1; t < T; ++t)
      if (rng.next_uniform() < density) steps.push_back(t);
    steps.push_back(T);
    const auto& data = regime == Regime::Identical ? iid : sorted;
    const Problem p = make_problem(data, M, regime, default_lambda(*data));
    RunConfig c = detail::base_config(o, M, T, 1, 0.5 / p.L(), p.dim());
    c.schedule = SyncSchedule::from_steps(steps);
    c.regime = regime;
    c.batch = 1 + rng.draw_index(3);
    c.seed = 100 + static_cast<std::uint64_t>(k);
    c.record.record_every = T;
    c.record.track_subopt = false;
    const Trace tr = run_local_sgd(p, Optimum{DenseVector(p.dim()), 0.0}, c);
    std::size_t seen = 0;
    for (const auto& r : tr.rows) {
      if (r.t != 0 && !r.synced) continue;
      ++checked;
      ++seen;
      if (r.V != 0.0) ++nonzero;
    }
    if (seen != steps.size() + 1) return fail("schedule " + std::to_string(k) + " skipped syncs");
  }
  return check(nonzero == 0, std::to_string(checked) + " sync timestamps over 100 schedules, " +
                                 std::to_string(nonzero) + " with V_t != 0");
}

// 4. Iterate deviation bound with exactly known noise.
inline Outcome iterate_deviation(const Options& o) {
  const auto q = NoisyQuadratic::spread(10, 0.1, 1.0, 1.0, 4);
  const double L = q.smoothness(), gamma = 1.0 / (2.0 * L);
  const auto seeds = seed_range(1, o.seeds);
  std::string d;
  bool ok = true;
  for (std::size_t H : {2, 8, 32}) {
    RunConfig c = detail::base_config(o, 4, 640, H, gamma, q.dim());
    c.record.record_every = 1;
    c.record.track_subopt = false;
    const auto agg = run_replicated(q, Optimum{q.x_star(), 0.0}, c, seeds, Engine::LocalSgd,
                                    o.threads);
    const Verdict v = check_iterate_deviation(agg, L, gamma, H, q.sigma_sq());
    ok = ok && v.holds;
    d += (d.empty() ? "" : "; ") + std::string("H=") + std::to_string(H) +
         (v.holds ? " holds" : " VIOLATED") + " slack " + format_double(v.slack_ratio);
  }
  return check(ok, d);
}

// 5. Strongly convex bound under uniformly bounded variance.
inline Outcome sc_identical_ubv(const Options& o) {
  const auto q = NoisyQuadratic::spread(10, 0.1, 1.0, 1.0, 4);
  const double L = q.smoothness(), gamma = 1.0 / (4.0 * L);
  const auto seeds = seed_range(1, o.seeds);
  std::string d;
  bool ok = true;
  for (std::size_t H : {1, 4, 16}) {
    RunConfig c = detail::base_config(o, 4, 5000, H, gamma, q.dim());
    c.record.record_every = 1;
    c.record.track_subopt = false;
    const auto agg = run_replicated(q, Optimum{q.x_star(), 0.0}, c, seeds, Engine::LocalSgd,
                                    o.threads);
    BoundInputs b;
    b.L = L;
    b.mu = q.strong_convexity();
    b.gamma = gamma;
    b.T = 5000;
    b.H = H;
    b.M = 4;
    b.sigma_sq = q.sigma_sq();
    b.r0_sq = dist_sq(c.x0, q.x_star());
    const Verdict v = check_bound(bound_sc_identical_ubv(b), agg);
    ok = ok && v.holds;
    d += (d.empty() ? "" : "; ") + std::string("H=") + std::to_string(H) +
         (v.holds ? " holds" : " VIOLATED") + " over " + std::to_string(v.compared) +
         " steps, slack " + format_double(v.slack_ratio);
  }
  return check(ok, d);
}

// 6. Finite-sum bounds on logistic regression with exact sigma_opt^2.
inline Outcome finite_sum_identical(const Options& o) {
  const auto data = detail::synthetic(1000, 20, 16);
  const std::size_t M = 4, H = 4, T = 2000;
  const Problem p = make_problem(data, M, Regime::Identical, default_lambda(*data));
  const auto ref = solve_reference(p, 1e-10, {.nesterov = true});
  const auto var = measure_variances(p, ref, 1);
  const auto seeds = seed_range(1, o.seeds);
  BoundInputs b;
  b.L = p.L();
  b.mu = p.mu();
  b.T = T;
  b.H = H;
  b.M = M;
  b.sigma_opt_sq = var.sigma_opt_sq;
  b.r0_sq = norm_sq(ref.x_star);

  const auto g5 = plan_gamma(GammaRule::ScIidFs, {p.L(), p.mu(), M, T, H, static_cast<double>(H)});
  RunConfig c = detail::base_config(o, M, T, H, g5.gamma, p.dim());
  c.record.track_subopt = false;
  const auto agg5 = run_replicated(p, detail::optimum_of(ref), c, seeds, Engine::LocalSgd,
                                   o.threads);
  b.gamma = g5.gamma;
  const Verdict v5 = check_bound(bound_sc_identical_fs(b, c.schedule.steps()), agg5);

  const auto g6 = plan_gamma(GammaRule::WcIidFs, {p.L(), p.mu(), M, T, H, 0.0});
  c.gamma = g6.gamma;
  const auto agg6 = run_replicated(p, detail::optimum_of(ref), c, seeds, Engine::LocalSgd,
                                   o.threads);
  b.gamma = g6.gamma;
  const Verdict v6 = check_bound(bound_wc_identical_fs(b), agg6);

  return check(v5.holds && v6.holds,
               std::string("sigma_opt_sq ") + format_double(var.sigma_opt_sq) + "; sync-point " +
                   (v5.holds ? "holds" : "VIOLATED") + " at " + std::to_string(v5.compared) +
                   " syncs, slack " + format_double(v5.slack_ratio) + "; averaged-iterate " +
                   (v6.holds ? "holds" : "VIOLATED") + " at T, slack " +
                   format_double(v6.slack_ratio));
}

// 7. Heterogeneous bound, plus the interpolation case under one-shot averaging.
inline Outcome heterogeneous(const Options& o) {
  const auto data = detail::synthetic(1000, 20, 17, SortOrder::ByLabel);
  const std::size_t M = 4, T = 4096;
  const Problem p = make_problem(data, M, Regime::Heterogeneous, default_lambda(*data));
  const auto ref = solve_reference(p, 1e-10, {.nesterov = true});
  const auto var = measure_variances(p, ref, 1);
  if (!(var.sigma_dif_sq > 0.0)) return fail("sorted data did not produce sigma_dif_sq > 0");
  const std::size_t H = plan_H(HRule::WcHeterogeneous, T, M);
  const auto g = plan_gamma(GammaRule::WcHet, {p.L(), p.mu(), M, T, H, 0.0});
  RunConfig c = detail::base_config(o, M, T, H, g.gamma, p.dim());
  c.regime = Regime::Heterogeneous;
  c.record.track_subopt = false;
  const auto agg = run_replicated(p, detail::optimum_of(ref), c, seed_range(1, o.seeds),
                                  Engine::LocalSgd, o.threads);
  BoundInputs b;
  b.L = p.L();
  b.mu = p.mu();
  b.gamma = g.gamma;
  b.T = T;
  b.H = H;
  b.M = M;
  b.sigma_dif_sq = var.sigma_dif_sq;
  b.r0_sq = norm_sq(ref.x_star);
  const Verdict v = check_bound(bound_wc_heterogeneous(b), agg);

  // Interpolation: every component shares the minimizer, so sigma_dif = 0.
  const auto idata = std::make_shared<const Dataset>(make_interpolating(400, 10, 7));
  const Problem ip = make_problem(idata, M, Regime::Heterogeneous, default_lambda(*idata));
  const auto iref = solve_reference(ip, 1e-10, {.nesterov = true});
  const auto ivar = measure_variances(ip, iref, 1);
  const std::size_t iT = 1000;
  const double ig = 1.0 / (8.0 * ip.L() * static_cast<double>(iT - 1));
  RunConfig ic = detail::base_config(o, M, iT, iT, ig, ip.dim());
  ic.regime = Regime::Heterogeneous;
  ic.record.track_subopt = false;
  const auto iagg = run_replicated(ip, detail::optimum_of(iref), ic, seed_range(1, 4),
                                   Engine::LocalSgd, o.threads);
  const double r0 = norm_sq(iref.x_star);
  const double limit = 4.0 * r0 / (ig * static_cast<double>(iT)) * 1.01;
  const double isub = iagg.bar_x_subopt_from0.mean;
  const bool iok = ivar.sigma_dif_sq <= 1e-12 && isub <= limit;

  return check(v.holds && iok,
               "H=" + std::to_string(H) + " gamma=" + format_double(g.gamma) + " sigma_dif_sq " +
                   format_double(var.sigma_dif_sq) + ": " + (v.holds ? "holds" : "VIOLATED") +
                   ", slack " + format_double(v.slack_ratio) + "; interpolation sigma_dif_sq " +
                   format_double(ivar.sigma_dif_sq) + ", one-shot subopt " +
                   format_double(isub) + " vs limit " + format_double(limit));
}

// 8. Variance identities.
inline Outcome variance_identities(const Options&) {
  const auto data = detail::synthetic(1000, 20, 18, SortOrder::ByLabel);
  const Problem p1 = make_problem(data, 1, Regime::Heterogeneous, default_lambda(*data));
  const auto r1 = solve_reference(p1, 1e-10, {.nesterov = true});
  double worst1 = 0.0;
  for (std::size_t batch : {1, 4, 16}) {
    const auto v = measure_variances(p1, r1, batch);
    worst1 = std::max(worst1, std::abs(v.sigma_dif_sq - v.sigma_opt_sq) /
                                  std::max(1.0, std::abs(v.sigma_opt_sq)));
  }
  const Problem p4 = make_problem(data, 4, Regime::Heterogeneous, default_lambda(*data));
  const auto r4 = solve_reference(p4, 1e-10, {.nesterov = true});
  const auto v4 = measure_variances(p4, r4, 1, Sampling::Exhaustive);
  double direct = 0.0;
  for (std::size_t m = 0; m < 4; ++m) direct += norm_sq(full_grad(p4, m, r4.x_star));
  direct /= 4.0;
  const double worst4 = std::abs(v4.sigma_dif_sq - direct) / std::max(1.0, std::abs(direct));
  return check(worst1 <= 1e-12 && worst4 <= 1e-10,
               "M=1 gap " + format_double(worst1) + " (tol 1e-12); full-batch gap " +
                   format_double(worst4) + " (tol 1e-10), sigma_dif_sq " +
                   format_double(v4.sigma_dif_sq));
}

// 9. Planner arithmetic and stepsize admissibility.
inline Outcome planner_arithmetic(const Options&) {
  std::string d;
  bool ok = plan_H(HRule::WcHeterogeneous, 256, 4) == 2;
  if (!ok) d += "plan_H(wc-het, 256, 4) != 2; ";
  for (double kappa : {1.0, 7.5, 40.0})
    for (std::size_t M : {1, 3, 8}) {
      const double km = kappa * static_cast<double>(M);
      for (std::size_t T = 1; static_cast<double>(T) < km; ++T)
        if (plan_H(HRule::ScIdentical, T, M, kappa) != 1) {
          ok = false;
          d += "plan_H(sc-iid) != 1 at T=" + std::to_string(T) + "; ";
        }
      // At T = kappa M the floor reaches 1.
      if (km == std::floor(km) && plan_H(HRule::ScIdentical, static_cast<std::size_t>(km), M,
                                         kappa) != 2) {
        ok = false;
        d += "plan_H(sc-iid) != 2 at T=kappa*M; ";
      }
    }
  std::size_t evaluated = 0, bad = 0;
  const GammaRule rules[] = {GammaRule::ScIidUbv, GammaRule::WcIidUbv, GammaRule::ScIidFs, GammaRule::WcIidFs,
                             GammaRule::WcHet};
  for (GammaRule rule : rules)
    for (double L : {0.5, 2.0, 10.0})
      for (double kappa : {3.0, 100.0})
        for (std::size_t M : {2, 8})
          for (std::size_t T : {1000, 100000})
            for (std::size_t H : {1, 4}) {
              GammaRequest q{L, L / kappa, M, T, H, static_cast<double>(H) + 1.0};
              GammaPlan plan;
              try {
                plan = plan_gamma(rule, q);
              } catch (const PreconditionError&) {
                continue;
              }
              BoundInputs b;
              b.L = L;
              b.mu = q.mu;
              b.gamma = plan.gamma;
              b.T = T;
              b.H = H;
              b.M = M;
              b.sigma_sq = b.sigma_opt_sq = b.sigma_dif_sq = 1.0;
              b.r0_sq = 1.0;
              ++evaluated;
              if (precondition_violation(plan.target, b)) ++bad;
            }
  if (evaluated < 100) ok = false;
  ok = ok && bad == 0;
  return check(ok, d + std::to_string(evaluated) + " planner outputs checked, " +
                       std::to_string(bad) + " inadmissible");
}

struct PlateauCheck {
  bool nonincreasing = true;
  double plateau = 0.0;
  std::string worst;
};

/// Splits the rows after `from_round` into windows; every window mean must
/// stay within 3 SE of the previous one. The plateau is the last window.
inline PlateauCheck plateau_check(const AggregateTrace& agg, std::size_t from_round,
                                  std::size_t windows = 10) {
  std::vector<const AggregateRow*> rows;
  for (const auto& r : agg.rows)
    if (r.round >= from_round) rows.push_back(&r);
  PlateauCheck pc;
  if (rows.size() < windows) {
    pc.nonincreasing = false;
    pc.worst = "too few rows after round " + std::to_string(from_round);
    return pc;
  }
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t w = 0; w < windows; ++w) {
    const std::size_t lo = w * rows.size() / windows, hi = (w + 1) * rows.size() / windows;
    double mean = 0.0, se = 0.0;
    for (std::size_t k = lo; k < hi; ++k) {
      mean += rows[k]->dist_sq.mean;
      se = std::max(se, rows[k]->dist_sq.se);
    }
    mean /= static_cast<double>(hi - lo);
    if (mean > prev + 3.0 * se) {
      pc.nonincreasing = false;
      pc.worst = "window " + std::to_string(w) + " rose to " + format_double(mean) + " from " +
                 format_double(prev);
    }
    prev = mean;
    pc.plateau = mean;
  }
  return pc;
}

// 10. Identical-data protocol on a real dataset.
inline Outcome protocol_reproduction(const Problem& p, const ReferenceSolution& ref,
                                     const Options& o, std::size_t rounds_at_H64 = 400) {
  const std::size_t M = p.num_nodes();
  const std::size_t T = 64 * rounds_at_H64;
  const auto seeds = seed_range(1, o.protocol_seeds);
  bool ok = true;
  std::string d;
  for (std::size_t H : {1, 4, 16, 64}) {
    double plateau[2] = {0.0, 0.0};
    int k = 0;
    for (double c : {1.0, 0.05}) {
      RunConfig cfg = detail::base_config(o, M, T, H, c / p.L(), p.dim());
      cfg.record.record_every = T;  // sync steps only
      cfg.record.track_subopt = false;
      const auto agg = run_replicated(p, detail::optimum_of(ref), cfg, seeds, Engine::LocalSgd,
                                      o.threads);
      const auto pc = plateau_check(agg, 50);
      plateau[k++] = pc.plateau;
      if (!pc.nonincreasing) {
        ok = false;
        d += "H=" + std::to_string(H) + " gamma=" + format_double(c) + "/L: " + pc.worst + "; ";
      }
    }
    if (!(plateau[0] > plateau[1])) ok = false;
    d += "H=" + std::to_string(H) + " plateaus " + format_double(plateau[0]) + " vs " +
         format_double(plateau[1]) + "; ";
  }
  return check(ok, d);
}

inline Outcome protocol_reproduction(const Options& o) {
  const auto manifest_path = o.data_dir / "manifest.txt";
  std::optional<ManifestEntry> entry;
  if (std::filesystem::exists(manifest_path)) {
    std::ifstream in(manifest_path);
    for (auto& e : parse_manifest(in))
      if (e.name == "a9a") entry = e;
  }
  if (!entry || !std::filesystem::exists(o.data_dir / entry->path))
    return {Status::Skip, "a9a not found under " + o.data_dir.string() +
                              " (see data/README.md); protocol check skipped"};
  auto data = std::make_shared<const Dataset>(load_verified(*entry, o.data_dir));
  const Problem p = make_problem(data, 20, Regime::Identical, default_lambda(*data));
  const auto ref = solve_reference(p, 1e-8, {.nesterov = true});
  return protocol_reproduction(p, ref, o);
}

// 11. Heterogeneous local GD: fewer rounds to moderate accuracy for larger H.
inline Outcome local_gd_tradeoff(const Options& o) {
  const auto data = detail::synthetic(1000, 20, 21, SortOrder::ByLabel);
  const std::size_t M = 4, T = 16 * 400;
  const Problem p = make_problem(data, M, Regime::Heterogeneous, default_lambda(*data));
  const auto ref = solve_reference(p, 1e-10, {.nesterov = true});
  const std::vector<std::size_t> Hs{1, 2, 4, 8, 16};
  std::vector<AggregateTrace> runs;
  for (std::size_t H : Hs) {
    RunConfig c = detail::base_config(o, M, T, H, 1.0 / p.L(), p.dim());
    c.regime = Regime::Heterogeneous;
    c.gradient_mode = GradientMode::Full;
    c.record.record_every = T;
    runs.push_back(run_replicated(p, detail::optimum_of(ref), c, seed_range(1, 2),
                                  Engine::LocalSgd, o.threads));
  }
  const double level = runs.back().final_subopt.mean;
  const double target = 10.0 * level;
  if (!(level > 0.0)) return fail("H=16 reached f* exactly; no neighborhood to compare against");
  std::vector<std::size_t> rounds;
  for (const auto& agg : runs) {
    std::size_t r = std::numeric_limits<std::size_t>::max();
    for (const auto& row : agg.rows)
      if (row.subopt.mean <= target) {
        r = row.round;
        break;
      }
    rounds.push_back(r);
  }
  bool ok = true;
  std::string d = "target " + format_double(target) + ", rounds:";
  for (std::size_t k = 0; k < Hs.size(); ++k) {
    d += " H=" + std::to_string(Hs[k]) + "->" +
         (rounds[k] == std::numeric_limits<std::size_t>::max() ? std::string("never")
                                                               : std::to_string(rounds[k]));
    if (k > 0 && rounds[k] > rounds[k - 1]) ok = false;
  }
  return check(ok, d);
}

struct Criterion {
  int id;
  const char* name;
  double budget_seconds;
  std::function<Outcome(const Options&)> run;
};

inline std::vector<Criterion> criteria() {
  return {
      {1, "gradient correctness", 1.0, gradient_correctness},
      {2, "engine equivalence H=1 vs minibatch", 5.0, engine_equivalence},
      {3, "V_t == 0 at synchronization", 10.0, sync_invariant},
      {4, "iterate deviation bound", 120.0, iterate_deviation},
      {5, "strongly convex bound, bounded variance", 180.0, sc_identical_ubv},
      {6, "finite-sum bounds, identical data", 300.0, finite_sum_identical},
      {7, "heterogeneous bound and interpolation", 300.0, heterogeneous},
      {8, "variance identities", 60.0, variance_identities},
      {9, "planner arithmetic", 1.0, planner_arithmetic},
      {10, "a9a protocol reproduction", 600.0,
       [](const Options& o) { return protocol_reproduction(o); }},
      {11, "heterogeneous local GD trade-off", 120.0, local_gd_tradeoff},
  };
}

/// Runs the selected criteria in order, streaming one line per result.
inline std::vector<Result> run_all(const Options& o, std::ostream& log) {
  std::vector<Result> out;
  for (const auto& c : criteria()) {
    if (!o.only.empty() && std::find(o.only.begin(), o.only.end(), c.id) == o.only.end())
      continue;
    Result r;
    r.id = c.id;
    r.name = c.name;
    r.budget_seconds = c.budget_seconds;
    const auto start = std::chrono::steady_clock::now();
    Outcome oc;
    try {
      oc = c.run(o);
    } catch (const std::exception& e) {
      oc = fail(std::string("error: ") + e.what());
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    r.status = oc.status;
    r.details = oc.details;
    if (r.status == Status::Pass && r.seconds > r.budget_seconds) {
      r.status = Status::Fail;
      r.details += "; runtime over budget";
    }
    log << to_string(r.status) << " C" << r.id << " " << r.name << " [" << std::fixed
        << std::setprecision(2) << r.seconds << "s / " << r.budget_seconds << "s] "
        << std::defaultfloat << r.details << std::endl;
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace localsgd::acceptance
