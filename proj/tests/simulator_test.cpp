// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <sstream>

#include "localsgd/objective.hpp"
#include "localsgd/quadratic.hpp"
#include "localsgd/simulator.hpp"
#include "localsgd/synthetic.hpp"

using namespace localsgd;

namespace {

struct Fixture {
  Problem p;
  Optimum opt;
};

Fixture logistic(std::size_t M, Regime regime, std::size_t n = 120, std::size_t d = 5,
                 SortOrder sort = SortOrder::None) {
  SyntheticSpec s;
  s.n = n;
  s.d = d;
  s.flip_prob = 0.1;
  s.sort = sort;
  auto ds = std::make_shared<const Dataset>(make_synthetic(s));
  Problem p = make_problem(ds, M, regime, 1.0 / static_cast<double>(n));
  const auto ref = solve_reference(p, 1e-10, {.nesterov = true});
  return {std::move(p), {ref.x_star, ref.f_star}};
}

RunConfig config(const Fixture& f, std::size_t T, std::size_t H, double gamma_times_L,
                 GradientMode mode = GradientMode::Stochastic) {
  RunConfig c;
  c.M = f.p.num_nodes();
  c.T = T;
  c.schedule = SyncSchedule::uniform(T, H);
  c.gamma = gamma_times_L / f.p.L();
  c.regime = f.p.regime();
  c.gradient_mode = mode;
  c.seed = 5;
  c.x0 = DenseVector(f.p.dim());
  c.record.record_every = 1;
  return c;
}

double rel_diff(const DenseVector& a, const DenseVector& b) {
  return std::sqrt(dist_sq(a, b)) / std::max(std::sqrt(norm_sq(b)), 1e-300);
}

}  // namespace

TEST(Schedule, UniformRoundsAreCeiling) {
  for (std::size_t T = 1; T <= 40; ++T)
    for (std::size_t H = 1; H <= 12; ++H) {
      const auto s = SyncSchedule::uniform(T, H);
      EXPECT_EQ(s.rounds(), (T + H - 1) / H);
      EXPECT_EQ(s.T(), T);
      EXPECT_LE(s.max_gap(), H);
    }
  const auto s = SyncSchedule::uniform(10, 4);
  EXPECT_EQ(s.steps(), (std::vector<std::size_t>{4, 8, 10}));
  EXPECT_EQ(SyncSchedule::one_shot(7).steps(), (std::vector<std::size_t>{7}));
}

TEST(Schedule, ExplicitValidation) {
  EXPECT_THROW(SyncSchedule::from_steps({}), ConfigError);
  EXPECT_THROW(SyncSchedule::from_steps({0, 3}), ConfigError);
  EXPECT_THROW(SyncSchedule::from_steps({3, 3}), ConfigError);
  EXPECT_THROW(SyncSchedule::from_steps({2, 9}, 4), ConfigError);
  EXPECT_EQ(SyncSchedule::from_steps({2, 9}).H(), 7u);
  EXPECT_EQ(SyncSchedule::from_steps({2, 9}, 10).H(), 10u);
  EXPECT_THROW(SyncSchedule::uniform(0, 1), ConfigError);
}

TEST(ComputeVt, Definition) {
  const std::vector<DenseVector> same{{1.0, 2.0}, {1.0, 2.0}};
  EXPECT_EQ(compute_Vt(same), 0.0);
  const std::vector<DenseVector> two{{0.0}, {2.0}};
  EXPECT_EQ(compute_Vt(two), 1.0);
  RngStream rng(2, 2);
  std::vector<DenseVector> xs(5, DenseVector(3)), shifted;
  for (auto& x : xs)
    for (auto& v : x) v = rng.next_normal_pair().first;
  const DenseVector c{0.5, -3.0, 2.0};
  for (const auto& x : xs) shifted.push_back(axpy(1.0, c, x));
  EXPECT_NEAR(compute_Vt(shifted), compute_Vt(xs), 1e-13);
  const std::vector<DenseVector> bad{{1.0}, {1.0, 2.0}};
  EXPECT_THROW(compute_Vt(bad), DimensionError);
}

TEST(LocalSgd, NoiseFreeIdenticalStaysTogetherAndIsGd) {
  const auto f = logistic(3, Regime::Identical);
  auto cfg = config(f, 60, 7, 0.5, GradientMode::Full);
  cfg.record.keep_iterates = true;
  const auto tr = run_local_sgd(f.p, f.opt, cfg);
  DenseVector x = cfg.x0;
  for (std::size_t k = 0; k < tr.rows.size(); ++k) {
    EXPECT_EQ(tr.rows[k].V, 0.0);
    if (k > 0) axpy_inplace(-cfg.gamma, full_grad_global(f.p, x), x);
    EXPECT_LE(rel_diff(tr.iterates[k], x), 1e-12) << "t=" << k;
  }
}

TEST(LocalSgd, HEqualsOneMatchesMinibatch) {
  const auto f = logistic(4, Regime::Identical);
  auto cfg = config(f, 200, 1, 0.5);
  cfg.record.keep_iterates = true;
  const auto a = run_local_sgd(f.p, f.opt, cfg);
  const auto b = run_minibatch_sgd(f.p, f.opt, cfg);
  ASSERT_EQ(a.iterates.size(), b.iterates.size());
  for (std::size_t k = 1; k < a.iterates.size(); ++k)
    EXPECT_LE(rel_diff(a.iterates[k], b.iterates[k]), 1e-12) << "t=" << k;
}

TEST(LocalSgd, SingleNodeIsSerialSgdForAnySchedule) {
  const auto f = logistic(1, Regime::Identical);
  auto cfg = config(f, 50, 1, 0.5);
  cfg.record.keep_iterates = true;
  const auto base = run_local_sgd(f.p, f.opt, cfg);
  cfg.schedule = SyncSchedule::from_steps({3, 17, 18, 50});
  const auto other = run_local_sgd(f.p, f.opt, cfg);
  EXPECT_EQ(base.iterates, other.iterates);
}

TEST(LocalSgd, AverageIterateIdentity) {
  const auto f = logistic(4, Regime::Heterogeneous, 120, 5, SortOrder::ByLabel);
  auto cfg = config(f, 80, 6, 0.4);
  std::size_t checked = 0;
  run_local_sgd(f.p, f.opt, cfg, [&](const StepView& v) {
    DenseVector expect = v.xhat_prev;
    axpy_inplace(-cfg.gamma, mean_of(v.grads), expect);
    EXPECT_LE(rel_diff(v.xhat, expect), 1e-12) << "t=" << v.t;
    ++checked;
  });
  EXPECT_EQ(checked, 80u);
}

TEST(LocalSgd, VZeroAtSyncsAndStart) {
  const auto f = logistic(4, Regime::Heterogeneous, 120, 5, SortOrder::ByLabel);
  auto cfg = config(f, 90, 9, 0.5);
  cfg.schedule = SyncSchedule::from_steps({5, 9, 30, 31, 77, 90});
  const auto tr = run_local_sgd(f.p, f.opt, cfg);
  EXPECT_EQ(tr.rows.front().V, 0.0);
  bool saw_positive = false;
  for (const auto& r : tr.rows) {
    if (r.synced) { EXPECT_EQ(r.V, 0.0); }
    EXPECT_GE(r.V, 0.0);
    saw_positive = saw_positive || r.V > 0.0;
  }
  EXPECT_TRUE(saw_positive);
  EXPECT_EQ(tr.summary.comm_rounds, 6u);
}

TEST(LocalSgd, SkipAveragingFaultBreaksSyncInvariant) {
  const auto f = logistic(4, Regime::Heterogeneous, 120, 5, SortOrder::ByLabel);
  auto cfg = config(f, 40, 4, 0.5);
  cfg.fault = FaultInjection::SkipAveraging;
  const auto tr = run_local_sgd(f.p, f.opt, cfg);
  bool violated = false;
  for (const auto& r : tr.rows) violated = violated || (r.synced && r.V > 0.0);
  EXPECT_TRUE(violated);
}

TEST(LocalSgd, ScheduleDeclarationDoesNotMatter) {
  const auto f = logistic(3, Regime::Identical);
  auto cfg = config(f, 30, 5, 0.5);
  const auto a = run_local_sgd(f.p, f.opt, cfg);
  cfg.schedule = SyncSchedule::from_steps(cfg.schedule.steps(), 11);
  const auto b = run_local_sgd(f.p, f.opt, cfg);
  ASSERT_EQ(a.rows.size(), b.rows.size());
  for (std::size_t k = 0; k < a.rows.size(); ++k) {
    EXPECT_EQ(a.rows[k].V, b.rows[k].V);
    EXPECT_EQ(a.rows[k].dist_sq, b.rows[k].dist_sq);
    EXPECT_EQ(a.rows[k].subopt, b.rows[k].subopt);
  }
}

TEST(LocalSgd, RecordingGridAndSummary) {
  const auto f = logistic(2, Regime::Identical);
  auto cfg = config(f, 3000, 7, 0.5);
  cfg.record.record_every = 0;
  const auto tr = run_local_sgd(f.p, f.opt, cfg);
  EXPECT_EQ(cfg.record_every(), 3u);
  for (const auto& r : tr.rows)
    EXPECT_TRUE(r.t % 3 == 0 || r.t % 7 == 0 || r.t == 3000) << r.t;
  EXPECT_EQ(tr.rows.back().t, 3000u);
  EXPECT_TRUE(std::isnan(tr.rows.back().grad_sq));
  EXPECT_EQ(tr.summary.comm_rounds, (3000u + 6) / 7);
  EXPECT_GE(tr.summary.bar_x_subopt, -1e-12);
}

TEST(LocalSgd, ConfigErrors) {
  const auto f = logistic(2, Regime::Identical);
  auto cfg = config(f, 10, 2, 0.5);
  cfg.M = 3;
  EXPECT_THROW(run_local_sgd(f.p, f.opt, cfg), ConfigError);
  cfg = config(f, 10, 2, 0.5);
  cfg.regime = Regime::Heterogeneous;
  EXPECT_THROW(run_local_sgd(f.p, f.opt, cfg), ConfigError);
  cfg = config(f, 10, 2, 0.5);
  cfg.schedule = SyncSchedule::uniform(12, 2);
  EXPECT_THROW(run_local_sgd(f.p, f.opt, cfg), ConfigError);
  cfg = config(f, 10, 2, 0.5);
  cfg.x0 = DenseVector(2);
  EXPECT_THROW(run_local_sgd(f.p, f.opt, cfg), DimensionError);
}

TEST(LocalSgd, DivergenceReportsStepAndNode) {
  const auto q = NoisyQuadratic::spread(3, 1.0, 1.0, 0.0, 2);
  RunConfig cfg;
  cfg.M = 2;
  cfg.T = 2000;
  cfg.schedule = SyncSchedule::uniform(2000, 5);
  cfg.gamma = 3.0;  // |1 - gamma h| = 2 per step
  cfg.x0 = DenseVector{1.0, 1.0, 1.0};
  try {
    run_local_sgd(q, {q.x_star(), 0.0}, cfg);
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_GT(e.step(), 300u);
    EXPECT_LT(e.step(), 400u);
    EXPECT_EQ(e.node(), 0u);
  }
}

TEST(Minibatch, ZeroStepAndFullGradient) {
  const auto f = logistic(3, Regime::Identical);
  auto cfg = config(f, 20, 1, 0.0);
  cfg.record.keep_iterates = true;
  for (const auto& x : run_minibatch_sgd(f.p, f.opt, cfg).iterates) EXPECT_EQ(x, cfg.x0);
  cfg = config(f, 20, 1, 1.0, GradientMode::Full);
  cfg.record.keep_iterates = true;
  const auto tr = run_minibatch_sgd(f.p, f.opt, cfg);
  DenseVector x = cfg.x0;
  for (std::size_t k = 1; k < tr.iterates.size(); ++k) {
    axpy_inplace(-cfg.gamma, full_grad_global(f.p, x), x);
    EXPECT_LE(rel_diff(tr.iterates[k], x), 1e-12);
  }
}

TEST(Replicated, SameSeedHasZeroSpreadAndFullGradientToo) {
  const auto f = logistic(2, Regime::Identical);
  auto cfg = config(f, 30, 3, 0.5);
  const std::vector<std::uint64_t> same{4, 4, 4};
  const auto agg = run_replicated(f.p, f.opt, cfg, same);
  for (const auto& r : agg.rows) EXPECT_EQ(r.dist_sq.se, 0.0);
  cfg.gradient_mode = GradientMode::Full;
  const auto seeds = seed_range(1, 5);
  const auto full = run_replicated(f.p, f.opt, cfg, seeds);
  for (const auto& r : full.rows) EXPECT_EQ(r.subopt.se, 0.0);
  EXPECT_THROW(run_replicated(f.p, f.opt, cfg, std::span(seeds).first(1)), ConfigError);
}

TEST(Replicated, DeterministicAcrossThreadCounts) {
  const auto f = logistic(3, Regime::Identical);
  const auto cfg = config(f, 60, 4, 0.5);
  const auto seeds = seed_range(10, 8);
  const auto a = run_replicated(f.p, f.opt, cfg, seeds, Engine::LocalSgd, 1);
  const auto b = run_replicated(f.p, f.opt, cfg, seeds, Engine::LocalSgd, 4);
  std::ostringstream sa, sb;
  write_aggregate_csv(sa, a);
  write_aggregate_csv(sb, b);
  EXPECT_EQ(sa.str(), sb.str());
}

TEST(Replicated, MismatchedGridsRejected) {
  const auto f = logistic(2, Regime::Identical);
  auto cfg = config(f, 20, 2, 0.5);
  std::vector<Trace> traces{run_local_sgd(f.p, f.opt, cfg)};
  cfg.record.record_every = 5;
  cfg.record.record_sync_steps = false;
  traces.push_back(run_local_sgd(f.p, f.opt, cfg));
  EXPECT_THROW(aggregate(traces), ConfigError);
}

TEST(Replicated, DeviationBoundOnNoisyQuadratic) {
  const auto q = NoisyQuadratic::spread(4, 0.5, 1.0, 1.0, 4);
  RunConfig cfg;
  cfg.M = 4;
  cfg.T = 200;
  cfg.schedule = SyncSchedule::uniform(200, 8);
  cfg.gamma = 1.0 / (2.0 * q.smoothness());
  cfg.x0 = DenseVector(4);
  cfg.record.record_every = 1;
  const auto seeds = seed_range(1, 60);
  const auto agg = run_replicated(q, {q.x_star(), 0.0}, cfg, seeds);
  const double rhs = 7 * cfg.gamma * cfg.gamma * 1.0;
  for (const auto& r : agg.rows) EXPECT_LE(r.V.mean, rhs + 3 * r.V.se) << "t=" << r.t;
}

TEST(TraceCsv, HeaderAndColumns) {
  const auto f = logistic(2, Regime::Identical);
  auto tr = run_local_sgd(f.p, f.opt, config(f, 10, 2, 0.5));
  tr.metadata.set("intercept", "none");
  std::ostringstream os;
  write_trace_csv(os, tr);
  const std::string s = os.str();
  EXPECT_NE(s.find("# gamma = "), std::string::npos);
  EXPECT_NE(s.find("# intercept = none"), std::string::npos);
  EXPECT_NE(s.find("t,synced,V_t,dist_sq,subopt,round,grad_sq\n0,0,0,"), std::string::npos);
}

TEST(MeanSe, KnownValues) {
  const std::vector<double> xs{1.0, 2.0, 3.0, 4.0};
  const auto m = mean_se(xs);
  EXPECT_EQ(m.mean, 2.5);
  EXPECT_NEAR(m.se, std::sqrt(5.0 / 3.0 / 4.0), 1e-15);
}
