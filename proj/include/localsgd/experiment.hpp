// SPDX-License-Identifier: Apache-2.0
//
// Experiment orchestration behind the command-line tool: configuration,
// dataset resolution, the variance sweep and the per-H run sweep with bound
// verdicts. All files of one report are written by the calling thread after
// the replicated runs finish.
#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "localsgd/dataio.hpp"
#include "localsgd/objective.hpp"
#include "localsgd/simulator.hpp"
#include "localsgd/synthetic.hpp"
#include "localsgd/textio.hpp"
#include "localsgd/theory.hpp"

namespace localsgd {

namespace fs = std::filesystem;

inline constexpr const char* kDataDirEnv = "LOCALSGD_DATA_DIR";

struct ExperimentConfig {
  std::string dataset = "synthetic";
  std::string data_dir;  // empty: $LOCALSGD_DATA_DIR, then "data"
  std::string manifest;  // empty: <data_dir>/manifest.txt
  std::size_t dim = 0;   // upward override of the data dimension
  std::vector<std::size_t> Ms{4};
  Regime regime = Regime::Identical;
  GradientMode gradient_mode = GradientMode::Stochastic;
  std::vector<std::string> batches{"1"};  // integers or "full"
  std::optional<double> lambda;           // default 1/n
  std::string gamma = "1/L";
  std::string schedule = "uniform";  // uniform | one-shot | explicit:t1,t2,...
  std::vector<std::string> H{"1"};    // integers or plan:<rule>
  std::size_t T = 1000;
  std::vector<std::uint64_t> seeds = seed_range(1, 20);
  std::size_t record_every = 0;
  bool track_subopt = true;
  std::string out_dir = "out";
  double ref_tol = 1e-10;
  bool nesterov = true;
  std::optional<double> t_param;
  std::size_t threads = 0;
  bool baseline = true;
};

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

inline std::uint64_t parse_u64(std::string_view s, const std::string& what) {
  const std::string t = trim(s);
  if (t.empty() || t.find_first_not_of("0123456789") != std::string::npos)
    throw ConfigError(what + ": expected a non-negative integer, got '" + t + "'");
  try {
    return std::stoull(t);
  } catch (const std::exception&) {
    throw ConfigError(what + ": integer out of range '" + t + "'");
  }
}

inline std::vector<std::string> parse_list(std::string_view s) {
  std::vector<std::string> out;
  for (const auto& part : split(s, ',')) {
    const std::string t = trim(part);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

inline bool parse_bool(std::string_view s, const std::string& what) {
  const std::string t = trim(s);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw ConfigError(what + ": expected a boolean, got '" + t + "'");
}

inline double parse_number(std::string_view s, const std::string& what) {
  try {
    return parse_double(trim(s));
  } catch (const ParseError&) {
    throw ConfigError(what + ": expected a number, got '" + std::string(s) + "'");
  }
}

}  // namespace detail

inline std::vector<std::size_t> parse_size_list(std::string_view s, const std::string& what) {
  std::vector<std::size_t> out;
  for (const auto& item : detail::parse_list(s)) out.push_back(detail::parse_u64(item, what));
  if (out.empty()) throw ConfigError(what + ": empty list");
  return out;
}

/// "1-200", "3,5,9", or a mix such as "1-4,10".
inline std::vector<std::uint64_t> parse_seed_list(std::string_view s) {
  std::vector<std::uint64_t> out;
  for (const auto& item : detail::parse_list(s)) {
    const auto dash = item.find('-');
    if (dash == std::string::npos) {
      out.push_back(detail::parse_u64(item, "seeds"));
      continue;
    }
    const auto lo = detail::parse_u64(item.substr(0, dash), "seeds");
    const auto hi = detail::parse_u64(item.substr(dash + 1), "seeds");
    if (hi < lo) throw ConfigError("seeds: empty range '" + item + "'");
    for (auto k = lo; k <= hi; ++k) out.push_back(k);
  }
  if (out.empty()) throw ConfigError("seeds: empty list");
  return out;
}

/// Applies one `key = value` setting. Unknown keys are errors.
inline void apply_setting(ExperimentConfig& c, const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  if (key == "dataset") c.dataset = v;
  else if (key == "data_dir") c.data_dir = v;
  else if (key == "manifest") c.manifest = v;
  else if (key == "dim") c.dim = detail::parse_u64(v, key);
  else if (key == "M") c.Ms = parse_size_list(v, key);
  else if (key == "regime") c.regime = parse_regime(v);
  else if (key == "gradient_mode") c.gradient_mode = parse_gradient_mode(v);
  else if (key == "batch") {
    c.batches = detail::parse_list(v);
    for (const auto& b : c.batches)
      if (b != "full" && detail::parse_u64(b, key) == 0) throw ConfigError("batch must be >= 1");
  } else if (key == "lambda") {
    if (v == "auto" || v == "1/n") c.lambda.reset();
    else c.lambda = detail::parse_number(v, key);
  } else if (key == "gamma") c.gamma = v;
  else if (key == "schedule") c.schedule = v;
  else if (key == "H") c.H = detail::parse_list(v);
  else if (key == "T") c.T = detail::parse_u64(v, key);
  else if (key == "seeds") c.seeds = parse_seed_list(v);
  else if (key == "record_every") c.record_every = detail::parse_u64(v, key);
  else if (key == "track_subopt") c.track_subopt = detail::parse_bool(v, key);
  else if (key == "out" || key == "out_dir") c.out_dir = v;
  else if (key == "ref_tol") c.ref_tol = detail::parse_number(v, key);
  else if (key == "nesterov") c.nesterov = detail::parse_bool(v, key);
  else if (key == "t_param") c.t_param = detail::parse_number(v, key);
  else if (key == "threads") c.threads = detail::parse_u64(v, key);
  else if (key == "baseline") c.baseline = detail::parse_bool(v, key);
  else throw ConfigError("unknown setting '" + key + "'");
}

/// Reads a flat `key = value` file. Keys before any section header and in
/// `[common]` apply to every command; keys in `[<section>]` only to that one.
inline void load_config_file(const fs::path& path, std::string_view section,
                             ExperimentConfig& c) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::string line, current;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#' || t.front() == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                                             ": malformed section header");
      current = trim(std::string_view(t).substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    if (!current.empty() && current != "common" && current != section) continue;
    try {
      apply_setting(c, trim(std::string_view(t).substr(0, eq)),
                    trim(std::string_view(t).substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

inline KeyValues to_key_values(const ExperimentConfig& c) {
  KeyValues kv;
  kv.set("dataset", c.dataset);
  std::string M;
  for (auto m : c.Ms) M += (M.empty() ? "" : ",") + std::to_string(m);
  kv.set("M", M).set("regime", to_string(c.regime));
  kv.set("gradient_mode", to_string(c.gradient_mode));
  std::string b;
  for (const auto& x : c.batches) b += (b.empty() ? "" : ",") + x;
  kv.set("batch", b);
  kv.set("lambda", c.lambda ? format_double(*c.lambda) : std::string("1/n"));
  kv.set("gamma_spec", c.gamma).set("schedule", c.schedule);
  std::string H;
  for (const auto& x : c.H) H += (H.empty() ? "" : ",") + x;
  kv.set("H_list", H).set("T", c.T);
  kv.set("seeds", std::to_string(c.seeds.size()) + " (" + std::to_string(c.seeds.front()) +
                      ".." + std::to_string(c.seeds.back()) + ")");
  kv.set("ref_tol", c.ref_tol).set("nesterov", c.nesterov);
  return kv;
}

// ---------------------------------------------------------------------------
// Dataset resolution

inline fs::path resolve_data_dir(const ExperimentConfig& c) {
  if (!c.data_dir.empty()) return c.data_dir;
  if (const char* env = std::getenv(kDataDirEnv); env && *env) return env;
  return "data";
}

struct DatasetSource {
  std::shared_ptr<const Dataset> data;
  KeyValues describe;
};

namespace detail {

inline std::map<std::string, std::string> parse_params(std::string_view s) {
  std::map<std::string, std::string> out;
  for (const auto& item : parse_list(s)) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ConfigError("dataset parameter '" + item + "' lacks '='");
    out[trim(item.substr(0, eq))] = trim(item.substr(eq + 1));
  }
  return out;
}

}  // namespace detail

/// Accepts "synthetic[:n=..,d=..,seed=..,sep=..,flip=..,sort=none|label|margin]",
/// "interpolating[:n=..,d=..,seed=..]", a manifest entry name, or a file path.
inline DatasetSource load_dataset(const ExperimentConfig& c) {
  const std::string& spec = c.dataset;
  const auto colon = spec.find(':');
  const std::string kind = spec.substr(0, colon);
  const auto params =
      detail::parse_params(colon == std::string::npos ? "" : spec.substr(colon + 1));
  auto num = [&](const char* key, std::uint64_t def) {
    auto it = params.find(key);
    return it == params.end() ? def : detail::parse_u64(it->second, key);
  };
  DatasetSource src;
  if (kind == "synthetic") {
    SyntheticSpec s;
    for (const auto& [k, v] : params)
      if (k != "n" && k != "d" && k != "seed" && k != "sep" && k != "flip" && k != "sort")
        throw ConfigError("synthetic: unknown parameter '" + k + "'");
    s.n = num("n", s.n);
    s.d = num("d", s.d);
    s.seed = num("seed", s.seed);
    if (params.contains("sep")) s.separation = detail::parse_number(params.at("sep"), "sep");
    if (params.contains("flip")) s.flip_prob = detail::parse_number(params.at("flip"), "flip");
    if (params.contains("sort")) {
      const auto& o = params.at("sort");
      if (o == "none") s.sort = SortOrder::None;
      else if (o == "label") s.sort = SortOrder::ByLabel;
      else if (o == "margin") s.sort = SortOrder::ByMargin;
      else throw ConfigError("synthetic: sort must be none, label or margin");
    }
    Dataset ds = make_synthetic(s);
    if (c.dim) ds.pad_dim(c.dim);
    src.data = std::make_shared<const Dataset>(std::move(ds));
    src.describe = s.describe();
  } else if (kind == "interpolating") {
    const auto n = num("n", 400), d = num("d", 10), seed = num("seed", 1);
    Dataset ds = make_interpolating(n, d, seed);
    if (c.dim) ds.pad_dim(c.dim);
    src.data = std::make_shared<const Dataset>(std::move(ds));
    src.describe.set("interpolating.n", n).set("interpolating.d", d).set("interpolating.seed",
                                                                         seed);
  } else {
    const fs::path dir = resolve_data_dir(c);
    const fs::path manifest = c.manifest.empty() ? dir / "manifest.txt" : fs::path(c.manifest);
    std::optional<ManifestEntry> entry;
    if (fs::exists(manifest)) {
      std::ifstream in(manifest);
      for (auto& e : parse_manifest(in))
        if (e.name == spec) entry = e;
    }
    Dataset ds;
    if (entry) {
      ds = load_verified(*entry, dir);
      src.describe.set("dataset.manifest", manifest.string()).set("dataset.sha256", entry->sha256);
    } else {
      fs::path p = spec;
      if (!fs::exists(p) && fs::exists(dir / p)) p = dir / p;
      if (!fs::exists(p))
        throw DataError("dataset '" + spec + "' is neither a manifest entry in " +
                        manifest.string() + " nor an existing file");
      ds = load_libsvm_file(p);
    }
    if (c.dim) ds.pad_dim(c.dim);
    src.describe.set("dataset.name", spec);
    src.data = std::make_shared<const Dataset>(std::move(ds));
  }
  src.describe.set("dataset.n", src.data->size()).set("dataset.dim", src.data->dim);
  src.describe.set("intercept", "none");
  return src;
}

// ---------------------------------------------------------------------------
// Problem setup shared by the commands

struct ProblemSetup {
  Problem problem;
  ReferenceSolution ref;
  KeyValues metadata;
};

inline ProblemSetup setup_problem(const ExperimentConfig& c, const DatasetSource& src,
                                  std::size_t M, Regime regime) {
  const double lambda = c.lambda.value_or(default_lambda(*src.data));
  Problem p = make_problem(src.data, M, regime, lambda);
  auto ref = solve_reference(p, c.ref_tol, {.nesterov = c.nesterov});
  KeyValues kv = src.describe;
  kv.set("L", p.L()).set("L_max", p.max_sample_smoothness());
  kv.set("mu", p.mu()).set("lambda", p.lambda()).set("kappa", p.kappa());
  kv.set("f_star", ref.f_star).set("x_star_norm_sq", norm_sq(ref.x_star));
  kv.set("ref_grad_norm", ref.grad_norm).set("ref_tolerance", ref.tolerance);
  kv.set("ref_iterations", ref.iterations).set("ref_accelerated", ref.accelerated);
  return {std::move(p), std::move(ref), std::move(kv)};
}

struct BatchChoice {
  std::size_t batch = 1;
  bool full = false;
  std::string label;
};

inline BatchChoice parse_batch(const std::string& s) {
  if (s == "full") return {1, true, "full"};
  const auto b = detail::parse_u64(s, "batch");
  if (b == 0) throw ConfigError("batch must be >= 1");
  return {b, false, std::to_string(b)};
}

// ---------------------------------------------------------------------------
// Stepsize and schedule specs

struct ResolvedGamma {
  double gamma = 0.0;
  std::string how;
};

/// "0.01" (absolute), "c/L" such as "1/L" or "0.05/L", or "plan:<rule>" with
/// rule sc-iid, wc-iid, sc-iid-fs, wc-iid-fs or wc-het.
inline ResolvedGamma resolve_gamma(const std::string& spec, double L, double mu, std::size_t M,
                                   std::size_t T, std::size_t H, std::optional<double> t_param) {
  const std::string s = trim(spec);
  if (s.size() > 2 && s.ends_with("/L")) {
    const double c = detail::parse_number(s.substr(0, s.size() - 2), "gamma");
    if (!(c > 0.0)) throw ConfigError("gamma: multiple of 1/L must be > 0");
    return {c / L, s};
  }
  if (s.starts_with("plan:")) {
    const GammaRule rule = parse_gamma_rule(s.substr(5));
    GammaRequest q{L, mu, M, T, H, t_param.value_or(static_cast<double>(H))};
    const GammaPlan plan = plan_gamma(rule, q);
    std::string how = s + " (" + plan.precondition + ")";
    if (rule == GammaRule::ScIidUbv || rule == GammaRule::ScIidFs)
      how += ", t=" + format_double(q.t_param) + ", suggested T=" +
             std::to_string(*plan.suggested_T);
    return {plan.gamma, how};
  }
  const double g = detail::parse_number(s, "gamma");
  if (!(g > 0.0)) throw ConfigError("gamma must be > 0");
  return {g, "absolute"};
}

/// One schedule per entry of the H list, or the single one-shot / explicit
/// schedule.
inline std::vector<SyncSchedule> resolve_schedules(const ExperimentConfig& c, std::size_t M,
                                                   double kappa) {
  if (c.T == 0) throw ConfigError("T must be >= 1");
  std::vector<SyncSchedule> out;
  if (c.schedule == "one-shot") {
    out.push_back(SyncSchedule::one_shot(c.T));
  } else if (c.schedule.starts_with("explicit:")) {
    auto steps = parse_size_list(c.schedule.substr(9), "schedule");
    if (steps.back() != c.T) throw ConfigError("schedule: explicit steps must end at T");
    out.push_back(SyncSchedule::from_steps(std::move(steps)));
  } else if (c.schedule == "uniform") {
    for (const auto& h : c.H) {
      std::size_t H = 0;
      if (h.starts_with("plan:")) {
        const HRule rule = parse_h_rule(h.substr(5));
        const bool sc = rule == HRule::ScIdentical || rule == HRule::ScIdenticalFs;
        H = plan_H(rule, c.T, M, sc ? std::optional<double>(kappa) : std::nullopt);
      } else {
        H = detail::parse_u64(h, "H");
      }
      out.push_back(SyncSchedule::uniform(c.T, H));
    }
  } else {
    throw ConfigError("schedule must be uniform, one-shot or explicit:<steps>");
  }
  return out;
}

// ---------------------------------------------------------------------------
// variances

struct VarianceRow {
  std::string dataset;
  std::size_t M = 1;
  std::string batch;
  VarianceReport report;
};

inline void write_variances_csv(std::ostream& os, const std::vector<VarianceRow>& rows) {
  os << "dataset,M,batch,sigma_opt_sq,sigma_dif_sq\n";
  for (const auto& r : rows)
    os << r.dataset << ',' << r.M << ',' << r.batch << ',' << format_double(r.report.sigma_opt_sq)
       << ',' << format_double(r.report.sigma_dif_sq) << '\n';
}

/// Sweeps M and batch; x* is solved once per M for the configured regime.
inline std::vector<VarianceRow> cmd_variances(const ExperimentConfig& c, std::ostream& log) {
  const auto src = load_dataset(c);
  const std::string name = src.data->name.empty() ? c.dataset : src.data->name;
  std::vector<VarianceRow> rows;
  for (std::size_t M : c.Ms) {
    const auto setup = setup_problem(c, src, M, c.regime);
    for (const auto& b : c.batches) {
      const auto choice = parse_batch(b);
      auto rep = measure_variances(setup.problem, setup.ref, choice.batch,
                                   choice.full ? Sampling::Exhaustive : Sampling::WithReplacement);
      log << "M=" << M << " batch=" << choice.label << " sigma_opt_sq="
          << format_double(rep.sigma_opt_sq) << " sigma_dif_sq=" << format_double(rep.sigma_dif_sq)
          << '\n';
      rows.push_back({name, M, choice.label, std::move(rep)});
    }
  }
  fs::create_directories(c.out_dir);
  std::ofstream out(fs::path(c.out_dir) / "variances.csv");
  write_variances_csv(out, rows);
  for (const auto& r : rows) {
    std::ofstream nodes(fs::path(c.out_dir) /
                        ("variances_nodes_M" + std::to_string(r.M) + "_b" + r.batch + ".csv"));
    write_node_csv(nodes, r.report);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// run

struct SummaryRow {
  std::size_t H = 0;
  std::size_t comm_rounds = 0;
  std::size_t seeds_ok = 0;
  std::size_t seeds_diverged = 0;
  MeanSe final_subopt;
  MeanSe final_dist_sq;
  MeanSe bar_x_subopt;
  double gamma = 0.0;
};

struct VerdictRow {
  std::size_t H = 0;
  TheoremId theorem = TheoremId::ScIidUbv;
  std::optional<Verdict> verdict;  // empty: abstained
  std::string abstain_reason;
};

struct DivergenceRow {
  std::size_t H = 0;
  std::uint64_t seed = 0;
  std::string message;
};

struct RunReport {
  std::vector<SummaryRow> summary;
  std::vector<VerdictRow> verdicts;
  std::vector<DivergenceRow> divergences;
  std::vector<std::string> files;
  std::optional<double> h1_vs_minibatch_max_rel_diff;
  VarianceReport variances;
  KeyValues metadata;

  bool all_bounds_hold() const {
    for (const auto& v : verdicts)
      if (v.verdict && !v.verdict->holds) return false;
    return true;
  }
};

/// Theorems whose data regime matches the run.
inline std::vector<TheoremId> candidate_theorems(Regime regime) {
  if (regime == Regime::Heterogeneous) return {TheoremId::WcHetFs};
  return {TheoremId::ScIidUbv, TheoremId::WcIidUbv, TheoremId::ScIidFs, TheoremId::WcIidFs};
}

inline void write_rounds_csv(std::ostream& os, const AggregateTrace& agg) {
  os << "round,t,dist_sq_mean,dist_sq_se,subopt_mean,subopt_se\n";
  for (const auto& r : agg.rows) {
    if (r.t != 0 && !r.synced) continue;
    os << r.round << ',' << r.t << ',' << format_double(r.dist_sq.mean) << ','
       << format_double(r.dist_sq.se) << ',' << format_double(r.subopt.mean) << ','
       << format_double(r.subopt.se) << '\n';
  }
}

inline void write_summary_csv(std::ostream& os, const std::vector<SummaryRow>& rows) {
  os << "H,comm_rounds,gamma,seeds_ok,seeds_diverged,final_subopt_mean,final_subopt_se,"
        "final_dist_sq_mean,final_dist_sq_se,bar_x_subopt_mean,bar_x_subopt_se\n";
  for (const auto& r : rows)
    os << r.H << ',' << r.comm_rounds << ',' << format_double(r.gamma) << ',' << r.seeds_ok << ','
       << r.seeds_diverged << ',' << format_double(r.final_subopt.mean) << ','
       << format_double(r.final_subopt.se) << ',' << format_double(r.final_dist_sq.mean) << ','
       << format_double(r.final_dist_sq.se) << ',' << format_double(r.bar_x_subopt.mean) << ','
       << format_double(r.bar_x_subopt.se) << '\n';
}

inline void write_verdicts_csv(std::ostream& os, const std::vector<VerdictRow>& rows) {
  os << "H,theorem,status,margin,slack_ratio,compared_steps,rhs_is_estimate,details\n";
  for (const auto& r : rows) {
    os << r.H << ',' << to_string(r.theorem) << ',';
    if (!r.verdict) {
      os << "abstained,,,0,false,\"" << r.abstain_reason << "\"\n";
      continue;
    }
    const auto& v = *r.verdict;
    os << (v.holds ? "holds" : "violated") << ',' << format_double(v.margin) << ','
       << format_double(v.slack_ratio) << ',' << v.compared << ','
       << (v.rhs_is_estimate ? "true" : "false") << ",\"" << v.details << "\"\n";
  }
}

/// Runs every schedule of the sweep over all seeds, evaluates the bounds
/// whose hypotheses hold, and writes the report into c.out_dir.
inline RunReport cmd_run(const ExperimentConfig& c, std::ostream& log) {
  if (c.Ms.size() != 1) throw ConfigError("run: exactly one M is required");
  if (c.batches.size() != 1) throw ConfigError("run: exactly one batch is required");
  if (c.seeds.size() < 2) throw ConfigError("run: at least two seeds are required");
  const std::size_t M = c.Ms.front();
  const auto choice = parse_batch(c.batches.front());
  if (choice.full && c.gradient_mode == GradientMode::Stochastic)
    throw ConfigError("run: batch=full is spelled gradient_mode=full");

  const auto src = load_dataset(c);
  const auto setup = setup_problem(c, src, M, c.regime);
  const Problem& p = setup.problem;
  const Optimum opt{setup.ref.x_star, setup.ref.f_star};
  const bool full = c.gradient_mode == GradientMode::Full;
  RunReport report;
  report.variances = measure_variances(p, setup.ref, choice.batch,
                                       full ? Sampling::Exhaustive : Sampling::WithReplacement);
  report.metadata = setup.metadata;
  report.metadata.append(to_key_values(c), "config.");
  report.metadata.append(to_key_values(report.variances), "variance.");
  report.metadata.set("het_stepsize_reading",
                      "min{1/(4L), 1/(8L(H-1))}, 1/(8L(H-1)) = inf at H = 1");

  const fs::path out = c.out_dir;
  fs::create_directories(out);
  auto open = [&](const std::string& name) {
    report.files.push_back(name);
    return std::ofstream(out / name);
  };

  const auto schedules = resolve_schedules(c, M, p.kappa());
  const DenseVector x0(p.dim());
  const double r0_sq = dist_sq(x0, opt.x_star);

  std::optional<AggregateTrace> h1;
  for (const auto& sched : schedules) {
    const std::size_t H = sched.H();
    const auto g = resolve_gamma(c.gamma, p.L(), p.mu(), M, c.T, H, c.t_param);
    RunConfig cfg;
    cfg.M = M;
    cfg.T = c.T;
    cfg.schedule = sched;
    cfg.gamma = g.gamma;
    cfg.batch = choice.batch;
    cfg.regime = c.regime;
    cfg.gradient_mode = c.gradient_mode;
    cfg.x0 = x0;
    cfg.record.record_every = c.record_every;
    cfg.record.track_subopt = c.track_subopt;

    auto outcomes = run_seed_outcomes(p, opt, cfg, c.seeds, Engine::LocalSgd, c.threads);
    std::vector<Trace> traces;
    for (auto& o : outcomes) {
      if (!o.error) {
        traces.push_back(std::move(*o.trace));
        continue;
      }
      try {
        std::rethrow_exception(o.error);
      } catch (const DivergenceError& e) {
        report.divergences.push_back({H, o.seed, e.what()});
      }
    }
    SummaryRow row;
    row.H = H;
    row.comm_rounds = sched.rounds();
    row.gamma = g.gamma;
    row.seeds_ok = traces.size();
    row.seeds_diverged = c.seeds.size() - traces.size();
    log << "H=" << H << " gamma=" << format_double(g.gamma) << " [" << g.how << "] rounds="
        << sched.rounds() << " seeds=" << traces.size() << "/" << c.seeds.size() << '\n';
    if (traces.empty()) {
      const double nan = std::numeric_limits<double>::quiet_NaN();
      row.final_subopt = row.final_dist_sq = row.bar_x_subopt = {nan, 0.0};
      report.summary.push_back(row);
      continue;
    }
    for (auto& t : traces) t.metadata = report.metadata;
    AggregateTrace agg = aggregate(traces);
    agg.metadata.set("gamma_resolution", g.how);
    agg.metadata.set("seeds_diverged", row.seeds_diverged);
    row.final_subopt = agg.final_subopt;
    row.final_dist_sq = agg.final_dist_sq;
    row.bar_x_subopt = agg.bar_x_subopt;
    report.summary.push_back(row);
    if (H == 1 && sched.rounds() == c.T) h1 = agg;

    {
      auto f = open("trace_H" + std::to_string(H) + ".csv");
      write_aggregate_csv(f, agg);
    }
    {
      auto f = open("rounds_H" + std::to_string(H) + ".csv");
      write_rounds_csv(f, agg);
    }

    for (TheoremId id : candidate_theorems(c.regime)) {
      VerdictRow vr;
      vr.H = H;
      vr.theorem = id;
      BoundInputs b;
      b.L = p.L();
      b.mu = p.mu();
      b.gamma = g.gamma;
      b.T = c.T;
      b.H = H;
      b.M = M;
      b.sigma_sq = report.variances.sigma_sq;
      b.sigma_is_estimate = !full;
      b.sigma_opt_sq = report.variances.sigma_opt_sq;
      b.sigma_dif_sq = report.variances.sigma_dif_sq;
      b.r0_sq = r0_sq;
      if (row.seeds_diverged > 0) {
        vr.abstain_reason = "some seeds diverged";
      } else if (auto why = precondition_violation(id, b)) {
        vr.abstain_reason = *why;
      } else {
        const BoundCurve curve = id == TheoremId::ScIidFs ? bound_sc_identical_fs(b, sched.steps())
                                                          : BoundCurve(id, b);
        vr.verdict = check_bound(curve, agg);
        std::vector<std::size_t> steps;
        for (const auto& r : agg.rows) steps.push_back(r.t);
        auto f = open("bound_H" + std::to_string(H) + "_" + to_string(id) + ".csv");
        write_bound_csv(f, curve, steps);
      }
      log << "  " << to_string(id) << ": "
          << (vr.verdict ? (vr.verdict->holds ? "holds" : "VIOLATED") : "abstained") << " "
          << (vr.verdict ? vr.verdict->details : vr.abstain_reason) << '\n';
      report.verdicts.push_back(std::move(vr));
    }
  }

  if (c.baseline) {
    RunConfig cfg;
    cfg.M = M;
    cfg.T = c.T;
    cfg.schedule = SyncSchedule::uniform(c.T, 1);
    cfg.gamma = resolve_gamma(c.gamma, p.L(), p.mu(), M, c.T, 1, c.t_param).gamma;
    cfg.batch = choice.batch;
    cfg.regime = c.regime;
    cfg.gradient_mode = c.gradient_mode;
    cfg.x0 = x0;
    cfg.record.record_every = c.record_every;
    cfg.record.track_subopt = c.track_subopt;
    try {
      auto traces = run_seeds(p, opt, cfg, c.seeds, Engine::MinibatchSgd, c.threads);
      for (auto& t : traces) t.metadata = report.metadata;
      const AggregateTrace base = aggregate(traces);
      auto f = open("minibatch_baseline.csv");
      write_aggregate_csv(f, base);
      if (h1 && h1->rows.size() == base.rows.size()) {
        double worst = 0.0;
        for (std::size_t k = 0; k < base.rows.size(); ++k) {
          const double a = h1->rows[k].dist_sq.mean, b = base.rows[k].dist_sq.mean;
          worst = std::max(worst, std::abs(a - b) / std::max(std::abs(b), 1e-300));
        }
        report.h1_vs_minibatch_max_rel_diff = worst;
        log << "H=1 vs minibatch baseline: max relative difference of mean dist_sq "
            << format_double(worst) << '\n';
      }
    } catch (const DivergenceError& e) {
      report.divergences.push_back({0, 0, std::string("minibatch baseline: ") + e.what()});
    }
  }

  {
    auto f = open("summary.csv");
    write_summary_csv(f, report.summary);
  }
  {
    auto f = open("verdicts.csv");
    write_verdicts_csv(f, report.verdicts);
  }
  {
    auto f = open("divergences.csv");
    f << "H,seed,message\n";
    for (const auto& d : report.divergences)
      f << d.H << ',' << d.seed << ",\"" << d.message << "\"\n";
  }
  {
    auto f = open("variances.txt");
    to_key_values(report.variances).write(f);
  }
  {
    auto f = open("reference.txt");
    to_key_values(setup.ref).write(f);
  }
  std::ofstream idx(out / "report.txt");
  report.metadata.write(idx, "# ");
  if (report.h1_vs_minibatch_max_rel_diff)
    idx << "h1_vs_minibatch_max_rel_diff = " << format_double(*report.h1_vs_minibatch_max_rel_diff)
        << '\n';
  idx << "all_bounds_hold = " << (report.all_bounds_hold() ? "true" : "false") << '\n';
  for (const auto& f : report.files) idx << "file = " << f << '\n';
  return report;
}

/// Solves for x* and writes it as key-value text.
inline ReferenceSolution cmd_solve_ref(const ExperimentConfig& c, std::ostream& os) {
  if (c.Ms.size() != 1) throw ConfigError("solve-ref: exactly one M is required");
  const auto src = load_dataset(c);
  const auto setup = setup_problem(c, src, c.Ms.front(), c.regime);
  setup.metadata.write(os, "# ");
  to_key_values(setup.ref).write(os);
  return setup.ref;
}

}  // namespace localsgd
