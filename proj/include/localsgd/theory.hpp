// SPDX-License-Identifier: Apache-2.0
//
// Closed-form right-hand sides of the Local SGD convergence guarantees, the
// stepsize / synchronization-interval planners derived from them, and the
// comparison of a bound against replicated simulation output.
//
// Every bound checks its own stepsize hypothesis and throws
// PreconditionError, naming the violated inequality, instead of evaluating.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "localsgd/error.hpp"
#include "localsgd/simulator.hpp"
#include "localsgd/textio.hpp"

namespace localsgd {

enum class TheoremId {
  ScIidUbv,  // strongly convex, identical data, uniformly bounded variance
  WcIidUbv,  // convex, identical data, uniformly bounded variance
  ScIidFs,   // strongly convex, identical data, finite-sum gradients
  WcIidFs,   // convex, identical data, finite-sum gradients
  WcHetFs,   // convex, heterogeneous data, finite-sum gradients
};

enum class Metric { DistSq, Subopt };

/// Which running average of x_hat a convex bound is stated for.
enum class Averaging { FromOne, FromZero };

inline const char* to_string(TheoremId id) {
  switch (id) {
    case TheoremId::ScIidUbv: return "SC_IID_UBV";
    case TheoremId::WcIidUbv: return "WC_IID_UBV";
    case TheoremId::ScIidFs: return "SC_IID_FS";
    case TheoremId::WcIidFs: return "WC_IID_FS";
    case TheoremId::WcHetFs: return "WC_HET_FS";
  }
  return "?";
}

inline Metric metric_of(TheoremId id) {
  return id == TheoremId::ScIidUbv || id == TheoremId::ScIidFs ? Metric::DistSq : Metric::Subopt;
}

inline Averaging averaging_of(TheoremId id) {
  return id == TheoremId::WcHetFs ? Averaging::FromZero : Averaging::FromOne;
}

struct BoundInputs {
  double L = 0.0;
  double mu = 0.0;
  double gamma = 0.0;
  std::size_t T = 0;
  std::size_t H = 1;
  std::size_t M = 1;
  std::optional<double> sigma_sq;
  std::optional<double> sigma_opt_sq;
  std::optional<double> sigma_dif_sq;
  double r0_sq = 0.0;
  /// sigma_sq comes from a probe-set estimate rather than a known constant.
  bool sigma_is_estimate = false;

  double kappa() const {
    return mu > 0.0 ? L / mu : std::numeric_limits<double>::infinity();
  }
};

inline KeyValues to_key_values(const BoundInputs& b) {
  KeyValues kv;
  kv.set("L", b.L).set("mu", b.mu).set("gamma", b.gamma);
  kv.set("T", b.T).set("H", b.H).set("M", b.M).set("r0_sq", b.r0_sq);
  if (b.sigma_sq) kv.set("sigma_sq", *b.sigma_sq);
  if (b.sigma_opt_sq) kv.set("sigma_opt_sq", *b.sigma_opt_sq);
  if (b.sigma_dif_sq) kv.set("sigma_dif_sq", *b.sigma_dif_sq);
  kv.set("sigma_is_estimate", b.sigma_is_estimate);
  return kv;
}

/// 1/(8L(H-1)), +inf at H == 1 where the H-scaled terms vanish.
inline double het_local_cap(double L, std::size_t H) {
  return H <= 1 ? std::numeric_limits<double>::infinity()
                : 1.0 / (8.0 * L * static_cast<double>(H - 1));
}

/// Largest stepsize each theorem admits.
inline double max_stepsize(TheoremId id, const BoundInputs& b) {
  const double L = b.L;
  const double H = static_cast<double>(b.H);
  const double M = static_cast<double>(b.M);
  switch (id) {
    case TheoremId::ScIidUbv:
    case TheoremId::WcIidUbv: return 1.0 / (4.0 * L);
    case TheoremId::ScIidFs:
      return std::min(1.0 / (4.0 * L * (1.0 + 2.0 / M)), 1.0 / (b.mu + 8.0 * L * (H - 1.0)));
    case TheoremId::WcIidFs: return 1.0 / (10.0 * L * H);
    case TheoremId::WcHetFs: return std::min(1.0 / (4.0 * L), het_local_cap(L, b.H));
  }
  return 0.0;
}

inline const char* stepsize_condition(TheoremId id) {
  switch (id) {
    case TheoremId::ScIidUbv:
    case TheoremId::WcIidUbv: return "gamma <= 1/(4L)";
    case TheoremId::ScIidFs: return "gamma <= min{1/(4L(1+2/M)), 1/(mu+8L(H-1))}";
    case TheoremId::WcIidFs: return "gamma <= 1/(10LH)";
    case TheoremId::WcHetFs: return "gamma <= min{1/(4L), 1/(8L(H-1))}";
  }
  return "?";
}

/// Returns a description of the first violated hypothesis, if any.
inline std::optional<std::string> precondition_violation(TheoremId id, const BoundInputs& b) {
  auto finite_pos = [](double v) { return std::isfinite(v) && v > 0.0; };
  if (!finite_pos(b.L)) return "L must be finite and > 0";
  if (!(std::isfinite(b.mu) && b.mu >= 0.0)) return "mu must be finite and >= 0";
  if (!finite_pos(b.gamma)) return "gamma must be finite and > 0";
  if (b.T == 0) return "T must be >= 1";
  if (b.H == 0) return "H must be >= 1";
  if (b.M == 0) return "M must be >= 1";
  if (!(std::isfinite(b.r0_sq) && b.r0_sq >= 0.0)) return "r0_sq must be finite and >= 0";

  auto need = [](const std::optional<double>& v, const char* name) -> std::optional<std::string> {
    if (!v) return std::string(name) + " is required";
    if (!(std::isfinite(*v) && *v >= 0.0)) return std::string(name) + " must be finite and >= 0";
    return std::nullopt;
  };
  std::optional<std::string> missing;
  switch (id) {
    case TheoremId::ScIidUbv:
    case TheoremId::WcIidUbv: missing = need(b.sigma_sq, "sigma_sq"); break;
    case TheoremId::ScIidFs:
    case TheoremId::WcIidFs: missing = need(b.sigma_opt_sq, "sigma_opt_sq"); break;
    case TheoremId::WcHetFs: missing = need(b.sigma_dif_sq, "sigma_dif_sq"); break;
  }
  if (missing) return missing;

  if ((id == TheoremId::ScIidUbv || id == TheoremId::ScIidFs) && !(b.mu > 0.0))
    return "mu > 0 required";
  if ((id == TheoremId::WcIidFs || id == TheoremId::WcHetFs) && b.M < 2) return "M >= 2 required";
  if (b.gamma > max_stepsize(id, b))
    return std::string(stepsize_condition(id)) + " violated: gamma=" + format_double(b.gamma) +
           ", cap=" + format_double(max_stepsize(id, b));
  return std::nullopt;
}

inline void require_preconditions(TheoremId id, const BoundInputs& b) {
  if (auto v = precondition_violation(id, b))
    throw PreconditionError(std::string(to_string(id)) + ": " + *v);
}

/// A theorem's right-hand side as a function of the step count.
class BoundCurve {
 public:
  BoundCurve(TheoremId id, BoundInputs in, std::vector<std::size_t> sync_steps = {})
      : id_(id), in_(std::move(in)), sync_steps_(std::move(sync_steps)) {
    require_preconditions(id_, in_);
  }

  TheoremId theorem() const noexcept { return id_; }
  Metric metric() const noexcept { return metric_of(id_); }
  Averaging averaging() const noexcept { return averaging_of(id_); }
  const BoundInputs& inputs() const noexcept { return in_; }
  bool rhs_is_estimate() const noexcept {
    return in_.sigma_is_estimate && (id_ == TheoremId::ScIidUbv || id_ == TheoremId::WcIidUbv);
  }

  /// The finite-sum strongly convex bound only speaks about sync timestamps.
  bool defined_at(std::size_t t) const {
    if (id_ != TheoremId::ScIidFs) return true;
    if (t == 0) return true;
    return std::binary_search(sync_steps_.begin(), sync_steps_.end(), t);
  }

  /// The three additive terms at step count t (t >= 1 for the convex bounds).
  std::array<double, 3> terms(std::size_t t) const {
    const double L = in_.L, mu = in_.mu, g = in_.gamma, r0 = in_.r0_sq;
    const double M = static_cast<double>(in_.M);
    const double Hm1 = static_cast<double>(in_.H - 1);
    const double tt = static_cast<double>(t);
    switch (id_) {
      case TheoremId::ScIidUbv: {
        const double s = *in_.sigma_sq;
        return {std::pow(1.0 - g * mu, tt) * r0, g * s / (mu * M), 2.0 * L * g * g * Hm1 * s / mu};
      }
      case TheoremId::WcIidUbv: {
        const double s = *in_.sigma_sq;
        return {2.0 * r0 / (g * tt), 2.0 * g * s / M, 4.0 * g * g * L * s * Hm1};
      }
      case TheoremId::ScIidFs: {
        const double s = *in_.sigma_opt_sq;
        return {std::pow(1.0 - g * mu, tt) * r0, 2.0 * g * s / (mu * M),
                4.0 * s * g * g * Hm1 * L / mu};
      }
      case TheoremId::WcIidFs: {
        const double s = *in_.sigma_opt_sq;
        return {10.0 * r0 / (g * tt), 20.0 * g * s / M, 40.0 * g * g * L * s * Hm1};
      }
      case TheoremId::WcHetFs: {
        const double s = *in_.sigma_dif_sq;
        return {4.0 * r0 / (g * tt), 20.0 * g * s / M, 16.0 * g * g * L * Hm1 * Hm1 * s};
      }
    }
    return {0.0, 0.0, 0.0};
  }

  double rhs_at(std::size_t t) const {
    if (!defined_at(t))
      throw PreconditionError(std::string(to_string(id_)) + ": bound holds only at sync steps; t=" +
                              std::to_string(t) + " is not one");
    if (metric() == Metric::Subopt && t == 0)
      throw PreconditionError(std::string(to_string(id_)) + ": undefined at T = 0");
    const auto v = terms(t);
    return v[0] + v[1] + v[2];
  }

  double final_value() const { return rhs_at(in_.T); }

  /// The t-independent part (terms two and three).
  double floor() const {
    const auto v = terms(std::max<std::size_t>(in_.T, 1));
    return v[1] + v[2];
  }

 private:
  TheoremId id_;
  BoundInputs in_;
  std::vector<std::size_t> sync_steps_;
};

inline BoundCurve bound_sc_identical_ubv(const BoundInputs& b) {
  return BoundCurve(TheoremId::ScIidUbv, b);
}
inline BoundCurve bound_wc_identical_ubv(const BoundInputs& b) {
  return BoundCurve(TheoremId::WcIidUbv, b);
}
/// Defined only at `sync_steps`; defaults to the uniform schedule of b.H.
inline BoundCurve bound_sc_identical_fs(const BoundInputs& b,
                                        std::vector<std::size_t> sync_steps = {}) {
  if (sync_steps.empty() && b.T > 0 && b.H > 0)
    sync_steps = SyncSchedule::uniform(b.T, b.H).steps();
  return BoundCurve(TheoremId::ScIidFs, b, std::move(sync_steps));
}
inline BoundCurve bound_wc_identical_fs(const BoundInputs& b) {
  return BoundCurve(TheoremId::WcIidFs, b);
}
inline BoundCurve bound_wc_heterogeneous(const BoundInputs& b) {
  return BoundCurve(TheoremId::WcHetFs, b);
}

// ---------------------------------------------------------------------------
// Planners

enum class HRule {
  ScIdentical,      // 1 + floor(T / (kappa M))
  ScIdenticalFs,    // 1 + floor(T / (18 kappa M))
  WcIdentical,      // 1 + floor(T^(1/2) M^(-3/2))
  WcHeterogeneous,  // 1 + floor(T^(1/4) M^(-3/4))
};

inline HRule parse_h_rule(std::string_view s) {
  if (s == "sc-iid") return HRule::ScIdentical;
  if (s == "sc-iid-fs") return HRule::ScIdenticalFs;
  if (s == "wc-iid") return HRule::WcIdentical;
  if (s == "wc-het") return HRule::WcHeterogeneous;
  throw ConfigError("unknown H rule '" + std::string(s) + "' (sc-iid, sc-iid-fs, wc-iid, wc-het)");
}

/// Optimal synchronization interval. Root-based rules use exact integer
/// comparisons: floor(T^(1/p) M^(-3/p)) is the largest k with k^p M^3 <= T.
inline std::size_t plan_H(HRule rule, std::size_t T, std::size_t M,
                          std::optional<double> kappa = std::nullopt) {
  if (T == 0 || M == 0) throw ConfigError("plan_H: T and M must be >= 1");
  const bool sc = rule == HRule::ScIdentical || rule == HRule::ScIdenticalFs;
  if (sc && !kappa) throw ConfigError("plan_H: this rule requires kappa");
  if (!sc && kappa) throw ConfigError("plan_H: kappa is only used by the strongly convex rules");
  if (sc) {
    if (!(*kappa > 0.0) || !std::isfinite(*kappa)) throw ConfigError("plan_H: kappa must be > 0");
    const double denom = (rule == HRule::ScIdenticalFs ? 18.0 : 1.0) * *kappa * static_cast<double>(M);
    return 1 + static_cast<std::size_t>(std::floor(static_cast<double>(T) / denom));
  }
  const int p = rule == HRule::WcIdentical ? 2 : 4;
  using u128 = unsigned __int128;
  const u128 m3 = static_cast<u128>(M) * M * M;
  auto fits = [&](std::uint64_t k) {
    u128 v = m3;
    for (int i = 0; i < p; ++i) {
      v *= k;
      if (v > static_cast<u128>(T)) return false;
    }
    return true;
  };
  std::uint64_t k = static_cast<std::uint64_t>(
      std::floor(std::pow(static_cast<double>(T), 1.0 / p) /
                 std::pow(static_cast<double>(M), 3.0 / p)));
  while (k > 0 && !fits(k)) --k;
  while (fits(k + 1)) ++k;
  return 1 + static_cast<std::size_t>(k);
}

enum class GammaRule { ScIidUbv, WcIidUbv, ScIidFs, WcIidFs, WcHet };

inline GammaRule parse_gamma_rule(std::string_view s) {
  if (s == "sc-iid") return GammaRule::ScIidUbv;
  if (s == "wc-iid") return GammaRule::WcIidUbv;
  if (s == "sc-iid-fs") return GammaRule::ScIidFs;
  if (s == "wc-iid-fs") return GammaRule::WcIidFs;
  if (s == "wc-het") return GammaRule::WcHet;
  throw ConfigError("unknown stepsize planner '" + std::string(s) + "'");
}

inline const char* to_string(GammaRule r) {
  switch (r) {
    case GammaRule::ScIidUbv: return "sc-iid";
    case GammaRule::WcIidUbv: return "wc-iid";
    case GammaRule::ScIidFs: return "sc-iid-fs";
    case GammaRule::WcIidFs: return "wc-iid-fs";
    case GammaRule::WcHet: return "wc-het";
  }
  return "?";
}

struct GammaPlan {
  double gamma = 0.0;
  TheoremId target = TheoremId::ScIidUbv;
  std::string precondition;  // the target theorem's stepsize condition, verified
  std::optional<std::size_t> suggested_T;  // strongly convex rules only, rounded up
};

struct GammaRequest {
  double L = 0.0;
  double mu = 0.0;
  std::size_t M = 1;
  std::size_t T = 1;
  std::size_t H = 1;
  double t_param = 0.0;  // the free parameter t > 0 of the strongly convex rules
};

/// Stepsize from the corollary planners. Throws PreconditionError when a
/// corollary hypothesis fails, and asserts the produced stepsize satisfies
/// the target theorem's condition.
inline GammaPlan plan_gamma(GammaRule rule, const GammaRequest& q) {
  auto fail = [&](const std::string& why) {
    throw PreconditionError(std::string(to_string(rule)) + ": " + why);
  };
  if (!(q.L > 0.0) || !std::isfinite(q.L)) fail("L must be > 0");
  if (q.M == 0 || q.T == 0 || q.H == 0) fail("M, T and H must be >= 1");
  const double L = q.L, M = static_cast<double>(q.M), T = static_cast<double>(q.T);
  const double H = static_cast<double>(q.H);
  GammaPlan plan;
  switch (rule) {
    case GammaRule::ScIidUbv: {
      if (!(q.mu > 0.0)) fail("mu > 0 required");
      if (!(q.t_param > 0.0)) fail("t > 0 required");
      const double a = 4.0 * (L / q.mu) + q.t_param;
      plan.gamma = 1.0 / (q.mu * a);
      plan.target = TheoremId::ScIidUbv;
      plan.suggested_T = static_cast<std::size_t>(std::ceil(2.0 * a * std::log(a)));
      break;
    }
    case GammaRule::WcIidUbv: {
      if (q.T < q.M) fail("T >= M required");
      plan.gamma = std::sqrt(M) / (4.0 * L * std::sqrt(T));
      plan.target = TheoremId::WcIidUbv;
      break;
    }
    case GammaRule::ScIidFs: {
      if (!(q.mu > 0.0)) fail("mu > 0 required");
      if (!(q.t_param > 0.0)) fail("t > 0 required");
      if (H > q.t_param) fail("H <= t required");
      const double a = 18.0 * (L / q.mu) * q.t_param;
      plan.gamma = 1.0 / (q.mu * a);
      plan.target = TheoremId::ScIidFs;
      plan.suggested_T = static_cast<std::size_t>(std::ceil(18.0 * a * std::log(a)));
      break;
    }
    case GammaRule::WcIidFs:
    case GammaRule::WcHet: {
      if (H * H * M > T) fail("H <= sqrt(T/M) required");
      if (q.M < 2) fail("M >= 2 required");
      const double c = rule == GammaRule::WcIidFs ? 10.0 : 8.0;
      plan.gamma = std::sqrt(M) / (c * L * std::sqrt(T));
      plan.target = rule == GammaRule::WcIidFs ? TheoremId::WcIidFs : TheoremId::WcHetFs;
      break;
    }
  }
  BoundInputs b;
  b.L = q.L;
  b.mu = q.mu;
  b.gamma = plan.gamma;
  b.T = q.T;
  b.H = q.H;
  b.M = q.M;
  b.sigma_sq = b.sigma_opt_sq = b.sigma_dif_sq = 0.0;
  if (auto v = precondition_violation(plan.target, b))
    throw PreconditionError(std::string(to_string(rule)) + " produced an inadmissible stepsize: " + *v);
  plan.precondition = stepsize_condition(plan.target);
  return plan;
}

// ---------------------------------------------------------------------------
// Verdicts

struct Verdict {
  bool holds = false;
  double margin = 0.0;       // min over compared steps of (bound - empirical mean)
  double slack_ratio = 0.0;  // max over compared steps of empirical mean / bound
  std::size_t compared = 0;
  bool rhs_is_estimate = false;
  std::string details;
};

namespace detail {

struct VerdictBuilder {
  Verdict v;
  std::size_t worst_t = 0;
  double worst_excess = -std::numeric_limits<double>::infinity();

  VerdictBuilder() {
    v.holds = true;
    v.margin = std::numeric_limits<double>::infinity();
  }

  void add(std::size_t t, double mean, double se, double bound) {
    ++v.compared;
    v.margin = std::min(v.margin, bound - mean);
    const double ratio = bound > 0.0 ? mean / bound
                                     : (mean > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
    v.slack_ratio = std::max(v.slack_ratio, ratio);
    const double excess = mean - (bound + 3.0 * se);
    if (!(excess <= 0.0)) v.holds = false;
    if (excess > worst_excess) {
      worst_excess = excess;
      worst_t = t;
    }
  }

  Verdict finish(const std::string& label) {
    if (v.compared == 0) throw PreconditionError(label + ": no comparable steps");
    v.details = label + ": compared " + std::to_string(v.compared) + " step(s), tightest at t=" +
                std::to_string(worst_t) + ", margin " + format_double(v.margin) +
                ", slack ratio " + format_double(v.slack_ratio);
    return v;
  }
};

}  // namespace detail

/// holds <=> mean <= rhs + 3 SE at every comparable step (strongly convex
/// bounds, sync steps only for the finite-sum one) or at T (convex bounds,
/// using the matching running average of x_hat).
inline Verdict check_bound(const BoundCurve& curve, const AggregateTrace& agg) {
  require_preconditions(curve.theorem(), curve.inputs());
  detail::VerdictBuilder vb;
  const std::string label = to_string(curve.theorem());
  if (curve.metric() == Metric::DistSq) {
    for (const auto& r : agg.rows) {
      if (!curve.defined_at(r.t)) continue;
      if (curve.theorem() == TheoremId::ScIidFs && r.t != 0 && !r.synced) continue;
      vb.add(r.t, r.dist_sq.mean, r.dist_sq.se, curve.rhs_at(r.t));
    }
  } else {
    if (agg.T != curve.inputs().T)
      throw PreconditionError(label + ": bound stated for T=" + std::to_string(curve.inputs().T) +
                              " but the runs have T=" + std::to_string(agg.T));
    const MeanSe& e = curve.averaging() == Averaging::FromOne ? agg.bar_x_subopt
                                                              : agg.bar_x_subopt_from0;
    vb.add(agg.T, e.mean, e.se, curve.final_value());
  }
  Verdict v = vb.finish(label);
  v.rhs_is_estimate = curve.rhs_is_estimate();
  if (v.rhs_is_estimate) v.details += " (rhs uses an estimated sigma^2)";
  return v;
}

/// Deviation bound for identical data, gamma <= 1/(2L):
/// mean V_t <= (H-1) gamma^2 sigma^2 + 3 SE at every recorded step.
inline Verdict check_iterate_deviation(const AggregateTrace& agg, double L, double gamma,
                                       std::size_t H, double sigma_sq) {
  if (!(gamma > 0.0) || gamma > 1.0 / (2.0 * L))
    throw PreconditionError("deviation bound: gamma <= 1/(2L) violated");
  const double rhs = static_cast<double>(H - 1) * gamma * gamma * sigma_sq;
  detail::VerdictBuilder vb;
  for (const auto& r : agg.rows) vb.add(r.t, r.V.mean, r.V.se, rhs);
  return vb.finish("iterate deviation");
}

/// Heterogeneous average-gradient bound:
/// E|g_t|^2 <= 2L^2 V_t + 8L D_f(x_hat_t, x*) + 4 sigma_dif^2 / M, with D_f
/// taken as f(x_hat_t) - f*. Compares means over seeds, within 3 SE.
inline Verdict check_gradient_norm_bound(const AggregateTrace& agg, double L, double sigma_dif_sq,
                                         std::size_t M) {
  detail::VerdictBuilder vb;
  for (const auto& r : agg.rows) {
    if (std::isnan(r.grad_sq.mean) || std::isnan(r.subopt.mean)) continue;
    const double rhs = 2.0 * L * L * r.V.mean + 8.0 * L * std::max(r.subopt.mean, 0.0) +
                       4.0 * sigma_dif_sq / static_cast<double>(M);
    const double se = std::sqrt(r.grad_sq.se * r.grad_sq.se +
                                std::pow(2.0 * L * L * r.V.se, 2) +
                                std::pow(8.0 * L * r.subopt.se, 2));
    vb.add(r.t, r.grad_sq.mean, se, rhs);
  }
  return vb.finish("average gradient norm");
}

// ---------------------------------------------------------------------------
// Serialization

inline void write_bound_csv(std::ostream& os, const BoundCurve& c,
                            std::span<const std::size_t> steps) {
  os << "# theorem = " << to_string(c.theorem()) << '\n';
  os << "# stepsize_condition = " << stepsize_condition(c.theorem()) << '\n';
  if (c.theorem() == TheoremId::WcHetFs)
    os << "# stepsize_reading = min{1/(4L), 1/(8L(H-1))}, 1/(8L(H-1)) = inf at H = 1\n";
  os << "# rhs_is_estimate = " << (c.rhs_is_estimate() ? "true" : "false") << '\n';
  to_key_values(c.inputs()).write(os, "# ");
  os << "t,rhs,term1,term2,term3\n";
  for (std::size_t t : steps) {
    if (!c.defined_at(t) || (c.metric() == Metric::Subopt && t == 0)) continue;
    const auto v = c.terms(t);
    os << t << ',' << format_double(v[0] + v[1] + v[2]) << ',' << format_double(v[0]) << ','
       << format_double(v[1]) << ',' << format_double(v[2]) << '\n';
  }
}

inline KeyValues to_key_values(const Verdict& v, const BoundCurve& c) {
  KeyValues kv;
  kv.set("theorem", to_string(c.theorem()));
  kv.set("holds", v.holds).set("margin", v.margin).set("slack_ratio", v.slack_ratio);
  kv.set("compared_steps", v.compared).set("rhs_is_estimate", v.rhs_is_estimate);
  kv.set("details", v.details);
  kv.append(to_key_values(c.inputs()), "input.");
  return kv;
}

}  // namespace localsgd
