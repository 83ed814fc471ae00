// SPDX-License-Identifier: Apache-2.0
//
// l2-regularized logistic regression over a partitioned dataset:
//
//   f_m(x) = (1/n_m) sum_{i in node m} log(1 + exp(-y_i a_i^T x)) + (lambda/2)|x|^2
//   f(x)   = (1/M) sum_m f_m(x)
//
// plus the smoothness constant, a reference optimum, and the variance
// quantities measured at that optimum.
#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <limits>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "localsgd/dataio.hpp"
#include "localsgd/error.hpp"
#include "localsgd/numkit.hpp"
#include "localsgd/textio.hpp"

namespace localsgd {

enum class GradientMode { Stochastic, Full };

inline const char* to_string(GradientMode m) {
  return m == GradientMode::Stochastic ? "stochastic" : "full";
}

inline GradientMode parse_gradient_mode(std::string_view s) {
  if (s == "stochastic" || s == "sgd") return GradientMode::Stochastic;
  if (s == "full" || s == "gd") return GradientMode::Full;
  throw ConfigError("unknown gradient mode '" + std::string(s) + "'");
}

/// How a minibatch is formed: i.i.d. uniform draws, or one pass over the
/// node's whole range.
enum class Sampling { WithReplacement, Exhaustive };

/// log(1 + exp(-t)) without overflow.
inline double logistic_loss(double t) {
  return t >= 0.0 ? std::log1p(std::exp(-t)) : -t + std::log1p(std::exp(t));
}

/// sigma(-t) = 1 / (1 + exp(t)), the magnitude of d/dt log(1 + exp(-t)).
inline double logistic_weight(double t) {
  if (t >= 0.0) {
    const double e = std::exp(-t);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(t));
}

class Problem;
inline double loss(const Problem& p, const DenseVector& x);
inline DenseVector full_grad_global(const Problem& p, const DenseVector& x);
inline void node_gradient_into(const Problem& p, std::size_t node, const DenseVector& x,
                        RngStream& rng, GradientMode mode, std::size_t batch,
                        DenseVector& out);

class Problem {
 public:
  /// `L` is taken as given; use estimate_L() to obtain it from the data.
  Problem(std::shared_ptr<const Dataset> data, Partition part, double lambda, double L)
      : data_(std::move(data)), part_(std::move(part)), lambda_(lambda), L_(L) {
    if (!data_ || data_->size() == 0) throw ConfigError("problem: empty dataset");
    if (part_.num_nodes() == 0) throw ConfigError("problem: partition has no nodes");
    for (const auto& r : part_.node_ranges) {
      if (r.end > data_->size() || r.begin >= r.end)
        throw ConfigError("problem: empty or out-of-range node");
    }
    if (!(lambda_ >= 0.0) || !std::isfinite(lambda_))
      throw ConfigError("problem: lambda must be finite and >= 0");
    if (!(L_ > 0.0) || !std::isfinite(L_)) throw ConfigError("problem: L must be > 0");
    if (L_ < lambda_) throw ConfigError("problem: L must be >= mu");
  }

  const Dataset& dataset() const noexcept { return *data_; }
  std::shared_ptr<const Dataset> dataset_ptr() const noexcept { return data_; }
  const Partition& partition() const noexcept { return part_; }
  Regime regime() const noexcept { return part_.regime; }
  std::size_t num_nodes() const noexcept { return part_.num_nodes(); }
  std::size_t dim() const noexcept { return data_->dim; }
  const IndexRange& node_range(std::size_t m) const {
    if (m >= num_nodes()) throw ConfigError("node index out of range");
    return part_.node_ranges[m];
  }

  double lambda() const noexcept { return lambda_; }
  double L() const noexcept { return L_; }
  double mu() const noexcept { return lambda_; }
  /// L / mu; +inf when mu == 0.
  double kappa() const noexcept {
    return lambda_ > 0.0 ? L_ / lambda_ : std::numeric_limits<double>::infinity();
  }

  /// max_i |a_i|^2 / 4 + lambda: the per-sample smoothness constant.
  double max_sample_smoothness() const {
    double best = 0.0;
    for (const auto& s : data_->samples) {
      double sq = 0.0;
      for (double v : s.features.values()) sq += v * v;
      best = std::max(best, sq);
    }
    return best / 4.0 + lambda_;
  }

  // Oracle surface used by the simulator and the reference solver.
  double value(const DenseVector& x) const { return loss(*this, x); }
  DenseVector gradient(const DenseVector& x) const { return full_grad_global(*this, x); }
  double smoothness() const noexcept { return L_; }
  double strong_convexity() const noexcept { return lambda_; }
  void node_gradient(std::size_t node, const DenseVector& x, RngStream& rng,
                     GradientMode mode, std::size_t batch, DenseVector& out) const {
    node_gradient_into(*this, node, x, rng, mode, batch, out);
  }

 private:
  std::shared_ptr<const Dataset> data_;
  Partition part_;
  double lambda_;
  double L_;
};

// ---------------------------------------------------------------------------
// Losses and gradients

/// Loss of one sample without the regularizer.
inline double sample_data_loss(const Sample& s, const DenseVector& x) {
  return logistic_loss(s.label * dot(s.features, x));
}

/// out += scale * d/dx log(1 + exp(-y a^T x)).
inline void add_sample_data_grad(const Sample& s, const DenseVector& x, double scale,
                                 DenseVector& out) {
  const double t = s.label * dot(s.features, x);
  axpy_inplace(-scale * s.label * logistic_weight(t), s.features, out);
}

/// Gradient of one component f(x, z_i) = log(1 + exp(-y_i a_i^T x)) + (lambda/2)|x|^2.
inline DenseVector sample_grad(const Problem& p, std::size_t i, const DenseVector& x) {
  require_same_dim(p.dim(), x.dim());
  DenseVector g = x;
  scale_inplace(p.lambda(), g);
  add_sample_data_grad(p.dataset().samples.at(i), x, 1.0, g);
  return g;
}

inline double range_data_loss(const Problem& p, const IndexRange& r, const DenseVector& x) {
  double s = 0.0;
  for (std::size_t i = r.begin; i < r.end; ++i) s += sample_data_loss(p.dataset().samples[i], x);
  return s / static_cast<double>(r.size());
}

inline double node_loss(const Problem& p, std::size_t node, const DenseVector& x) {
  require_same_dim(p.dim(), x.dim());
  return range_data_loss(p, p.node_range(node), x) + 0.5 * p.lambda() * norm_sq(x);
}

inline double loss(const Problem& p, const DenseVector& x) {
  require_same_dim(p.dim(), x.dim());
  const double reg = 0.5 * p.lambda() * norm_sq(x);
  if (p.regime() == Regime::Identical)
    return range_data_loss(p, p.node_range(0), x) + reg;
  double s = 0.0;
  for (std::size_t m = 0; m < p.num_nodes(); ++m) s += range_data_loss(p, p.node_range(m), x);
  return s / static_cast<double>(p.num_nodes()) + reg;
}

inline void range_grad_into(const Problem& p, const IndexRange& r, const DenseVector& x,
                            DenseVector& out) {
  out = x;
  scale_inplace(p.lambda(), out);
  const double w = 1.0 / static_cast<double>(r.size());
  for (std::size_t i = r.begin; i < r.end; ++i)
    add_sample_data_grad(p.dataset().samples[i], x, w, out);
}

inline DenseVector full_grad(const Problem& p, std::size_t node, const DenseVector& x) {
  require_same_dim(p.dim(), x.dim());
  DenseVector g;
  range_grad_into(p, p.node_range(node), x, g);
  return g;
}

inline DenseVector full_grad_global(const Problem& p, const DenseVector& x) {
  require_same_dim(p.dim(), x.dim());
  if (p.regime() == Regime::Identical) return full_grad(p, 0, x);
  DenseVector sum(p.dim());
  for (std::size_t m = 0; m < p.num_nodes(); ++m) axpy_inplace(1.0, full_grad(p, m, x), sum);
  scale_inplace(1.0 / static_cast<double>(p.num_nodes()), sum);
  return sum;
}

/// Minibatch gradient of node `node` into `out`. WithReplacement averages
/// `batch` uniform draws from the node's range; Exhaustive sweeps the range
/// once and ignores `batch`.
inline void stochastic_grad_into(const Problem& p, std::size_t node, const DenseVector& x,
                                 RngStream& rng, std::size_t batch, Sampling sampling,
                                 DenseVector& out) {
  require_same_dim(p.dim(), x.dim());
  const IndexRange& r = p.node_range(node);
  if (r.size() == 0) throw ConfigError("stochastic_grad: empty node range");
  if (sampling == Sampling::Exhaustive) {
    range_grad_into(p, r, x, out);
    return;
  }
  if (batch == 0) throw ConfigError("stochastic_grad: batch must be >= 1");
  out = x;
  scale_inplace(p.lambda(), out);
  const double w = 1.0 / static_cast<double>(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t i = r.begin + rng.draw_index(r.size());
    add_sample_data_grad(p.dataset().samples[i], x, w, out);
  }
}

inline DenseVector stochastic_grad(const Problem& p, std::size_t node, const DenseVector& x,
                                   RngStream& rng, std::size_t batch,
                                   Sampling sampling = Sampling::WithReplacement) {
  DenseVector g;
  stochastic_grad_into(p, node, x, rng, batch, sampling, g);
  return g;
}

inline void node_gradient_into(const Problem& p, std::size_t node, const DenseVector& x,
                               RngStream& rng, GradientMode mode, std::size_t batch,
                               DenseVector& out) {
  if (mode == GradientMode::Full)
    range_grad_into(p, p.node_range(node), x, out);
  else
    stochastic_grad_into(p, node, x, rng, batch, Sampling::WithReplacement, out);
}

// ---------------------------------------------------------------------------
// Smoothness constant

struct PowerIterationResult {
  double eigenvalue = 0.0;
  std::size_t iterations = 0;
  double residual = 0.0;
};

/// Largest eigenvalue of (1/4) sum_i w_i a_i a_i^T by power iteration,
/// stopping when successive Rayleigh quotients agree to `rel_tol`. Empty
/// `weights` means w_i = 1/n.
inline PowerIterationResult top_eigen_logistic(const Dataset& ds,
                                               std::span<const double> weights = {},
                                               double rel_tol = 1e-9,
                                               std::size_t max_iter = 10'000) {
  if (ds.size() == 0) throw ConfigError("estimate_L: empty dataset");
  if (!weights.empty() && weights.size() != ds.size())
    throw ConfigError("estimate_L: one weight per sample required");
  const double uniform = 1.0 / static_cast<double>(ds.size());
  auto apply = [&](const DenseVector& v) {
    DenseVector out(ds.dim);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const auto& a = ds.samples[i].features;
      const double w = weights.empty() ? uniform : weights[i];
      axpy_inplace(0.25 * w * dot(a, v), a, out);
    }
    return out;
  };

  DenseVector v(ds.dim);
  RngStream rng(0x5eed, 0x1);
  for (auto& x : v) x = 0.5 + rng.next_uniform();  // positive start, off any axis
  scale_inplace(1.0 / std::sqrt(norm_sq(v)), v);

  double prev = 0.0;
  PowerIterationResult res;
  for (std::size_t it = 1; it <= max_iter; ++it) {
    DenseVector w = apply(v);
    const double rq = dot(v, w);
    const double wn = std::sqrt(norm_sq(w));
    if (wn == 0.0) return {0.0, it, 0.0};  // A == 0
    res = {rq, it, std::abs(rq - prev)};
    if (it > 1 && std::abs(rq - prev) <= rel_tol * std::abs(rq)) return res;
    prev = rq;
    scale_inplace(1.0 / wn, w);
    v = std::move(w);
  }
  throw ConvergenceError("power iteration did not converge in " + std::to_string(max_iter) +
                         " iterations (last change " + format_double(res.residual) + ")");
}

/// L = lambda_max((1/(4n)) A^T A) + lambda.
inline double estimate_L(const Dataset& ds, double lambda) {
  return top_eigen_logistic(ds).eigenvalue + lambda;
}

/// Per-sample weights 1/(M n_m) that f = (1/M) sum_m f_m puts on each row.
/// Uniform (1/n) for the identical regime and for equal block sizes.
inline std::vector<double> sample_weights(std::size_t n, const Partition& part) {
  std::vector<double> w(n, 1.0 / static_cast<double>(n));
  if (part.regime == Regime::Identical) return w;
  const double M = static_cast<double>(part.num_nodes());
  for (const auto& r : part.node_ranges)
    for (std::size_t i = r.begin; i < r.end; ++i) w[i] = 1.0 / (M * static_cast<double>(r.size()));
  return w;
}

/// Smoothness of f for the problem's partition. Matches
/// estimate_L(dataset, lambda) unless heterogeneous blocks differ in size.
inline double estimate_L(const Dataset& ds, const Partition& part, double lambda) {
  const auto w = sample_weights(ds.size(), part);
  return top_eigen_logistic(ds, w).eigenvalue + lambda;
}

inline double estimate_L(const Problem& p) {
  return estimate_L(p.dataset(), p.partition(), p.lambda());
}

inline Problem make_problem(std::shared_ptr<const Dataset> data, std::size_t M, Regime regime,
                            double lambda) {
  Partition part = partition(*data, M, regime);
  const double L = estimate_L(*data, part, lambda);
  return Problem(std::move(data), std::move(part), lambda, L);
}

/// lambda = 1/n, the default regularization.
inline double default_lambda(const Dataset& ds) { return 1.0 / static_cast<double>(ds.size()); }

// ---------------------------------------------------------------------------
// Reference optimum

template <class O>
concept SmoothObjective = requires(const O& o, const DenseVector& x) {
  { o.dim() } -> std::convertible_to<std::size_t>;
  { o.value(x) } -> std::convertible_to<double>;
  { o.gradient(x) } -> std::convertible_to<DenseVector>;
  { o.smoothness() } -> std::convertible_to<double>;
  { o.strong_convexity() } -> std::convertible_to<double>;
};

struct ReferenceSolution {
  DenseVector x_star;
  double f_star = 0.0;
  double grad_norm = 0.0;
  double tolerance = 0.0;
  std::size_t iterations = 0;
  bool accelerated = false;

  bool converged() const noexcept { return grad_norm <= tolerance; }
};

struct SolverOptions {
  bool nesterov = false;
  std::size_t max_iter = 10'000'000;
};

/// Full-batch gradient descent at stepsize 1/L from x = 0 until
/// |grad f(x)| <= tol. The Nesterov variant uses the strongly convex momentum
/// (sqrt(kappa)-1)/(sqrt(kappa)+1) with gradient-based restarts.
template <SmoothObjective O>
ReferenceSolution solve_reference(const O& obj, double tol, SolverOptions opts = {}) {
  if (!(tol > 0.0)) throw ConfigError("solve_reference: tol must be > 0");
  const double L = obj.smoothness();
  const double mu = obj.strong_convexity();
  const double step = 1.0 / L;
  DenseVector x(obj.dim());
  DenseVector x_prev = x;
  double beta = 0.0;
  if (opts.nesterov && mu > 0.0) {
    const double sk = std::sqrt(L / mu);
    beta = (sk - 1.0) / (sk + 1.0);
  }
  std::size_t since_restart = 0;
  for (std::size_t it = 0; it < opts.max_iter; ++it) {
    DenseVector y = x;
    if (opts.nesterov) {
      const double b = mu > 0.0 ? beta
                                : static_cast<double>(since_restart) /
                                      static_cast<double>(since_restart + 3);
      for (std::size_t j = 0; j < y.dim(); ++j) y[j] += b * (x[j] - x_prev[j]);
    }
    const DenseVector g = obj.gradient(y);
    const double gn = std::sqrt(norm_sq(g));
    if (!std::isfinite(gn)) throw ConvergenceError("solve_reference: non-finite gradient");
    if (gn <= tol) {
      return {y, obj.value(y), gn, tol, it, opts.nesterov};
    }
    DenseVector next = y;
    axpy_inplace(-step, g, next);
    if (opts.nesterov) {
      // Restart when the momentum direction fights the gradient.
      double ip = 0.0;
      for (std::size_t j = 0; j < g.dim(); ++j) ip += g[j] * (next[j] - x[j]);
      if (ip > 0.0) {
        since_restart = 0;
        x_prev = x;
        next = x;
        axpy_inplace(-step, obj.gradient(x), next);
      } else {
        ++since_restart;
      }
    }
    x_prev = std::move(x);
    x = std::move(next);
  }
  throw ConvergenceError("solve_reference: iteration cap " + std::to_string(opts.max_iter) +
                         " reached before |grad| <= " + format_double(tol));
}

inline KeyValues to_key_values(const ReferenceSolution& r) {
  KeyValues kv;
  kv.set("f_star", r.f_star).set("grad_norm", r.grad_norm).set("tolerance", r.tolerance);
  kv.set("iterations", r.iterations).set("accelerated", r.accelerated);
  kv.set("dim", r.x_star.dim()).set("x_star", join_doubles(r.x_star.values()));
  return kv;
}

inline ReferenceSolution reference_from_key_values(const KeyValues& kv) {
  ReferenceSolution r;
  r.x_star = parse_vector(kv.get("x_star"));
  r.f_star = kv.get_double("f_star");
  r.grad_norm = kv.get_double("grad_norm");
  r.tolerance = kv.get_double("tolerance");
  r.iterations = static_cast<std::size_t>(kv.get_double("iterations"));
  r.accelerated = kv.get("accelerated") == "true";
  return r;
}

// ---------------------------------------------------------------------------
// Variance at the optimum

struct VarianceReport {
  /// Probe-set estimate of the uniform bound; not a true supremum.
  double sigma_sq = 0.0;
  bool sigma_sq_is_estimate = true;
  std::size_t probe_points = 0;
  /// Mean over nodes of E|grad f(x*, z_m)|^2, every node sampling all data.
  double sigma_opt_sq = 0.0;
  /// Mean over nodes of E|grad f_m(x*, z_m)|^2 under the index-based split.
  double sigma_dif_sq = 0.0;
  /// (1/M) sum_m |grad f_m(x*)|^2, the zero-noise part of sigma_dif_sq.
  double mean_node_grad_sq = 0.0;
  /// sigma_m^2 for the problem's own regime.
  std::vector<double> per_node_sigma_sq;
  std::vector<double> per_node_grad_sq;
  std::vector<std::size_t> per_node_size;
  std::size_t batch = 1;
  bool exhaustive = false;
  Regime regime = Regime::Identical;
  std::size_t M = 1;
};

namespace detail {

struct RangeMoments {
  double mean_sq = 0.0;   // |E g|^2
  double variance = 0.0;  // E|g - E g|^2
};

inline RangeMoments range_moments(const Problem& p, const IndexRange& r, const DenseVector& x) {
  DenseVector mean;
  range_grad_into(p, r, x, mean);
  double var = 0.0;
  for (std::size_t i = r.begin; i < r.end; ++i) {
    const DenseVector g = sample_grad(p, i, x);
    var += dist_sq(g, mean);
  }
  return {norm_sq(mean), var / static_cast<double>(r.size())};
}

inline double batch_second_moment(const RangeMoments& m, std::size_t batch, bool exhaustive) {
  return exhaustive ? m.mean_sq : m.mean_sq + m.variance / static_cast<double>(batch);
}

inline double mean_of(const std::vector<double>& xs) {
  double s = 0.0;
  for (double v : xs) s += v;
  return s / static_cast<double>(xs.size());
}

}  // namespace detail

/// Exact (enumerated) variance quantities at x*. With `Sampling::Exhaustive`
/// the node gradient is the full node gradient and only the mean part
/// remains.
inline VarianceReport measure_variances(const Problem& p, const ReferenceSolution& ref,
                                        std::size_t batch,
                                        Sampling sampling = Sampling::WithReplacement) {
  if (!ref.converged())
    throw ConvergenceError("measure_variances: reference solution not converged (|grad| " +
                           format_double(ref.grad_norm) + " > " + format_double(ref.tolerance) +
                           ")");
  if (batch == 0) throw ConfigError("measure_variances: batch must be >= 1");
  require_same_dim(p.dim(), ref.x_star.dim());
  const bool exhaustive = sampling == Sampling::Exhaustive;
  const std::size_t M = p.num_nodes();
  const std::size_t n = p.dataset().size();
  const DenseVector& xs = ref.x_star;

  VarianceReport rep;
  rep.batch = batch;
  rep.exhaustive = exhaustive;
  rep.regime = p.regime();
  rep.M = M;

  // Identical regime: every node samples all n points, so sigma_m is shared.
  const auto all = detail::range_moments(p, IndexRange{0, n}, xs);
  const double shared = detail::batch_second_moment(all, batch, exhaustive);
  rep.sigma_opt_sq = detail::mean_of(std::vector<double>(M, shared));

  const Partition het = partition(n, M, Regime::Heterogeneous);
  std::vector<double> het_sigma(M), het_grad(M);
  std::vector<std::size_t> het_size(M);
  for (std::size_t m = 0; m < M; ++m) {
    const auto mom = detail::range_moments(p, het.node_ranges[m], xs);
    het_sigma[m] = detail::batch_second_moment(mom, batch, exhaustive);
    het_grad[m] = mom.mean_sq;
    het_size[m] = het.node_ranges[m].size();
  }
  rep.sigma_dif_sq = detail::mean_of(het_sigma);
  rep.mean_node_grad_sq = detail::mean_of(het_grad);

  if (p.regime() == Regime::Identical) {
    rep.per_node_sigma_sq.assign(M, shared);
    rep.per_node_grad_sq.assign(M, all.mean_sq);
    rep.per_node_size.assign(M, n);
  } else {
    rep.per_node_sigma_sq = het_sigma;
    rep.per_node_grad_sq = het_grad;
    rep.per_node_size = het_size;
  }

  // Probe points for the uniform variance bound: x*, 0, 2x*, and three
  // seeded perturbations of x* at radius max(|x*|, 1).
  std::vector<DenseVector> probes{xs, DenseVector(p.dim())};
  DenseVector twice = xs;
  scale_inplace(2.0, twice);
  probes.push_back(twice);
  const double radius = std::max(std::sqrt(norm_sq(xs)), 1.0);
  RngStream rng(0x9a0be, 0x2);
  for (int k = 0; k < 3; ++k) {
    DenseVector dir(p.dim());
    for (std::size_t j = 0; j < dir.dim(); ++j) dir[j] = rng.next_normal_pair().first;
    scale_inplace(radius / std::sqrt(norm_sq(dir)), dir);
    probes.push_back(axpy(1.0, dir, xs));
  }
  rep.probe_points = probes.size();
  double sup = 0.0;
  if (!exhaustive) {
    for (const auto& x : probes) {
      for (std::size_t m = 0; m < M; ++m) {
        const IndexRange r = p.regime() == Regime::Identical ? IndexRange{0, n}
                                                             : p.node_range(m);
        sup = std::max(sup, detail::range_moments(p, r, x).variance / static_cast<double>(batch));
        if (p.regime() == Regime::Identical) break;
      }
    }
  }
  rep.sigma_sq = sup;
  return rep;
}

inline KeyValues to_key_values(const VarianceReport& v) {
  KeyValues kv;
  kv.set("sigma_sq", v.sigma_sq).set("sigma_sq_is_estimate", v.sigma_sq_is_estimate);
  kv.set("sigma_sq_probe_points", v.probe_points);
  kv.set("sigma_opt_sq", v.sigma_opt_sq).set("sigma_dif_sq", v.sigma_dif_sq);
  kv.set("mean_node_grad_sq", v.mean_node_grad_sq);
  kv.set("batch", v.exhaustive ? std::string("full") : std::to_string(v.batch));
  kv.set("regime", to_string(v.regime)).set("M", v.M);
  return kv;
}

/// One row per node: node, n_m, sigma_m_sq, grad_norm_sq.
inline void write_node_csv(std::ostream& os, const VarianceReport& v) {
  os << "node,n_m,sigma_m_sq,grad_norm_sq\n";
  for (std::size_t m = 0; m < v.per_node_sigma_sq.size(); ++m)
    os << m << ',' << v.per_node_size[m] << ',' << format_double(v.per_node_sigma_sq[m]) << ','
       << format_double(v.per_node_grad_sq[m]) << '\n';
}

}  // namespace localsgd
