// SPDX-License-Identifier: Apache-2.0
//
// Diagonal quadratic with injected Gaussian gradient noise. The noise has
// E|xi|^2 = sigma^2 exactly, so the uniform-variance assumption holds with a
// known constant.
#pragma once

#include <algorithm>
#include <cmath>

#include "localsgd/dataio.hpp"
#include "localsgd/numkit.hpp"
#include "localsgd/objective.hpp"

namespace localsgd {

/// f(x) = (1/2) sum_j h_j (x_j - c_j)^2, identical on every node.
class NoisyQuadratic {
 public:
  NoisyQuadratic(DenseVector curvature, DenseVector center, double sigma_sq, std::size_t M)
      : h_(std::move(curvature)), c_(std::move(center)), sigma_sq_(sigma_sq), M_(M) {
    require_same_dim(h_.dim(), c_.dim());
    if (h_.dim() == 0) throw ConfigError("quadratic: empty dimension");
    if (M_ == 0) throw ConfigError("quadratic: M must be positive");
    if (!(sigma_sq_ >= 0.0)) throw ConfigError("quadratic: sigma_sq must be >= 0");
    for (double v : h_)
      if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("quadratic: bad curvature");
  }

  /// Curvatures evenly spaced on [mu, L]; center drawn from N(0, I) with `seed`.
  static NoisyQuadratic spread(std::size_t d, double mu, double L, double sigma_sq,
                               std::size_t M, std::uint64_t seed = 7) {
    DenseVector h(d), c(d);
    for (std::size_t j = 0; j < d; ++j)
      h[j] = d == 1 ? L : mu + (L - mu) * static_cast<double>(j) / static_cast<double>(d - 1);
    RngStream rng(seed, 0xc);
    for (auto& v : c) v = rng.next_normal_pair().first;
    return NoisyQuadratic(std::move(h), std::move(c), sigma_sq, M);
  }

  std::size_t dim() const noexcept { return h_.dim(); }
  std::size_t num_nodes() const noexcept { return M_; }
  Regime regime() const noexcept { return Regime::Identical; }
  double sigma_sq() const noexcept { return sigma_sq_; }
  const DenseVector& x_star() const noexcept { return c_; }
  double f_star() const noexcept { return 0.0; }

  double smoothness() const { return *std::max_element(h_.begin(), h_.end()); }
  double strong_convexity() const { return *std::min_element(h_.begin(), h_.end()); }

  double value(const DenseVector& x) const {
    require_same_dim(dim(), x.dim());
    double s = 0.0;
    for (std::size_t j = 0; j < dim(); ++j) {
      const double d = x[j] - c_[j];
      s += h_[j] * d * d;
    }
    return 0.5 * s;
  }

  DenseVector gradient(const DenseVector& x) const {
    require_same_dim(dim(), x.dim());
    DenseVector g(dim());
    for (std::size_t j = 0; j < dim(); ++j) g[j] = h_[j] * (x[j] - c_[j]);
    return g;
  }

  /// Exact gradient plus N(0, sigma^2 / (d * batch)) per coordinate when
  /// stochastic.
  void node_gradient(std::size_t node, const DenseVector& x, RngStream& rng, GradientMode mode,
                     std::size_t batch, DenseVector& out) const {
    if (node >= M_) throw ConfigError("quadratic: node index out of range");
    out = gradient(x);
    if (mode == GradientMode::Full || sigma_sq_ == 0.0) return;
    if (batch == 0) throw ConfigError("quadratic: batch must be >= 1");
    const double sd = std::sqrt(sigma_sq_ / static_cast<double>(dim() * batch));
    for (std::size_t j = 0; j < dim(); j += 2) {
      const auto [a, b] = rng.next_normal_pair();
      out[j] += sd * a;
      if (j + 1 < dim()) out[j + 1] += sd * b;
    }
  }

 private:
  DenseVector h_;
  DenseVector c_;
  double sigma_sq_;
  std::size_t M_;
};

}  // namespace localsgd
