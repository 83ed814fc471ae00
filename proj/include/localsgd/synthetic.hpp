// SPDX-License-Identifier: Apache-2.0
//
// Seeded synthetic binary datasets for hermetic runs when LIBSVM files are
// not available.
#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "localsgd/dataio.hpp"
#include "localsgd/numkit.hpp"
#include "localsgd/textio.hpp"

namespace localsgd {

enum class SortOrder { None, ByLabel, ByMargin };

struct SyntheticSpec {
  std::size_t n = 1000;
  std::size_t d = 20;
  std::uint64_t seed = 1;
  double separation = 2.0;   // std-dev of the planted margin a^T w*
  double flip_prob = 0.0;    // probability of flipping each label
  SortOrder sort = SortOrder::None;

  KeyValues describe() const {
    KeyValues kv;
    kv.set("synthetic.n", n).set("synthetic.d", d).set("synthetic.seed", seed);
    kv.set("synthetic.separation", separation).set("synthetic.flip_prob", flip_prob);
    kv.set("synthetic.sort", sort == SortOrder::None      ? "none"
                             : sort == SortOrder::ByLabel ? "label"
                                                          : "margin");
    return kv;
  }
};

/// Gaussian features (variance 1/d per coordinate), labels from a planted
/// separator, optional label flips, and optional sorting so that contiguous
/// node blocks see different data.
inline Dataset make_synthetic(const SyntheticSpec& spec) {
  if (spec.n == 0 || spec.d == 0) throw ConfigError("synthetic: n and d must be positive");
  RngStream rng(spec.seed, 0xda7a);
  auto normal = [&rng, have = false, spare = 0.0]() mutable {
    if (have) {
      have = false;
      return spare;
    }
    const auto [a, b] = rng.next_normal_pair();
    spare = b;
    have = true;
    return a;
  };

  DenseVector w(spec.d);
  for (auto& v : w) v = normal();
  const double wn = std::sqrt(norm_sq(w));
  // a ~ N(0, I/d)  =>  a^T w ~ N(0, |w|^2/d); rescale to the requested spread.
  scale_inplace(spec.separation * std::sqrt(static_cast<double>(spec.d)) / wn, w);

  struct Row {
    std::vector<double> a;
    double label;
    double margin;
  };
  std::vector<Row> rows(spec.n);
  const double sd = 1.0 / std::sqrt(static_cast<double>(spec.d));
  for (auto& r : rows) {
    r.a.resize(spec.d);
    for (auto& v : r.a) {
      v = normal() * sd;
      if (v == 0.0) v = sd * 1e-3;
    }
    r.margin = 0.0;
    for (std::size_t j = 0; j < spec.d; ++j) r.margin += r.a[j] * w[j];
    r.label = r.margin >= 0 ? 1.0 : -1.0;
    if (spec.flip_prob > 0.0 && rng.next_uniform() < spec.flip_prob) r.label = -r.label;
  }
  if (spec.sort == SortOrder::ByLabel)
    std::stable_sort(rows.begin(), rows.end(),
                     [](const Row& x, const Row& y) { return x.label < y.label; });
  else if (spec.sort == SortOrder::ByMargin)
    std::stable_sort(rows.begin(), rows.end(),
                     [](const Row& x, const Row& y) { return x.margin < y.margin; });

  Dataset ds;
  ds.dim = spec.d;
  ds.name = "synthetic";
  ds.samples.reserve(spec.n);
  std::vector<std::uint32_t> idx(spec.d);
  for (std::size_t j = 0; j < spec.d; ++j) idx[j] = static_cast<std::uint32_t>(j);
  for (auto& r : rows) ds.samples.push_back({SparseVector(idx, std::move(r.a), spec.d), r.label});
  return ds;
}

/// Every sample satisfies y_i a_i = z for one fixed z (features and labels
/// flip sign together), so all component losses share one minimizer and the
/// variance at the optimum is zero in every regime.
inline Dataset make_interpolating(std::size_t n, std::size_t d, std::uint64_t seed) {
  if (n == 0 || d == 0) throw ConfigError("interpolating: n and d must be positive");
  RngStream rng(seed, 0x1e7e);
  std::vector<double> z(d);
  for (std::size_t j = 0; j < d; j += 2) {
    const auto [a, b] = rng.next_normal_pair();
    z[j] = a / std::sqrt(static_cast<double>(d));
    if (j + 1 < d) z[j + 1] = b / std::sqrt(static_cast<double>(d));
  }
  for (auto& v : z)
    if (v == 0.0) v = 1e-3;
  std::vector<std::uint32_t> idx(d);
  for (std::size_t j = 0; j < d; ++j) idx[j] = static_cast<std::uint32_t>(j);
  Dataset ds;
  ds.dim = d;
  ds.name = "interpolating";
  for (std::size_t i = 0; i < n; ++i) {
    const double y = rng.next_uniform() < 0.5 ? -1.0 : 1.0;
    std::vector<double> a(d);
    for (std::size_t j = 0; j < d; ++j) a[j] = y * z[j];
    ds.samples.push_back({SparseVector(idx, std::move(a), d), y});
  }
  return ds;
}

}  // namespace localsgd
