// SPDX-License-Identifier: Apache-2.0
//
// Dense/sparse vector arithmetic and the counter-based random streams shared
// by every other module. All arithmetic is double precision and every
// reduction runs left to right so results are bit-stable.
#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

#include "localsgd/error.hpp"

namespace localsgd {

class DenseVector {
 public:
  DenseVector() = default;
  explicit DenseVector(std::size_t dim, double fill = 0.0) : values_(dim, fill) {}
  explicit DenseVector(std::vector<double> values) : values_(std::move(values)) {}
  DenseVector(std::initializer_list<double> values) : values_(values) {}

  std::size_t dim() const noexcept { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }

  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }
  const std::vector<double>& raw() const noexcept { return values_; }

  auto begin() const noexcept { return values_.begin(); }
  auto end() const noexcept { return values_.end(); }
  auto begin() noexcept { return values_.begin(); }
  auto end() noexcept { return values_.end(); }

  void fill(double v) {
    for (auto& x : values_) x = v;
  }

  bool all_finite() const noexcept {
    for (double v : values_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  friend bool operator==(const DenseVector&, const DenseVector&) = default;

 private:
  std::vector<double> values_;
};

/// Sparse row with strictly increasing 0-based indices and no stored zeros.
class SparseVector {
 public:
  SparseVector() = default;

  /// Validates the invariants; throws Error on violation.
  SparseVector(std::vector<std::uint32_t> indices, std::vector<double> values,
               std::size_t dim)
      : indices_(std::move(indices)), values_(std::move(values)), dim_(dim) {
    if (indices_.size() != values_.size())
      throw Error("sparse vector: index/value length mismatch");
    for (std::size_t k = 0; k < indices_.size(); ++k) {
      if (indices_[k] >= dim_) throw Error("sparse vector: index out of range");
      if (k > 0 && indices_[k] <= indices_[k - 1])
        throw Error("sparse vector: indices not strictly increasing");
      if (values_[k] == 0.0) throw Error("sparse vector: stored zero");
      if (!std::isfinite(values_[k])) throw Error("sparse vector: non-finite value");
    }
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t nnz() const noexcept { return indices_.size(); }
  std::span<const std::uint32_t> indices() const noexcept { return indices_; }
  std::span<const double> values() const noexcept { return values_; }

  /// Widens the ambient dimension (LIBSVM files omit trailing zero features).
  void pad_to(std::size_t dim) {
    if (dim < dim_) throw Error("sparse vector: cannot shrink dimension");
    dim_ = dim;
  }

  friend bool operator==(const SparseVector&, const SparseVector&) = default;

 private:
  std::vector<std::uint32_t> indices_;
  std::vector<double> values_;
  std::size_t dim_ = 0;
};

inline void require_same_dim(std::size_t expected, std::size_t got) {
  if (expected != got) throw DimensionError(expected, got);
}

inline double dot(const SparseVector& a, const DenseVector& b) {
  require_same_dim(a.dim(), b.dim());
  const auto idx = a.indices();
  const auto val = a.values();
  double s = 0.0;
  for (std::size_t k = 0; k < idx.size(); ++k) s += val[k] * b[idx[k]];
  return s;
}

inline double dot(const DenseVector& a, const DenseVector& b) {
  require_same_dim(a.dim(), b.dim());
  double s = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm_sq(const DenseVector& a) { return dot(a, a); }

inline double dist_sq(const DenseVector& a, const DenseVector& b) {
  require_same_dim(a.dim(), b.dim());
  double s = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

/// Returns y + alpha * x.
inline DenseVector axpy(double alpha, const DenseVector& x, const DenseVector& y) {
  require_same_dim(x.dim(), y.dim());
  DenseVector out(y.dim());
  for (std::size_t i = 0; i < y.dim(); ++i) out[i] = y[i] + alpha * x[i];
  return out;
}

/// y += alpha * x
inline void axpy_inplace(double alpha, const DenseVector& x, DenseVector& y) {
  require_same_dim(x.dim(), y.dim());
  for (std::size_t i = 0; i < y.dim(); ++i) y[i] += alpha * x[i];
}

/// y += alpha * a, touching only the stored entries of a.
inline void axpy_inplace(double alpha, const SparseVector& a, DenseVector& y) {
  require_same_dim(a.dim(), y.dim());
  const auto idx = a.indices();
  const auto val = a.values();
  for (std::size_t k = 0; k < idx.size(); ++k) y[idx[k]] += alpha * val[k];
}

inline void scale_inplace(double alpha, DenseVector& y) {
  for (auto& v : y) v *= alpha;
}

inline DenseVector densify(const SparseVector& a) {
  DenseVector out(a.dim());
  const auto idx = a.indices();
  const auto val = a.values();
  for (std::size_t k = 0; k < idx.size(); ++k) out[idx[k]] = val[k];
  return out;
}

/// Mean of equally sized vectors, summed in ascending index order.
inline DenseVector mean_of(std::span<const DenseVector> xs) {
  if (xs.empty()) throw Error("mean of an empty set of vectors");
  DenseVector out(xs.front().dim());
  for (const auto& x : xs) axpy_inplace(1.0, x, out);
  const double m = static_cast<double>(xs.size());
  for (auto& v : out) v /= m;
  return out;
}

namespace detail {

inline std::pair<std::uint64_t, std::uint64_t> mulhilo64(std::uint64_t a,
                                                         std::uint64_t b) {
  const unsigned __int128 p = static_cast<unsigned __int128>(a) * b;
  return {static_cast<std::uint64_t>(p >> 64), static_cast<std::uint64_t>(p)};
}

}  // namespace detail

/// Philox2x64-10 block function (Salmon et al., SC'11).
inline std::array<std::uint64_t, 2> philox2x64(std::array<std::uint64_t, 2> ctr,
                                               std::uint64_t key) {
  constexpr std::uint64_t kMul = 0xD2B74407B1CE6E93ull;
  constexpr std::uint64_t kWeyl = 0x9E3779B97F4A7C15ull;
  for (int r = 0; r < 10; ++r) {
    if (r > 0) key += kWeyl;
    const auto [hi, lo] = detail::mulhilo64(kMul, ctr[0]);
    ctr = {hi ^ key ^ ctr[1], lo};
  }
  return ctr;
}

/// Counter-based random stream. Every draw is a pure function of
/// (seed, stream_id, counter), so node streams can be built in any order
/// and on any thread. Each draw consumes exactly one counter value.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id, std::uint64_t counter = 0)
      : seed_(seed), stream_id_(stream_id), counter_(counter) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }
  std::uint64_t counter() const noexcept { return counter_; }

  std::array<std::uint64_t, 2> next_block() {
    return philox2x64({counter_++, stream_id_}, seed_);
  }

  std::uint64_t next_u64() { return next_block()[0]; }

  /// Uniform on [0, 1) with 53 random bits.
  double next_uniform() { return to_unit(next_u64()); }

  /// Uniform on {0, ..., n-1} by 128-bit multiply-shift; bias is below n / 2^64.
  std::size_t draw_index(std::size_t n) {
    if (n == 0) throw Error("draw_index: n must be positive");
    return static_cast<std::size_t>(detail::mulhilo64(next_u64(), n).first);
  }

  /// Two independent standard normals (Box-Muller on one block).
  std::pair<double, double> next_normal_pair() {
    const auto b = next_block();
    const double u1 = 1.0 - to_unit(b[0]);  // (0, 1]
    const double u2 = to_unit(b[1]);
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double th = 2.0 * std::numbers::pi * u2;
    return {r * std::cos(th), r * std::sin(th)};
  }

 private:
  static double to_unit(std::uint64_t x) {
    return static_cast<double>(x >> 11) * 0x1.0p-53;
  }

  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t counter_;
};

}  // namespace localsgd
