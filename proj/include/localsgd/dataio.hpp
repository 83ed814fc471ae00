// SPDX-License-Identifier: Apache-2.0
//
// LIBSVM ingestion, dataset manifests, and the assignment of samples to nodes.
// Sample order is always file order: the heterogeneous regime derives its
// non-i.i.d. split from index order alone.
#pragma once

#include <openssl/evp.h>
#include <zlib.h>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "localsgd/error.hpp"
#include "localsgd/numkit.hpp"
#include "localsgd/textio.hpp"

namespace localsgd {

struct Sample {
  SparseVector features;
  double label = 1.0;  // exactly -1 or +1

  friend bool operator==(const Sample&, const Sample&) = default;
};

struct Dataset {
  std::vector<Sample> samples;
  std::size_t dim = 0;
  std::string name;

  std::size_t size() const noexcept { return samples.size(); }

  /// Pads every row to `new_dim`; never shrinks.
  void pad_dim(std::size_t new_dim) {
    if (new_dim < dim)
      throw ConfigError("dimension override " + std::to_string(new_dim) +
                        " is below the data's " + std::to_string(dim));
    for (auto& s : samples) s.features.pad_to(new_dim);
    dim = new_dim;
  }

  friend bool operator==(const Dataset& a, const Dataset& b) {
    return a.dim == b.dim && a.samples == b.samples;
  }
};

enum class Regime { Identical, Heterogeneous };

inline const char* to_string(Regime r) {
  return r == Regime::Identical ? "identical" : "heterogeneous";
}

inline Regime parse_regime(std::string_view s) {
  if (s == "identical" || s == "iid") return Regime::Identical;
  if (s == "heterogeneous" || s == "het") return Regime::Heterogeneous;
  throw ConfigError("unknown regime '" + std::string(s) + "'");
}

struct IndexRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const noexcept { return end - begin; }
  friend bool operator==(const IndexRange&, const IndexRange&) = default;
};

struct Partition {
  std::vector<IndexRange> node_ranges;
  Regime regime = Regime::Identical;

  std::size_t num_nodes() const noexcept { return node_ranges.size(); }
};

// ---------------------------------------------------------------------------
// LIBSVM text

namespace detail {

inline double normalize_label(double raw, const std::set<double>& distinct,
                              std::size_t line) {
  if (distinct.size() == 2) return raw == *distinct.begin() ? -1.0 : 1.0;
  // Single-class file: keep the sign convention of the usual encodings.
  if (raw == -1.0 || raw == 0.0) return -1.0;
  if (raw == 1.0 || raw == 2.0) return 1.0;
  throw ParseError(line, "cannot normalize single-class label " + format_double(raw));
}

}  // namespace detail

/// Parses LIBSVM text ("label idx:val ..." with 1-based indices).
///
/// Labels from {0,1}, {-1,+1}, {1,2} (or any two distinct values) map the
/// smaller value to -1. Explicit zero values are dropped. Blank lines and
/// '#' comments are ignored. `min_dim` pads the dimension upward.
inline Dataset parse_libsvm(std::istream& in, std::string name = {},
                            std::size_t min_dim = 0) {
  struct RawRow {
    double label;
    std::vector<std::uint32_t> idx;
    std::vector<double> val;
    std::size_t line;
  };
  std::vector<RawRow> rows;
  std::set<double> distinct;
  std::size_t max_index = 0;

  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream tok(line);
    std::string label_tok;
    if (!(tok >> label_tok)) continue;

    RawRow row{parse_double(label_tok, lineno), {}, {}, lineno};
    if (!std::isfinite(row.label)) throw ParseError(lineno, "non-finite label");
    std::string item;
    std::int64_t prev = 0;
    while (tok >> item) {
      const auto colon = item.find(':');
      if (colon == std::string::npos || colon == 0 || colon + 1 == item.size())
        throw ParseError(lineno, "malformed feature '" + item + "'");
      std::int64_t index = 0;
      const auto idx_str = std::string_view(item).substr(0, colon);
      const auto res =
          std::from_chars(idx_str.data(), idx_str.data() + idx_str.size(), index);
      if (res.ec != std::errc{} || res.ptr != idx_str.data() + idx_str.size())
        throw ParseError(lineno, "non-numeric index in '" + item + "'");
      if (index < 1) throw ParseError(lineno, "feature indices are 1-based");
      if (index <= prev) throw ParseError(lineno, "indices not strictly increasing");
      if (index > std::int64_t{UINT32_MAX}) throw ParseError(lineno, "index too large");
      prev = index;
      const double v = parse_double(std::string_view(item).substr(colon + 1), lineno);
      if (!std::isfinite(v)) throw ParseError(lineno, "non-finite feature value");
      if (v == 0.0) continue;
      row.idx.push_back(static_cast<std::uint32_t>(index - 1));
      row.val.push_back(v);
      max_index = std::max<std::size_t>(max_index, static_cast<std::size_t>(index));
    }
    distinct.insert(row.label);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError(0, "empty dataset");
  if (distinct.size() > 2)
    throw ParseError(0, "more than two distinct labels; only binary data is supported");

  Dataset ds;
  ds.name = std::move(name);
  ds.dim = std::max<std::size_t>({max_index, min_dim, 1});
  ds.samples.reserve(rows.size());
  for (auto& r : rows) {
    ds.samples.push_back(
        {SparseVector(std::move(r.idx), std::move(r.val), ds.dim),
         detail::normalize_label(r.label, distinct, r.line)});
  }
  return ds;
}

inline Dataset parse_libsvm_string(const std::string& text, std::string name = {},
                                   std::size_t min_dim = 0) {
  std::istringstream in(text);
  return parse_libsvm(in, std::move(name), min_dim);
}

/// Writes LIBSVM text that reparses to an identical Dataset.
inline void write_libsvm(std::ostream& os, const Dataset& ds) {
  for (const auto& s : ds.samples) {
    os << (s.label > 0 ? "+1" : "-1");
    const auto idx = s.features.indices();
    const auto val = s.features.values();
    for (std::size_t k = 0; k < idx.size(); ++k)
      os << ' ' << (idx[k] + 1) << ':' << format_double(val[k]);
    os << '\n';
  }
}

/// Reads a whole file; gzip input is decompressed transparently.
inline std::string read_file_maybe_gzip(const std::filesystem::path& path) {
  gzFile f = gzopen(path.string().c_str(), "rb");
  if (!f) throw DataError("cannot open '" + path.string() + "'");
  std::string out;
  char buf[1 << 16];
  int n = 0;
  while ((n = gzread(f, buf, sizeof(buf))) > 0) out.append(buf, static_cast<std::size_t>(n));
  const bool failed = n < 0;
  gzclose(f);
  if (failed) throw DataError("read error in '" + path.string() + "'");
  return out;
}

inline Dataset load_libsvm_file(const std::filesystem::path& path, std::size_t min_dim = 0) {
  return parse_libsvm_string(read_file_maybe_gzip(path), path.stem().string(), min_dim);
}

// ---------------------------------------------------------------------------
// Manifest: one dataset per line, "name path sha256 n dim". A sha256 of "-"
// skips the checksum but n and dim are still enforced.

struct ManifestEntry {
  std::string name;
  std::string path;
  std::string sha256;
  std::size_t n = 0;
  std::size_t dim = 0;
};

inline std::vector<ManifestEntry> parse_manifest(std::istream& in) {
  std::vector<ManifestEntry> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    std::istringstream tok(t);
    ManifestEntry e;
    if (!(tok >> e.name >> e.path >> e.sha256 >> e.n >> e.dim))
      throw ParseError(lineno, "manifest lines are 'name path sha256 n dim'");
    out.push_back(std::move(e));
  }
  return out;
}

inline std::string sha256_hex(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(),
                                                               &EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1)
    throw DataError("sha256 unavailable");
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md, &len);
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 0xf];
  }
  return out;
}

/// Loads a manifest entry relative to `data_dir`, failing loudly when the
/// checksum, sample count, or dimension differ from what the manifest says.
inline Dataset load_verified(const ManifestEntry& e, const std::filesystem::path& data_dir) {
  const auto path = std::filesystem::path(e.path).is_absolute()
                        ? std::filesystem::path(e.path)
                        : data_dir / e.path;
  if (!std::filesystem::exists(path))
    throw DataError("dataset '" + e.name + "' not found at " + path.string());
  if (e.sha256 != "-") {
    const auto got = sha256_hex(path);
    if (got != e.sha256)
      throw DataError("dataset '" + e.name + "' checksum mismatch: expected " + e.sha256 +
                      ", got " + got);
  }
  Dataset ds = load_libsvm_file(path, e.dim);
  ds.name = e.name;
  if (ds.size() != e.n || ds.dim != e.dim)
    throw DataError("dataset '" + e.name + "' has n=" + std::to_string(ds.size()) +
                    ", dim=" + std::to_string(ds.dim) + "; manifest expects n=" +
                    std::to_string(e.n) + ", dim=" + std::to_string(e.dim));
  return ds;
}

// ---------------------------------------------------------------------------
// Partitioning

/// Contiguous even split, remainder to the lowest-index nodes (heterogeneous),
/// or M references to the full index range (identical).
inline Partition partition(std::size_t n, std::size_t M, Regime regime) {
  if (M == 0) throw ConfigError("partition: M must be positive");
  if (n == 0) throw ConfigError("partition: empty dataset");
  Partition p;
  p.regime = regime;
  p.node_ranges.reserve(M);
  if (regime == Regime::Identical) {
    p.node_ranges.assign(M, IndexRange{0, n});
    return p;
  }
  if (M > n)
    throw ConfigError("partition: M=" + std::to_string(M) + " exceeds n=" +
                      std::to_string(n) + " in the heterogeneous regime");
  const std::size_t base = n / M;
  const std::size_t extra = n % M;
  std::size_t begin = 0;
  for (std::size_t m = 0; m < M; ++m) {
    const std::size_t len = base + (m < extra ? 1 : 0);
    p.node_ranges.push_back({begin, begin + len});
    begin += len;
  }
  return p;
}

inline Partition partition(const Dataset& ds, std::size_t M, Regime regime) {
  return partition(ds.size(), M, regime);
}

}  // namespace localsgd
