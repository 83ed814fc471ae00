// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>
#include <zlib.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "localsgd/dataio.hpp"
#include "localsgd/synthetic.hpp"

using namespace localsgd;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  auto dir = fs::temp_directory_path() / ("localsgd_dataio_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST(ParseLibsvm, SingleLine) {
  const auto ds = parse_libsvm_string("+1 1:0.5 3:2.0");
  ASSERT_EQ(ds.size(), 1u);
  EXPECT_EQ(ds.dim, 3u);
  EXPECT_EQ(ds.samples[0].label, 1.0);
  EXPECT_EQ(ds.samples[0].features, SparseVector({0, 2}, {0.5, 2.0}, 3));
}

TEST(ParseLibsvm, ZeroOneLabels) {
  const auto ds = parse_libsvm_string("0 2:1.0\n1 1:1.0");
  ASSERT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds.samples[0].label, -1.0);
  EXPECT_EQ(ds.samples[1].label, 1.0);
  EXPECT_EQ(ds.dim, 2u);
}

TEST(ParseLibsvm, OneTwoLabelsAndOrder) {
  const auto ds = parse_libsvm_string("2 1:1\n1 1:2\n2 2:3\n");
  EXPECT_EQ(ds.samples[0].label, 1.0);
  EXPECT_EQ(ds.samples[1].label, -1.0);
  EXPECT_EQ(ds.samples[2].label, 1.0);
  EXPECT_EQ(ds.samples[1].features.values()[0], 2.0);
}

TEST(ParseLibsvm, SkipsBlankLinesAndDropsExplicitZeros) {
  const auto ds = parse_libsvm_string("\n-1 1:0 2:4\n\n+1 3:1 # comment\n");
  ASSERT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds.samples[0].features.nnz(), 1u);
  EXPECT_EQ(ds.dim, 3u);
}

TEST(ParseLibsvm, DimOverrideUpward) {
  const auto ds = parse_libsvm_string("+1 1:1", "x", 10);
  EXPECT_EQ(ds.dim, 10u);
  EXPECT_EQ(ds.samples[0].features.dim(), 10u);
}

TEST(ParseLibsvm, ErrorsReportLineNumbers) {
  auto line_of = [](const std::string& text) {
    try {
      parse_libsvm_string(text);
    } catch (const ParseError& e) {
      return e.line();
    }
    return std::size_t{999};
  };
  EXPECT_EQ(line_of("+1 1:1\n-1 2:1 1:1\n"), 2u);  // non-increasing
  EXPECT_EQ(line_of("+1 1:1\n-1 1:1\n+1 2:x\n"), 3u);  // non-numeric value
  EXPECT_EQ(line_of("+1 a:1\n"), 1u);
  EXPECT_EQ(line_of("+1 1:1\nfoo 1:1\n"), 2u);
  EXPECT_EQ(line_of("+1 11\n"), 1u);
  EXPECT_EQ(line_of("+1 0:1\n"), 1u);
  EXPECT_EQ(line_of("+1 1:1 1:2\n"), 1u);
  EXPECT_THROW(parse_libsvm_string(""), ParseError);
  EXPECT_THROW(parse_libsvm_string("\n\n"), ParseError);
  EXPECT_THROW(parse_libsvm_string("1 1:1\n2 1:1\n3 1:1\n"), ParseError);
}

TEST(ParseLibsvm, RoundTripProperty) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    RngStream rng(seed, 77);
    Dataset ds;
    ds.dim = 1 + rng.draw_index(30);
    const std::size_t n = 1 + rng.draw_index(50);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<std::uint32_t> idx;
      std::vector<double> val;
      for (std::size_t j = 0; j < ds.dim; ++j)
        if (rng.next_uniform() < 0.4) {
          idx.push_back(static_cast<std::uint32_t>(j));
          val.push_back(rng.next_normal_pair().first * std::pow(10.0, rng.draw_index(8) - 4.0));
        }
      ds.samples.push_back({SparseVector(idx, val, ds.dim), rng.next_uniform() < 0.5 ? -1.0 : 1.0});
    }
    // Make the max index present so dim is recovered from the text.
    ds.samples[0].features = SparseVector({static_cast<std::uint32_t>(ds.dim - 1)}, {1.5}, ds.dim);
    // Both labels present so normalization is the identity.
    ds.samples[0].label = -1.0;
    ds.samples.push_back({SparseVector({0}, {2.0}, ds.dim), 1.0});

    std::ostringstream os;
    write_libsvm(os, ds);
    const auto back = parse_libsvm_string(os.str());
    EXPECT_EQ(back, ds) << "seed " << seed;
  }
}

TEST(ReadFile, GzipTransparent) {
  const auto dir = temp_dir();
  const auto plain = dir / "d.txt";
  const auto gz = dir / "d.txt.gz";
  const std::string text = "+1 1:0.5 3:2\n-1 2:1\n";
  std::ofstream(plain) << text;
  gzFile f = gzopen(gz.string().c_str(), "wb");
  gzwrite(f, text.data(), static_cast<unsigned>(text.size()));
  gzclose(f);
  EXPECT_EQ(load_libsvm_file(plain), load_libsvm_file(gz));
  EXPECT_THROW(load_libsvm_file(dir / "missing.txt"), DataError);
}

TEST(Manifest, ChecksumAndShapeEnforced) {
  const auto dir = temp_dir();
  std::ofstream(dir / "abc.txt") << "abc";
  EXPECT_EQ(sha256_hex(dir / "abc.txt"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");

  const std::string text = "+1 1:0.5 3:2\n-1 2:1\n";
  std::ofstream(dir / "tiny.txt") << text;
  const auto sum = sha256_hex(dir / "tiny.txt");
  std::istringstream manifest("# name path sha256 n dim\n"
                              "tiny tiny.txt " + sum + " 2 3\n"
                              "bad_sum tiny.txt 00 2 3\n"
                              "bad_n tiny.txt - 3 3\n"
                              "padded tiny.txt - 2 5\n"
                              "absent nothing.txt - 2 3\n");
  const auto entries = parse_manifest(manifest);
  ASSERT_EQ(entries.size(), 5u);
  EXPECT_EQ(load_verified(entries[0], dir).size(), 2u);
  EXPECT_THROW(load_verified(entries[1], dir), DataError);
  EXPECT_THROW(load_verified(entries[2], dir), DataError);
  EXPECT_EQ(load_verified(entries[3], dir).dim, 5u);
  EXPECT_THROW(load_verified(entries[4], dir), DataError);

  std::istringstream broken("name only_two\n");
  EXPECT_THROW(parse_manifest(broken), ParseError);
}

TEST(Partition, EvenSplit) {
  const auto p = partition(10, 2, Regime::Heterogeneous);
  ASSERT_EQ(p.num_nodes(), 2u);
  EXPECT_EQ(p.node_ranges[0], (IndexRange{0, 5}));
  EXPECT_EQ(p.node_ranges[1], (IndexRange{5, 10}));
}

TEST(Partition, RemainderToFront) {
  const auto p = partition(10, 3, Regime::Heterogeneous);
  EXPECT_EQ(p.node_ranges[0], (IndexRange{0, 4}));
  EXPECT_EQ(p.node_ranges[1], (IndexRange{4, 7}));
  EXPECT_EQ(p.node_ranges[2], (IndexRange{7, 10}));
}

TEST(Partition, IdenticalCopies) {
  const auto p = partition(10, 4, Regime::Identical);
  ASSERT_EQ(p.num_nodes(), 4u);
  for (const auto& r : p.node_ranges) EXPECT_EQ(r, (IndexRange{0, 10}));
}

TEST(Partition, Errors) {
  EXPECT_THROW(partition(10, 0, Regime::Identical), ConfigError);
  EXPECT_THROW(partition(3, 4, Regime::Heterogeneous), ConfigError);
  EXPECT_NO_THROW(partition(3, 4, Regime::Identical));
}

TEST(Partition, HeterogeneousCoverageProperty) {
  for (std::size_t n = 1; n <= 60; ++n)
    for (std::size_t M = 1; M <= n; ++M) {
      const auto p = partition(n, M, Regime::Heterogeneous);
      std::size_t expect_begin = 0, lo = n, hi = 0;
      for (const auto& r : p.node_ranges) {
        EXPECT_EQ(r.begin, expect_begin);
        expect_begin = r.end;
        lo = std::min(lo, r.size());
        hi = std::max(hi, r.size());
      }
      EXPECT_EQ(expect_begin, n);
      EXPECT_LE(hi - lo, 1u);
      // Larger blocks come first.
      for (std::size_t m = 1; m < M; ++m)
        EXPECT_GE(p.node_ranges[m - 1].size(), p.node_ranges[m].size());
    }
}

TEST(Synthetic, DeterministicAndSorted) {
  SyntheticSpec spec;
  spec.n = 200;
  spec.d = 5;
  spec.sort = SortOrder::ByLabel;
  const auto a = make_synthetic(spec);
  EXPECT_EQ(a, make_synthetic(spec));
  for (std::size_t i = 1; i < a.size(); ++i)
    EXPECT_LE(a.samples[i - 1].label, a.samples[i].label);
  const auto z = make_interpolating(20, 4, 3);
  const DenseVector first = densify(z.samples[0].features);
  for (const auto& s : z.samples) {
    DenseVector ya = densify(s.features);
    scale_inplace(s.label, ya);
    DenseVector y0 = first;
    scale_inplace(z.samples[0].label, y0);
    EXPECT_EQ(ya, y0);
  }
}
