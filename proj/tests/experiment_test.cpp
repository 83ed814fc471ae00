// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "localsgd/experiment.hpp"

using namespace localsgd;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("localsgd_experiment_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig small_run(const fs::path& out) {
  ExperimentConfig c;
  c.dataset = "synthetic:n=200,d=5,seed=3";
  c.Ms = {2};
  c.T = 120;
  c.H = {"1", "4"};
  c.gamma = "0.25/L";
  c.seeds = seed_range(1, 4);
  c.out_dir = out.string();
  c.threads = 2;
  return c;
}

}  // namespace

TEST(Parsing, SeedLists) {
  EXPECT_EQ(parse_seed_list("1-3,7"), (std::vector<std::uint64_t>{1, 2, 3, 7}));
  EXPECT_EQ(parse_seed_list(" 5 "), (std::vector<std::uint64_t>{5}));
  EXPECT_THROW(parse_seed_list("4-2"), ConfigError);
  EXPECT_THROW(parse_seed_list(""), ConfigError);
  EXPECT_THROW(parse_seed_list("a"), ConfigError);
}

TEST(Parsing, SettingsAndErrors) {
  ExperimentConfig c;
  apply_setting(c, "M", "1,2,4");
  apply_setting(c, "batch", "1,full");
  apply_setting(c, "regime", "heterogeneous");
  apply_setting(c, "lambda", "0.01");
  apply_setting(c, "nesterov", "false");
  EXPECT_EQ(c.Ms, (std::vector<std::size_t>{1, 2, 4}));
  EXPECT_EQ(c.batches, (std::vector<std::string>{"1", "full"}));
  EXPECT_EQ(c.regime, Regime::Heterogeneous);
  EXPECT_EQ(*c.lambda, 0.01);
  EXPECT_FALSE(c.nesterov);
  apply_setting(c, "lambda", "1/n");
  EXPECT_FALSE(c.lambda.has_value());
  EXPECT_THROW(apply_setting(c, "no_such_key", "1"), ConfigError);
  EXPECT_THROW(apply_setting(c, "batch", "0"), ConfigError);
  EXPECT_THROW(apply_setting(c, "T", "-5"), ConfigError);
  EXPECT_THROW(apply_setting(c, "nesterov", "maybe"), ConfigError);
}

TEST(Parsing, ConfigFileSections) {
  const auto dir = scratch("config");
  const auto path = dir / "exp.cfg";
  std::ofstream(path) << "# comment\nT = 50\n[common]\nseeds = 1-3\n[run]\nH = 1,2\n"
                         "[variances]\nM = 7\n";
  ExperimentConfig c;
  load_config_file(path, "run", c);
  EXPECT_EQ(c.T, 50u);
  EXPECT_EQ(c.seeds.size(), 3u);
  EXPECT_EQ(c.H, (std::vector<std::string>{"1", "2"}));
  EXPECT_EQ(c.Ms, (std::vector<std::size_t>{4}));

  std::ofstream(path) << "[run]\nbogus = 1\n";
  try {
    load_config_file(path, "run", c);
    ADD_FAILURE() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos) << e.what();
  }
  EXPECT_THROW(load_config_file(dir / "missing.cfg", "run", c), ConfigError);
}

TEST(Gamma, SpecsResolve) {
  EXPECT_DOUBLE_EQ(resolve_gamma("1/L", 4.0, 0.1, 2, 100, 1, {}).gamma, 0.25);
  EXPECT_DOUBLE_EQ(resolve_gamma("0.05/L", 2.0, 0.1, 2, 100, 1, {}).gamma, 0.025);
  EXPECT_DOUBLE_EQ(resolve_gamma("0.125", 2.0, 0.1, 2, 100, 1, {}).gamma, 0.125);
  const auto planned = resolve_gamma("plan:wc-iid-fs", 1.0, 0.0, 4, 10000, 4, {});
  EXPECT_GT(planned.gamma, 0.0);
  EXPECT_LE(planned.gamma, 1.0 / 40.0);
  EXPECT_THROW(resolve_gamma("-1", 1.0, 0.1, 2, 100, 1, {}), ConfigError);
  EXPECT_THROW(resolve_gamma("0/L", 1.0, 0.1, 2, 100, 1, {}), ConfigError);
  EXPECT_THROW(resolve_gamma("plan:nope", 1.0, 0.1, 2, 100, 1, {}), ConfigError);
}

TEST(Schedules, Resolve) {
  ExperimentConfig c;
  c.T = 4096;
  c.H = {"1", "8", "plan:wc-het"};
  auto s = resolve_schedules(c, 4, 10.0);
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s[1].rounds(), 512u);
  EXPECT_EQ(s[2].H(), plan_H(HRule::WcHeterogeneous, 4096, 4));
  c.schedule = "one-shot";
  s = resolve_schedules(c, 4, 10.0);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].rounds(), 1u);
  c.schedule = "explicit:10,4096";
  EXPECT_EQ(resolve_schedules(c, 4, 10.0)[0].H(), 4086u);
  c.schedule = "explicit:10,20";
  EXPECT_THROW(resolve_schedules(c, 4, 10.0), ConfigError);
  c.schedule = "sometimes";
  EXPECT_THROW(resolve_schedules(c, 4, 10.0), ConfigError);
}

TEST(Datasets, SyntheticAndFiles) {
  ExperimentConfig c;
  c.dataset = "synthetic:n=50,d=4,seed=9,sort=label";
  auto src = load_dataset(c);
  EXPECT_EQ(src.data->size(), 50u);
  EXPECT_EQ(src.describe.get("intercept"), "none");
  EXPECT_EQ(src.describe.get("synthetic.sort"), "label");
  c.dataset = "synthetic:n=50,colour=red";
  EXPECT_THROW(load_dataset(c), ConfigError);

  const auto dir = scratch("data");
  std::ofstream(dir / "tiny.svm") << "1 1:1\n-1 2:1\n";
  c.dataset = "tiny.svm";
  c.data_dir = dir.string();
  c.dim = 5;
  src = load_dataset(c);
  EXPECT_EQ(src.data->size(), 2u);
  EXPECT_EQ(src.data->dim, 5u);

  std::ofstream(dir / "manifest.txt") << "tiny tiny.svm - 2 2\n";
  c.dataset = "tiny";
  c.dim = 0;
  src = load_dataset(c);
  EXPECT_EQ(src.data->dim, 2u);
  EXPECT_TRUE(src.describe.contains("dataset.manifest"));

  c.dataset = "absent";
  EXPECT_THROW(load_dataset(c), DataError);
}

TEST(Variances, CsvShape) {
  const auto dir = scratch("variances");
  ExperimentConfig c;
  c.dataset = "synthetic:n=120,d=4";
  c.Ms = {1, 3};
  c.batches = {"1", "full"};
  c.out_dir = dir.string();
  std::ostringstream log;
  const auto rows = cmd_variances(c, log);
  ASSERT_EQ(rows.size(), 4u);
  const std::string csv = slurp(dir / "variances.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "dataset,M,batch,sigma_opt_sq,sigma_dif_sq");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
  // M = 1 has one node holding everything.
  EXPECT_DOUBLE_EQ(rows[0].report.sigma_opt_sq, rows[0].report.sigma_dif_sq);
  EXPECT_LT(rows[1].report.sigma_dif_sq, 1e-12);
}

TEST(Run, WritesReportAndReproduces) {
  const auto a = scratch("run_a"), b = scratch("run_b");
  std::ostringstream log;
  auto ca = small_run(a);
  const auto rep = cmd_run(ca, log);
  ASSERT_EQ(rep.summary.size(), 2u);
  EXPECT_EQ(rep.summary[0].comm_rounds, 120u);
  EXPECT_EQ(rep.summary[1].comm_rounds, 30u);
  EXPECT_EQ(rep.verdicts.size(), 8u);
  ASSERT_TRUE(rep.h1_vs_minibatch_max_rel_diff.has_value());
  EXPECT_LE(*rep.h1_vs_minibatch_max_rel_diff, 1e-12);
  EXPECT_TRUE(rep.divergences.empty());
  for (const auto& f : {"trace_H1.csv", "rounds_H4.csv", "summary.csv", "verdicts.csv",
                        "minibatch_baseline.csv", "report.txt", "reference.txt"})
    EXPECT_TRUE(fs::exists(a / f)) << f;
  const std::string report = slurp(a / "report.txt");
  EXPECT_NE(report.find("L_max"), std::string::npos);
  EXPECT_NE(report.find("intercept = none"), std::string::npos);
  EXPECT_NE(report.find("het_stepsize_reading"), std::string::npos);

  auto cb = small_run(b);
  cb.threads = 1;
  cmd_run(cb, log);
  for (const auto& f : rep.files) {
    std::string x = slurp(a / f), y = slurp(b / f);
    // out_dir is recorded nowhere, so the files match byte for byte.
    EXPECT_EQ(x, y) << f;
  }
}

TEST(Run, DivergenceIsReportedPerSeed) {
  const auto dir = scratch("run_div");
  auto c = small_run(dir);
  c.gamma = "400/L";
  c.H = {"2"};
  c.baseline = false;
  std::ostringstream log;
  const auto rep = cmd_run(c, log);
  EXPECT_EQ(rep.divergences.size(), 4u);
  EXPECT_EQ(rep.summary[0].seeds_diverged, 4u);
  for (const auto& v : rep.verdicts) EXPECT_FALSE(v.verdict.has_value());
  EXPECT_NE(slurp(dir / "divergences.csv").find("2,1,"), std::string::npos);
}

TEST(Run, HeterogeneousFullGradientUsesExhaustiveVariances) {
  const auto dir = scratch("run_het");
  auto c = small_run(dir);
  c.dataset = "synthetic:n=200,d=5,seed=3,sort=label";
  c.regime = Regime::Heterogeneous;
  c.gradient_mode = GradientMode::Full;
  c.gamma = "plan:wc-het";
  c.H = {"plan:wc-het"};
  c.seeds = seed_range(1, 2);
  std::ostringstream log;
  const auto rep = cmd_run(c, log);
  ASSERT_EQ(rep.verdicts.size(), 1u);
  ASSERT_TRUE(rep.verdicts[0].verdict.has_value()) << rep.verdicts[0].abstain_reason;
  EXPECT_TRUE(rep.verdicts[0].verdict->holds) << rep.verdicts[0].verdict->details;
  EXPECT_TRUE(rep.variances.exhaustive);
}

TEST(Run, ConfigErrors) {
  auto c = small_run(scratch("run_err"));
  c.Ms = {2, 4};
  std::ostringstream log;
  EXPECT_THROW(cmd_run(c, log), ConfigError);
  c.Ms = {2};
  c.seeds = {1};
  EXPECT_THROW(cmd_run(c, log), ConfigError);
}
