// SPDX-License-Identifier: Apache-2.0
//
// localsgd: variances | run | verify | plan | solve-ref
//
// Exit codes: 0 success, 1 criterion failure, 2 usage or config error,
// 3 data error.
#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "localsgd/acceptance.hpp"
#include "localsgd/experiment.hpp"

namespace {

using namespace localsgd;

constexpr int kOk = 0, kCriterionFailed = 1, kUsage = 2, kData = 3;

struct SettingFlag {
  const char* key;
  const char* flag;
  const char* help;
};

constexpr SettingFlag kSettings[] = {
    {"dataset", "--dataset", "synthetic[:k=v,...], interpolating[:...], manifest name or path"},
    {"data_dir", "--data-dir", "dataset directory (default $LOCALSGD_DATA_DIR, then ./data)"},
    {"manifest", "--manifest", "manifest file (default <data-dir>/manifest.txt)"},
    {"dim", "--dim", "pad the feature dimension up to this value"},
    {"M", "-M,--nodes", "number of nodes (comma list for variances)"},
    {"regime", "--regime", "identical | heterogeneous"},
    {"gradient_mode", "--gradient-mode", "stochastic | full"},
    {"batch", "--batch", "minibatch size per node (comma list with 'full' for variances)"},
    {"lambda", "--lambda", "l2 regularization (default 1/n)"},
    {"gamma", "--gamma", "stepsize: number, c/L, or plan:<rule>"},
    {"schedule", "--schedule", "uniform | one-shot | explicit:t1,t2,..."},
    {"H", "-H,--sync-interval", "comma list of H values or plan:<rule>"},
    {"T", "-T,--steps", "number of local steps"},
    {"seeds", "--seeds", "seed list such as 1-200 or 1,5,9"},
    {"record_every", "--record-every", "recording stride (0 = ceil(T/1000))"},
    {"track_subopt", "--track-subopt", "record f(x_hat_t) - f* (true|false)"},
    {"out", "--out", "output directory"},
    {"ref_tol", "--ref-tol", "gradient-norm tolerance of the reference solve"},
    {"nesterov", "--nesterov", "accelerate the reference solve (true|false)"},
    {"t_param", "--t-param", "free parameter t of the strongly convex stepsize rules (default H)"},
    {"threads", "--threads", "worker threads (0 = hardware concurrency)"},
    {"baseline", "--baseline", "also run minibatch SGD (true|false)"},
};

struct ExperimentFlags {
  std::string config_path;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;

  void attach(CLI::App* sub) {
    sub->add_option("--config", config_path, "key = value file with [common] and command sections")
        ->check(CLI::ExistingFile);
    for (const auto& s : kSettings) options[s.key] = sub->add_option(s.flag, values[s.key], s.help);
  }

  ExperimentConfig resolve(std::string_view section) const {
    ExperimentConfig c;
    if (!config_path.empty()) load_config_file(config_path, section, c);
    for (const auto& [key, opt] : options)
      if (opt->count() > 0) apply_setting(c, key, values.at(key));
    return c;
  }
};

int exit_for(const acceptance::Status s) {
  return s == acceptance::Status::Fail ? kCriterionFailed : kOk;
}

int cmd_plan(const std::string& what, const std::string& rule, std::size_t T, std::size_t M, std::optional<double> kappa,
             double L, double mu, std::size_t H, std::optional<double> t) {
  if (what == "gamma") {
    GammaRequest q{L, mu, M, T, H, t.value_or(static_cast<double>(H))};
    const GammaPlan plan = plan_gamma(parse_gamma_rule(rule), q);
    KeyValues kv;
    kv.set("rule", rule).set("gamma", plan.gamma).set("theorem", to_string(plan.target));
    kv.set("precondition", plan.precondition);
    if (plan.suggested_T) kv.set("suggested_T", *plan.suggested_T);
    kv.write(std::cout);
    return kOk;
  }
  const HRule r = parse_h_rule(rule);
  const std::size_t h = plan_H(r, T, M, kappa);
  KeyValues kv;
  kv.set("rule", rule).set("H", h).set("comm_rounds", SyncSchedule::uniform(T, h).rounds());
  kv.write(std::cout);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Local SGD simulator and bound verification toolkit"};
  app.require_subcommand(1);

  ExperimentFlags var_flags, run_flags, ref_flags;
  auto* variances = app.add_subcommand("variances", "measure sigma_opt^2 and sigma_dif^2");
  var_flags.attach(variances);
  auto* run = app.add_subcommand("run", "replicated Local SGD sweep over H with bound verdicts");
  run_flags.attach(run);
  auto* solve = app.add_subcommand("solve-ref", "solve for x* and print it as key = value text");
  ref_flags.attach(solve);

  auto* verify = app.add_subcommand("verify", "run the acceptance criteria");
  std::string level = "full", results, verify_data_dir;
  acceptance::Options vopt;
  verify->add_option("--level", level, "fast (50 seeds) or full (200 seeds)")
      ->check(CLI::IsMember({"fast", "full"}));
  verify->add_option("--only", vopt.only, "criterion ids to run");
  verify->add_option("--results", results, "write JSON results here");
  verify->add_option("--data-dir", verify_data_dir, "directory holding manifest.txt");
  verify->add_option("--threads", vopt.threads, "worker threads");
  verify->add_flag("--inject-fault", vopt.inject_fault, "skip averaging at sync steps");

  auto* plan = app.add_subcommand("plan", "synchronization interval or stepsize planners");
  std::string what, rule;
  std::size_t pT = 0, pM = 1, pH = 1;
  std::optional<double> kappa, t_param;
  double L = 1.0, mu = 0.0;
  plan->add_option("what", what, "H or gamma")->required()->check(CLI::IsMember({"H", "gamma"}));
  plan->add_option("rule", rule, "sc-iid | sc-iid-fs | wc-iid | wc-het (H); also wc-iid-fs (gamma)")
      ->required();
  plan->add_option("-T,--steps", pT, "number of steps")->required();
  plan->add_option("-M,--nodes", pM, "number of nodes");
  plan->add_option("-H,--sync-interval", pH, "synchronization interval (stepsize rules)");
  plan->add_option("--kappa", kappa, "condition number (strongly convex H rules)");
  plan->add_option("--L", L, "smoothness (stepsize rules)");
  plan->add_option("--mu", mu, "strong convexity (strongly convex rules)");
  plan->add_option("--t", t_param, "free parameter t of the strongly convex stepsize rules (default H)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*variances) {
      cmd_variances(var_flags.resolve("variances"), std::cerr);
      return kOk;
    }
    if (*run) {
      const auto report = cmd_run(run_flags.resolve("run"), std::cerr);
      return report.all_bounds_hold() ? kOk : kCriterionFailed;
    }
    if (*solve) {
      cmd_solve_ref(ref_flags.resolve("solve-ref"), std::cout);
      return kOk;
    }
    if (*plan) return cmd_plan(what, rule, pT, pM, kappa, L, mu, pH, t_param);
    if (*verify) {
      if (level == "fast") {
        vopt.seeds = 50;
        vopt.protocol_seeds = 5;
      }
      ExperimentConfig c;
      c.data_dir = verify_data_dir;
      vopt.data_dir = resolve_data_dir(c);
      const auto rs = acceptance::run_all(vopt, std::cout);
      int code = kOk;
      nlohmann::json j;
      for (const auto& r : rs) {
        code = std::max(code, exit_for(r.status));
        j["criteria"].push_back({{"id", r.id},
                                 {"name", r.name},
                                 {"status", acceptance::to_string(r.status)},
                                 {"details", r.details},
                                 {"seconds", r.seconds}});
      }
      if (!results.empty()) std::ofstream(results) << j.dump(2) << '\n';
      return code;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const PreconditionError& e) {
    std::cerr << "precondition error: " << e.what() << '\n';
    return kUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const ParseError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const ConvergenceError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}
