#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

#include "crosslearn/harness.hpp"
#include "crosslearn/verify.hpp"

namespace cl = crosslearn;

namespace {

constexpr int kOk = 0;
constexpr int kInvalid = 1;
constexpr int kFailed = 2;

int cmd_run(const std::string& config_path, const std::string& output_override) {
  const cl::ExperimentConfig cfg = cl::load_config(config_path);
  const auto results = cl::run_experiment(cfg);
  const std::string out_path = output_override.empty() ? cfg.output : output_override;
  if (out_path.empty() || out_path == "-") {
    cl::write_csv(results, std::cout);
  } else {
    std::ofstream out(out_path);
    if (!out) throw cl::ConfigError("cannot write '" + out_path + "'");
    cl::write_csv(results, out);
    std::cerr << "wrote " << results.size() << " runs to " << out_path << '\n';
  }
  return kOk;
}

int cmd_scaling(const std::string& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw cl::ConfigError("cannot open '" + csv_path + "'");
  const auto fits = cl::fit_scaling(cl::read_csv(in));
  for (const auto& fit : fits) {
    std::printf("%s on %s\n", fit.algo.c_str(), fit.env.c_str());
    std::printf("  %10s %6s %14s %14s %14s\n", "T", "seeds", "mean", "ci95_low", "ci95_high");
    for (const auto& p : fit.points)
      std::printf("  %10zu %6zu %14.4f %14.4f %14.4f\n", p.horizon, p.num_seeds, p.mean, p.ci_low, p.ci_high);
    std::printf("  slope %.4f +/- %.4f\n", fit.slope, fit.slope_stderr);
  }
  return kOk;
}

int cmd_verify(bool quick) {
  const auto rows = cl::run_verify_suite(quick ? cl::VerifyScale::Quick : cl::VerifyScale::Full);
  bool all = true;
  std::printf("%-6s %-28s %s\n", "status", "check", "detail");
  for (const auto& r : rows) {
    std::printf("%-6s %-28s %s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str());
    all = all && r.pass;
  }
  return all ? kOk : kFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contextual bandits with cross-learning: simulator and checks"};
  app.require_subcommand(1);

  std::string config_path, output;
  auto* run = app.add_subcommand("run", "Run an experiment config and write regret CSV");
  run->add_option("config", config_path, "JSON experiment config")->required();
  run->add_option("-o,--output", output, "CSV path (overrides the config; '-' for stdout)");

  bool quick = false;
  auto* verify = app.add_subcommand("verify", "Run the lemma checks and the audit");
  verify->add_flag("--quick", quick, "Fewer trials and runs");

  std::string csv_path;
  auto* scaling = app.add_subcommand("scaling", "Fit log-log regret exponents from a results CSV");
  scaling->add_option("results", csv_path, "results CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInvalid;
  }

  try {
    if (*run) return cmd_run(config_path, output);
    if (*verify) return cmd_verify(quick);
    if (*scaling) return cmd_scaling(csv_path);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailed;
  }
  return kOk;
}
