// rnclab: representation-learning-for-regression experiments at desk scale.
//
// Subcommands:
//   synth      write a synthetic regression dataset as CSV
//   train      run one experiment config (single regime x first seed)
//   compare    run every regime x seed in a config, aggregate a summary
//   gradcheck  finite-difference check of the loss gradients
//
// Exit codes: 0 success, 1 usage/config error, 2 runtime/numeric error.

#include <cstdio>
#include <exception>
#include <iostream>

#include <CLI11.hpp>

#include "rnclab/data.hpp"
#include "rnclab/errors.hpp"
#include "rnclab/experiment.hpp"

namespace {

int run_synth(std::size_t n, std::size_t dim, double noise, std::uint64_t seed,
              const std::string& out) {
  rnclab::Dataset ds = rnclab::generate_synthetic(n, dim, noise, seed);
  rnclab::save_csv(out, ds);
  std::cout << out << ": " << ds.size() << " rows, " << ds.dim()
            << " feature columns\n";
  return 0;
}

int run_train(const std::string& config_path) {
  rnclab::ExperimentConfig cfg = rnclab::load_experiment_config(config_path);
  std::string regime = cfg.train_regime.empty() ? cfg.regimes.front() : cfg.train_regime;
  rnclab::RunResult result = rnclab::run_single(cfg, regime, cfg.seeds.front());
  std::cout << "run directory: " << result.dir << "\n";
  for (const auto& [key, value] : result.metrics) {
    std::printf("%-26s %.6g\n", key.c_str(), value);
  }
  return 0;
}

int run_compare(const std::string& config_path, int jobs_override) {
  rnclab::ExperimentConfig cfg = rnclab::load_experiment_config(config_path);
  if (jobs_override > 0) cfg.jobs = jobs_override;
  rnclab::CompareResult result = rnclab::run_compare(cfg);
  std::cout << result.table;
  std::cout << "summary: " << result.summary_path << "\n";
  if (!result.all_ok) {
    for (const rnclab::RunResult& run : result.runs) {
      if (!run.ok) {
        std::cerr << "failed: " << run.regime << " seed " << run.seed << ": "
                  << run.error << "\n";
      }
    }
    return 2;
  }
  return 0;
}

int run_gradcheck(std::uint64_t seed, double tol) {
  std::string report;
  rnclab::GradCheckSummary summary = rnclab::gradcheck_losses(seed, tol, &report);
  std::cout << report;
  std::printf("overall max_rel_err = %.3e (tol %.3e) -> %s\n", summary.max_rel_err,
              tol, summary.pass ? "pass" : "FAIL");
  return summary.pass ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"representation learning for regression, desk scale"};
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "write a synthetic dataset as CSV");
  std::size_t n = 512, dim = 16;
  double noise = 0.05;
  std::uint64_t seed = 7;
  std::string out = "synthetic.csv";
  synth->add_option("--n", n, "number of rows");
  synth->add_option("--dim", dim, "feature dimension (>= 4)");
  synth->add_option("--noise", noise, "feature noise sigma");
  synth->add_option("--seed", seed, "generator seed");
  synth->add_option("--out", out, "output CSV path");

  auto* train = app.add_subcommand("train", "train one experiment run");
  std::string train_config;
  train->add_option("--config", train_config, "experiment config file")->required();

  auto* compare = app.add_subcommand("compare", "run and summarize all regimes x seeds");
  std::string compare_config;
  int jobs = 0;
  compare->add_option("--config", compare_config, "experiment config file")->required();
  compare->add_option("--jobs", jobs, "parallel child runs (overrides config)");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient check");
  std::uint64_t gc_seed = 1;
  double gc_tol = 1e-4;
  gradcheck->add_option("--seed", gc_seed, "seed");
  gradcheck->add_option("--tol", gc_tol, "max relative error allowed");

  try {
    app.parse(argc, argv);
    if (synth->parsed()) return run_synth(n, dim, noise, seed, out);
    if (train->parsed()) return run_train(train_config);
    if (compare->parsed()) return run_compare(compare_config, jobs);
    if (gradcheck->parsed()) return run_gradcheck(gc_seed, gc_tol);
    return 1;
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const rnclab::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const rnclab::ArgumentError& e) {
    std::cerr << "argument error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
