#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rnclab/data.hpp"
#include "rnclab/model.hpp"
#include "rnclab/training.hpp"

namespace rnclab {

struct SyntheticSpec {
  std::size_t n = 512;
  std::size_t dim = 16;
  double noise = 0.05;
  std::uint64_t seed = 7;
};

struct CsvSourceSpec {
  std::string path;
  std::string label_column = "y";
};

// One experiment file drives train (single regime x first seed) and
// compare (every regime x every seed). Regimes: "l1" trains encoder and
// predictor jointly with L1 for stage1+stage2 epochs; "rnc+l1" and
// "supcon+l1" train the encoder with the representation loss, freeze it,
// then fit the predictor with L1.
struct ExperimentConfig {
  std::string name = "experiment";
  bool use_csv = false;
  SyntheticSpec synthetic;
  CsvSourceSpec csv;

  SplitSpec split;
  bool band_explicit = false;   // when false, [lo,hi] = middle band_fraction of the label range
  double band_fraction = 0.2;

  std::vector<std::size_t> hidden = {64, 64};
  std::size_t embedding_dim = 16;
  Activation activation = Activation::Relu;

  AugmentSpec augment;
  StageConfig stage1;  // representation stage settings (loss kind set per regime)
  StageConfig stage2;  // predictor stage (frozen encoder)
  StageConfig joint;   // the "l1" regime; epochs default to stage1 + stage2

  std::vector<std::string> regimes = {"l1", "rnc+l1"};
  std::string train_regime;  // cmd_train; defaults to regimes.front()
  std::vector<std::uint64_t> seeds = {1};
  std::string out_root = "runs";
  int jobs = 1;
  std::string source_path;

  void validate() const;
};

ExperimentConfig default_experiment_config();

// Parses a config file over the defaults. Unknown keys are errors. The
// output root resolves as: [run].out > RNC_LAB_OUT env var > "runs".
ExperimentConfig load_experiment_config(const std::string& path);

// The resolved config as a config-file string (what run directories echo).
std::string experiment_config_toml(const ExperimentConfig& cfg,
                                   const std::string& regime, std::uint64_t seed);

struct RunResult {
  std::string regime;
  std::uint64_t seed = 0;
  std::string dir;
  bool ok = false;
  std::string error;
  std::map<std::string, double> metrics;
};

// Trains one (regime, seed) cell and writes the run directory:
// config.resolved.toml, train_loss.csv, val_loss.csv, metrics.json,
// model.ckpt. Directory: <out_root>/<name>/<regime>_seed<seed>.
RunResult run_single(const ExperimentConfig& cfg, const std::string& regime,
                     std::uint64_t seed);

struct CompareResult {
  std::vector<RunResult> runs;
  std::string table;         // aligned text summary
  std::string summary_path;  // <out_root>/<name>/summary.json
  bool all_ok = false;
};

// Runs every regime x seed (in parallel up to cfg.jobs), aggregates
// median/min/max per metric, writes summary.json and returns the table.
CompareResult run_compare(const ExperimentConfig& cfg);

// Finite-difference check of {rnc, l1, supcon} through the default
// 16-64-64-16 encoder at the given seed. Prints one line per loss to out.
struct GradCheckSummary {
  double max_rel_err = 0.0;
  bool pass = false;
  std::map<std::string, double> per_loss;
};
GradCheckSummary gradcheck_losses(std::uint64_t seed, double tol, std::string* report);

// Writes atomically (temp file + rename) and creates parent directories.
void write_file_atomic(const std::string& path, const std::string& content);

}  // namespace rnclab
