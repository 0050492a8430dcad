#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "rnclab/matrix.hpp"

namespace rnclab {

struct Dataset {
  Matrix features;             // n x p
  std::vector<double> labels;  // size n
  std::string name;

  std::size_t size() const { return features.rows(); }
  std::size_t dim() const { return features.cols(); }
  void validate() const;  // n >= 2, finite features and labels
};

struct SplitSpec {
  enum class Kind { Random, HoldoutBand };
  Kind kind = Kind::Random;
  double train_fraction = 0.8;  // Random
  double lo = 0.0, hi = 0.0;    // HoldoutBand: labels in [lo, hi] leave the train set
  double val_fraction = 0.2;    // HoldoutBand
  std::uint64_t seed = 0;
  void validate() const;
};

struct AugmentSpec {
  double gaussian_sigma = 0.05;
  double feature_dropout_p = 0.0;  // in [0, 1)
  std::uint64_t seed = 0;
  void validate() const;
};

// Labels Uniform[0,1]; features x = W phi(y) + noise with
// phi(y) = (sin 2*pi*y, cos 2*pi*y, y, y^2) and a seeded p x 4 standard
// normal W. A smooth one-dimensional manifold standing in for the image
// datasets the method was built for.
Dataset generate_synthetic(std::size_t n, std::size_t p, double noise_sigma,
                           std::uint64_t seed);

// The feature map of generate_synthetic for caller-chosen labels (same W
// and noise streams for the same seed).
Matrix synthetic_features(const std::vector<double>& labels, std::size_t p,
                          double noise_sigma, std::uint64_t seed);

// CSV: UTF-8, comma-separated, one header row, numeric cells printed with
// 17 significant digits. Features are all non-label columns in header order.
Dataset load_csv(const std::string& path, const std::string& label_column);
void save_csv(const std::string& path, const Dataset& ds,
              const std::string& label_column = "y");

// Random: seeded shuffle, first round(train_fraction*n) rows train.
// HoldoutBand: val = seeded val_fraction of all rows (full label range);
// train = remaining rows whose label is outside [lo, hi].
std::pair<Dataset, Dataset> split(const Dataset& ds, const SplitSpec& spec);

struct TwoViews {
  Matrix rows;                       // 2B x p: all first views, then all second views
  std::vector<std::size_t> source;   // view k comes from input row source[k]
};

// Two independently augmented copies of each row: Gaussian noise then
// per-cell dropout. Deterministic per (spec.seed, step_seed).
TwoViews two_views(const Matrix& rows, const AugmentSpec& spec,
                   std::uint64_t step_seed);

}  // namespace rnclab
