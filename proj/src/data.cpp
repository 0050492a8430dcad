#include "rnclab/data.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>

#include "rnclab/errors.hpp"
#include "rnclab/random.hpp"

namespace rnclab {

namespace {

constexpr double kTwoPi = 2.0 * 3.14159265358979323846;

std::string format_g17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  cells.push_back(cur);
  return cells;
}

Dataset take_rows(const Dataset& ds, const std::vector<std::size_t>& idx,
                  const std::string& name) {
  Dataset out;
  out.features = Matrix(idx.size(), ds.dim());
  out.labels.resize(idx.size());
  out.name = name;
  for (std::size_t r = 0; r < idx.size(); ++r) {
    for (std::size_t c = 0; c < ds.dim(); ++c) {
      out.features.at(r, c) = ds.features.at(idx[r], c);
    }
    out.labels[r] = ds.labels[idx[r]];
  }
  return out;
}

}  // namespace

void Dataset::validate() const {
  if (features.rows() < 2) {
    throw ArgumentError("Dataset '" + name + "': need at least 2 rows");
  }
  if (labels.size() != features.rows()) {
    throw DimensionError("Dataset '" + name + "': " + std::to_string(labels.size()) +
                         " labels for " + features.shape_str() + " features");
  }
  if (!features.all_finite()) {
    throw ArgumentError("Dataset '" + name + "': non-finite feature");
  }
  for (double y : labels) {
    if (!std::isfinite(y)) throw ArgumentError("Dataset '" + name + "': non-finite label");
  }
}

void SplitSpec::validate() const {
  if (kind == Kind::Random) {
    if (train_fraction <= 0.0 || train_fraction >= 1.0) {
      throw ConfigError("SplitSpec: train_fraction must be in (0, 1)");
    }
  } else {
    if (lo >= hi) throw ConfigError("SplitSpec: holdout band needs lo < hi");
    if (val_fraction < 0.0 || val_fraction >= 1.0) {
      throw ConfigError("SplitSpec: val_fraction must be in [0, 1)");
    }
  }
}

void AugmentSpec::validate() const {
  if (gaussian_sigma < 0.0) throw ConfigError("AugmentSpec: gaussian_sigma >= 0");
  if (feature_dropout_p < 0.0 || feature_dropout_p >= 1.0) {
    throw ConfigError("AugmentSpec: feature_dropout_p must be in [0, 1)");
  }
}

Matrix synthetic_features(const std::vector<double>& labels, std::size_t p,
                          double noise_sigma, std::uint64_t seed) {
  if (p < 4) throw ArgumentError("synthetic_features: p >= 4 required");
  Rng w_rng(derive_seed(seed, 0));
  Matrix w(p, 4);
  for (double& v : w.values()) v = w_rng.normal();

  Rng noise_rng(derive_seed(seed, 2));
  Matrix x(labels.size(), p);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    double y = labels[i];
    double phi[4] = {std::sin(kTwoPi * y), std::cos(kTwoPi * y), y, y * y};
    for (std::size_t c = 0; c < p; ++c) {
      double v = 0.0;
      for (std::size_t k = 0; k < 4; ++k) v += w.at(c, k) * phi[k];
      x.at(i, c) = v + noise_sigma * noise_rng.normal();
    }
  }
  return x;
}

Dataset generate_synthetic(std::size_t n, std::size_t p, double noise_sigma,
                           std::uint64_t seed) {
  if (n < 2) throw ArgumentError("generate_synthetic: n >= 2 required");
  if (p < 4) throw ArgumentError("generate_synthetic: p >= 4 required");
  Rng label_rng(derive_seed(seed, 1));
  std::vector<double> labels(n);
  for (double& y : labels) y = label_rng.uniform01();

  Dataset ds;
  ds.features = synthetic_features(labels, p, noise_sigma, seed);
  ds.labels = std::move(labels);
  ds.name = "synthetic(n=" + std::to_string(n) + ",p=" + std::to_string(p) +
            ",seed=" + std::to_string(seed) + ")";
  return ds;
}

Dataset load_csv(const std::string& path, const std::string& label_column) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("load_csv: cannot open '" + path + "'");

  std::string line;
  if (!std::getline(f, line)) throw IoError("load_csv: '" + path + "' is empty");
  std::vector<std::string> header = split_line(line);
  std::size_t label_idx = header.size();
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == label_column) {
      label_idx = i;
      break;
    }
  }
  if (label_idx == header.size()) {
    throw IoError("load_csv: no column '" + label_column + "' in '" + path + "'");
  }

  std::vector<double> cells;
  std::size_t row = 0;
  std::vector<double> labels;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    ++row;
    std::vector<std::string> parts = split_line(line);
    if (parts.size() != header.size()) {
      throw IoError("load_csv: row " + std::to_string(row) + " has " +
                    std::to_string(parts.size()) + " cells, header has " +
                    std::to_string(header.size()));
    }
    for (std::size_t c = 0; c < parts.size(); ++c) {
      const std::string& cell = parts[c];
      char* end = nullptr;
      double v = std::strtod(cell.c_str(), &end);
      if (cell.empty() || end != cell.c_str() + cell.size()) {
        throw IoError("load_csv: non-numeric cell at row " + std::to_string(row) +
                      ", column '" + header[c] + "'");
      }
      if (c == label_idx) {
        labels.push_back(v);
      } else {
        cells.push_back(v);
      }
    }
  }
  if (row == 0) throw IoError("load_csv: '" + path + "' has no data rows");

  Dataset ds;
  ds.features = Matrix(row, header.size() - 1, std::move(cells));
  ds.labels = std::move(labels);
  std::size_t slash = path.find_last_of("/\\");
  ds.name = slash == std::string::npos ? path : path.substr(slash + 1);
  ds.validate();
  return ds;
}

void save_csv(const std::string& path, const Dataset& ds,
              const std::string& label_column) {
  std::ostringstream out;
  for (std::size_t c = 0; c < ds.dim(); ++c) out << "x" << c << ",";
  out << label_column << "\n";
  for (std::size_t r = 0; r < ds.size(); ++r) {
    for (std::size_t c = 0; c < ds.dim(); ++c) {
      out << format_g17(ds.features.at(r, c)) << ",";
    }
    out << format_g17(ds.labels[r]) << "\n";
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("save_csv: cannot open '" + path + "'");
  f << out.str();
  if (!f) throw IoError("save_csv: write failed for '" + path + "'");
}

std::pair<Dataset, Dataset> split(const Dataset& ds, const SplitSpec& spec) {
  ds.validate();
  spec.validate();
  const std::size_t n = ds.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(spec.seed);
  rng.shuffle(idx);

  std::vector<std::size_t> train_idx, val_idx;
  if (spec.kind == SplitSpec::Kind::Random) {
    auto train_count = static_cast<std::size_t>(
        std::llround(spec.train_fraction * static_cast<double>(n)));
    if (train_count == 0) throw ConfigError("split: empty train set");
    if (train_count > n) train_count = n;
    train_idx.assign(idx.begin(), idx.begin() + train_count);
    val_idx.assign(idx.begin() + train_count, idx.end());
  } else {
    auto val_count = static_cast<std::size_t>(
        std::llround(spec.val_fraction * static_cast<double>(n)));
    val_idx.assign(idx.begin(), idx.begin() + val_count);
    for (std::size_t i = val_count; i < n; ++i) {
      double y = ds.labels[idx[i]];
      if (y < spec.lo || y > spec.hi) train_idx.push_back(idx[i]);
    }
    if (train_idx.empty()) {
      throw ConfigError("split: holdout band [" + std::to_string(spec.lo) + ", " +
                        std::to_string(spec.hi) + "] leaves no training rows");
    }
  }
  return {take_rows(ds, train_idx, ds.name + "/train"),
          take_rows(ds, val_idx, ds.name + "/val")};
}

TwoViews two_views(const Matrix& rows, const AugmentSpec& spec,
                   std::uint64_t step_seed) {
  spec.validate();
  const std::size_t b = rows.rows();
  const std::size_t p = rows.cols();
  Rng rng(derive_seed(spec.seed, step_seed));

  TwoViews out;
  out.rows = Matrix(2 * b, p);
  out.source.resize(2 * b);
  for (std::size_t k = 0; k < 2 * b; ++k) {
    std::size_t src = k % b;
    out.source[k] = src;
    for (std::size_t c = 0; c < p; ++c) {
      double v = rows.at(src, c) + spec.gaussian_sigma * rng.normal();
      if (spec.feature_dropout_p > 0.0 && rng.uniform01() < spec.feature_dropout_p) {
        v = 0.0;
      }
      out.rows.at(k, c) = v;
    }
  }
  return out;
}

}  // namespace rnclab
