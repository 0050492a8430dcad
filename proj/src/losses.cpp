#include "rnclab/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rnclab/errors.hpp"
#include "rnclab/numeric.hpp"

namespace rnclab {

namespace {

constexpr double kL2Epsilon = 1e-12;  // bounds the sqrt gradient at coincident rows

void check_labels(const Matrix& embeddings, const std::vector<double>& labels) {
  if (labels.size() != embeddings.rows()) {
    throw DimensionError("loss: " + std::to_string(labels.size()) + " labels for " +
                         embeddings.shape_str() + " embeddings");
  }
  for (double y : labels) {
    if (!std::isfinite(y)) throw ArgumentError("loss: non-finite label");
  }
}

// Per-anchor bookkeeping captured by the forward pass and reused by the
// backward rule.
struct RncAnchor {
  std::vector<std::size_t> sorted;       // candidate indices, label distance descending
  std::vector<double> denom_lse;         // LSE of S_{i,j} for the candidate at each position
  std::vector<std::size_t> group_first;  // first position of each position's tie group
};

struct RncAux {
  std::vector<RncAnchor> anchors;
};

// Shared forward core for the graph node and the value-only entry point.
// Candidate denominators are prefix log-sum-exps over candidates sorted by
// label distance; a whole tie group enters the stream before any of its
// members' denominators are read, which realizes the non-strict >= in
// S_{i,j}.
double rnc_forward(const Matrix& sim, const std::vector<double>& labels, double tau,
                   RncAux* aux) {
  const std::size_t m = sim.rows();
  double total = 0.0;
  std::vector<std::size_t> cand(m - 1);
  std::vector<double> dist(m);
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t w = 0;
    for (std::size_t k = 0; k < m; ++k) {
      if (k != i) cand[w++] = k;
      dist[k] = std::abs(labels[k] - labels[i]);
    }
    std::sort(cand.begin(), cand.end(), [&](std::size_t a, std::size_t b) {
      if (dist[a] != dist[b]) return dist[a] > dist[b];
      return a < b;
    });

    RncAnchor anchor;
    anchor.sorted = cand;
    anchor.denom_lse.resize(cand.size());
    anchor.group_first.resize(cand.size());

    double run_max = -std::numeric_limits<double>::infinity();
    double run_sum = 0.0;
    std::size_t pos = 0;
    while (pos < cand.size()) {
      std::size_t group_end = pos;
      while (group_end < cand.size() && dist[cand[group_end]] == dist[cand[pos]]) {
        ++group_end;
      }
      for (std::size_t q = pos; q < group_end; ++q) {
        double x = sim.at(i, cand[q]) / tau;
        if (x > run_max) {
          run_sum = run_sum * std::exp(run_max - x) + 1.0;
          run_max = x;
        } else {
          run_sum += std::exp(x - run_max);
        }
      }
      double lse = run_max + std::log(run_sum);
      for (std::size_t q = pos; q < group_end; ++q) {
        anchor.denom_lse[q] = lse;
        anchor.group_first[q] = pos;
        total += lse - sim.at(i, cand[q]) / tau;
      }
      pos = group_end;
    }
    if (aux) aux->anchors.push_back(std::move(anchor));
  }
  return total / (static_cast<double>(m) * static_cast<double>(m - 1));
}

void validate_rnc_inputs(const Matrix& sim, const std::vector<double>& labels,
                         double tau) {
  if (sim.rows() != sim.cols()) {
    throw DimensionError("rnc_loss: similarity matrix must be square, got " +
                         sim.shape_str());
  }
  if (sim.rows() < 2) throw ArgumentError("rnc_loss: need at least 2 samples");
  if (labels.size() != sim.rows()) {
    throw DimensionError("rnc_loss: " + std::to_string(labels.size()) +
                         " labels for " + sim.shape_str() + " similarities");
  }
  for (double y : labels) {
    if (!std::isfinite(y)) throw ArgumentError("rnc_loss: non-finite label");
  }
  if (tau <= 0.0) throw ArgumentError("rnc_loss: tau must be positive");
}

}  // namespace

void RncConfig::validate() const {
  if (tau <= 0.0) throw ArgumentError("RncConfig: tau must be positive");
}

void SupConBinConfig::validate() const {
  if (tau <= 0.0) throw ArgumentError("SupConBinConfig: tau must be positive");
  if (bin_width <= 0.0) throw ArgumentError("SupConBinConfig: bin_width must be positive");
}

void Batch::validate() const {
  if (embeddings.rows() < 2) {
    throw ArgumentError("Batch: need at least 2 rows, got " + embeddings.shape_str());
  }
  check_labels(embeddings, labels);
  if (!embeddings.all_finite()) throw ArgumentError("Batch: non-finite embedding");
}

std::vector<std::size_t> higher_rank_set(const std::vector<double>& labels,
                                         std::size_t anchor, std::size_t candidate) {
  if (anchor >= labels.size() || candidate >= labels.size()) {
    throw ArgumentError("higher_rank_set: index out of range");
  }
  if (anchor == candidate) {
    throw ArgumentError("higher_rank_set: anchor and candidate coincide");
  }
  double ref = std::abs(labels[candidate] - labels[anchor]);
  std::vector<std::size_t> result;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    if (k == anchor) continue;
    if (std::abs(labels[k] - labels[anchor]) >= ref) result.push_back(k);
  }
  return result;
}

Var similarity_matrix(const Var& embeddings, Similarity kind) {
  const Matrix& v = embeddings.value();
  if (v.rows() < 2) {
    throw ArgumentError("similarity_matrix: need at least 2 rows, got " + v.shape_str());
  }
  if (kind == Similarity::NegL2) {
    Var d2 = pairwise_sq_l2(embeddings);
    Matrix out = d2.value();
    for (double& x : out.values()) x = -std::sqrt(x + kL2Epsilon);
    return detail::make_op(std::move(out), {d2}, [](detail::Node& self) {
      detail::Node& p = *self.parents[0];
      if (!p.requires_grad) return;
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        // s = -sqrt(d2 + eps)  =>  ds/dd2 = 0.5 / s
        p.grad.values()[i] += self.grad.values()[i] * 0.5 / self.value.values()[i];
      }
    });
  }

  // cosine
  const std::size_t m = v.rows();
  const std::size_t d = v.cols();
  std::vector<double> norms(m);
  Matrix unit(m, d);
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t c = 0; c < d; ++c) s += v.at(i, c) * v.at(i, c);
    norms[i] = std::sqrt(s);
    if (norms[i] == 0.0) {
      throw NumericError("similarity_matrix: zero-norm row " + std::to_string(i) +
                         " under cosine");
    }
    for (std::size_t c = 0; c < d; ++c) unit.at(i, c) = v.at(i, c) / norms[i];
  }
  Matrix out = mat_mul_nt(unit, unit);
  return detail::make_op(
      std::move(out), {embeddings},
      [unit = std::move(unit), norms = std::move(norms)](detail::Node& self) {
        detail::Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        const std::size_t m = unit.rows();
        const std::size_t d = unit.cols();
        // dL/dv_r = (1/|v_r|) [ (H U)_r - (sum_j H_rj S_rj) u_r ],  H = G + G^T
        Matrix h(m, m);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < m; ++j) {
            h.at(i, j) = self.grad.at(i, j) + self.grad.at(j, i);
          }
        }
        Matrix hu = mat_mul(h, unit);
        for (std::size_t r = 0; r < m; ++r) {
          double c = 0.0;
          for (std::size_t j = 0; j < m; ++j) c += h.at(r, j) * self.value.at(r, j);
          for (std::size_t col = 0; col < d; ++col) {
            p.grad.at(r, col) += (hu.at(r, col) - c * unit.at(r, col)) / norms[r];
          }
        }
      });
}

Var rnc_loss_from_similarity(const Var& sim, const std::vector<double>& labels,
                             double tau) {
  validate_rnc_inputs(sim.value(), labels, tau);
  auto aux = std::make_shared<RncAux>();
  double value = rnc_forward(sim.value(), labels, tau, aux.get());
  if (!std::isfinite(value)) throw NumericError("rnc_loss: non-finite loss value");
  Matrix out(1, 1);
  out.at(0, 0) = value;
  return detail::make_op(std::move(out), {sim}, [aux, tau](detail::Node& self) {
    detail::Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    const std::size_t m = p.value.rows();
    const double scale =
        self.grad.at(0, 0) / (static_cast<double>(m) * static_cast<double>(m - 1));
    std::vector<double> suffix;
    for (std::size_t i = 0; i < m; ++i) {
      const RncAnchor& anchor = aux->anchors[i];
      const std::size_t c = anchor.sorted.size();
      // suffix[q] = sum_{q' >= q} exp(lse_q - lse_q'); lse is non-decreasing,
      // so every exponent is <= 0.
      suffix.assign(c, 1.0);
      for (std::size_t q = c - 1; q-- > 0;) {
        suffix[q] =
            1.0 + std::exp(anchor.denom_lse[q] - anchor.denom_lse[q + 1]) * suffix[q + 1];
      }
      for (std::size_t q = 0; q < c; ++q) {
        std::size_t k = anchor.sorted[q];
        std::size_t g = anchor.group_first[q];
        double coeff =
            std::exp(p.value.at(i, k) / tau - anchor.denom_lse[g]) * suffix[g];
        p.grad.at(i, k) += scale * (coeff - 1.0) / tau;
      }
    }
  });
}

double rnc_loss_from_similarity_value(const Matrix& sim,
                                      const std::vector<double>& labels, double tau) {
  validate_rnc_inputs(sim, labels, tau);
  double value = rnc_forward(sim, labels, tau, nullptr);
  if (!std::isfinite(value)) throw NumericError("rnc_loss: non-finite loss value");
  return value;
}

Var rnc_loss(const Var& embeddings, const std::vector<double>& labels,
             const RncConfig& cfg) {
  cfg.validate();
  check_labels(embeddings.value(), labels);
  if (embeddings.value().rows() < 2) {
    throw ArgumentError("rnc_loss: need at least 2 samples");
  }
  Var sim = similarity_matrix(embeddings, cfg.similarity);
  return rnc_loss_from_similarity(sim, labels, cfg.tau);
}

double rnc_loss_value(const Batch& batch, const RncConfig& cfg) {
  batch.validate();
  NoGradGuard no_grad;
  return rnc_loss(Var::leaf(batch.embeddings), batch.labels, cfg).value().at(0, 0);
}

double rnc_loss_bruteforce(const Batch& batch, const RncConfig& cfg) {
  batch.validate();
  cfg.validate();
  const Matrix& v = batch.embeddings;
  const std::vector<double>& y = batch.labels;
  const std::size_t m = v.rows();
  if (m > 32) {
    throw ArgumentError("rnc_loss_bruteforce: M <= 32 required, got " +
                        std::to_string(m));
  }

  auto sim = [&](std::size_t i, std::size_t j) {
    if (cfg.similarity == Similarity::NegL2) {
      double s = 0.0;
      for (std::size_t c = 0; c < v.cols(); ++c) {
        double diff = v.at(i, c) - v.at(j, c);
        s += diff * diff;
      }
      return -std::sqrt(s + kL2Epsilon);
    }
    double dot = 0.0, ni = 0.0, nj = 0.0;
    for (std::size_t c = 0; c < v.cols(); ++c) {
      dot += v.at(i, c) * v.at(j, c);
      ni += v.at(i, c) * v.at(i, c);
      nj += v.at(j, c) * v.at(j, c);
    }
    return dot / (std::sqrt(ni) * std::sqrt(nj));
  };

  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (j == i) continue;
      double denom = 0.0;
      for (std::size_t k : higher_rank_set(y, i, j)) {
        denom += std::exp(sim(i, k) / cfg.tau);
      }
      double p = std::exp(sim(i, j) / cfg.tau) / denom;
      total += -std::log(p);
    }
  }
  return total / (static_cast<double>(m) * static_cast<double>(m - 1));
}

Var l1_loss(const Var& predictions, const std::vector<double>& targets) {
  const Matrix& pred = predictions.value();
  if (pred.cols() != 1 || pred.rows() != targets.size()) {
    throw DimensionError("l1_loss: predictions are " + pred.shape_str() + ", " +
                         std::to_string(targets.size()) + " targets");
  }
  if (targets.empty()) throw ArgumentError("l1_loss: empty targets");
  const std::size_t m = targets.size();
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) total += std::abs(pred.at(i, 0) - targets[i]);
  Matrix out(1, 1);
  out.at(0, 0) = total / static_cast<double>(m);
  return detail::make_op(std::move(out), {predictions}, [targets](detail::Node& self) {
    detail::Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    const std::size_t m = targets.size();
    double g = self.grad.at(0, 0) / static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i) {
      double diff = p.value.at(i, 0) - targets[i];
      if (diff > 0.0) {
        p.grad.at(i, 0) += g;
      } else if (diff < 0.0) {
        p.grad.at(i, 0) -= g;
      }
    }
  });
}

std::vector<std::int64_t> bin_indices(const std::vector<double>& labels,
                                      double bin_width) {
  if (bin_width <= 0.0) throw ArgumentError("bin_indices: bin_width must be positive");
  std::vector<std::int64_t> bins(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    bins[i] = static_cast<std::int64_t>(std::floor(labels[i] / bin_width));
  }
  return bins;
}

Var supcon_binned_loss(const Var& embeddings, const std::vector<double>& labels,
                       const SupConBinConfig& cfg) {
  cfg.validate();
  check_labels(embeddings.value(), labels);
  if (embeddings.value().rows() < 2) {
    throw ArgumentError("supcon_binned_loss: need at least 2 samples");
  }
  // Same neg-l2 geometry as the ranking loss, so the two baselines shape
  // the identical embedding space.
  Var sim = similarity_matrix(embeddings, Similarity::NegL2);

  const Matrix& s = sim.value();
  const std::size_t m = s.rows();
  const double tau = cfg.tau;
  std::vector<std::int64_t> bins = bin_indices(labels, cfg.bin_width);

  std::vector<std::vector<std::size_t>> positives(m);
  std::vector<std::size_t> anchors;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < m; ++p) {
      if (p != i && bins[p] == bins[i]) positives[i].push_back(p);
    }
    if (!positives[i].empty()) anchors.push_back(i);
  }

  Matrix out(1, 1);
  if (anchors.empty()) {
    return detail::make_op(std::move(out), {sim}, [](detail::Node&) {});
  }

  std::vector<double> anchor_lse(m, 0.0);
  std::vector<double> buf;
  double total = 0.0;
  for (std::size_t i : anchors) {
    buf.clear();
    for (std::size_t a = 0; a < m; ++a) {
      if (a != i) buf.push_back(s.at(i, a) / tau);
    }
    anchor_lse[i] = log_sum_exp(buf);
    double acc = 0.0;
    for (std::size_t p : positives[i]) acc += anchor_lse[i] - s.at(i, p) / tau;
    total += acc / static_cast<double>(positives[i].size());
  }
  out.at(0, 0) = total / static_cast<double>(anchors.size());
  if (!std::isfinite(out.at(0, 0))) {
    throw NumericError("supcon_binned_loss: non-finite loss value");
  }

  return detail::make_op(
      std::move(out), {sim},
      [anchors, positives, anchor_lse, tau](detail::Node& self) {
        detail::Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        const std::size_t m = p.value.rows();
        const double scale = self.grad.at(0, 0) / static_cast<double>(anchors.size());
        for (std::size_t i : anchors) {
          for (std::size_t a = 0; a < m; ++a) {
            if (a == i) continue;
            double w = std::exp(p.value.at(i, a) / tau - anchor_lse[i]);
            p.grad.at(i, a) += scale * w / tau;
          }
          double share = scale / (tau * static_cast<double>(positives[i].size()));
          for (std::size_t q : positives[i]) p.grad.at(i, q) -= share;
        }
      });
}

double supcon_binned_loss_value(const Batch& batch, const SupConBinConfig& cfg) {
  batch.validate();
  NoGradGuard no_grad;
  return supcon_binned_loss(Var::leaf(batch.embeddings), batch.labels, cfg)
      .value()
      .at(0, 0);
}

}  // namespace rnclab
