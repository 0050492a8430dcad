#pragma once

#include <cstdint>
#include <vector>

#include "rnclab/autodiff.hpp"
#include "rnclab/matrix.hpp"

namespace rnclab {

enum class Similarity { NegL2, Cosine };

struct RncConfig {
  double tau = 2.0;
  Similarity similarity = Similarity::NegL2;
  void validate() const;  // tau > 0
};

struct SupConBinConfig {
  double tau = 2.0;
  double bin_width = 0.1;
  void validate() const;  // tau > 0, bin_width > 0
};

// 2N embeddings with one scalar label per row (each augmented view carries
// its source label).
struct Batch {
  Matrix embeddings;            // M x d_e
  std::vector<double> labels;   // size M, finite
  void validate() const;
};

// S_{i,j} = { k != i : |y_k - y_anchor| >= |y_j - y_anchor| }. Always
// contains the candidate itself; ties are included. Returned ascending.
std::vector<std::size_t> higher_rank_set(const std::vector<double>& labels,
                                         std::size_t anchor, std::size_t candidate);

// Differentiable M x M similarity matrix.
//   neg-l2:  -sqrt(pairwise_sq_l2 + 1e-12)
//   cosine:  v_i . v_j / (|v_i| |v_j|); zero-norm rows are a NumericError.
Var similarity_matrix(const Var& embeddings, Similarity kind);

// Ranking-contrast loss over a similarity matrix:
//   L = 1/(M(M-1)) sum_i sum_{j != i} [ LSE_{k in S_{i,j}}(s_ik / tau) - s_ij / tau ]
// Per-anchor denominators are prefix log-sum-exps over candidates sorted by
// label distance, so the whole loss costs O(M^2 log M).
Var rnc_loss_from_similarity(const Var& sim, const std::vector<double>& labels,
                             double tau);
double rnc_loss_from_similarity_value(const Matrix& sim,
                                      const std::vector<double>& labels, double tau);

Var rnc_loss(const Var& embeddings, const std::vector<double>& labels,
             const RncConfig& cfg);
double rnc_loss_value(const Batch& batch, const RncConfig& cfg);

// Literal triple loop over (i, j, k in S_{i,j}) with direct exp/sum/log.
// Intentionally shares nothing with rnc_loss beyond Matrix storage; the
// reference the fast path is checked against. M <= 32.
double rnc_loss_bruteforce(const Batch& batch, const RncConfig& cfg);

// Mean absolute error; subgradient at 0 is 0.
Var l1_loss(const Var& predictions, const std::vector<double>& targets);

// Supervised-contrastive loss with labels discretized into equal-width
// bins (bin = floor(y / bin_width)). Anchors without a same-bin positive
// are excluded from the average; all-singleton batches give 0.
Var supcon_binned_loss(const Var& embeddings, const std::vector<double>& labels,
                       const SupConBinConfig& cfg);
double supcon_binned_loss_value(const Batch& batch, const SupConBinConfig& cfg);

std::vector<std::int64_t> bin_indices(const std::vector<double>& labels,
                                      double bin_width);

}  // namespace rnclab
