#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rnclab/data.hpp"
#include "rnclab/losses.hpp"
#include "rnclab/model.hpp"

namespace rnclab {

struct OptimizerSpec {
  enum class Kind { SgdMomentum, Adam };
  Kind kind = Kind::SgdMomentum;
  double lr = 0.05;
  double momentum = 0.9;                            // sgd
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;    // adam
  void validate() const;
};

// Per-parameter state keyed by name; step order follows ParameterSet's
// name-sorted iteration, so runs are bit-reproducible.
class Optimizer {
 public:
  explicit Optimizer(OptimizerSpec spec);
  void step(ParameterSet& params);

 private:
  OptimizerSpec spec_;
  long t_ = 0;
  std::map<std::string, Matrix> velocity_;  // sgd momentum / adam m
  std::map<std::string, Matrix> second_;    // adam v
};

struct LossSpec {
  enum class Kind { Rnc, L1, SupconBinned };
  Kind kind = Kind::Rnc;
  RncConfig rnc;
  SupConBinConfig supcon;
  bool representation() const { return kind != Kind::L1; }
};

struct StageConfig {
  int epochs = 200;
  int batch_size = 32;
  LossSpec loss;
  OptimizerSpec optimizer;
  std::uint64_t seed = 1;
  void validate(std::size_t train_size) const;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  std::optional<double> val_loss;
  double wall_ms = 0.0;
};

struct FinalMetrics {
  double val_mae = 0.0;
  double val_rmse = 0.0;
  double embedding_spearman = 0.0;
  std::optional<double> final_encoder_rnc_loss;
  std::optional<double> final_encoder_supcon_loss;
};

struct RunLog {
  std::vector<EpochRecord> epochs;  // contiguous from 1 across stages
  FinalMetrics final;
};

// --- evaluation ---------------------------------------------------------

struct EvalMetrics {
  double mae = 0.0;
  double rmse = 0.0;
  double spearman = 0.0;  // rank correlation of pairwise embedding vs label distances
};

inline constexpr std::uint64_t kSpearmanSeed = 0x5EA2;
inline constexpr std::size_t kSpearmanMaxPoints = 128;
inline constexpr std::size_t kEncoderLossCap = 512;
inline constexpr double kDivergeThreshold = 1e6;

Matrix encode_all(const MlpEncoder& encoder, const Dataset& ds);
std::vector<double> predict_all(const MlpEncoder& encoder,
                                const LinearPredictor& predictor, const Dataset& ds);
EvalMetrics evaluate(const MlpEncoder& encoder, const LinearPredictor& predictor,
                     const Dataset& ds, std::uint64_t spearman_seed = kSpearmanSeed);

// Representation loss of the current encoder over a dataset: seeded
// subsample capped at kEncoderLossCap rows, two-view batches of the given
// size (last partial batch dropped), mean of per-batch losses. Fixed eval
// augmentation streams, so the value is comparable across epochs and runs.
double encoder_loss_over(const MlpEncoder& encoder, const Dataset& ds,
                         const LossSpec& loss, const AugmentSpec& augment,
                         int batch_size);

// --- training -----------------------------------------------------------

// Stage 1 of the two-stage recipe: optimizes the encoder alone with a
// representation loss on two-view batches.
std::vector<EpochRecord> train_representation_stage(MlpEncoder& encoder,
                                                    const Dataset& train,
                                                    const Dataset* val,
                                                    const StageConfig& cfg,
                                                    const AugmentSpec& augment,
                                                    int epoch_offset = 0);

// Stage 2: optimizes the predictor alone with L1 on encoded features. The
// caller controls encoder freezing (train_two_stage freezes around this).
std::vector<EpochRecord> train_predictor_stage(const MlpEncoder& encoder,
                                               LinearPredictor& predictor,
                                               const Dataset& train, const Dataset* val,
                                               const StageConfig& cfg,
                                               int epoch_offset = 0);

// Joint baseline: encoder + predictor end to end with L1.
std::vector<EpochRecord> train_joint_stage(MlpEncoder& encoder,
                                           LinearPredictor& predictor,
                                           const Dataset& train, const Dataset* val,
                                           const StageConfig& cfg);

RunLog train_two_stage(MlpEncoder& encoder, LinearPredictor& predictor,
                       const Dataset& train, const Dataset& val,
                       const StageConfig& stage1, const StageConfig& stage2,
                       const AugmentSpec& augment);

RunLog train_joint_l1(MlpEncoder& encoder, LinearPredictor& predictor,
                      const Dataset& train, const Dataset& val,
                      const StageConfig& cfg);

// "epoch,loss" CSV; val variant keeps only epochs that recorded one.
std::string loss_csv(const std::vector<EpochRecord>& records, bool use_val);

}  // namespace rnclab
