#include "rnclab/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "rnclab/errors.hpp"
#include "rnclab/random.hpp"
#include "rnclab/stats.hpp"

namespace rnclab {

namespace {

constexpr std::uint64_t kEvalViewBit = 1ULL << 63;  // keeps eval streams off the training ones
constexpr std::uint64_t kEncoderLossSubsampleSeed = 0xF14A7;

double now_ms() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double, std::milli>(clock::now().time_since_epoch())
      .count();
}

Matrix gather_rows(const Matrix& src, const std::vector<std::size_t>& idx,
                   std::size_t begin, std::size_t count) {
  Matrix out(count, src.cols());
  for (std::size_t r = 0; r < count; ++r) {
    for (std::size_t c = 0; c < src.cols(); ++c) {
      out.at(r, c) = src.at(idx[begin + r], c);
    }
  }
  return out;
}

Var representation_loss(const Var& embeddings, const std::vector<double>& labels,
                        const LossSpec& loss) {
  if (loss.kind == LossSpec::Kind::Rnc) return rnc_loss(embeddings, labels, loss.rnc);
  if (loss.kind == LossSpec::Kind::SupconBinned) {
    return supcon_binned_loss(embeddings, labels, loss.supcon);
  }
  throw ConfigError("representation stage configured with a non-representation loss");
}

void check_batch_loss(double value, int epoch, int batch) {
  if (!std::isfinite(value) || value > kDivergeThreshold) {
    throw DivergedError("training diverged at epoch " + std::to_string(epoch) +
                        ", batch " + std::to_string(batch) +
                        ": loss = " + std::to_string(value));
  }
}

double val_l1(const MlpEncoder& encoder, const LinearPredictor& predictor,
              const Dataset& val) {
  std::vector<double> preds = predict_all(encoder, predictor, val);
  double total = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    total += std::abs(preds[i] - val.labels[i]);
  }
  return total / static_cast<double>(preds.size());
}

}  // namespace

void OptimizerSpec::validate() const {
  // lr = 0 is a legal no-op schedule (exercised by tests); experiment
  // configs additionally require lr > 0.
  if (lr < 0.0) throw ConfigError("OptimizerSpec: lr must be >= 0");
  if (kind == Kind::SgdMomentum) {
    if (momentum < 0.0 || momentum >= 1.0) {
      throw ConfigError("OptimizerSpec: momentum must be in [0, 1)");
    }
  } else {
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0 || eps <= 0.0) {
      throw ConfigError("OptimizerSpec: invalid adam parameters");
    }
  }
}

Optimizer::Optimizer(OptimizerSpec spec) : spec_(spec) {
  // lr = 0 is allowed here (the no-op step is useful in tests); the config
  // layer validates experiment settings.
  if (spec_.lr < 0.0) throw ConfigError("Optimizer: lr must be >= 0");
}

void Optimizer::step(ParameterSet& params) {
  ++t_;
  for (auto& [name, var] : params) {
    Matrix& theta = var.value();
    const Matrix& g = var.grad();
    if (spec_.kind == OptimizerSpec::Kind::SgdMomentum) {
      auto [it, fresh] = velocity_.try_emplace(name, theta.rows(), theta.cols());
      Matrix& v = it->second;
      (void)fresh;
      for (std::size_t i = 0; i < theta.size(); ++i) {
        v.values()[i] = spec_.momentum * v.values()[i] + g.values()[i];
        theta.values()[i] -= spec_.lr * v.values()[i];
      }
    } else {
      auto [mit, f1] = velocity_.try_emplace(name, theta.rows(), theta.cols());
      auto [vit, f2] = second_.try_emplace(name, theta.rows(), theta.cols());
      (void)f1;
      (void)f2;
      Matrix& m = mit->second;
      Matrix& v = vit->second;
      double bc1 = 1.0 - std::pow(spec_.beta1, static_cast<double>(t_));
      double bc2 = 1.0 - std::pow(spec_.beta2, static_cast<double>(t_));
      for (std::size_t i = 0; i < theta.size(); ++i) {
        double gi = g.values()[i];
        m.values()[i] = spec_.beta1 * m.values()[i] + (1.0 - spec_.beta1) * gi;
        v.values()[i] = spec_.beta2 * v.values()[i] + (1.0 - spec_.beta2) * gi * gi;
        double mhat = m.values()[i] / bc1;
        double vhat = v.values()[i] / bc2;
        theta.values()[i] -= spec_.lr * mhat / (std::sqrt(vhat) + spec_.eps);
      }
    }
  }
}

void StageConfig::validate(std::size_t train_size) const {
  if (epochs < 1) throw ConfigError("StageConfig: epochs must be >= 1");
  if (batch_size < 2) throw ConfigError("StageConfig: batch_size must be >= 2");
  if (static_cast<std::size_t>(batch_size) > train_size) {
    throw ConfigError("StageConfig: batch_size " + std::to_string(batch_size) +
                      " exceeds train size " + std::to_string(train_size));
  }
  optimizer.validate();
  if (loss.kind == LossSpec::Kind::Rnc) loss.rnc.validate();
  if (loss.kind == LossSpec::Kind::SupconBinned) loss.supcon.validate();
}

Matrix encode_all(const MlpEncoder& encoder, const Dataset& ds) {
  NoGradGuard no_grad;
  return encoder.encode(ds.features).value();
}

std::vector<double> predict_all(const MlpEncoder& encoder,
                                const LinearPredictor& predictor, const Dataset& ds) {
  NoGradGuard no_grad;
  Matrix out = predictor.predict(encoder.encode(ds.features)).value();
  return out.values();
}

EvalMetrics evaluate(const MlpEncoder& encoder, const LinearPredictor& predictor,
                     const Dataset& ds, std::uint64_t spearman_seed) {
  if (ds.size() == 0) throw ArgumentError("evaluate: empty dataset");
  EvalMetrics metrics;

  std::vector<double> preds = predict_all(encoder, predictor, ds);
  double abs_sum = 0.0, sq_sum = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    double err = preds[i] - ds.labels[i];
    abs_sum += std::abs(err);
    sq_sum += err * err;
  }
  metrics.mae = abs_sum / static_cast<double>(preds.size());
  metrics.rmse = std::sqrt(sq_sum / static_cast<double>(preds.size()));

  if (ds.size() < 2) {
    metrics.spearman = 0.0;
    return metrics;
  }
  Matrix z = encode_all(encoder, ds);
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(spearman_seed);
  rng.shuffle(idx);
  std::size_t k = std::min(kSpearmanMaxPoints, ds.size());
  std::vector<double> emb_dist, label_dist;
  emb_dist.reserve(k * (k - 1) / 2);
  label_dist.reserve(k * (k - 1) / 2);
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = a + 1; b < k; ++b) {
      std::size_t i = idx[a], j = idx[b];
      double d = 0.0;
      for (std::size_t c = 0; c < z.cols(); ++c) {
        double diff = z.at(i, c) - z.at(j, c);
        d += diff * diff;
      }
      emb_dist.push_back(std::sqrt(d));
      label_dist.push_back(std::abs(ds.labels[i] - ds.labels[j]));
    }
  }
  metrics.spearman = spearman(emb_dist, label_dist);
  return metrics;
}

double encoder_loss_over(const MlpEncoder& encoder, const Dataset& ds,
                         const LossSpec& loss, const AugmentSpec& augment,
                         int batch_size) {
  if (!loss.representation()) {
    throw ConfigError("encoder_loss_over: needs a representation loss");
  }
  if (ds.size() < 2) throw ArgumentError("encoder_loss_over: need at least 2 rows");

  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), 0);
  if (ds.size() > kEncoderLossCap) {
    Rng rng(kEncoderLossSubsampleSeed);
    rng.shuffle(idx);
    idx.resize(kEncoderLossCap);
  }

  NoGradGuard no_grad;
  const std::size_t bs = static_cast<std::size_t>(batch_size);
  std::size_t n_batches = idx.size() / bs;
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t b = 0; b < n_batches; ++b) {
    Matrix rows = gather_rows(ds.features, idx, b * bs, bs);
    TwoViews views = two_views(rows, augment, kEvalViewBit | b);
    std::vector<double> labels(views.source.size());
    for (std::size_t k = 0; k < labels.size(); ++k) {
      labels[k] = ds.labels[idx[b * bs + views.source[k]]];
    }
    Var z = encoder.encode(views.rows);
    total += representation_loss(z, labels, loss).value().at(0, 0);
    ++counted;
  }
  if (counted == 0) {
    // fewer rows than one batch: evaluate on everything at once
    Matrix rows = gather_rows(ds.features, idx, 0, idx.size());
    TwoViews views = two_views(rows, augment, kEvalViewBit);
    std::vector<double> labels(views.source.size());
    for (std::size_t k = 0; k < labels.size(); ++k) {
      labels[k] = ds.labels[idx[views.source[k]]];
    }
    Var z = encoder.encode(views.rows);
    return representation_loss(z, labels, loss).value().at(0, 0);
  }
  return total / static_cast<double>(counted);
}

std::vector<EpochRecord> train_representation_stage(MlpEncoder& encoder,
                                                    const Dataset& train,
                                                    const Dataset* val,
                                                    const StageConfig& cfg,
                                                    const AugmentSpec& augment,
                                                    int epoch_offset) {
  train.validate();
  cfg.validate(train.size());
  augment.validate();
  if (!cfg.loss.representation()) {
    throw ConfigError("train_representation_stage: stage loss must be rnc or supcon");
  }

  Optimizer opt(cfg.optimizer);
  Rng shuffle_rng(derive_seed(cfg.seed, 0xA));
  std::vector<std::size_t> idx(train.size());
  std::iota(idx.begin(), idx.end(), 0);
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t n_batches = train.size() / bs;
  std::uint64_t step = 0;

  std::vector<EpochRecord> records;
  records.reserve(cfg.epochs);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double t0 = now_ms();
    shuffle_rng.shuffle(idx);
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < n_batches; ++b) {
      ++step;
      Matrix rows = gather_rows(train.features, idx, b * bs, bs);
      TwoViews views = two_views(rows, augment, step);
      std::vector<double> labels(views.source.size());
      for (std::size_t k = 0; k < labels.size(); ++k) {
        labels[k] = train.labels[idx[b * bs + views.source[k]]];
      }
      Var z = encoder.encode(views.rows);
      Var loss = representation_loss(z, labels, cfg.loss);
      double value = loss.value().at(0, 0);
      check_batch_loss(value, epoch, static_cast<int>(b));
      epoch_loss += value;
      encoder.params().zero_grads();
      loss.backward();
      opt.step(encoder.params());
    }
    EpochRecord rec;
    rec.epoch = epoch_offset + epoch;
    rec.train_loss = epoch_loss / static_cast<double>(n_batches);
    if (val != nullptr && val->size() >= 2) {
      rec.val_loss = encoder_loss_over(encoder, *val, cfg.loss, augment, cfg.batch_size);
    }
    rec.wall_ms = now_ms() - t0;
    records.push_back(rec);
  }
  return records;
}

namespace {

// Preconditioner for the predictor stage: frozen embeddings sit on a
// nearly one-dimensional, wildly scaled manifold, and first-order steps on
// the raw basis stall orders of magnitude above the best linear readout.
// Training runs on whitened coordinates L^-1 (z - mu) and the learned head
// folds back into the plain (w, b) parameterization afterwards.
struct Whitener {
  std::vector<double> mu;
  std::vector<double> chol;  // lower triangular, row-major d x d
  std::size_t d = 0;

  void fit(const Matrix& z) {
    const std::size_t n = z.rows();
    d = z.cols();
    mu.assign(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < d; ++c) mu[c] += z.at(i, c);
    }
    for (double& m : mu) m /= static_cast<double>(n);
    std::vector<double> cov(d * d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t r = 0; r < d; ++r) {
        double zr = z.at(i, r) - mu[r];
        for (std::size_t c = 0; c <= r; ++c) {
          cov[r * d + c] += zr * (z.at(i, c) - mu[c]);
        }
      }
    }
    double trace = 0.0;
    for (std::size_t r = 0; r < d; ++r) trace += cov[r * d + r] / static_cast<double>(n);
    double ridge = 1e-6 * trace / static_cast<double>(d) + 1e-12;
    chol.assign(d * d, 0.0);
    for (std::size_t r = 0; r < d; ++r) {
      for (std::size_t c = 0; c <= r; ++c) {
        double s = cov[r * d + c] / static_cast<double>(n) + (r == c ? ridge : 0.0);
        for (std::size_t k = 0; k < c; ++k) s -= chol[r * d + k] * chol[c * d + k];
        chol[r * d + c] = r == c ? std::sqrt(s) : s / chol[c * d + c];
      }
    }
  }

  Matrix transform(const Matrix& z) const {
    Matrix out(z.rows(), d);
    for (std::size_t i = 0; i < z.rows(); ++i) {
      for (std::size_t r = 0; r < d; ++r) {
        double s = z.at(i, r) - mu[r];
        for (std::size_t k = 0; k < r; ++k) s -= chol[r * d + k] * out.at(i, k);
        out.at(i, r) = s / chol[r * d + r];
      }
    }
    return out;
  }

  // y = u . L^-1 (z - mu) + c  ==  z . w + b  with  w = L^-T u, b = c - mu . w
  void fold_back(const Matrix& u, double c, Matrix& w, double& b) const {
    for (std::size_t r = d; r-- > 0;) {
      double s = u.at(r, 0);
      for (std::size_t k = r + 1; k < d; ++k) s -= chol[k * d + r] * w.at(k, 0);
      w.at(r, 0) = s / chol[r * d + r];
    }
    b = c;
    for (std::size_t r = 0; r < d; ++r) b -= mu[r] * w.at(r, 0);
  }
};

// Shared loop for the joint L1 stage.
std::vector<EpochRecord> l1_stage(const MlpEncoder& encoder, LinearPredictor& predictor,
                                  ParameterSet& trained, const Dataset& train,
                                  const Dataset* val, const StageConfig& cfg,
                                  int epoch_offset) {
  train.validate();
  cfg.validate(train.size());
  if (cfg.loss.kind != LossSpec::Kind::L1) {
    throw ConfigError("l1 stage: stage loss must be l1");
  }

  Optimizer opt(cfg.optimizer);
  Rng shuffle_rng(derive_seed(cfg.seed, 0xA));
  std::vector<std::size_t> idx(train.size());
  std::iota(idx.begin(), idx.end(), 0);
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t n_batches = train.size() / bs;

  std::vector<EpochRecord> records;
  records.reserve(cfg.epochs);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double t0 = now_ms();
    shuffle_rng.shuffle(idx);
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < n_batches; ++b) {
      Matrix rows = gather_rows(train.features, idx, b * bs, bs);
      std::vector<double> labels(bs);
      for (std::size_t k = 0; k < bs; ++k) labels[k] = train.labels[idx[b * bs + k]];
      Var preds = predictor.predict(encoder.encode(rows));
      Var loss = l1_loss(preds, labels);
      double value = loss.value().at(0, 0);
      check_batch_loss(value, epoch, static_cast<int>(b));
      epoch_loss += value;
      trained.zero_grads();
      loss.backward();
      opt.step(trained);
    }
    EpochRecord rec;
    rec.epoch = epoch_offset + epoch;
    rec.train_loss = epoch_loss / static_cast<double>(n_batches);
    if (val != nullptr && val->size() >= 1) {
      rec.val_loss = val_l1(encoder, predictor, *val);
    }
    rec.wall_ms = now_ms() - t0;
    records.push_back(rec);
  }
  return records;
}

struct FreezeGuard {
  explicit FreezeGuard(ParameterSet& params) : params_(params) {
    params_.set_trainable(false);
  }
  ~FreezeGuard() { params_.set_trainable(true); }
  ParameterSet& params_;
};

}  // namespace

std::vector<EpochRecord> train_predictor_stage(const MlpEncoder& encoder,
                                               LinearPredictor& predictor,
                                               const Dataset& train, const Dataset* val,
                                               const StageConfig& cfg,
                                               int epoch_offset) {
  train.validate();
  cfg.validate(train.size());
  if (cfg.loss.kind != LossSpec::Kind::L1) {
    throw ConfigError("train_predictor_stage: stage loss must be l1");
  }

  // The encoder is fixed during this stage, so embeddings are computed
  // once; the head trains on their whitened coordinates and folds back
  // into the predictor's (w, b) at the end. It starts from the zero
  // readout (a neutral constant predictor), which keeps short stages
  // close to converged; with lr = 0 nothing moves and the predictor is
  // left untouched.
  Matrix z_train = encode_all(encoder, train);
  Whitener whitener;
  whitener.fit(z_train);
  Matrix zw_train = whitener.transform(z_train);
  const std::size_t d = zw_train.cols();

  Matrix zw_val;
  if (val != nullptr && val->size() >= 1) {
    zw_val = whitener.transform(encode_all(encoder, *val));
  }

  ParameterSet head;
  Var u = head.add("head.weight", Matrix(d, 1));
  Var c = head.add("head.bias", Matrix(1, 1));
  const Matrix u_init = u.value();
  const double c_init = c.value().at(0, 0);

  Optimizer opt(cfg.optimizer);
  Rng shuffle_rng(derive_seed(cfg.seed, 0xA));
  std::vector<std::size_t> idx(train.size());
  std::iota(idx.begin(), idx.end(), 0);
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t n_batches = train.size() / bs;

  std::vector<EpochRecord> records;
  records.reserve(cfg.epochs);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double t0 = now_ms();
    shuffle_rng.shuffle(idx);
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < n_batches; ++b) {
      Matrix rows = gather_rows(zw_train, idx, b * bs, bs);
      std::vector<double> labels(bs);
      for (std::size_t k = 0; k < bs; ++k) labels[k] = train.labels[idx[b * bs + k]];
      Var preds = add_row(matmul(Var::leaf(rows), u), c);
      Var loss = l1_loss(preds, labels);
      double value = loss.value().at(0, 0);
      check_batch_loss(value, epoch, static_cast<int>(b));
      epoch_loss += value;
      head.zero_grads();
      loss.backward();
      opt.step(head);
    }
    EpochRecord rec;
    rec.epoch = epoch_offset + epoch;
    rec.train_loss = epoch_loss / static_cast<double>(n_batches);
    if (zw_val.rows() > 0) {
      NoGradGuard no_grad;
      Matrix pv = add_row(matmul(Var::leaf(zw_val), u), c).value();
      double total = 0.0;
      for (std::size_t i = 0; i < pv.rows(); ++i) {
        total += std::abs(pv.at(i, 0) - val->labels[i]);
      }
      rec.val_loss = total / static_cast<double>(pv.rows());
    }
    rec.wall_ms = now_ms() - t0;
    records.push_back(rec);
  }

  bool moved = c.value().at(0, 0) != c_init;
  for (std::size_t i = 0; i < u.value().size() && !moved; ++i) {
    moved = u.value().values()[i] != u_init.values()[i];
  }
  if (moved) {
    Matrix& w = predictor.params().at("predictor.weight").value();
    double& b = predictor.params().at("predictor.bias").value().at(0, 0);
    whitener.fold_back(u.value(), c.value().at(0, 0), w, b);
  }
  return records;
}

std::vector<EpochRecord> train_joint_stage(MlpEncoder& encoder,
                                           LinearPredictor& predictor,
                                           const Dataset& train, const Dataset* val,
                                           const StageConfig& cfg) {
  ParameterSet all;
  all.adopt(encoder.params());
  all.adopt(predictor.params());
  return l1_stage(encoder, predictor, all, train, val, cfg, 0);
}

RunLog train_two_stage(MlpEncoder& encoder, LinearPredictor& predictor,
                       const Dataset& train, const Dataset& val,
                       const StageConfig& stage1, const StageConfig& stage2,
                       const AugmentSpec& augment) {
  if (!stage1.loss.representation()) {
    throw ConfigError("train_two_stage: stage 1 loss must be rnc or supcon");
  }
  if (stage2.loss.kind != LossSpec::Kind::L1) {
    throw ConfigError("train_two_stage: stage 2 loss must be l1");
  }

  RunLog log;
  log.epochs = train_representation_stage(encoder, train, &val, stage1, augment, 0);

  double final_loss =
      encoder_loss_over(encoder, train, stage1.loss, augment, stage1.batch_size);
  if (stage1.loss.kind == LossSpec::Kind::Rnc) {
    log.final.final_encoder_rnc_loss = final_loss;
  } else {
    log.final.final_encoder_supcon_loss = final_loss;
  }

  {
    FreezeGuard freeze(encoder.params());
    auto stage2_log =
        train_predictor_stage(encoder, predictor, train, &val, stage2, stage1.epochs);
    log.epochs.insert(log.epochs.end(), stage2_log.begin(), stage2_log.end());
  }

  EvalMetrics m = evaluate(encoder, predictor, val);
  log.final.val_mae = m.mae;
  log.final.val_rmse = m.rmse;
  log.final.embedding_spearman = m.spearman;
  return log;
}

RunLog train_joint_l1(MlpEncoder& encoder, LinearPredictor& predictor,
                      const Dataset& train, const Dataset& val,
                      const StageConfig& cfg) {
  RunLog log;
  log.epochs = train_joint_stage(encoder, predictor, train, &val, cfg);
  EvalMetrics m = evaluate(encoder, predictor, val);
  log.final.val_mae = m.mae;
  log.final.val_rmse = m.rmse;
  log.final.embedding_spearman = m.spearman;
  return log;
}

std::string loss_csv(const std::vector<EpochRecord>& records, bool use_val) {
  std::ostringstream out;
  out << "epoch,loss\n";
  char buf[48];
  for (const EpochRecord& rec : records) {
    if (use_val) {
      if (!rec.val_loss) continue;
      std::snprintf(buf, sizeof(buf), "%d,%.17g\n", rec.epoch, *rec.val_loss);
    } else {
      std::snprintf(buf, sizeof(buf), "%d,%.17g\n", rec.epoch, rec.train_loss);
    }
    out << buf;
  }
  return out.str();
}

}  // namespace rnclab
