#include "rnclab/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "rnclab/configfile.hpp"
#include "rnclab/errors.hpp"
#include "rnclab/gradcheck.hpp"
#include "rnclab/random.hpp"
#include "rnclab/stats.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace rnclab {

namespace {

const std::vector<std::string> kRegimes = {"l1", "rnc+l1", "supcon+l1"};

const std::vector<std::string> kKnownKeys = {
    "name",
    "dataset.kind", "dataset.n", "dataset.dim", "dataset.noise", "dataset.seed",
    "dataset.path", "dataset.label_column",
    "split.kind", "split.train_fraction", "split.seed", "split.lo", "split.hi",
    "split.val_fraction", "split.band_fraction",
    "model.hidden", "model.embedding_dim", "model.activation",
    "augment.sigma", "augment.dropout", "augment.seed",
    "stage1.epochs", "stage1.batch_size", "stage1.optimizer", "stage1.lr",
    "stage1.momentum", "stage1.beta1", "stage1.beta2", "stage1.adam_eps",
    "stage1.tau", "stage1.similarity", "stage1.bin_width",
    "stage2.epochs", "stage2.batch_size", "stage2.optimizer", "stage2.lr",
    "stage2.momentum", "stage2.beta1", "stage2.beta2", "stage2.adam_eps",
    "joint.epochs", "joint.batch_size", "joint.optimizer", "joint.lr",
    "joint.momentum", "joint.beta1", "joint.beta2", "joint.adam_eps",
    "run.regime", "run.regimes", "run.seeds", "run.out", "run.jobs",
};

std::string sanitize(const std::string& s) {
  std::string out;
  for (char c : s) out.push_back(c == '+' ? '_' : c);
  return out;
}

std::string format_g17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

OptimizerSpec parse_optimizer(const ConfigFile& file, const std::string& section,
                              const OptimizerSpec& defaults) {
  OptimizerSpec spec = defaults;
  std::string kind = file.get_string(section + ".optimizer",
                                     spec.kind == OptimizerSpec::Kind::Adam
                                         ? "adam"
                                         : "sgd_momentum");
  if (kind == "sgd_momentum") {
    spec.kind = OptimizerSpec::Kind::SgdMomentum;
  } else if (kind == "adam") {
    spec.kind = OptimizerSpec::Kind::Adam;
  } else {
    throw ConfigError(file.origin() + ": unknown optimizer '" + kind + "'");
  }
  spec.lr = file.get_double(section + ".lr", spec.lr);
  spec.momentum = file.get_double(section + ".momentum", spec.momentum);
  spec.beta1 = file.get_double(section + ".beta1", spec.beta1);
  spec.beta2 = file.get_double(section + ".beta2", spec.beta2);
  spec.eps = file.get_double(section + ".adam_eps", spec.eps);
  return spec;
}

Dataset build_dataset(const ExperimentConfig& cfg) {
  if (cfg.use_csv) return load_csv(cfg.csv.path, cfg.csv.label_column);
  return generate_synthetic(cfg.synthetic.n, cfg.synthetic.dim, cfg.synthetic.noise,
                            cfg.synthetic.seed);
}

SplitSpec resolve_band(const ExperimentConfig& cfg, const Dataset& ds) {
  SplitSpec spec = cfg.split;
  if (spec.kind == SplitSpec::Kind::HoldoutBand && !cfg.band_explicit) {
    double lo = ds.labels.front(), hi = ds.labels.front();
    for (double y : ds.labels) {
      lo = std::min(lo, y);
      hi = std::max(hi, y);
    }
    double mid = 0.5 * (lo + hi);
    double half = 0.5 * cfg.band_fraction * (hi - lo);
    spec.lo = mid - half;
    spec.hi = mid + half;
  }
  return spec;
}

std::string optimizer_name(const OptimizerSpec& spec) {
  return spec.kind == OptimizerSpec::Kind::Adam ? "adam" : "sgd_momentum";
}

void emit_stage(std::ostringstream& out, const char* section, const StageConfig& stage,
                bool representation) {
  out << "[" << section << "]\n";
  out << "epochs = " << stage.epochs << "\n";
  out << "batch_size = " << stage.batch_size << "\n";
  out << "optimizer = \"" << optimizer_name(stage.optimizer) << "\"\n";
  out << "lr = " << format_g17(stage.optimizer.lr) << "\n";
  if (stage.optimizer.kind == OptimizerSpec::Kind::SgdMomentum) {
    out << "momentum = " << format_g17(stage.optimizer.momentum) << "\n";
  } else {
    out << "beta1 = " << format_g17(stage.optimizer.beta1) << "\n";
    out << "beta2 = " << format_g17(stage.optimizer.beta2) << "\n";
    out << "adam_eps = " << format_g17(stage.optimizer.eps) << "\n";
  }
  if (representation) {
    out << "tau = " << format_g17(stage.loss.rnc.tau) << "\n";
    out << "similarity = \""
        << (stage.loss.rnc.similarity == Similarity::Cosine ? "cosine" : "neg_l2")
        << "\"\n";
    out << "bin_width = " << format_g17(stage.loss.supcon.bin_width) << "\n";
  }
  out << "\n";
}

struct PreparedRun {
  Dataset train;
  Dataset val;
  SplitSpec split;  // band resolved
};

PreparedRun prepare_data(const ExperimentConfig& cfg) {
  Dataset ds = build_dataset(cfg);
  SplitSpec spec = resolve_band(cfg, ds);
  auto [train, val] = split(ds, spec);
  if (val.size() == 0) {
    throw ConfigError("experiment: validation split is empty");
  }
  PreparedRun out{std::move(train), std::move(val), spec};
  return out;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (name.empty()) throw ConfigError("experiment: name must not be empty");
  if (seeds.empty()) throw ConfigError("experiment: seed list must not be empty");
  if (regimes.empty()) throw ConfigError("experiment: regime list must not be empty");
  for (const std::string& r : regimes) {
    if (std::find(kRegimes.begin(), kRegimes.end(), r) == kRegimes.end()) {
      throw ConfigError("experiment: unknown regime '" + r + "'");
    }
  }
  if (!train_regime.empty() &&
      std::find(kRegimes.begin(), kRegimes.end(), train_regime) == kRegimes.end()) {
    throw ConfigError("experiment: unknown regime '" + train_regime + "'");
  }
  if (use_csv && csv.path.empty()) throw ConfigError("experiment: dataset path missing");
  if (hidden.empty()) throw ConfigError("experiment: need at least one hidden layer");
  if (embedding_dim < 1) throw ConfigError("experiment: embedding_dim must be >= 1");
  if (jobs < 1) throw ConfigError("experiment: jobs must be >= 1");
  if (split.kind == SplitSpec::Kind::HoldoutBand && !band_explicit) {
    // lo/hi are resolved against the label range per run
    if (band_fraction <= 0.0 || band_fraction >= 1.0) {
      throw ConfigError("experiment: band_fraction must be in (0, 1)");
    }
    if (split.val_fraction < 0.0 || split.val_fraction >= 1.0) {
      throw ConfigError("experiment: val_fraction must be in [0, 1)");
    }
  } else {
    split.validate();
  }
  augment.validate();
  if (stage1.epochs < 1 || stage2.epochs < 1 || joint.epochs < 1) {
    throw ConfigError("experiment: stage epochs must be >= 1");
  }
  if (stage1.optimizer.lr <= 0.0 || stage2.optimizer.lr <= 0.0 ||
      joint.optimizer.lr <= 0.0) {
    throw ConfigError("experiment: stage learning rates must be positive");
  }
  stage1.loss.rnc.validate();
  stage1.loss.supcon.validate();
}

ExperimentConfig default_experiment_config() {
  ExperimentConfig cfg;
  cfg.split.seed = 11;
  cfg.augment.seed = 5;
  cfg.stage1.epochs = 200;
  cfg.stage1.batch_size = 32;
  cfg.stage1.loss.kind = LossSpec::Kind::Rnc;
  cfg.stage2.epochs = 100;
  cfg.stage2.batch_size = 32;
  cfg.stage2.loss.kind = LossSpec::Kind::L1;
  // The representation stage leaves embeddings at whatever scale the
  // ranking loss settles on; a fixed sgd step on the head oscillates at
  // that scale, so the predictor stage defaults to adam, and since its
  // optimization is whitened the step can be small for a tight finish.
  cfg.stage2.optimizer.kind = OptimizerSpec::Kind::Adam;
  cfg.stage2.optimizer.lr = 0.001;
  // The joint baseline trains the whole network from scratch and needs the
  // larger step to converge within its epoch budget.
  cfg.joint.epochs = cfg.stage1.epochs + cfg.stage2.epochs;
  cfg.joint.batch_size = 32;
  cfg.joint.loss.kind = LossSpec::Kind::L1;
  cfg.joint.optimizer.kind = OptimizerSpec::Kind::Adam;
  cfg.joint.optimizer.lr = 0.01;
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  ConfigFile file = ConfigFile::parse_file(path);
  for (const std::string& key : file.keys()) {
    if (std::find(kKnownKeys.begin(), kKnownKeys.end(), key) == kKnownKeys.end()) {
      throw ConfigError(file.origin() + ":" + std::to_string(file.line_of(key)) +
                        ": unknown key '" + key + "'");
    }
  }

  ExperimentConfig cfg = default_experiment_config();
  cfg.source_path = path;
  cfg.name = file.get_string("name", fs::path(path).stem().string());

  std::string dataset_kind = file.get_string("dataset.kind", "synthetic");
  if (dataset_kind == "synthetic") {
    cfg.use_csv = false;
    cfg.synthetic.n =
        static_cast<std::size_t>(file.get_int("dataset.n", cfg.synthetic.n));
    cfg.synthetic.dim =
        static_cast<std::size_t>(file.get_int("dataset.dim", cfg.synthetic.dim));
    cfg.synthetic.noise = file.get_double("dataset.noise", cfg.synthetic.noise);
    cfg.synthetic.seed = file.get_u64("dataset.seed", cfg.synthetic.seed);
  } else if (dataset_kind == "csv") {
    cfg.use_csv = true;
    cfg.csv.path = file.get_string("dataset.path");
    cfg.csv.label_column = file.get_string("dataset.label_column", "y");
  } else {
    throw ConfigError(file.origin() + ": unknown dataset.kind '" + dataset_kind + "'");
  }

  std::string split_kind = file.get_string("split.kind", "random");
  if (split_kind == "random") {
    cfg.split.kind = SplitSpec::Kind::Random;
    cfg.split.train_fraction =
        file.get_double("split.train_fraction", cfg.split.train_fraction);
  } else if (split_kind == "holdout_band") {
    cfg.split.kind = SplitSpec::Kind::HoldoutBand;
    cfg.split.val_fraction =
        file.get_double("split.val_fraction", cfg.split.val_fraction);
    cfg.band_explicit = file.has("split.lo") || file.has("split.hi");
    if (cfg.band_explicit) {
      cfg.split.lo = file.get_double("split.lo");
      cfg.split.hi = file.get_double("split.hi");
    } else {
      cfg.band_fraction = file.get_double("split.band_fraction", cfg.band_fraction);
      cfg.split.lo = 0.0;
      cfg.split.hi = 1.0;  // resolved against the label range per run
    }
  } else {
    throw ConfigError(file.origin() + ": unknown split.kind '" + split_kind + "'");
  }
  cfg.split.seed = file.get_u64("split.seed", cfg.split.seed);

  if (file.has("model.hidden")) {
    cfg.hidden.clear();
    for (double v : file.get_double_list("model.hidden")) {
      if (v < 1 || v != std::floor(v)) {
        throw ConfigError(file.origin() + ": model.hidden entries must be positive integers");
      }
      cfg.hidden.push_back(static_cast<std::size_t>(v));
    }
  }
  cfg.embedding_dim =
      static_cast<std::size_t>(file.get_int("model.embedding_dim", cfg.embedding_dim));
  std::string act = file.get_string("model.activation", "relu");
  if (act == "relu") {
    cfg.activation = Activation::Relu;
  } else if (act == "tanh") {
    cfg.activation = Activation::Tanh;
  } else {
    throw ConfigError(file.origin() + ": unknown activation '" + act + "'");
  }

  cfg.augment.gaussian_sigma =
      file.get_double("augment.sigma", cfg.augment.gaussian_sigma);
  cfg.augment.feature_dropout_p =
      file.get_double("augment.dropout", cfg.augment.feature_dropout_p);
  cfg.augment.seed = file.get_u64("augment.seed", cfg.augment.seed);

  cfg.stage1.epochs = static_cast<int>(file.get_int("stage1.epochs", cfg.stage1.epochs));
  cfg.stage1.batch_size =
      static_cast<int>(file.get_int("stage1.batch_size", cfg.stage1.batch_size));
  cfg.stage1.optimizer = parse_optimizer(file, "stage1", cfg.stage1.optimizer);
  cfg.stage1.loss.rnc.tau = file.get_double("stage1.tau", cfg.stage1.loss.rnc.tau);
  std::string sim = file.get_string("stage1.similarity", "neg_l2");
  if (sim == "neg_l2") {
    cfg.stage1.loss.rnc.similarity = Similarity::NegL2;
  } else if (sim == "cosine") {
    cfg.stage1.loss.rnc.similarity = Similarity::Cosine;
  } else {
    throw ConfigError(file.origin() + ": unknown similarity '" + sim + "'");
  }
  cfg.stage1.loss.supcon.tau = cfg.stage1.loss.rnc.tau;
  cfg.stage1.loss.supcon.bin_width =
      file.get_double("stage1.bin_width", cfg.stage1.loss.supcon.bin_width);

  cfg.stage2.epochs = static_cast<int>(file.get_int("stage2.epochs", cfg.stage2.epochs));
  cfg.stage2.batch_size =
      static_cast<int>(file.get_int("stage2.batch_size", cfg.stage2.batch_size));
  cfg.stage2.optimizer = parse_optimizer(file, "stage2", cfg.stage2.optimizer);

  cfg.joint.epochs = static_cast<int>(
      file.get_int("joint.epochs", cfg.stage1.epochs + cfg.stage2.epochs));
  cfg.joint.batch_size =
      static_cast<int>(file.get_int("joint.batch_size", cfg.stage2.batch_size));
  cfg.joint.optimizer = parse_optimizer(file, "joint", cfg.joint.optimizer);

  if (file.has("run.regimes")) cfg.regimes = file.get_string_list("run.regimes");
  cfg.train_regime = file.get_string("run.regime", "");
  if (file.has("run.seeds")) {
    cfg.seeds.clear();
    for (double v : file.get_double_list("run.seeds")) {
      if (v < 0 || v != std::floor(v)) {
        throw ConfigError(file.origin() + ": run.seeds entries must be non-negative integers");
      }
      cfg.seeds.push_back(static_cast<std::uint64_t>(v));
    }
  }
  const char* env_out = std::getenv("RNC_LAB_OUT");
  cfg.out_root = file.get_string("run.out", env_out != nullptr ? env_out : "runs");
  cfg.jobs = static_cast<int>(file.get_int("run.jobs", 1));

  cfg.validate();
  return cfg;
}

std::string experiment_config_toml(const ExperimentConfig& cfg,
                                   const std::string& regime, std::uint64_t seed) {
  std::ostringstream out;
  out << "name = \"" << cfg.name << "\"\n\n";
  out << "[dataset]\n";
  if (cfg.use_csv) {
    out << "kind = \"csv\"\npath = \"" << cfg.csv.path << "\"\nlabel_column = \""
        << cfg.csv.label_column << "\"\n\n";
  } else {
    out << "kind = \"synthetic\"\nn = " << cfg.synthetic.n << "\ndim = "
        << cfg.synthetic.dim << "\nnoise = " << format_g17(cfg.synthetic.noise)
        << "\nseed = " << cfg.synthetic.seed << "\n\n";
  }
  out << "[split]\n";
  if (cfg.split.kind == SplitSpec::Kind::Random) {
    out << "kind = \"random\"\ntrain_fraction = " << format_g17(cfg.split.train_fraction)
        << "\n";
  } else {
    out << "kind = \"holdout_band\"\nlo = " << format_g17(cfg.split.lo)
        << "\nhi = " << format_g17(cfg.split.hi)
        << "\nval_fraction = " << format_g17(cfg.split.val_fraction) << "\n";
  }
  out << "seed = " << cfg.split.seed << "\n\n";
  out << "[model]\nhidden = [";
  for (std::size_t i = 0; i < cfg.hidden.size(); ++i) {
    out << (i ? ", " : "") << cfg.hidden[i];
  }
  out << "]\nembedding_dim = " << cfg.embedding_dim << "\nactivation = \""
      << (cfg.activation == Activation::Relu ? "relu" : "tanh") << "\"\n\n";
  out << "[augment]\nsigma = " << format_g17(cfg.augment.gaussian_sigma)
      << "\ndropout = " << format_g17(cfg.augment.feature_dropout_p)
      << "\nseed = " << cfg.augment.seed << "\n\n";
  emit_stage(out, "stage1", cfg.stage1, true);
  emit_stage(out, "stage2", cfg.stage2, false);
  emit_stage(out, "joint", cfg.joint, false);
  out << "[run]\nregime = \"" << regime << "\"\nseeds = [" << seed << "]\nout = \""
      << cfg.out_root << "\"\njobs = " << cfg.jobs << "\n";
  return out.str();
}

void write_file_atomic(const std::string& path, const std::string& content) {
  fs::path p(path);
  if (p.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(p.parent_path(), ec);
    if (ec) throw IoError("cannot create directory '" + p.parent_path().string() + "'");
  }
  fs::path tmp = p;
  tmp += ".tmp~";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + tmp.string() + "' for writing");
    f << content;
    if (!f) throw IoError("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, p, ec);
  if (ec) throw IoError("cannot rename '" + tmp.string() + "' to '" + path + "'");
}

RunResult run_single(const ExperimentConfig& cfg, const std::string& regime,
                     std::uint64_t seed) {
  cfg.validate();
  if (std::find(kRegimes.begin(), kRegimes.end(), regime) == kRegimes.end()) {
    throw ConfigError("run_single: unknown regime '" + regime + "'");
  }

  RunResult result;
  result.regime = regime;
  result.seed = seed;
  fs::path dir = fs::path(cfg.out_root) / cfg.name / (sanitize(regime) + "_seed" +
                                                      std::to_string(seed));
  result.dir = dir.string();

  PreparedRun data = prepare_data(cfg);

  MlpSpec mlp_spec;
  mlp_spec.layer_sizes.push_back(data.train.dim());
  for (std::size_t h : cfg.hidden) mlp_spec.layer_sizes.push_back(h);
  mlp_spec.layer_sizes.push_back(cfg.embedding_dim);
  mlp_spec.activation = cfg.activation;

  MlpEncoder encoder(mlp_spec, derive_seed(seed, 1));
  LinearPredictor predictor(cfg.embedding_dim, derive_seed(seed, 2));

  AugmentSpec augment = cfg.augment;
  augment.seed = derive_seed(cfg.augment.seed, seed);

  RunLog log;
  if (regime == "l1") {
    StageConfig joint = cfg.joint;
    joint.loss.kind = LossSpec::Kind::L1;
    joint.seed = derive_seed(seed, 5);
    log = train_joint_l1(encoder, predictor, data.train, data.val, joint);
  } else {
    StageConfig stage1 = cfg.stage1;
    stage1.loss.kind =
        regime == "rnc+l1" ? LossSpec::Kind::Rnc : LossSpec::Kind::SupconBinned;
    stage1.seed = derive_seed(seed, 3);
    StageConfig stage2 = cfg.stage2;
    stage2.loss.kind = LossSpec::Kind::L1;
    stage2.seed = derive_seed(seed, 4);
    log = train_two_stage(encoder, predictor, data.train, data.val, stage1, stage2,
                          augment);
  }

  result.metrics["val_mae"] = log.final.val_mae;
  result.metrics["val_rmse"] = log.final.val_rmse;
  result.metrics["embedding_spearman"] = log.final.embedding_spearman;
  result.metrics["final_train_loss"] = log.epochs.back().train_loss;
  if (log.final.final_encoder_rnc_loss) {
    result.metrics["final_encoder_rnc_loss"] = *log.final.final_encoder_rnc_loss;
  }
  if (log.final.final_encoder_supcon_loss) {
    result.metrics["final_encoder_supcon_loss"] = *log.final.final_encoder_supcon_loss;
  }

  if (data.split.kind == SplitSpec::Kind::HoldoutBand) {
    std::vector<double> preds = predict_all(encoder, predictor, data.val);
    double in_sum = 0.0, out_sum = 0.0;
    std::size_t in_n = 0, out_n = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      double err = std::abs(preds[i] - data.val.labels[i]);
      if (data.val.labels[i] >= data.split.lo && data.val.labels[i] <= data.split.hi) {
        in_sum += err;
        ++in_n;
      } else {
        out_sum += err;
        ++out_n;
      }
    }
    if (in_n > 0) result.metrics["val_mae_inband"] = in_sum / static_cast<double>(in_n);
    if (out_n > 0) result.metrics["val_mae_outband"] = out_sum / static_cast<double>(out_n);
  }

  write_file_atomic((dir / "config.resolved.toml").string(),
                    experiment_config_toml(cfg, regime, seed));
  write_file_atomic((dir / "train_loss.csv").string(), loss_csv(log.epochs, false));
  write_file_atomic((dir / "val_loss.csv").string(), loss_csv(log.epochs, true));

  json metrics_json = json::object();
  for (const auto& [key, value] : result.metrics) metrics_json[key] = value;
  write_file_atomic((dir / "metrics.json").string(), metrics_json.dump(2) + "\n");

  save_checkpoint((dir / "model.ckpt").string(),
                  {&encoder.params(), &predictor.params()});

  result.ok = true;
  return result;
}

CompareResult run_compare(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.regimes.size() < 2) {
    throw ConfigError("compare: need at least 2 regimes");
  }

  struct Task {
    std::string regime;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  for (const std::string& regime : cfg.regimes) {
    for (std::uint64_t seed : cfg.seeds) tasks.push_back({regime, seed});
  }

  CompareResult result;
  result.runs.resize(tasks.size());
  std::size_t next = 0;
  std::mutex mu;
  auto worker = [&]() {
    for (;;) {
      std::size_t i;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (next >= tasks.size()) return;
        i = next++;
      }
      try {
        result.runs[i] = run_single(cfg, tasks[i].regime, tasks[i].seed);
      } catch (const std::exception& e) {
        result.runs[i].regime = tasks[i].regime;
        result.runs[i].seed = tasks[i].seed;
        result.runs[i].ok = false;
        result.runs[i].error = e.what();
      }
    }
  };
  int n_threads = std::min<int>(cfg.jobs, static_cast<int>(tasks.size()));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  result.all_ok = true;
  for (const RunResult& run : result.runs) result.all_ok = result.all_ok && run.ok;

  // aggregate: median/min/max per regime per metric over successful runs
  json aggregate = json::object();
  std::vector<std::string> metric_order = {
      "val_mae", "val_rmse", "embedding_spearman", "final_train_loss",
      "final_encoder_rnc_loss", "final_encoder_supcon_loss",
      "val_mae_inband", "val_mae_outband"};
  std::map<std::string, std::map<std::string, std::vector<double>>> collected;
  for (const RunResult& run : result.runs) {
    if (!run.ok) continue;
    for (const auto& [key, value] : run.metrics) collected[run.regime][key].push_back(value);
  }
  for (const std::string& regime : cfg.regimes) {
    json per_regime = json::object();
    auto it = collected.find(regime);
    if (it != collected.end()) {
      for (const std::string& key : metric_order) {
        auto vit = it->second.find(key);
        if (vit == it->second.end()) continue;
        std::vector<double> vals = vit->second;
        json stats = json::object();
        stats["median"] = median(vals);
        stats["min"] = *std::min_element(vals.begin(), vals.end());
        stats["max"] = *std::max_element(vals.begin(), vals.end());
        per_regime[key] = stats;
      }
    }
    aggregate[regime] = per_regime;
  }

  json runs_json = json::array();
  for (const RunResult& run : result.runs) {
    json r = json::object();
    r["regime"] = run.regime;
    r["seed"] = run.seed;
    r["dir"] = run.dir;
    r["ok"] = run.ok;
    if (!run.ok) r["error"] = run.error;
    json m = json::object();
    for (const auto& [key, value] : run.metrics) m[key] = value;
    r["metrics"] = m;
    runs_json.push_back(r);
  }
  json summary = json::object();
  summary["name"] = cfg.name;
  summary["config"] = cfg.source_path;
  summary["runs"] = runs_json;
  summary["aggregate"] = aggregate;

  fs::path summary_path = fs::path(cfg.out_root) / cfg.name / "summary.json";
  write_file_atomic(summary_path.string(), summary.dump(2) + "\n");
  result.summary_path = summary_path.string();

  // aligned text table
  std::ostringstream table;
  std::vector<std::string> cols = {"regime", "ok", "val_mae", "spearman",
                                   "enc_loss", "inband_mae", "outband_mae"};
  auto cell = [](const json& agg, const std::string& regime, const char* key) {
    if (!agg.contains(regime) || !agg[regime].contains(key)) return std::string("-");
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4g [%.4g, %.4g]",
                  agg[regime][key]["median"].get<double>(),
                  agg[regime][key]["min"].get<double>(),
                  agg[regime][key]["max"].get<double>());
    return std::string(buf);
  };
  std::vector<std::vector<std::string>> rows;
  rows.push_back(cols);
  for (const std::string& regime : cfg.regimes) {
    std::size_t ok_count = 0;
    for (const RunResult& run : result.runs) {
      if (run.regime == regime && run.ok) ++ok_count;
    }
    std::string enc_key = regime == "supcon+l1" ? "final_encoder_supcon_loss"
                                                : "final_encoder_rnc_loss";
    rows.push_back({regime,
                    std::to_string(ok_count) + "/" + std::to_string(cfg.seeds.size()),
                    cell(aggregate, regime, "val_mae"),
                    cell(aggregate, regime, "embedding_spearman"),
                    cell(aggregate, regime, enc_key.c_str()),
                    cell(aggregate, regime, "val_mae_inband"),
                    cell(aggregate, regime, "val_mae_outband")});
  }
  std::vector<std::size_t> widths(cols.size(), 0);
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], row[c].size());
  }
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      table << row[c] << std::string(widths[c] - row[c].size() + 2, ' ');
    }
    table << "\n";
  }
  result.table = table.str();
  return result;
}

GradCheckSummary gradcheck_losses(std::uint64_t seed, double tol, std::string* report) {
  GradCheckSummary summary;
  std::ostringstream out;

  MlpSpec spec;
  spec.layer_sizes = {16, 64, 64, 16};
  spec.activation = Activation::Relu;

  Rng rng(derive_seed(seed, 11));
  Matrix x(8, 16);
  for (double& v : x.values()) v = rng.uniform(-1.0, 1.0);
  std::vector<double> labels(8);
  for (double& y : labels) y = rng.uniform01();

  summary.pass = true;
  auto run_one = [&](const std::string& name, auto&& build, ParameterSet& params) {
    GradCheckReport rep = grad_check(build, params, 1e-5, tol);
    summary.per_loss[name] = rep.max_rel_err;
    summary.max_rel_err = std::max(summary.max_rel_err, rep.max_rel_err);
    summary.pass = summary.pass && rep.pass;
    out << name << ": max_rel_err = " << format_g17(rep.max_rel_err) << " over "
        << rep.checked << " coordinates -> " << (rep.pass ? "pass" : "FAIL");
    if (!rep.message.empty()) out << " (" << rep.message << ")";
    out << "\n";
  };

  {
    MlpEncoder encoder(spec, derive_seed(seed, 21));
    RncConfig cfg;
    run_one("rnc", [&]() { return rnc_loss(encoder.encode(x), labels, cfg); },
            encoder.params());
  }
  {
    MlpEncoder encoder(spec, derive_seed(seed, 22));
    LinearPredictor predictor(16, derive_seed(seed, 23));
    ParameterSet all;
    all.adopt(encoder.params());
    all.adopt(predictor.params());
    run_one("l1",
            [&]() { return l1_loss(predictor.predict(encoder.encode(x)), labels); },
            all);
  }
  {
    MlpEncoder encoder(spec, derive_seed(seed, 24));
    SupConBinConfig cfg;
    cfg.bin_width = 0.5;
    run_one("supcon",
            [&]() { return supcon_binned_loss(encoder.encode(x), labels, cfg); },
            encoder.params());
  }

  if (report != nullptr) *report = out.str();
  return summary;
}

}  // namespace rnclab
