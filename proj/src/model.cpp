#include "rnclab/model.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "rnclab/errors.hpp"
#include "rnclab/random.hpp"

namespace rnclab {

namespace {

std::string layer_name(const char* prefix, std::size_t layer, const char* kind) {
  return std::string(prefix) + ".layer" + std::to_string(layer) + "." + kind;
}

Matrix glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix w(fan_in, fan_out);
  for (double& v : w.values()) v = rng.uniform(-limit, limit);
  return w;
}

std::string format_g17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void MlpSpec::validate() const {
  if (layer_sizes.size() < 3) {
    throw ArgumentError("MlpSpec: need at least one hidden layer (got " +
                        std::to_string(layer_sizes.size()) + " sizes)");
  }
  for (std::size_t s : layer_sizes) {
    if (s < 1) throw ArgumentError("MlpSpec: all layer sizes must be >= 1");
  }
}

MlpEncoder::MlpEncoder(MlpSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  spec_.validate();
  Rng rng(derive_seed(seed, 0x6C0));
  for (std::size_t l = 0; l + 1 < spec_.layer_sizes.size(); ++l) {
    std::size_t fan_in = spec_.layer_sizes[l];
    std::size_t fan_out = spec_.layer_sizes[l + 1];
    params_.add(layer_name("encoder", l, "weight"), glorot_uniform(fan_in, fan_out, rng));
    params_.add(layer_name("encoder", l, "bias"), Matrix(1, fan_out));
  }
}

Var MlpEncoder::encode(const Var& x) const {
  if (x.value().cols() != input_dim()) {
    throw DimensionError("encode: input is " + x.value().shape_str() + ", expected " +
                         std::to_string(input_dim()) + " columns");
  }
  Var h = x;
  const std::size_t n_layers = spec_.layer_sizes.size() - 1;
  for (std::size_t l = 0; l < n_layers; ++l) {
    h = add_row(matmul(h, params_.at(layer_name("encoder", l, "weight"))),
                params_.at(layer_name("encoder", l, "bias")));
    if (l + 1 < n_layers) {
      h = spec_.activation == Activation::Relu ? relu(h) : rnclab::tanh(h);
    }
  }
  return h;
}

Var MlpEncoder::encode(const Matrix& x) const { return encode(Var::leaf(x)); }

LinearPredictor::LinearPredictor(std::size_t embedding_dim, std::uint64_t seed)
    : embedding_dim_(embedding_dim) {
  if (embedding_dim_ < 1) throw ArgumentError("LinearPredictor: embedding_dim >= 1");
  Rng rng(derive_seed(seed, 0x4EAD));
  params_.add("predictor.weight", glorot_uniform(embedding_dim_, 1, rng));
  params_.add("predictor.bias", Matrix(1, 1));
}

Var LinearPredictor::predict(const Var& z) const {
  if (z.value().cols() != embedding_dim_) {
    throw DimensionError("predict: input is " + z.value().shape_str() + ", expected " +
                         std::to_string(embedding_dim_) + " columns");
  }
  return add_row(matmul(z, params_.at("predictor.weight")), params_.at("predictor.bias"));
}

void save_checkpoint(const std::string& path,
                     const std::vector<const ParameterSet*>& sets) {
  std::ostringstream out;
  out << "rnclab-checkpoint v1\n";
  for (const ParameterSet* set : sets) {
    for (const auto& [name, var] : *set) {
      const Matrix& m = var.value();
      out << "param " << name << " " << m.rows() << " " << m.cols() << "\n";
      for (std::size_t i = 0; i < m.size(); ++i) {
        out << format_g17(m.values()[i]) << (i + 1 == m.size() ? "\n" : " ");
      }
    }
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("save_checkpoint: cannot open '" + path + "'");
  f << out.str();
  if (!f) throw IoError("save_checkpoint: write failed for '" + path + "'");
}

void load_checkpoint(const std::string& path, std::vector<ParameterSet*> sets) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("load_checkpoint: cannot open '" + path + "'");
  std::string header;
  std::getline(f, header);
  if (header != "rnclab-checkpoint v1") {
    throw IoError("load_checkpoint: bad header in '" + path + "'");
  }
  std::string tag;
  while (f >> tag) {
    if (tag != "param") throw IoError("load_checkpoint: expected 'param', got '" + tag + "'");
    std::string name;
    std::size_t rows = 0, cols = 0;
    if (!(f >> name >> rows >> cols)) {
      throw IoError("load_checkpoint: truncated header for '" + name + "'");
    }
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (!(f >> m.values()[i])) {
        throw IoError("load_checkpoint: truncated values for '" + name + "'");
      }
    }
    bool placed = false;
    for (ParameterSet* set : sets) {
      if (!set->contains(name)) continue;
      Var& var = set->at(name);
      if (!var.value().same_shape(m)) {
        throw IoError("load_checkpoint: shape mismatch for '" + name + "': file " +
                      m.shape_str() + ", model " + var.value().shape_str());
      }
      var.value() = std::move(m);
      placed = true;
      break;
    }
    if (!placed) throw IoError("load_checkpoint: unknown parameter '" + name + "'");
  }
}

}  // namespace rnclab
