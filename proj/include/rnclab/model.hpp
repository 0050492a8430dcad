#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rnclab/autodiff.hpp"

namespace rnclab {

enum class Activation { Relu, Tanh };

struct MlpSpec {
  std::vector<std::size_t> layer_sizes;  // [d_in, hidden..., d_e]
  Activation activation = Activation::Relu;
  void validate() const;  // at least one hidden layer, all dims >= 1
};

// Encoder f: R^{d_in} -> R^{d_e}. Hidden layers use the configured
// activation, the output layer is linear; embeddings are not normalized
// (cosine mode normalizes inside the similarity instead).
class MlpEncoder {
 public:
  // Glorot-uniform weights, zero biases; bit-reproducible per seed.
  MlpEncoder(MlpSpec spec, std::uint64_t seed);

  Var encode(const Var& x) const;
  Var encode(const Matrix& x) const;  // wraps x in a constant leaf

  std::size_t input_dim() const { return spec_.layer_sizes.front(); }
  std::size_t embedding_dim() const { return spec_.layer_sizes.back(); }
  const MlpSpec& spec() const { return spec_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

 private:
  MlpSpec spec_;
  ParameterSet params_;
};

// Predictor g: R^{d_e} -> R, a single linear layer z.w + b.
class LinearPredictor {
 public:
  LinearPredictor(std::size_t embedding_dim, std::uint64_t seed);

  Var predict(const Var& z) const;

  std::size_t embedding_dim() const { return embedding_dim_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

 private:
  std::size_t embedding_dim_;
  ParameterSet params_;
};

// Checkpoint: textual name -> shape -> row-major values, printed with 17
// significant digits so load round-trips bit-exactly.
void save_checkpoint(const std::string& path,
                     const std::vector<const ParameterSet*>& sets);
void load_checkpoint(const std::string& path, std::vector<ParameterSet*> sets);

}  // namespace rnclab
