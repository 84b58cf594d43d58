#pragma once

// SST-GCN forward pass: per-slice spatial graph embedding (two GCN layers,
// attention sum pooling, static-feature MLP, concat MLP) feeding an LSTM
// over the slice sequence and a two-layer sigmoid head.

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sstgcn/dataset.hpp"
#include "sstgcn/tensor.hpp"

namespace sstgcn::model {

using num::Activation;
using num::Matrix;
using num::Tape;
using num::Tensor;

// Anything the trainer can fit: a fixed, ordered parameter list and a
// per-sample forward pass producing a 1x1 probability on the given tape.
class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual std::vector<std::pair<std::string, Tensor>> named_parameters() const = 0;
  virtual Tensor forward(Tape& tape, const data::Sample& sample) const = 0;

  std::vector<Tensor> parameters() const;
  std::size_t parameter_count() const;
  double predict(const data::Sample& sample) const;

  std::vector<Matrix> snapshot() const;
  void restore(const std::vector<Matrix>& values);
};

struct ModelConfig {
  std::size_t node_features = data::kNodeFeatureWidth;
  std::size_t static_features = data::kStaticWidth;
  std::size_t gcn1 = 64;
  std::size_t gcn2 = 32;
  std::size_t static_fc1 = 32;
  std::size_t static_fc2 = 16;
  std::size_t concat_fc1 = 32;
  std::size_t concat_fc2 = 16;
  std::size_t lstm_units = 8;
  std::size_t out_fc1 = 8;
  Activation gcn_activation = Activation::kPrelu;
  Activation dense_activation = Activation::kRelu;

  void validate() const;
  std::string to_json() const;
  static ModelConfig from_json(std::string_view text);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Layer-width search ranges.
inline constexpr std::size_t kGcnUnitChoices[] = {8, 16, 32, 64, 128};
inline constexpr std::size_t kDenseUnitChoices[] = {8, 16, 32, 64, 128};
inline constexpr std::size_t kLstmUnitChoices[] = {8, 16, 32, 64};

// Parameter count with default widths.
inline constexpr std::size_t kDefaultParameterCount = 7539;

inline constexpr double kInitialPreluSlope = 0.25;

struct DenseParams {
  Tensor weight;  // in x out
  Tensor bias;    // 1 x out
};

struct GcnParams {
  Tensor weight;
  Tensor bias;
  Tensor alpha;  // 1 x 1 PReLU slope
};

struct LstmParams {
  // Each gate maps [h_{q-1}, x_q] (1 x (units + input)) to 1 x units.
  Tensor w_i, w_f, w_o, w_c;
  Tensor b_i, b_f, b_o, b_c;
};

struct ModelParams {
  ModelConfig config;
  GcnParams gcn1;
  GcnParams gcn2;
  Tensor attention;  // gcn2 x 1
  DenseParams static_fc1;
  DenseParams static_fc2;
  DenseParams concat_fc1;
  DenseParams concat_fc2;
  LstmParams lstm;
  DenseParams out_fc1;
  DenseParams out_fc2;

  // Glorot-uniform weights, zero biases, PReLU slopes 0.25.
  static ModelParams initialize(const ModelConfig& config, std::uint64_t seed);
  static ModelParams zeros(const ModelConfig& config);

  std::vector<std::pair<std::string, Tensor>> named() const;
  ModelParams deep_copy() const;
};

Tensor gcn_layer(Tape& tape, const Tensor& features, const Tensor& laplacian, const GcnParams& p,
                 Activation activation);
Tensor global_attention_sum_pool(Tape& tape, const Tensor& node_embeddings, const Tensor& attention);
Tensor dense(Tape& tape, const Tensor& x, const DenseParams& p, Activation activation);
Tensor static_embed(Tape& tape, const Tensor& statics, const ModelParams& p);
Tensor slice_embed(Tape& tape, const Tensor& features, const Tensor& laplacian, const Tensor& statics,
                   const ModelParams& p);
Tensor lstm_forward(Tape& tape, const std::vector<Tensor>& sequence, const LstmParams& p);
Tensor predict(Tape& tape, const data::Sample& sample, const ModelParams& p);

class SstGcn : public Classifier {
 public:
  explicit SstGcn(ModelParams params) : params_(std::move(params)) {}
  SstGcn(const ModelConfig& config, std::uint64_t seed)
      : params_(ModelParams::initialize(config, seed)) {}

  std::vector<std::pair<std::string, Tensor>> named_parameters() const override {
    return params_.named();
  }
  Tensor forward(Tape& tape, const data::Sample& sample) const override {
    return model::predict(tape, sample, params_);
  }

  const ModelParams& params() const { return params_; }
  const ModelConfig& config() const { return params_.config; }

  // Checkpoint: {"format", "version", "config", "tensors":[{name, rows, cols, data}]}.
  std::string checkpoint_json() const;
  void save_checkpoint(const std::string& path) const;
  // Throws ConfigError when a tensor shape disagrees with `expected`.
  static SstGcn from_checkpoint_json(std::string_view text, const ModelConfig* expected = nullptr);
  static SstGcn load_checkpoint(const std::string& path, const ModelConfig* expected = nullptr);

 private:
  ModelParams params_;
};

inline constexpr int kCheckpointVersion = 1;

}  // namespace sstgcn::model
