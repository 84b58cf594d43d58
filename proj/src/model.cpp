#include "sstgcn/model.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "json.hpp"
#include "sstgcn/errors.hpp"

namespace sstgcn::model {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Classifier

std::vector<Tensor> Classifier::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

std::size_t Classifier::parameter_count() const {
  std::size_t total = 0;
  for (const auto& t : parameters()) total += t.value().size();
  return total;
}

double Classifier::predict(const data::Sample& sample) const {
  Tape tape;
  return forward(tape, sample).item();
}

std::vector<Matrix> Classifier::snapshot() const {
  std::vector<Matrix> out;
  for (const auto& t : parameters()) out.push_back(t.value());
  return out;
}

void Classifier::restore(const std::vector<Matrix>& values) {
  auto params = parameters();
  if (values.size() != params.size()) throw ShapeError("snapshot has the wrong tensor count");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!values[i].same_shape(params[i].value())) throw ShapeError("snapshot tensor shape mismatch");
    params[i].mutable_value() = values[i];
  }
}

// ---------------------------------------------------------------------------
// Config

namespace {

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::kSigmoid: return "sigmoid";
    case Activation::kTanh: return "tanh";
    case Activation::kRelu: return "relu";
    case Activation::kPrelu: return "prelu";
    case Activation::kSoftmaxRows: return "softmax";
    case Activation::kIdentity: return "identity";
  }
  return "?";
}

Activation parse_activation(const std::string& name) {
  for (Activation a : {Activation::kSigmoid, Activation::kTanh, Activation::kRelu,
                       Activation::kPrelu, Activation::kIdentity}) {
    if (activation_name(a) == name) return a;
  }
  throw ConfigError("unknown activation '" + name + "'");
}

}  // namespace

void ModelConfig::validate() const {
  for (std::size_t w : {node_features, static_features, gcn1, gcn2, static_fc1, static_fc2,
                        concat_fc1, concat_fc2, lstm_units, out_fc1}) {
    if (w == 0) throw ConfigError("model widths must be positive");
  }
  if (dense_activation == Activation::kPrelu || dense_activation == Activation::kSoftmaxRows)
    throw ConfigError("dense layers support sigmoid, tanh, relu or identity");
  if (gcn_activation == Activation::kSoftmaxRows)
    throw ConfigError("softmax is not a valid GCN activation");
}

std::string ModelConfig::to_json() const {
  return json{{"node_features", node_features},
              {"static_features", static_features},
              {"gcn1", gcn1},
              {"gcn2", gcn2},
              {"static_fc1", static_fc1},
              {"static_fc2", static_fc2},
              {"concat_fc1", concat_fc1},
              {"concat_fc2", concat_fc2},
              {"lstm_units", lstm_units},
              {"out_fc1", out_fc1},
              {"gcn_activation", activation_name(gcn_activation)},
              {"dense_activation", activation_name(dense_activation)}}
      .dump();
}

ModelConfig ModelConfig::from_json(std::string_view text) {
  ModelConfig c;
  try {
    const json doc = json::parse(text);
    auto read = [&doc](const char* key, std::size_t& out) {
      if (doc.contains(key)) out = doc.at(key).get<std::size_t>();
    };
    read("node_features", c.node_features);
    read("static_features", c.static_features);
    read("gcn1", c.gcn1);
    read("gcn2", c.gcn2);
    read("static_fc1", c.static_fc1);
    read("static_fc2", c.static_fc2);
    read("concat_fc1", c.concat_fc1);
    read("concat_fc2", c.concat_fc2);
    read("lstm_units", c.lstm_units);
    read("out_fc1", c.out_fc1);
    if (doc.contains("gcn_activation"))
      c.gcn_activation = parse_activation(doc.at("gcn_activation").get<std::string>());
    if (doc.contains("dense_activation"))
      c.dense_activation = parse_activation(doc.at("dense_activation").get<std::string>());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Parameters

namespace {

Matrix glorot(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix m(fan_in, fan_out);
  for (auto& v : m.values()) v = dist(rng);
  return m;
}

DenseParams make_dense(std::size_t in, std::size_t out, std::mt19937_64* rng) {
  return {Tensor::parameter(rng ? glorot(in, out, *rng) : Matrix(in, out)),
          Tensor::parameter(Matrix(1, out))};
}

GcnParams make_gcn(std::size_t in, std::size_t out, std::mt19937_64* rng) {
  return {Tensor::parameter(rng ? glorot(in, out, *rng) : Matrix(in, out)),
          Tensor::parameter(Matrix(1, out)),
          Tensor::parameter(Matrix(1, 1, rng ? kInitialPreluSlope : 0.0))};
}

ModelParams build(const ModelConfig& c, std::mt19937_64* rng) {
  c.validate();
  ModelParams p;
  p.config = c;
  p.gcn1 = make_gcn(c.node_features, c.gcn1, rng);
  p.gcn2 = make_gcn(c.gcn1, c.gcn2, rng);
  p.attention = Tensor::parameter(rng ? glorot(c.gcn2, 1, *rng) : Matrix(c.gcn2, 1));
  p.static_fc1 = make_dense(c.static_features, c.static_fc1, rng);
  p.static_fc2 = make_dense(c.static_fc1, c.static_fc2, rng);
  p.concat_fc1 = make_dense(c.gcn2 + c.static_fc2, c.concat_fc1, rng);
  p.concat_fc2 = make_dense(c.concat_fc1, c.concat_fc2, rng);
  const std::size_t gate_in = c.lstm_units + c.concat_fc2;
  auto gate = [&] {
    return Tensor::parameter(rng ? glorot(gate_in, c.lstm_units, *rng) : Matrix(gate_in, c.lstm_units));
  };
  p.lstm.w_i = gate();
  p.lstm.w_f = gate();
  p.lstm.w_o = gate();
  p.lstm.w_c = gate();
  p.lstm.b_i = Tensor::parameter(Matrix(1, c.lstm_units));
  p.lstm.b_f = Tensor::parameter(Matrix(1, c.lstm_units));
  p.lstm.b_o = Tensor::parameter(Matrix(1, c.lstm_units));
  p.lstm.b_c = Tensor::parameter(Matrix(1, c.lstm_units));
  p.out_fc1 = make_dense(c.lstm_units, c.out_fc1, rng);
  p.out_fc2 = make_dense(c.out_fc1, 1, rng);
  return p;
}

}  // namespace

ModelParams ModelParams::initialize(const ModelConfig& config, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return build(config, &rng);
}

ModelParams ModelParams::zeros(const ModelConfig& config) { return build(config, nullptr); }

std::vector<std::pair<std::string, Tensor>> ModelParams::named() const {
  return {
      {"gcn1.weight", gcn1.weight},
      {"gcn1.bias", gcn1.bias},
      {"gcn1.alpha", gcn1.alpha},
      {"gcn2.weight", gcn2.weight},
      {"gcn2.bias", gcn2.bias},
      {"gcn2.alpha", gcn2.alpha},
      {"attention", attention},
      {"static_fc1.weight", static_fc1.weight},
      {"static_fc1.bias", static_fc1.bias},
      {"static_fc2.weight", static_fc2.weight},
      {"static_fc2.bias", static_fc2.bias},
      {"concat_fc1.weight", concat_fc1.weight},
      {"concat_fc1.bias", concat_fc1.bias},
      {"concat_fc2.weight", concat_fc2.weight},
      {"concat_fc2.bias", concat_fc2.bias},
      {"lstm.w_i", lstm.w_i},
      {"lstm.w_f", lstm.w_f},
      {"lstm.w_o", lstm.w_o},
      {"lstm.w_c", lstm.w_c},
      {"lstm.b_i", lstm.b_i},
      {"lstm.b_f", lstm.b_f},
      {"lstm.b_o", lstm.b_o},
      {"lstm.b_c", lstm.b_c},
      {"out_fc1.weight", out_fc1.weight},
      {"out_fc1.bias", out_fc1.bias},
      {"out_fc2.weight", out_fc2.weight},
      {"out_fc2.bias", out_fc2.bias},
  };
}

ModelParams ModelParams::deep_copy() const {
  ModelParams copy = zeros(config);
  auto src = named();
  auto dst = copy.named();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i].second.mutable_value() = src[i].second.value();
  return copy;
}

// ---------------------------------------------------------------------------
// Forward pass

Tensor gcn_layer(Tape& tape, const Tensor& features, const Tensor& laplacian, const GcnParams& p,
                 Activation activation) {
  if (laplacian.rows() != laplacian.cols() || laplacian.rows() != features.rows()) {
    throw ShapeError("gcn_layer: laplacian " + laplacian.value().shape_string() +
                     " does not match node features " + features.value().shape_string());
  }
  Tensor propagated = num::matmul(tape, laplacian, features);
  Tensor affine = num::add_bias(tape, num::matmul(tape, propagated, p.weight), p.bias);
  if (activation == Activation::kPrelu) return num::prelu(tape, affine, p.alpha);
  return num::activate(tape, affine, activation);
}

Tensor global_attention_sum_pool(Tape& tape, const Tensor& node_embeddings, const Tensor& attention) {
  Tensor logits = num::matmul(tape, node_embeddings, attention);  // n x 1
  Tensor weights = num::activate(tape, num::transpose(tape, logits), Activation::kSoftmaxRows);
  return num::matmul(tape, weights, node_embeddings);  // 1 x c
}

Tensor dense(Tape& tape, const Tensor& x, const DenseParams& p, Activation activation) {
  return num::activate(tape, num::add_bias(tape, num::matmul(tape, x, p.weight), p.bias), activation);
}

Tensor static_embed(Tape& tape, const Tensor& statics, const ModelParams& p) {
  const Activation act = p.config.dense_activation;
  return dense(tape, dense(tape, statics, p.static_fc1, act), p.static_fc2, act);
}

Tensor slice_embed(Tape& tape, const Tensor& features, const Tensor& laplacian, const Tensor& statics,
                   const ModelParams& p) {
  const Activation act = p.config.dense_activation;
  Tensor v1 = gcn_layer(tape, features, laplacian, p.gcn1, p.config.gcn_activation);
  Tensor v2 = gcn_layer(tape, v1, laplacian, p.gcn2, p.config.gcn_activation);
  Tensor dynamic = global_attention_sum_pool(tape, v2, p.attention);
  Tensor concat = num::concat_cols(tape, dynamic, static_embed(tape, statics, p));
  return dense(tape, dense(tape, concat, p.concat_fc1, act), p.concat_fc2, act);
}

Tensor lstm_forward(Tape& tape, const std::vector<Tensor>& sequence, const LstmParams& p) {
  if (sequence.empty()) throw ContractError("lstm_forward needs a non-empty sequence");
  const std::size_t units = p.b_i.cols();
  Tensor h = Tensor::constant(Matrix(1, units));
  Tensor c = Tensor::constant(Matrix(1, units));
  for (const Tensor& x : sequence) {
    Tensor hx = num::concat_cols(tape, h, x);
    auto gate = [&](const Tensor& w, const Tensor& b, Activation act) {
      return num::activate(tape, num::add_bias(tape, num::matmul(tape, hx, w), b), act);
    };
    Tensor i = gate(p.w_i, p.b_i, Activation::kSigmoid);
    Tensor f = gate(p.w_f, p.b_f, Activation::kSigmoid);
    Tensor o = gate(p.w_o, p.b_o, Activation::kSigmoid);
    Tensor candidate = gate(p.w_c, p.b_c, Activation::kTanh);
    c = num::add(tape, num::hadamard(tape, f, c), num::hadamard(tape, i, candidate));
    h = num::hadamard(tape, o, num::activate(tape, c, Activation::kTanh));
  }
  return h;
}

Tensor predict(Tape& tape, const data::Sample& sample, const ModelParams& p) {
  if (sample.slices.empty() || sample.slices.size() != sample.statics.size()) {
    throw ContractError("sample needs matching, non-empty slice and static sequences");
  }
  Tensor laplacian = Tensor::constant(sample.laplacian());
  std::vector<Tensor> sequence;
  sequence.reserve(sample.slices.size());
  for (std::size_t q = 0; q < sample.slices.size(); ++q) {
    sequence.push_back(slice_embed(tape, Tensor::constant(sample.slices[q].features), laplacian,
                                   Tensor::constant(sample.statics[q]), p));
  }
  Tensor h = lstm_forward(tape, sequence, p.lstm);
  Tensor hidden = dense(tape, h, p.out_fc1, p.config.dense_activation);
  return dense(tape, hidden, p.out_fc2, Activation::kSigmoid);
}

// ---------------------------------------------------------------------------
// Checkpoints

std::string SstGcn::checkpoint_json() const {
  json tensors = json::array();
  for (const auto& [name, t] : params_.named()) {
    tensors.push_back({{"name", name},
                       {"rows", t.rows()},
                       {"cols", t.cols()},
                       {"data", t.value().storage()}});
  }
  return json{{"format", "sstgcn-checkpoint"},
              {"version", kCheckpointVersion},
              {"config", json::parse(params_.config.to_json())},
              {"tensors", tensors}}
      .dump();
}

void SstGcn::save_checkpoint(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write checkpoint " + path);
  out << checkpoint_json() << '\n';
}

SstGcn SstGcn::from_checkpoint_json(std::string_view text, const ModelConfig* expected) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  }
  try {
    if (doc.value("format", "") != "sstgcn-checkpoint")
      throw ParseError("checkpoint: not an sstgcn checkpoint");
    if (doc.at("version").get<int>() != kCheckpointVersion)
      throw ParseError("checkpoint: unknown version " + doc.at("version").dump());
    const ModelConfig stored = ModelConfig::from_json(doc.at("config").dump());
    const ModelConfig& active = expected ? *expected : stored;
    ModelParams params = ModelParams::zeros(active);
    auto named = params.named();
    const auto& tensors = doc.at("tensors");
    if (tensors.size() != named.size())
      throw ConfigError("checkpoint holds " + std::to_string(tensors.size()) + " tensors, model needs " +
                        std::to_string(named.size()));
    for (std::size_t i = 0; i < named.size(); ++i) {
      const auto& entry = tensors[i];
      auto& [name, tensor] = named[i];
      if (entry.at("name").get<std::string>() != name)
        throw ConfigError("checkpoint tensor " + std::to_string(i) + " is '" +
                          entry.at("name").get<std::string>() + "', expected '" + name + "'");
      const auto rows = entry.at("rows").get<std::size_t>();
      const auto cols = entry.at("cols").get<std::size_t>();
      if (rows != tensor.rows() || cols != tensor.cols())
        throw ConfigError("checkpoint tensor '" + name + "' has shape [" + std::to_string(rows) + "x" +
                          std::to_string(cols) + "], model expects " + tensor.value().shape_string());
      tensor.mutable_value() = Matrix(rows, cols, entry.at("data").get<std::vector<double>>());
    }
    return SstGcn(std::move(params));
  } catch (const json::exception& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  }
}

SstGcn SstGcn::load_checkpoint(const std::string& path, const ModelConfig* expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return from_checkpoint_json(buf.str(), expected);
}

}  // namespace sstgcn::model
