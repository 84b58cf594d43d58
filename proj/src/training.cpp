#include "sstgcn/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "sstgcn/errors.hpp"

namespace sstgcn::train {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Config

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("beta1 and beta2 must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (decay < 0.0) throw ConfigError("decay must be non-negative");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (monitor != "val_auc") throw ConfigError("only monitor=val_auc is supported");
}

std::string TrainConfig::to_json() const {
  return json{{"learning_rate", learning_rate}, {"beta1", beta1},       {"beta2", beta2},
              {"epsilon", epsilon},             {"decay", decay},       {"batch_size", batch_size},
              {"max_epochs", max_epochs},       {"patience", patience}, {"monitor", monitor},
              {"seed", seed}}
      .dump(2);
}

TrainConfig TrainConfig::from_json(std::string_view text) {
  TrainConfig c;
  try {
    const json doc = json::parse(text);
    if (!doc.is_object()) throw ConfigError("train config must be a JSON object");
    auto read = [&doc](const char* key, auto& out) {
      if (doc.contains(key)) out = doc.at(key).get<std::decay_t<decltype(out)>>();
    };
    read("learning_rate", c.learning_rate);
    read("beta1", c.beta1);
    read("beta2", c.beta2);
    read("epsilon", c.epsilon);
    read("decay", c.decay);
    read("batch_size", c.batch_size);
    read("max_epochs", c.max_epochs);
    read("patience", c.patience);
    read("monitor", c.monitor);
    read("seed", c.seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Adam

double decayed_learning_rate(const TrainConfig& cfg, long completed_steps) {
  return cfg.learning_rate / (1.0 + cfg.decay * static_cast<double>(completed_steps));
}

void adam_step(std::span<Tensor> params, std::span<const Matrix> grads, AdamState& state,
               const TrainConfig& cfg, std::span<const std::string> names) {
  if (params.size() != grads.size()) throw ShapeError("adam_step: parameter/gradient count mismatch");
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.rows(), p.cols());
      state.v.emplace_back(p.rows(), p.cols());
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("adam_step: optimizer state size mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!grads[i].same_shape(params[i].value()))
      throw ShapeError("adam_step: gradient shape mismatch for parameter " + std::to_string(i));
    for (double g : grads[i].values()) {
      if (!std::isfinite(g)) {
        const std::string name = i < names.size() ? names[i] : "#" + std::to_string(i);
        throw NumericError("non-finite gradient for parameter " + name);
      }
    }
  }

  const double lr = decayed_learning_rate(cfg, state.step);
  const double t = static_cast<double>(state.step + 1);
  const double lr_t = lr * std::sqrt(1.0 - std::pow(cfg.beta2, t)) / (1.0 - std::pow(cfg.beta1, t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& theta = params[i].mutable_value();
    Matrix& m = state.m[i];
    Matrix& v = state.v[i];
    const Matrix& g = grads[i];
    for (std::size_t j = 0; j < theta.size(); ++j) {
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      theta[j] -= lr_t * m[j] / (std::sqrt(v[j]) + cfg.epsilon);
    }
  }
  ++state.step;
}

// ---------------------------------------------------------------------------
// Metrics

double bce_loss(double probability, int label) {
  const double p = std::clamp(probability, num::kProbabilityClip, 1.0 - num::kProbabilityClip);
  return -(label * std::log(p) + (1 - label) * std::log(1.0 - p));
}

namespace {

void require_same_length(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ShapeError("scores and labels differ in length");
}

}  // namespace

double auc(std::span<const double> scores, std::span<const int> labels) {
  require_same_length(scores, labels);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Sum of midranks (1-based, doubled to stay integral) over positives.
  std::uint64_t positives = 0;
  std::uint64_t rank2_sum = 0;
  for (std::size_t lo = 0; lo < order.size();) {
    std::size_t hi = lo + 1;
    while (hi < order.size() && scores[order[hi]] == scores[order[lo]]) ++hi;
    const std::uint64_t rank2 = lo + 1 + hi;  // 2 * midrank of [lo, hi)
    for (std::size_t j = lo; j < hi; ++j) {
      if (labels[order[j]] == 1) {
        ++positives;
        rank2_sum += rank2;
      }
    }
    lo = hi;
  }
  const std::uint64_t negatives = scores.size() - positives;
  if (positives == 0 || negatives == 0) {
    throw UndefinedMetricError("AUC needs at least one positive and one negative");
  }
  // U = sum(ranks) - P(P+1)/2 ; doubled throughout.
  const std::uint64_t u2 = rank2_sum - positives * (positives + 1);
  return static_cast<double>(u2) / (2.0 * static_cast<double>(positives) * static_cast<double>(negatives));
}

std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels) {
  require_same_length(scores, labels);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double total_pos = 0.0;
  for (int l : labels) total_pos += l == 1 ? 1.0 : 0.0;
  const double total_neg = static_cast<double>(labels.size()) - total_pos;
  if (total_pos == 0.0 || total_neg == 0.0)
    throw UndefinedMetricError("ROC needs at least one positive and one negative");

  std::vector<RocPoint> curve{{0.0, 0.0, std::numeric_limits<double>::infinity()}};
  double tp = 0.0;
  double fp = 0.0;
  for (std::size_t lo = 0; lo < order.size();) {
    std::size_t hi = lo;
    while (hi < order.size() && scores[order[hi]] == scores[order[lo]]) {
      (labels[order[hi]] == 1 ? tp : fp) += 1.0;
      ++hi;
    }
    curve.push_back({fp / total_neg, tp / total_pos, scores[order[lo]]});
    lo = hi;
  }
  return curve;
}

double trapezoid_area(std::span<const RocPoint> curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i)
    area += (curve[i].fpr - curve[i - 1].fpr) * (curve[i].tpr + curve[i - 1].tpr) / 2.0;
  return area;
}

MetricsReport classification_metrics(std::span<const double> scores, std::span<const int> labels,
                                     double threshold) {
  require_same_length(scores, labels);
  if (scores.empty()) throw ContractError("classification_metrics needs a non-empty input");
  double tp = 0, fp = 0, tn = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] > threshold;
    const bool actual = labels[i] == 1;
    if (predicted && actual) ++tp;
    else if (predicted) ++fp;
    else if (actual) ++fn;
    else ++tn;
  }
  MetricsReport r;
  r.samples = scores.size();
  r.precision_undefined = tp + fp == 0;
  r.recall_undefined = tp + fn == 0;
  r.precision = r.precision_undefined ? 0.0 : tp / (tp + fp);
  r.recall = r.recall_undefined ? 0.0 : tp / (tp + fn);
  r.f1 = r.precision + r.recall > 0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  r.binary_accuracy = (tp + tn) / static_cast<double>(scores.size());
  return r;
}

std::string MetricsReport::to_json() const {
  return json{{"loss", loss},
              {"precision", precision},
              {"recall", recall},
              {"f1", f1},
              {"binary_accuracy", binary_accuracy},
              {"auc", auc},
              {"precision_undefined", precision_undefined},
              {"recall_undefined", recall_undefined},
              {"samples", samples}}
      .dump(2);
}

// ---------------------------------------------------------------------------
// Parallel per-sample passes

unsigned worker_threads() {
  if (const char* env = std::getenv("SSTGCN_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return static_cast<unsigned>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

namespace {

// Runs body(i) for i in [0, count) over up to worker_threads() threads.
// Each index is handled by exactly one thread; results go to per-index slots.
template <typename Body>
void parallel_for(std::size_t count, Body&& body) {
  const std::size_t workers = std::min<std::size_t>(worker_threads(), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < count; i += workers) body(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

std::vector<double> predict_all(const Classifier& model, const data::SampleSet& set) {
  std::vector<double> out(set.size());
  parallel_for(set.size(), [&](std::size_t i) { out[i] = model.predict(set[i]); });
  return out;
}

std::vector<int> labels_of(const data::SampleSet& set) {
  std::vector<int> out;
  out.reserve(set.size());
  for (const auto& s : set) out.push_back(s.label);
  return out;
}

MetricsReport evaluate(const Classifier& model, const data::SampleSet& set) {
  const auto scores = predict_all(model, set);
  const auto labels = labels_of(set);
  MetricsReport r = classification_metrics(scores, labels);
  double loss = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) loss += bce_loss(scores[i], labels[i]);
  r.loss = loss / static_cast<double>(scores.size());
  r.auc = auc(scores, labels);
  return r;
}

double batch_gradients(const Classifier& model, std::span<const data::Sample* const> batch,
                       std::vector<Matrix>& grads) {
  const auto params = model.parameters();
  std::vector<std::vector<Matrix>> per_sample(batch.size());
  std::vector<double> losses(batch.size());
  parallel_for(batch.size(), [&](std::size_t i) {
    num::Tape tape;
    Tensor p = model.forward(tape, *batch[i]);
    Tensor loss = num::binary_cross_entropy(tape, p, batch[i]->label);
    losses[i] = loss.item();
    tape.backward(loss, num::LeafGrads::kKeepOnTape);
    per_sample[i].reserve(params.size());
    for (const auto& t : params) per_sample[i].push_back(tape.gradient(t));
  });

  grads.clear();
  for (const auto& t : params) grads.emplace_back(t.rows(), t.cols());
  double total = 0.0;
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (!std::isfinite(losses[i])) {
      std::ostringstream msg;
      msg << "non-finite loss on sample center=" << graph::to_int(batch[i]->center)
          << " t=" << batch[i]->t << " label=" << batch[i]->label;
      throw NumericError(msg.str());
    }
    total += losses[i];
    for (std::size_t j = 0; j < params.size(); ++j) {
      Matrix& g = grads[j];
      const Matrix& s = per_sample[i][j];
      for (std::size_t e = 0; e < g.size(); ++e) g[e] += s[e] * inv;
    }
  }
  return total * inv;
}

// ---------------------------------------------------------------------------
// Training loop

TrainResult fit(Classifier& model, const data::SampleSet& train_set, const data::SampleSet& val_set,
                const TrainConfig& cfg, const Evaluator& evaluator) {
  cfg.validate();
  if (train_set.empty() || val_set.empty()) throw ContractError("train and validation sets must be non-empty");
  const Evaluator eval = evaluator ? evaluator : Evaluator(evaluate);

  auto params = model.parameters();
  std::vector<std::string> names;
  for (const auto& [name, t] : model.named_parameters()) names.push_back(name);

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  AdamState adam;
  TrainResult result;
  result.best_val_auc = -std::numeric_limits<double>::infinity();
  std::vector<Matrix> best = model.snapshot();
  std::vector<Matrix> grads;
  std::vector<const data::Sample*> batch;
  int since_best = 0;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      batch.clear();
      for (std::size_t i = begin; i < end; ++i) batch.push_back(&train_set[order[i]]);
      try {
        loss_sum += batch_gradients(model, batch, grads) * static_cast<double>(batch.size());
        adam_step(params, grads, adam, cfg, names);
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch) + ", batch starting at " +
                           std::to_string(begin) + ", optimizer step " + std::to_string(adam.step) +
                           ": " + e.what());
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.val = eval(model, val_set);
    result.history.push_back(rec);

    if (rec.val.auc > result.best_val_auc) {
      result.best_val_auc = rec.val.auc;
      result.best_epoch = epoch;
      best = model.snapshot();
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      result.stopped_early = epoch < cfg.max_epochs;
      break;
    }
  }
  model.restore(best);
  return result;
}

std::string history_csv(const TrainResult& result) {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,train_loss,val_loss,val_auc,val_precision,val_recall,val_f1,val_binary_accuracy\n";
  for (const auto& r : result.history) {
    out << r.epoch << ',' << r.train_loss << ',' << r.val.loss << ',' << r.val.auc << ','
        << r.val.precision << ',' << r.val.recall << ',' << r.val.f1 << ',' << r.val.binary_accuracy
        << '\n';
  }
  return out.str();
}

std::string history_json(const TrainResult& result) {
  json epochs = json::array();
  for (const auto& r : result.history) {
    epochs.push_back({{"epoch", r.epoch},
                      {"train_loss", r.train_loss},
                      {"val_loss", r.val.loss},
                      {"val_auc", r.val.auc},
                      {"val_precision", r.val.precision},
                      {"val_recall", r.val.recall},
                      {"val_f1", r.val.f1},
                      {"val_binary_accuracy", r.val.binary_accuracy}});
  }
  return json{{"best_epoch", result.best_epoch},
              {"best_val_auc", result.best_val_auc},
              {"stopped_early", result.stopped_early},
              {"epochs", epochs}}
      .dump(2);
}

// ---------------------------------------------------------------------------
// Logistic baseline

LogisticRegression::LogisticRegression(std::uint64_t seed) {
  constexpr std::size_t inputs = data::kNodeFeatureWidth + data::kStaticWidth;
  std::mt19937_64 rng(seed);
  const double limit = std::sqrt(6.0 / static_cast<double>(inputs + 1));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix w(inputs, 1);
  for (auto& v : w.values()) v = dist(rng);
  weight_ = Tensor::parameter(std::move(w));
  bias_ = Tensor::parameter(Matrix(1, 1));
}

std::vector<std::pair<std::string, Tensor>> LogisticRegression::named_parameters() const {
  return {{"weight", weight_}, {"bias", bias_}};
}

Matrix LogisticRegression::input_row(const data::Sample& sample) {
  const Matrix& last = sample.slices.back().features;
  const std::size_t center = 0;  // center road is always the first node
  Matrix row(1, data::kNodeFeatureWidth + data::kStaticWidth);
  for (std::size_t j = 0; j < data::kNodeFeatureWidth; ++j) row[j] = last(center, j);
  const Matrix& stat = sample.statics.back();
  for (std::size_t j = 0; j < data::kStaticWidth; ++j) row[data::kNodeFeatureWidth + j] = stat[j];
  return row;
}

Tensor LogisticRegression::forward(num::Tape& tape, const data::Sample& sample) const {
  Tensor x = Tensor::constant(input_row(sample));
  return num::activate(tape, num::add_bias(tape, num::matmul(tape, x, weight_), bias_),
                       num::Activation::kSigmoid);
}

BaselineResult logistic_baseline(const data::SampleSet& train_set, const data::SampleSet& val_set,
                                 const data::SampleSet& test_set, const TrainConfig& cfg) {
  if (test_set.empty()) throw ContractError("logistic_baseline needs a non-empty test set");
  LogisticRegression model(cfg.seed);
  BaselineResult out;
  out.training = fit(model, train_set, val_set, cfg);
  out.test = evaluate(model, test_set);
  return out;
}

}  // namespace sstgcn::train
