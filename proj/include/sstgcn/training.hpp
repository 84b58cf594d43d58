#pragma once

// BCE training with Adam, early stopping on validation AUC, and evaluation
// metrics.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sstgcn/dataset.hpp"
#include "sstgcn/model.hpp"

namespace sstgcn::train {

using model::Classifier;
using num::Matrix;
using num::Tensor;

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;
  double decay = 2e-6;
  std::size_t batch_size = 32;
  int max_epochs = 100;
  int patience = 10;
  std::string monitor = "val_auc";
  std::uint64_t seed = 1;

  void validate() const;
  std::string to_json() const;
  static TrainConfig from_json(std::string_view text);
};

struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  long step = 0;  // updates applied so far
};

// Time-decayed rate applied at the update following `completed_steps`
// updates: lr / (1 + decay * completed_steps).
double decayed_learning_rate(const TrainConfig& cfg, long completed_steps);

// One bias-corrected Adam update in place. `names` labels parameters in the
// NumericError raised for non-finite gradients; may be empty.
void adam_step(std::span<Tensor> params, std::span<const Matrix> grads, AdamState& state,
               const TrainConfig& cfg, std::span<const std::string> names = {});

double bce_loss(double probability, int label);

// Mann-Whitney AUC: P(score_pos > score_neg) with ties counted 1/2.
double auc(std::span<const double> scores, std::span<const int> labels);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;
};

// One point per distinct score (descending), framed by (0,0) and (1,1).
std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels);
double trapezoid_area(std::span<const RocPoint> curve);

struct MetricsReport {
  double loss = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double binary_accuracy = 0.0;
  double auc = 0.0;
  // Set when the corresponding denominator was zero and 0 was reported.
  bool precision_undefined = false;
  bool recall_undefined = false;
  std::size_t samples = 0;

  std::string to_json() const;
};

// Confusion-matrix metrics; a score counts as positive when > threshold.
// Leaves loss and auc at zero.
MetricsReport classification_metrics(std::span<const double> scores, std::span<const int> labels,
                                     double threshold = 0.5);

std::vector<double> predict_all(const Classifier& model, const data::SampleSet& set);
std::vector<int> labels_of(const data::SampleSet& set);

// Predictions, mean BCE, confusion metrics and AUC for one pass.
MetricsReport evaluate(const Classifier& model, const data::SampleSet& set);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  MetricsReport val;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_val_auc = 0.0;
  bool stopped_early = false;
};

using Evaluator = std::function<MetricsReport(const Classifier&, const data::SampleSet&)>;

// Fits `model` in place. On return the model holds the parameters from the
// epoch with the best validation AUC. `evaluator` defaults to evaluate().
TrainResult fit(Classifier& model, const data::SampleSet& train_set, const data::SampleSet& val_set,
                const TrainConfig& cfg, const Evaluator& evaluator = {});

// Mean per-sample gradients for one batch, reduced in sample order.
double batch_gradients(const Classifier& model, std::span<const data::Sample* const> batch,
                       std::vector<Matrix>& grads);

// Worker count for per-sample passes: SSTGCN_THREADS, else hardware threads.
unsigned worker_threads();

std::string history_csv(const TrainResult& result);
std::string history_json(const TrainResult& result);

// Logistic regression over the center node's last-slice features followed by
// the last static vector (18 + 21 inputs).
class LogisticRegression : public Classifier {
 public:
  explicit LogisticRegression(std::uint64_t seed);

  std::vector<std::pair<std::string, Tensor>> named_parameters() const override;
  Tensor forward(num::Tape& tape, const data::Sample& sample) const override;

  static Matrix input_row(const data::Sample& sample);

 private:
  Tensor weight_;  // 39 x 1
  Tensor bias_;    // 1 x 1
};

struct BaselineResult {
  MetricsReport test;
  TrainResult training;
};

BaselineResult logistic_baseline(const data::SampleSet& train_set, const data::SampleSet& val_set,
                                 const data::SampleSet& test_set, const TrainConfig& cfg);

}  // namespace sstgcn::train
