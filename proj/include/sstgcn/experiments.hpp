#pragma once

// Experiment drivers behind the command-line tool: dataset generation,
// training runs, the (K-hop, sequence number, interval) grid and the
// adjacency-filter comparison.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sstgcn/dataset.hpp"
#include "sstgcn/model.hpp"
#include "sstgcn/training.hpp"

namespace sstgcn::experiments {

struct ExperimentSpec {
  std::vector<int> khop_values{1, 2, 3, 4};
  std::vector<int> seq_numbers{2, 3, 4};
  std::vector<int> intervals_minutes{5, 10, 15};
  int repeats = 3;
  std::vector<graph::FilterKind> filters{graph::FilterKind::kDistanceLaplacian};
  train::TrainConfig train;
  model::ModelConfig model;
  std::uint64_t seed = 1;

  void validate() const;
  static ExperimentSpec from_json(std::string_view text);
  static ExperimentSpec load(const std::string& path);
};

// Column headers shared by the grid and filter tables.
inline constexpr std::string_view kMetricColumns =
    "Loss,Precision,Recall,F1-Score,Binary Accuracy,AUC";

struct CellMetrics {
  double loss = 0, precision = 0, recall = 0, f1 = 0, binary_accuracy = 0, auc = 0;
};

CellMetrics from_report(const train::MetricsReport& r);
CellMetrics mean_of(const std::vector<CellMetrics>& raws);

struct CellResult {
  std::string label;  // "K/n/k" or the filter name
  data::WindowSpec window;
  std::vector<CellMetrics> raws;
  CellMetrics mean;
  std::size_t samples = 0;
  std::uint64_t laplacian_checksum = 0;
  bool failed = false;
  std::string error;
};

struct GridResult {
  std::string first_column;  // "KHOP/SeqNum/Interval" or "Preprocessing"
  std::vector<CellResult> cells;

  std::string means_csv() const;
  std::string raws_csv() const;
  // "metric: label" lines naming the best cell per column (lowest loss,
  // highest otherwise).
  std::vector<std::string> best_per_metric() const;
  std::vector<std::string> failures() const;
};

// FNV-1a over the bit patterns of every sample's L, in dataset order.
std::uint64_t laplacian_checksum(const data::SampleSet& set);

struct World {
  graph::RoadNetwork network;
  data::DynamicStreams streams;
};

World generate_world(const data::GeneratorConfig& cfg);

// Assemble a dataset for `window`, split it, train `repeats` SST-GCN models
// with distinct seeds and evaluate each on the test split.
CellResult run_cell(const World& world, const data::WindowSpec& window, const ExperimentSpec& spec,
                    std::string label);

// All (K, n, k) cells over one shared synthetic world. Per-cell results are
// also written atomically under `cell_dir` when it is non-empty.
GridResult run_grid(const data::GeneratorConfig& gen, const ExperimentSpec& spec,
                    const std::string& cell_dir = {});

// The four {adjacent, distance} x {GCN filter, normalized Laplacian} variants
// at gen.window's (K, n, k).
GridResult run_filters(const data::GeneratorConfig& gen, const ExperimentSpec& spec,
                       const std::string& cell_dir = {});

struct GenSummary {
  std::size_t samples = 0;
  std::size_t positives = 0;
  std::size_t roads = 0;
  std::size_t accidents = 0;
  double mean_nodes = 0.0;
};

// Writes <out> (JSON-Lines dataset), <out>.network.json and <out>.streams.json.
GenSummary generate_dataset_files(const data::GeneratorConfig& cfg, const std::string& out);

struct TrainRunOutputs {
  train::MetricsReport test;
  train::TrainResult training;
  train::MetricsReport baseline_test;
};

// Split, train, and write checkpoint.json, history.csv, history.json,
// test_report.json, baseline_report.json and test.jsonl under out_dir.
TrainRunOutputs train_from_dataset(const data::SampleSet& set, const train::TrainConfig& cfg,
                                   const model::ModelConfig& model_cfg, const std::string& out_dir);

// Writes <out_prefix>.report.json and <out_prefix>.roc.csv.
train::MetricsReport evaluate_checkpoint(const std::string& checkpoint_path,
                                         const data::SampleSet& set, const std::string& out_prefix);

std::string roc_csv(const std::vector<train::RocPoint>& curve);

// Write to a temporary sibling then rename over `path`.
void write_file_atomic(const std::string& path, const std::string& contents);

}  // namespace sstgcn::experiments
