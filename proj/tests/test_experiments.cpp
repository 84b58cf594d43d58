#include <cmath>
#include <set>
#include <sstream>

#include "doctest.h"
#include "sstgcn/errors.hpp"
#include "sstgcn/experiments.hpp"
#include "support.hpp"

using namespace sstgcn;
using namespace sstgcn::experiments;

namespace {

data::GeneratorConfig small_world() {
  data::GeneratorConfig cfg;
  cfg.n_roads = 20;
  cfg.days = 3;
  return cfg;
}

ExperimentSpec quick_spec(int repeats) {
  ExperimentSpec spec;
  spec.repeats = repeats;
  spec.train.max_epochs = 2;
  spec.khop_values = {2};
  spec.seq_numbers = {3};
  spec.intervals_minutes = {5};
  return spec;
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.push_back("");
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST_CASE("experiment spec defaults and JSON") {
  const ExperimentSpec d;
  CHECK(d.khop_values == std::vector<int>{1, 2, 3, 4});
  CHECK(d.seq_numbers == std::vector<int>{2, 3, 4});
  CHECK(d.intervals_minutes == std::vector<int>{5, 10, 15});
  CHECK(d.repeats == 3);
  const ExperimentSpec s = ExperimentSpec::from_json(
      R"({"khop_values": [1], "repeats": 2, "filters": ["adj-gcn"], "train": {"max_epochs": 4}})");
  CHECK(s.khop_values == std::vector<int>{1});
  CHECK(s.repeats == 2);
  CHECK(s.filters.front() == graph::FilterKind::kAdjacentGcn);
  CHECK(s.train.max_epochs == 4);
  CHECK_THROWS_AS(ExperimentSpec::from_json(R"({"repeats": 0})").validate(), ConfigError);
  CHECK_THROWS_AS(ExperimentSpec::from_json(R"({"khop_values": []})").validate(), ConfigError);
}

TEST_CASE("one-cell grid gives one row whose means match the raws") {
  const auto dir = testsupport::temp_dir("grid_one");
  const GridResult r = run_grid(small_world(), quick_spec(2), (dir / "cells").string());
  REQUIRE(r.cells.size() == 1);
  const CellResult& c = r.cells.front();
  REQUIRE_FALSE(c.failed);
  CHECK(c.label == "2/3/5");
  REQUIRE(c.raws.size() == 2);
  const CellMetrics m = mean_of(c.raws);
  CHECK(std::abs(c.mean.auc - (c.raws[0].auc + c.raws[1].auc) / 2.0) < 1e-12);
  CHECK(std::abs(c.mean.loss - (c.raws[0].loss + c.raws[1].loss) / 2.0) < 1e-12);
  CHECK(m.f1 == c.mean.f1);

  const auto rows = parse_csv(r.means_csv());
  REQUIRE(rows.size() == 2);
  const std::vector<std::string> header{"KHOP/SeqNum/Interval", "Loss", "Precision", "Recall",
                                        "F1-Score", "Binary Accuracy", "AUC"};
  CHECK(rows[0] == header);
  CHECK(rows[1].size() == 7);
  CHECK(std::stod(rows[1][6]) == c.mean.auc);
  CHECK(parse_csv(r.raws_csv()).size() == 3);
  CHECK(r.best_per_metric().size() == 6);
  CHECK(std::filesystem::exists(dir / "cells"));
}

TEST_CASE("grid over the full cell structure lists every cell") {
  ExperimentSpec spec = quick_spec(1);
  spec.khop_values = {1, 2};
  spec.seq_numbers = {2, 3};
  spec.intervals_minutes = {5, 10};
  spec.train.max_epochs = 1;
  const GridResult r = run_grid(small_world(), spec);
  REQUIRE(r.cells.size() == 8);
  std::set<std::string> labels;
  for (const auto& c : r.cells) labels.insert(c.label);
  CHECK(labels.size() == 8);
  CHECK(labels.count("1/2/5") == 1);
  CHECK(labels.count("2/3/10") == 1);
}

TEST_CASE("failed cells are recorded and the run continues") {
  ExperimentSpec spec = quick_spec(1);
  // A 2000-minute interval leaves no usable window in a one-day world.
  spec.intervals_minutes = {5, 2000};
  data::GeneratorConfig gen = small_world();
  gen.days = 1;
  const GridResult r = run_grid(gen, spec);
  REQUIRE(r.cells.size() == 2);
  CHECK_FALSE(r.cells[0].failed);
  CHECK(r.cells[1].failed);
  CHECK(r.failures().size() == 1);
  const auto rows = parse_csv(r.means_csv());
  CHECK(rows[2].size() == 7);
}

TEST_CASE("filter comparison has four rows with distinct propagation matrices") {
  const GridResult r = run_filters(small_world(), quick_spec(1));
  REQUIRE(r.cells.size() == 4);
  CHECK(r.first_column == "Preprocessing");
  std::set<std::uint64_t> sums;
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(r.cells[i].label == graph::filter_label(graph::kAllFilterKinds[i]));
    CHECK(r.cells[i].window.khop == 2);
    CHECK(r.cells[i].window.n == 3);
    CHECK(r.cells[i].window.k == 5);
    sums.insert(r.cells[i].laplacian_checksum);
  }
  CHECK(sums.size() == 4);
  const auto rows = parse_csv(r.means_csv());
  REQUIRE(rows.size() == 5);
  CHECK(rows[4][0] == "Distance Matrix + Normalized Laplacian Filter");
}

TEST_CASE("dataset files are deterministic") {
  const auto dir = testsupport::temp_dir("gen_files");
  const data::GeneratorConfig cfg = small_world();
  const GenSummary a = generate_dataset_files(cfg, (dir / "a.jsonl").string());
  generate_dataset_files(cfg, (dir / "b.jsonl").string());
  CHECK(2 * a.positives == a.samples);
  CHECK(a.roads == 20);
  CHECK(testsupport::read_file(dir / "a.jsonl") == testsupport::read_file(dir / "b.jsonl"));
  CHECK(testsupport::read_file(dir / "a.jsonl.network.json") ==
        testsupport::read_file(dir / "b.jsonl.network.json"));
  CHECK(testsupport::read_file(dir / "a.jsonl.streams.json") ==
        testsupport::read_file(dir / "b.jsonl.streams.json"));
}

TEST_CASE("train outputs reload and evaluation reproduces the test report") {
  const auto dir = testsupport::temp_dir("train_eval");
  const data::GeneratorConfig gen = small_world();
  const World world = generate_world(gen);
  const data::SampleSet set = data::assemble_dataset(world.network, world.streams, gen.window, 1);
  train::TrainConfig cfg;
  cfg.max_epochs = 1;
  const auto out = train_from_dataset(set, cfg, model::ModelConfig{}, (dir / "run").string());
  for (const char* f : {"checkpoint.json", "history.csv", "history.json", "test_report.json",
                        "baseline_report.json", "test.jsonl"})
    CHECK(std::filesystem::exists(dir / "run" / f));
  CHECK(out.training.history.size() == 1);
  CHECK(parse_csv(testsupport::read_file(dir / "run" / "history.csv")).size() == 2);

  const data::SampleSet test_set = data::load_dataset((dir / "run" / "test.jsonl").string());
  const auto report = evaluate_checkpoint((dir / "run" / "checkpoint.json").string(), test_set,
                                          (dir / "eval").string());
  CHECK(report.to_json() == out.test.to_json());
  CHECK(testsupport::read_file(dir / "run" / "test_report.json") == report.to_json() + "\n");

  const auto roc = parse_csv(testsupport::read_file(dir / "eval.roc.csv"));
  REQUIRE(roc.size() >= 3);
  CHECK(roc[0] == std::vector<std::string>{"fpr", "tpr", "threshold"});
  CHECK(std::stod(roc[1][0]) == 0.0);
  CHECK(std::stod(roc[1][1]) == 0.0);
  CHECK(std::stod(roc.back()[0]) == 1.0);
  CHECK(std::stod(roc.back()[1]) == 1.0);
  double area = 0.0;
  for (std::size_t i = 2; i < roc.size(); ++i) {
    const double x0 = std::stod(roc[i - 1][0]), y0 = std::stod(roc[i - 1][1]);
    const double x1 = std::stod(roc[i][0]), y1 = std::stod(roc[i][1]);
    area += (x1 - x0) * (y0 + y1) / 2.0;
  }
  CHECK(std::abs(area - report.auc) < 1e-6);
}

TEST_CASE("checkpoint and dataset widths must agree") {
  const auto dir = testsupport::temp_dir("eval_mismatch");
  model::ModelConfig cfg;
  cfg.static_features = 20;
  model::SstGcn(cfg, 1).save_checkpoint((dir / "ck.json").string());
  testsupport::Rng rng(1);
  data::SampleSet set{testsupport::random_sample(rng, 3, 3, 1), testsupport::random_sample(rng, 3, 3, 0)};
  CHECK_THROWS_AS(evaluate_checkpoint((dir / "ck.json").string(), set, (dir / "out").string()),
                  ConfigError);
}

TEST_CASE("laplacian checksum tracks matrix bits") {
  testsupport::Rng rng(2);
  data::SampleSet set{testsupport::random_sample(rng, 3)};
  const auto before = laplacian_checksum(set);
  CHECK(laplacian_checksum(set) == before);
  auto lap = std::make_shared<num::Matrix>(set[0].laplacian());
  (*lap)(0, 0) += 1e-15;
  for (auto& sl : set[0].slices) sl.laplacian = lap;
  CHECK(laplacian_checksum(set) != before);
}

TEST_CASE("atomic writes replace the target") {
  const auto dir = testsupport::temp_dir("atomic");
  const std::string path = (dir / "nested" / "x.csv").string();
  write_file_atomic(path, "a\n");
  write_file_atomic(path, "b\n");
  CHECK(testsupport::read_file(path) == "b\n");
  CHECK_FALSE(std::filesystem::exists(path + ".tmp"));
}
