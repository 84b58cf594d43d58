#include "sstgcn/experiments.hpp"

#include <bit>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "sstgcn/errors.hpp"

namespace sstgcn::experiments {

using nlohmann::json;
namespace fs = std::filesystem;

void ExperimentSpec::validate() const {
  if (khop_values.empty() || seq_numbers.empty() || intervals_minutes.empty() || filters.empty())
    throw ConfigError("experiment grids must be non-empty");
  if (repeats < 1) throw ConfigError("repeats must be >= 1");
  for (int v : khop_values)
    if (v < 1) throw ConfigError("khop values must be >= 1");
  for (int v : seq_numbers)
    if (v < 1) throw ConfigError("sequence numbers must be >= 1");
  for (int v : intervals_minutes)
    if (v < 1) throw ConfigError("intervals must be >= 1");
  train.validate();
  model.validate();
}

ExperimentSpec ExperimentSpec::from_json(std::string_view text) {
  ExperimentSpec spec;
  try {
    const json doc = json::parse(text);
    if (!doc.is_object()) throw ConfigError("experiment spec must be a JSON object");
    if (doc.contains("khop_values")) spec.khop_values = doc.at("khop_values").get<std::vector<int>>();
    if (doc.contains("seq_numbers")) spec.seq_numbers = doc.at("seq_numbers").get<std::vector<int>>();
    if (doc.contains("intervals_minutes"))
      spec.intervals_minutes = doc.at("intervals_minutes").get<std::vector<int>>();
    if (doc.contains("repeats")) spec.repeats = doc.at("repeats").get<int>();
    if (doc.contains("filters")) {
      spec.filters.clear();
      for (const auto& f : doc.at("filters"))
        spec.filters.push_back(graph::parse_filter_flag(f.get<std::string>()));
    }
    if (doc.contains("train")) spec.train = train::TrainConfig::from_json(doc.at("train").dump());
    if (doc.contains("model")) spec.model = model::ModelConfig::from_json(doc.at("model").dump());
    if (doc.contains("seed")) spec.seed = doc.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("experiment spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

ExperimentSpec ExperimentSpec::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open experiment spec " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str());
}

// ---------------------------------------------------------------------------

CellMetrics from_report(const train::MetricsReport& r) {
  return {r.loss, r.precision, r.recall, r.f1, r.binary_accuracy, r.auc};
}

CellMetrics mean_of(const std::vector<CellMetrics>& raws) {
  CellMetrics m;
  if (raws.empty()) return m;
  for (const auto& r : raws) {
    m.loss += r.loss;
    m.precision += r.precision;
    m.recall += r.recall;
    m.f1 += r.f1;
    m.binary_accuracy += r.binary_accuracy;
    m.auc += r.auc;
  }
  const double n = static_cast<double>(raws.size());
  m.loss /= n;
  m.precision /= n;
  m.recall /= n;
  m.f1 /= n;
  m.binary_accuracy /= n;
  m.auc /= n;
  return m;
}

namespace {

void write_metrics(std::ostream& out, const CellMetrics& m) {
  out << m.loss << ',' << m.precision << ',' << m.recall << ',' << m.f1 << ',' << m.binary_accuracy
      << ',' << m.auc;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string GridResult::means_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << first_column << ',' << kMetricColumns << '\n';
  for (const auto& c : cells) {
    out << csv_field(c.label) << ',';
    if (c.failed) {
      out << ",,,,,";
    } else {
      write_metrics(out, c.mean);
    }
    out << '\n';
  }
  return out.str();
}

std::string GridResult::raws_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << first_column << ",Repeat," << kMetricColumns << '\n';
  for (const auto& c : cells) {
    for (std::size_t r = 0; r < c.raws.size(); ++r) {
      out << csv_field(c.label) << ',' << r << ',';
      write_metrics(out, c.raws[r]);
      out << '\n';
    }
  }
  return out.str();
}

std::vector<std::string> GridResult::best_per_metric() const {
  struct Column {
    const char* name;
    double CellMetrics::*field;
    bool lower_is_better;
  };
  const Column columns[] = {{"Loss", &CellMetrics::loss, true},
                            {"Precision", &CellMetrics::precision, false},
                            {"Recall", &CellMetrics::recall, false},
                            {"F1-Score", &CellMetrics::f1, false},
                            {"Binary Accuracy", &CellMetrics::binary_accuracy, false},
                            {"AUC", &CellMetrics::auc, false}};
  std::vector<std::string> lines;
  for (const auto& col : columns) {
    const CellResult* best = nullptr;
    for (const auto& c : cells) {
      if (c.failed) continue;
      const double v = c.mean.*col.field;
      if (!best || (col.lower_is_better ? v < best->mean.*col.field : v > best->mean.*col.field))
        best = &c;
    }
    if (best) lines.push_back(std::string(col.name) + ": " + best->label);
  }
  return lines;
}

std::vector<std::string> GridResult::failures() const {
  std::vector<std::string> out;
  for (const auto& c : cells)
    if (c.failed) out.push_back(c.label + ": " + c.error);
  return out;
}

std::uint64_t laplacian_checksum(const data::SampleSet& set) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](std::uint64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xffu;
      h *= 1099511628211ull;
    }
  };
  for (const auto& s : set)
    for (double v : s.laplacian().values()) mix(std::bit_cast<std::uint64_t>(v));
  return h;
}

World generate_world(const data::GeneratorConfig& cfg) {
  World w;
  w.network = data::generate_synthetic_network(cfg.seed, cfg.n_roads);
  w.streams = data::generate_planted_streams(cfg.seed, w.network, cfg.days, cfg.hazard, cfg.start_date);
  return w;
}

CellResult run_cell(const World& world, const data::WindowSpec& window, const ExperimentSpec& spec,
                    std::string label) {
  CellResult cell;
  cell.label = std::move(label);
  cell.window = window;
  try {
    const data::SampleSet set = data::assemble_dataset(world.network, world.streams, window, spec.seed);
    cell.samples = set.size();
    cell.laplacian_checksum = laplacian_checksum(set);
    const data::Split split = data::split_dataset(set, spec.seed);
    for (int r = 0; r < spec.repeats; ++r) {
      train::TrainConfig cfg = spec.train;
      cfg.seed = spec.train.seed + static_cast<std::uint64_t>(r);
      model::SstGcn net(spec.model, spec.seed * 1000003ull + static_cast<std::uint64_t>(r));
      train::fit(net, split.train, split.val, cfg);
      cell.raws.push_back(from_report(train::evaluate(net, split.test)));
    }
    cell.mean = mean_of(cell.raws);
  } catch (const std::exception& e) {
    cell.failed = true;
    cell.error = e.what();
  }
  return cell;
}

namespace {

std::string cell_json(const CellResult& c) {
  auto metrics = [](const CellMetrics& m) {
    return json{{"loss", m.loss},     {"precision", m.precision},
                {"recall", m.recall}, {"f1", m.f1},
                {"binary_accuracy", m.binary_accuracy}, {"auc", m.auc}};
  };
  json raws = json::array();
  for (const auto& r : c.raws) raws.push_back(metrics(r));
  return json{{"label", c.label},
              {"khop", c.window.khop},
              {"seq_num", c.window.n},
              {"interval", c.window.k},
              {"filter", std::string(graph::filter_flag(c.window.filter))},
              {"samples", c.samples},
              {"laplacian_checksum", c.laplacian_checksum},
              {"failed", c.failed},
              {"error", c.error},
              {"mean", metrics(c.mean)},
              {"raws", raws}}
      .dump(2);
}

void persist_cell(const std::string& dir, std::size_t index, const CellResult& c) {
  if (dir.empty()) return;
  fs::create_directories(dir);
  char name[32];
  std::snprintf(name, sizeof name, "cell_%03zu.json", index);
  write_file_atomic((fs::path(dir) / name).string(), cell_json(c));
}

}  // namespace

GridResult run_grid(const data::GeneratorConfig& gen, const ExperimentSpec& spec,
                    const std::string& cell_dir) {
  spec.validate();
  const World world = generate_world(gen);
  GridResult result;
  result.first_column = "KHOP/SeqNum/Interval";
  for (int khop : spec.khop_values) {
    for (int n : spec.seq_numbers) {
      for (int k : spec.intervals_minutes) {
        data::WindowSpec window{n, k, khop, spec.filters.front()};
        const std::string label = std::to_string(khop) + "/" + std::to_string(n) + "/" + std::to_string(k);
        result.cells.push_back(run_cell(world, window, spec, label));
        persist_cell(cell_dir, result.cells.size() - 1, result.cells.back());
      }
    }
  }
  return result;
}

GridResult run_filters(const data::GeneratorConfig& gen, const ExperimentSpec& spec,
                       const std::string& cell_dir) {
  spec.validate();
  const World world = generate_world(gen);
  GridResult result;
  result.first_column = "Preprocessing";
  for (graph::FilterKind kind : graph::kAllFilterKinds) {
    data::WindowSpec window = gen.window;
    window.filter = kind;
    result.cells.push_back(run_cell(world, window, spec, std::string(graph::filter_label(kind))));
    persist_cell(cell_dir, result.cells.size() - 1, result.cells.back());
  }
  return result;
}

// ---------------------------------------------------------------------------

void write_file_atomic(const std::string& path, const std::string& contents) {
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << contents;
    if (!out) throw Error("write failed for " + tmp.string());
  }
  fs::rename(tmp, target);
}

GenSummary generate_dataset_files(const data::GeneratorConfig& cfg, const std::string& out) {
  const World world = generate_world(cfg);
  const data::SampleSet set = data::assemble_dataset(world.network, world.streams, cfg.window, cfg.seed);

  const fs::path target(out);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  data::save_dataset(set, out);
  world.network.save(out + ".network.json");
  write_file_atomic(out + ".streams.json", world.streams.to_json() + "\n");

  GenSummary s;
  s.samples = set.size();
  s.roads = world.network.size();
  s.accidents = world.streams.accidents().size();
  double nodes = 0.0;
  for (const auto& sample : set) {
    s.positives += sample.label == 1 ? 1 : 0;
    nodes += static_cast<double>(sample.node_count());
  }
  s.mean_nodes = set.empty() ? 0.0 : nodes / static_cast<double>(set.size());
  return s;
}

TrainRunOutputs train_from_dataset(const data::SampleSet& set, const train::TrainConfig& cfg,
                                   const model::ModelConfig& model_cfg, const std::string& out_dir) {
  cfg.validate();
  const data::Split split = data::split_dataset(set, cfg.seed);
  fs::create_directories(out_dir);
  const fs::path dir(out_dir);

  model::SstGcn net(model_cfg, cfg.seed);
  TrainRunOutputs out;
  out.training = train::fit(net, split.train, split.val, cfg);
  out.test = train::evaluate(net, split.test);
  out.baseline_test = train::logistic_baseline(split.train, split.val, split.test, cfg).test;

  write_file_atomic((dir / "checkpoint.json").string(), net.checkpoint_json() + "\n");
  write_file_atomic((dir / "history.csv").string(), train::history_csv(out.training));
  write_file_atomic((dir / "history.json").string(), train::history_json(out.training) + "\n");
  write_file_atomic((dir / "test_report.json").string(), out.test.to_json() + "\n");
  write_file_atomic((dir / "baseline_report.json").string(), out.baseline_test.to_json() + "\n");
  data::save_dataset(split.test, (dir / "test.jsonl").string());
  return out;
}

std::string roc_csv(const std::vector<train::RocPoint>& curve) {
  std::ostringstream out;
  out.precision(17);
  out << "fpr,tpr,threshold\n";
  for (const auto& p : curve) out << p.fpr << ',' << p.tpr << ',' << p.threshold << '\n';
  return out.str();
}

train::MetricsReport evaluate_checkpoint(const std::string& checkpoint_path,
                                         const data::SampleSet& set, const std::string& out_prefix) {
  const model::SstGcn net = model::SstGcn::load_checkpoint(checkpoint_path);
  for (const auto& s : set) {
    if (s.slices.front().features.cols() != net.config().node_features ||
        s.statics.front().cols() != net.config().static_features)
      throw ConfigError("dataset feature widths do not match the checkpoint's model config");
  }
  const train::MetricsReport report = train::evaluate(net, set);
  const auto scores = train::predict_all(net, set);
  const auto labels = train::labels_of(set);
  write_file_atomic(out_prefix + ".report.json", report.to_json() + "\n");
  write_file_atomic(out_prefix + ".roc.csv", roc_csv(train::roc_curve(scores, labels)));
  return report;
}

}  // namespace sstgcn::experiments
