// sstgcn: dataset generation, training, evaluation and experiment runs.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or config error.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "sstgcn/errors.hpp"
#include "sstgcn/experiments.hpp"

namespace {

using namespace sstgcn;

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct WindowOverrides {
  std::optional<int> khop;
  std::optional<int> seq_num;
  std::optional<int> interval;
  std::optional<std::string> filter;
  std::optional<std::uint64_t> seed;

  void add_to(CLI::App* cmd, bool with_filter) {
    cmd->add_option("--seed", seed, "Override the world/dataset seed");
    cmd->add_option("--khop", khop, "K-hop radius");
    cmd->add_option("--seq-num", seq_num, "Sequence number n");
    cmd->add_option("--interval", interval, "Interval k in minutes");
    if (with_filter)
      cmd->add_option("--filter", filter, "adj-gcn | adj-lap | dist-gcn | dist-lap");
  }

  void apply(data::GeneratorConfig& cfg) const {
    if (seed) cfg.seed = *seed;
    if (khop) cfg.window.khop = *khop;
    if (seq_num) cfg.window.n = *seq_num;
    if (interval) cfg.window.k = *interval;
    if (filter) cfg.window.filter = graph::parse_filter_flag(*filter);
    if (cfg.window.khop < 1 || cfg.window.n < 1 || cfg.window.k < 1)
      throw ConfigError("khop, seq-num and interval must be >= 1");
  }
};

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Train config file: TrainConfig fields plus an optional "model" object.
void load_train_config(const std::string& path, train::TrainConfig& cfg, model::ModelConfig& model_cfg) {
  if (path.empty()) return;
  const std::string text = read_text(path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("train config " + path + ": " + e.what());
  }
  if (!doc.is_object()) throw ConfigError("train config must be a JSON object");
  if (doc.contains("model")) {
    model_cfg = model::ModelConfig::from_json(doc.at("model").dump());
    doc.erase("model");
  }
  cfg = train::TrainConfig::from_json(doc.dump());
}

void print_report(const char* title, const train::MetricsReport& r) {
  std::printf("%s: loss=%.4f precision=%.4f recall=%.4f f1=%.4f binary_accuracy=%.4f auc=%.4f\n",
              title, r.loss, r.precision, r.recall, r.f1, r.binary_accuracy, r.auc);
}

void print_grid(const experiments::GridResult& result, const std::string& out) {
  std::cout << result.means_csv();
  for (const auto& line : result.best_per_metric()) std::cout << "best " << line << '\n';
  const auto failures = result.failures();
  if (!failures.empty()) {
    std::cout << failures.size() << " cell(s) failed:\n";
    for (const auto& f : failures) std::cout << "  " << f << '\n';
  }
  std::cout << "wrote " << out << " and " << out << ".raw.csv\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SST-GCN traffic accident prediction toolkit"};
  app.require_subcommand(1);

  // gen
  std::string gen_config;
  std::string gen_out;
  WindowOverrides gen_over;
  auto* gen = app.add_subcommand("gen", "Generate a synthetic world and assemble a dataset");
  gen->add_option("--config", gen_config, "Generator config JSON")->required();
  gen->add_option("--out", gen_out, "Dataset JSON-Lines path")->required();
  gen_over.add_to(gen, true);

  // train
  std::string train_dataset;
  std::string train_config;
  std::string train_out;
  std::optional<int> train_epochs;
  std::optional<std::uint64_t> train_seed;
  auto* trn = app.add_subcommand("train", "Split a dataset 8:1:1 and train SST-GCN");
  trn->add_option("--dataset", train_dataset, "Dataset JSON-Lines path")->required();
  trn->add_option("--config", train_config, "Train config JSON (optional \"model\" block)");
  trn->add_option("--out", train_out, "Output directory")->required();
  trn->add_option("--max-epochs", train_epochs, "Override max_epochs");
  trn->add_option("--seed", train_seed, "Override the training seed");

  // grid / filters
  std::string exp_config;
  std::string exp_spec;
  std::string exp_out;
  std::optional<int> exp_repeats;
  std::optional<int> exp_epochs;
  WindowOverrides exp_over;
  auto add_experiment_options = [&](CLI::App* cmd) {
    cmd->add_option("--config", exp_config, "Generator config JSON")->required();
    cmd->add_option("--spec", exp_spec, "Experiment spec JSON");
    cmd->add_option("--out", exp_out, "Result CSV path")->required();
    cmd->add_option("--repeats", exp_repeats, "Training repeats per cell");
    cmd->add_option("--max-epochs", exp_epochs, "Override max_epochs");
  };
  auto* grid = app.add_subcommand("grid", "K-hop / sequence number / interval grid search");
  add_experiment_options(grid);
  grid->add_option("--seed", exp_over.seed, "Override the world seed");
  grid->add_option("--filter", exp_over.filter, "Filter used for every cell");
  auto* filters = app.add_subcommand("filters", "Compare the four adjacency preprocessing variants");
  add_experiment_options(filters);
  exp_over.add_to(filters, false);

  // eval
  std::string eval_checkpoint;
  std::string eval_dataset;
  std::string eval_out;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint; write a report and ROC points");
  ev->add_option("--checkpoint", eval_checkpoint, "Checkpoint JSON")->required();
  ev->add_option("--dataset", eval_dataset, "Dataset JSON-Lines path")->required();
  ev->add_option("--out", eval_out, "Output prefix")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*gen) {
      data::GeneratorConfig cfg = data::GeneratorConfig::load(gen_config);
      gen_over.apply(cfg);
      const auto s = experiments::generate_dataset_files(cfg, gen_out);
      std::printf("samples=%zu positives=%zu negatives=%zu roads=%zu accidents=%zu mean_nodes=%.2f\n",
                  s.samples, s.positives, s.samples - s.positives, s.roads, s.accidents, s.mean_nodes);
      std::printf("khop=%d n=%d k=%d filter=%s\n", cfg.window.khop, cfg.window.n, cfg.window.k,
                  std::string(graph::filter_flag(cfg.window.filter)).c_str());
      std::printf("wrote %s\n", gen_out.c_str());
    } else if (*trn) {
      train::TrainConfig cfg;
      model::ModelConfig model_cfg;
      load_train_config(train_config, cfg, model_cfg);
      if (train_epochs) cfg.max_epochs = *train_epochs;
      if (train_seed) cfg.seed = *train_seed;
      cfg.validate();
      const data::SampleSet set = data::load_dataset(train_dataset);
      const auto out = experiments::train_from_dataset(set, cfg, model_cfg, train_out);
      std::printf("epochs=%zu best_epoch=%d best_val_auc=%.4f stopped_early=%s\n",
                  out.training.history.size(), out.training.best_epoch, out.training.best_val_auc,
                  out.training.stopped_early ? "yes" : "no");
      print_report("test", out.test);
      print_report("logistic baseline test", out.baseline_test);
      std::printf("wrote %s\n", train_out.c_str());
    } else if (*grid || *filters) {
      data::GeneratorConfig gen_cfg = data::GeneratorConfig::load(exp_config);
      experiments::ExperimentSpec spec;
      if (!exp_spec.empty()) spec = experiments::ExperimentSpec::load(exp_spec);
      if (exp_repeats) spec.repeats = *exp_repeats;
      if (exp_epochs) spec.train.max_epochs = *exp_epochs;
      if (exp_over.filter) spec.filters = {graph::parse_filter_flag(*exp_over.filter)};
      exp_over.filter.reset();
      exp_over.apply(gen_cfg);
      spec.validate();
      experiments::GridResult result;
      const std::string cell_dir = exp_out + ".cells";
      if (*grid) {
        std::printf("grid: %zu cells, repeats=%d, max_epochs=%d\n",
                    spec.khop_values.size() * spec.seq_numbers.size() * spec.intervals_minutes.size(),
                    spec.repeats, spec.train.max_epochs);
        result = experiments::run_grid(gen_cfg, spec, cell_dir);
      } else {
        std::printf("filters: khop=%d n=%d k=%d repeats=%d max_epochs=%d\n", gen_cfg.window.khop,
                    gen_cfg.window.n, gen_cfg.window.k, spec.repeats, spec.train.max_epochs);
        result = experiments::run_filters(gen_cfg, spec, cell_dir);
      }
      experiments::write_file_atomic(exp_out, result.means_csv());
      experiments::write_file_atomic(exp_out + ".raw.csv", result.raws_csv());
      print_grid(result, exp_out);
      if (result.failures().size() == result.cells.size()) return kExitRuntime;
    } else if (*ev) {
      const data::SampleSet set = data::load_dataset(eval_dataset);
      const auto report = experiments::evaluate_checkpoint(eval_checkpoint, set, eval_out);
      print_report("eval", report);
      std::printf("wrote %s.report.json and %s.roc.csv\n", eval_out.c_str(), eval_out.c_str());
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return 0;
}
