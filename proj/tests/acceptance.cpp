// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure.

#include <sys/wait.h>

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <numeric>
#include <queue>
#include <set>
#include <sstream>

#include "nlohmann/json.hpp"
#include "sstgcn/experiments.hpp"
#include "support.hpp"

using namespace sstgcn;
using testsupport::Rng;
using num::Matrix;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* pattern, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, pattern, a, b, c, d);
  return buf;
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(SSTGCN_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// ---------------------------------------------------------------- criterion 1

Outcome gradient_correctness() {
  const auto start = Clock::now();
  Rng rng(101);
  double worst = 0.0;
  std::string worst_name;
  for (int i = 0; i < 20; ++i) {
    const auto nodes = static_cast<std::size_t>(testsupport::uniform_int(rng, 1, 12));
    const data::Sample s = testsupport::random_sample(rng, nodes, 3, i % 2);
    // Zero biases put isolated nodes exactly on the PReLU kink, so draw
    // every parameter at random instead of using the initializer.
    model::ModelParams p = model::ModelParams::initialize(model::ModelConfig{}, 500 + i);
    for (auto& [name, t] : p.named())
      for (double& v : t.mutable_value().values()) v = testsupport::uniform(rng, -0.5, 0.5);
    auto f = [&](num::Tape& t) {
      return num::binary_cross_entropy(t, model::predict(t, s, p), s.label);
    };
    for (const auto& [name, t] : p.named()) {
      const double err = num::grad_check(f, t, 1e-5);
      if (err > worst) {
        worst = err;
        worst_name = name;
      }
    }
  }
  const double secs = seconds_since(start);
  return {worst < 1e-4 && secs < 60.0,
          fmt("max rel err %.2e", worst) + " (" + worst_name + ")" + fmt(", %.1f s", secs)};
}

// ---------------------------------------------------------------- criterion 2

std::vector<double> dijkstra(std::size_t n, const std::vector<graph::WeightedEdge>& edges,
                             std::size_t src) {
  std::vector<std::vector<std::pair<std::size_t, double>>> adj(n);
  for (const auto& e : edges) {
    adj[e.u].push_back({e.v, e.length});
    adj[e.v].push_back({e.u, e.length});
  }
  std::vector<double> dist(n, graph::kDisconnected);
  using Item = std::pair<double, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  dist[src] = 0.0;
  pq.push({0.0, src});
  while (!pq.empty()) {
    auto [d, u] = pq.top();
    pq.pop();
    if (d > dist[u]) continue;
    for (auto [v, w] : adj[u])
      if (d + w < dist[v]) {
        dist[v] = d + w;
        pq.push({dist[v], v});
      }
  }
  return dist;
}

std::set<std::int64_t> bfs_set(const graph::RoadNetwork& net, graph::RoadId center, int k) {
  std::vector<int> hop(net.size(), -1);
  std::queue<std::size_t> q;
  hop[net.index_of(center)] = 0;
  q.push(net.index_of(center));
  while (!q.empty()) {
    const std::size_t u = q.front();
    q.pop();
    if (hop[u] == k) continue;
    for (std::size_t v = 0; v < net.size(); ++v)
      if (hop[v] < 0 && net.adjacent(u, v)) {
        hop[v] = hop[u] + 1;
        q.push(v);
      }
  }
  std::set<std::int64_t> out;
  for (std::size_t i = 0; i < net.size(); ++i)
    if (hop[i] >= 0) out.insert(graph::to_int(net.road(i).id));
  return out;
}

Eigen::MatrixXd to_eigen(const Matrix& m) {
  Eigen::MatrixXd e(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) e(r, c) = m(r, c);
  return e;
}

Outcome graph_oracles() {
  Rng rng(202);
  double fw_err = 0.0;
  bool fw_ok = true;
  for (int trial = 0; trial < 100; ++trial) {
    const auto n = static_cast<std::size_t>(testsupport::uniform_int(rng, 1, 15));
    std::vector<graph::WeightedEdge> edges;
    for (std::size_t u = 0; u < n; ++u)
      for (std::size_t v = u + 1; v < n; ++v)
        if (testsupport::uniform(rng) < 0.3)
          edges.push_back({u, v, testsupport::uniform(rng, 0.1, 10.0)});
    const Matrix d = graph::floyd_warshall(n, edges);
    for (std::size_t s = 0; s < n; ++s) {
      const auto ref = dijkstra(n, edges, s);
      for (std::size_t t = 0; t < n; ++t) {
        if (ref[t] == graph::kDisconnected) {
          fw_ok = fw_ok && d(s, t) == graph::kDisconnected;
        } else {
          fw_err = std::max(fw_err, std::abs(d(s, t) - ref[t]));
        }
      }
    }
  }
  fw_ok = fw_ok && fw_err <= 1e-9;

  int khop_mismatches = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = testsupport::uniform_int(rng, 1, 15);
    const auto net = testsupport::random_network(rng, n, 0.2);
    for (int c = 1; c <= n; ++c)
      for (int k = 1; k <= 4; ++k) {
        std::set<std::int64_t> got;
        for (auto id : graph::khop_subgraph(net, graph::RoadId{c}, k)) got.insert(graph::to_int(id));
        if (got != bfs_set(net, graph::RoadId{c}, k)) ++khop_mismatches;
      }
  }

  double ev_min = 1e300, ev_max = -1e300;
  for (int trial = 0; trial < 100; ++trial) {
    const auto n = static_cast<std::size_t>(testsupport::uniform_int(rng, 1, 15));
    const Matrix l = graph::normalized_laplacian(testsupport::random_weights(rng, n, 0.5));
    const Eigen::VectorXd ev =
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(to_eigen(l), Eigen::EigenvaluesOnly).eigenvalues();
    ev_min = std::min(ev_min, ev.minCoeff());
    ev_max = std::max(ev_max, ev.maxCoeff());
  }
  // Roundoff can push the zero eigenvalue a hair below zero.
  const bool ev_ok = ev_min >= -1e-9 && ev_max <= 2.0 + 1e-9;
  return {fw_ok && khop_mismatches == 0 && ev_ok,
          fmt("fw max err %.1e, khop mismatches %.0f, eigenvalues in [%.3g, %.6g]", fw_err,
              khop_mismatches, ev_min, ev_max)};
}

// ---------------------------------------------------------------- criterion 3

Outcome filter_algebra() {
  Rng rng(303);
  std::vector<Matrix> graphs;
  for (int trial = 0; trial < 100; ++trial)
    graphs.push_back(testsupport::random_weights(rng, testsupport::uniform_int(rng, 1, 15), 0.5));
  for (int trial = 0; trial < 50; ++trial) {
    const auto net = testsupport::random_network(rng, 30, 0.1);
    const auto nodes = graph::khop_subgraph(net, graph::RoadId{testsupport::uniform_int(rng, 1, 30)}, 2);
    graphs.push_back(graph::adjacency_weight_matrix(net, nodes));
    graphs.push_back(graph::distance_weight_matrix(graph::floyd_warshall(net, nodes)));
  }
  double worst = 0.0;
  for (const Matrix& a : graphs) {
    const Matrix g = graph::gcn_filter(a);
    const Matrix l = graph::normalized_laplacian(a);
    for (std::size_t i = 0; i < a.rows(); ++i)
      for (std::size_t j = 0; j < a.cols(); ++j)
        worst = std::max(worst, std::abs(g(i, j) + l(i, j) - (i == j ? 1.0 : 0.0)));
  }
  return {worst <= 1e-12, fmt("%.0f graphs, max |G + L - I| = %.1e", static_cast<double>(graphs.size()), worst)};
}

// ---------------------------------------------------------------- criterion 4

data::Sample permuted(const data::Sample& s, const std::vector<std::size_t>& perm) {
  data::Sample out = s;
  const std::size_t n = s.node_count();
  Matrix lap(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) lap(i, j) = s.laplacian()(perm[i], perm[j]);
  auto shared = std::make_shared<const Matrix>(lap);
  for (std::size_t q = 0; q < s.slices.size(); ++q) {
    Matrix f(n, s.slices[q].features.cols());
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < f.cols(); ++c) f(i, c) = s.slices[q].features(perm[i], c);
    out.slices[q] = {f, shared};
  }
  for (std::size_t i = 0; i < n; ++i) out.nodes[i] = s.nodes[perm[i]];
  return out;
}

Outcome model_invariances() {
  Rng rng(404);
  model::ModelParams p = model::ModelParams::initialize(model::ModelConfig{}, 404);
  for (auto& [name, t] : p.named())
    for (double& v : t.mutable_value().values()) v = testsupport::uniform(rng, -0.4, 0.4);
  const model::SstGcn m(p);
  const data::Sample s = testsupport::random_sample(rng, 10, 3);
  const double base = m.predict(s);
  double perm_err = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::size_t> perm(s.node_count());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    perm_err = std::max(perm_err, std::abs(m.predict(permuted(s, perm)) - base));
  }

  bool widths_ok = true;
  for (std::size_t n = 1; n <= 200; ++n) {
    const data::Sample x = testsupport::random_sample(rng, n, 1);
    num::Tape tape;
    const auto e = model::slice_embed(tape, num::Tensor::constant(x.slices[0].features),
                                      num::Tensor::constant(x.laplacian()),
                                      num::Tensor::constant(x.statics[0]), p);
    widths_ok = widths_ok && e.rows() == 1 && e.cols() == 16;
  }

  const model::SstGcn zero(model::ModelParams::zeros(model::ModelConfig{}));
  bool half = true;
  for (std::size_t n : {1u, 5u, 12u, 40u}) half = half && zero.predict(testsupport::random_sample(rng, n)) == 0.5;

  return {perm_err <= 1e-9 && widths_ok && half,
          fmt("perm max diff %.1e", perm_err) + ", width 16 for 1..200: " + (widths_ok ? "yes" : "no") +
              ", zero params -> 0.5: " + (half ? "yes" : "no")};
}

// ---------------------------------------------------------------- criterion 5

double pair_count_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] == 1 && y[j] == 0) {
        pairs += 1.0;
        wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
  return wins / pairs;
}

Outcome metrics_oracles() {
  Rng rng(505);
  int mismatches = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = testsupport::uniform_int(rng, 2, 50);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (int i = 0; i < n; ++i) {
      s[i] = testsupport::uniform_int(rng, 0, 20) / 20.0;
      y[i] = testsupport::uniform_int(rng, 0, 1);
    }
    y[0] = 1;
    y[1] = 0;
    if (train::auc(s, y) != pair_count_auc(s, y)) ++mismatches;
  }

  const auto report = nlohmann::json::parse(train::MetricsReport{}.to_json());
  int missing = 0;
  for (const char* key : {"precision", "recall", "f1", "binary_accuracy", "auc"})
    missing += report.contains(key) ? 0 : 1;

  const auto half = train::classification_metrics(std::vector<double>{0.9, 0.6, 0.4, 0.1},
                                                  std::vector<int>{1, 0, 1, 0});
  const bool confusion_ok = half.precision == 0.5 && half.recall == 0.5 && half.f1 == 0.5 &&
                            half.binary_accuracy == 0.5;
  return {mismatches == 0 && missing == 0 && confusion_ok,
          fmt("auc mismatches %.0f/200, missing report keys %.0f", mismatches, missing) +
              ", confusion example " + (confusion_ok ? "ok" : "wrong")};
}

// ---------------------------------------------------------------- criterion 6

double sigm(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Outcome lstm_adam_oracles() {
  Rng rng(606);
  model::ModelParams p = model::ModelParams::initialize(model::ModelConfig{}, 606);
  for (auto& [name, t] : p.named())
    for (double& v : t.mutable_value().values()) v = testsupport::uniform(rng, -1.0, 1.0);
  std::vector<num::Tensor> seq;
  for (int q = 0; q < 2; ++q) seq.push_back(num::Tensor::constant(testsupport::random_matrix(rng, 1, 16)));
  num::Tape tape;
  const Matrix h = model::lstm_forward(tape, seq, p.lstm).value();

  std::vector<double> hv(8, 0.0), cv(8, 0.0);
  for (const auto& x : seq) {
    std::vector<double> hx = hv;
    for (double v : x.value().values()) hx.push_back(v);
    auto gate = [&](const num::Tensor& w, const num::Tensor& b, std::size_t j) {
      double z = b.value()[j];
      for (std::size_t r = 0; r < hx.size(); ++r) z += hx[r] * w.value()(r, j);
      return z;
    };
    for (std::size_t j = 0; j < 8; ++j) {
      const double i = sigm(gate(p.lstm.w_i, p.lstm.b_i, j));
      const double f = sigm(gate(p.lstm.w_f, p.lstm.b_f, j));
      const double o = sigm(gate(p.lstm.w_o, p.lstm.b_o, j));
      const double cand = std::tanh(gate(p.lstm.w_c, p.lstm.b_c, j));
      cv[j] = f * cv[j] + i * cand;
      hv[j] = o * std::tanh(cv[j]);
    }
  }
  double lstm_err = 0.0;
  for (std::size_t j = 0; j < 8; ++j) lstm_err = std::max(lstm_err, std::abs(h[j] - hv[j]));

  train::TrainConfig cfg;
  cfg.learning_rate = 0.01;
  cfg.decay = 0.05;
  const Matrix start = testsupport::random_matrix(rng, 3, 4);
  const Matrix g1 = testsupport::random_matrix(rng, 3, 4);
  const Matrix g2 = testsupport::random_matrix(rng, 3, 4);
  num::Tensor theta = num::Tensor::parameter(start);
  std::vector<num::Tensor> params{theta};
  train::AdamState state;
  train::adam_step(params, std::vector<Matrix>{g1}, state, cfg);
  train::adam_step(params, std::vector<Matrix>{g2}, state, cfg);
  double adam_err = 0.0;
  for (std::size_t i = 0; i < start.size(); ++i) {
    double x = start[i], m = 0.0, v = 0.0;
    const double grads[2] = {g1[i], g2[i]};
    for (int t = 1; t <= 2; ++t) {
      const double g = grads[t - 1];
      const double lr = cfg.learning_rate / (1.0 + cfg.decay * (t - 1));
      const double lr_t = lr * std::sqrt(1.0 - std::pow(cfg.beta2, t)) / (1.0 - std::pow(cfg.beta1, t));
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
      v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
      x -= lr_t * m / (std::sqrt(v) + cfg.epsilon);
    }
    adam_err = std::max(adam_err, std::abs(theta.value()[i] - x));
  }
  return {lstm_err <= 1e-12 && adam_err <= 1e-12,
          fmt("lstm max err %.1e, adam max err %.1e", lstm_err, adam_err)};
}

// ---------------------------------------------------------------- criterion 7

Outcome end_to_end_learning() {
  const auto start = Clock::now();
  const data::GeneratorConfig gen;
  const auto world = experiments::generate_world(gen);
  const data::SampleSet set = data::assemble_dataset(world.network, world.streams, gen.window, gen.seed);
  const train::TrainConfig cfg;
  const auto dir = testsupport::temp_dir("acceptance_e2e");
  const auto out = experiments::train_from_dataset(set, cfg, model::ModelConfig{}, dir.string());
  const double secs = seconds_since(start);
  const double margin = out.test.auc - out.baseline_test.auc;
  const bool ok = out.training.best_val_auc >= 0.75 &&
                  out.training.history.size() <= 100 && secs < 600.0 && margin >= 0.03;
  return {ok, fmt("%.0f samples, val auc %.4f, test auc %.4f vs LR %.4f", static_cast<double>(set.size()),
                  out.training.best_val_auc, out.test.auc, out.baseline_test.auc) +
                  fmt(", %.0f epochs, %.1f s", static_cast<double>(out.training.history.size()), secs)};
}

// ---------------------------------------------------------------- criterion 8

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

bool row_complete(const std::string& line) {
  int fields = 1;
  bool empty_field = line.empty() || line.back() == ',' || line.find(",,") != std::string::npos;
  for (char c : line) fields += c == ',';
  return fields == 7 && !empty_field;
}

Outcome experiment_harness() {
  const auto dir = testsupport::temp_dir("acceptance_grid");
  testsupport::write_file(dir / "gen.json", R"({"seed": 11, "n_roads": 20, "days": 3})");
  const std::string common = " --config " + (dir / "gen.json").string() + " --repeats 1 --max-epochs 5";
  const int grid_code = run_cli("grid" + common + " --out " + (dir / "grid.csv").string(), dir / "grid.log");
  const auto grid = lines_of(testsupport::read_file(dir / "grid.csv"));
  const std::string grid_header = "KHOP/SeqNum/Interval,Loss,Precision,Recall,F1-Score,Binary Accuracy,AUC";
  std::set<std::string> cells;
  bool rows_ok = grid.size() == 37 && grid[0] == grid_header;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    rows_ok = rows_ok && row_complete(grid[i]);
    cells.insert(grid[i].substr(0, grid[i].find(',')));
  }
  for (int khop : {1, 2, 3, 4})
    for (int n : {2, 3, 4})
      for (int k : {5, 10, 15})
        rows_ok = rows_ok && cells.count(std::to_string(khop) + "/" + std::to_string(n) + "/" +
                                         std::to_string(k)) == 1;

  const int filt_code =
      run_cli("filters" + common + " --out " + (dir / "filters.csv").string(), dir / "filters.log");
  const auto filt = lines_of(testsupport::read_file(dir / "filters.csv"));
  const std::vector<std::string> labels = {
      "Adjacent Matrix + GCN Filter", "Adjacent Matrix + Normalized Laplacian Filter",
      "Distance Matrix + GCN Filter", "Distance Matrix + Normalized Laplacian Filter"};
  bool filt_ok = filt.size() == 5 &&
                 filt[0] == "Preprocessing,Loss,Precision,Recall,F1-Score,Binary Accuracy,AUC";
  for (std::size_t i = 1; filt_ok && i < filt.size(); ++i)
    filt_ok = row_complete(filt[i]) && filt[i].rfind(labels[i - 1] + ",", 0) == 0;

  return {grid_code == 0 && filt_code == 0 && rows_ok && filt_ok,
          fmt("grid rows %.0f (exit %.0f), filter rows %.0f (exit %.0f)",
              static_cast<double>(grid.empty() ? 0 : grid.size() - 1), grid_code,
              static_cast<double>(filt.empty() ? 0 : filt.size() - 1), filt_code)};
}

// ---------------------------------------------------------------- criterion 9

Outcome reproducibility() {
  const auto dir = testsupport::temp_dir("acceptance_repro");
  const std::string config = std::string(SSTGCN_SOURCE_DIR) + "/configs/generator.json";
  std::string data[2], reports[2], checkpoints[2];
  int failures = 0;
  for (int r = 0; r < 2; ++r) {
    const fs::path ds = dir / ("run" + std::to_string(r) + ".jsonl");
    const fs::path out = dir / ("train" + std::to_string(r));
    failures += run_cli("gen --config " + config + " --out " + ds.string(), dir / "gen.log") != 0;
    failures += run_cli("train --dataset " + ds.string() + " --seed 5 --out " + out.string(),
                        dir / "train.log") != 0;
    data[r] = testsupport::read_file(ds);
    reports[r] = testsupport::read_file(out / "test_report.json");
    checkpoints[r] = testsupport::read_file(out / "checkpoint.json");
  }
  const bool same_data = !data[0].empty() && data[0] == data[1];
  const bool same_metrics = !reports[0].empty() && reports[0] == reports[1];
  const bool same_weights = !checkpoints[0].empty() && checkpoints[0] == checkpoints[1];
  return {failures == 0 && same_data && same_metrics && same_weights,
          std::string("dataset identical: ") + (same_data ? "yes" : "no") +
              ", test report identical: " + (same_metrics ? "yes" : "no") +
              ", checkpoint identical: " + (same_weights ? "yes" : "no")};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"gradient correctness", gradient_correctness},
      {"graph oracles", graph_oracles},
      {"filter algebra", filter_algebra},
      {"model invariances", model_invariances},
      {"metrics oracles", metrics_oracles},
      {"lstm and adam oracles", lstm_adam_oracles},
      {"end-to-end learning", end_to_end_learning},
      {"experiment harness", experiment_harness},
      {"reproducibility", reproducibility},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::printf("%s %zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
