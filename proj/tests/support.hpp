#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "sstgcn/dataset.hpp"
#include "sstgcn/model.hpp"
#include "sstgcn/roadgraph.hpp"

namespace testsupport {

using sstgcn::num::Matrix;
using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo = 0.0, double hi = 1.0) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline int uniform_int(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double lo = -1.0,
                            double hi = 1.0) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = uniform(rng, lo, hi);
  return m;
}

inline sstgcn::graph::RoadAttributes random_attributes(Rng& rng) {
  sstgcn::graph::RoadAttributes a;
  a.lanes = uniform_int(rng, 1, 7);
  a.speed_limit = 10.0 * uniform_int(rng, 1, 11);
  a.length_m = uniform(rng, 20.0, 2000.0);
  a.bump = uniform(rng) < 0.3;
  a.camera = uniform(rng) < 0.3;
  for (int& p : a.poi) p = uniform_int(rng, 0, 10);
  a.heading_deg = uniform(rng, 0.0, 360.0);
  return a;
}

// Roads 1..n with each pair joined with probability p.
inline sstgcn::graph::RoadNetwork random_network(Rng& rng, int n, double p) {
  using sstgcn::graph::RoadId;
  sstgcn::graph::RoadNetwork net;
  for (int i = 1; i <= n; ++i) net.add_road({RoadId{i}, random_attributes(rng)});
  for (int i = 1; i <= n; ++i)
    for (int j = i + 1; j <= n; ++j)
      if (uniform(rng) < p) net.add_edge(RoadId{i}, RoadId{j});
  return net;
}

// Symmetric nonnegative weights with a positive diagonal.
inline Matrix random_weights(Rng& rng, std::size_t n, double density = 0.5) {
  Matrix a(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    a(i, i) = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double w = uniform(rng) < density ? uniform(rng, 0.01, 1.0) : 0.0;
      a(i, j) = w;
      a(j, i) = w;
    }
  }
  return a;
}

inline sstgcn::data::Sample random_sample(Rng& rng, std::size_t nodes, int n_slices = 3,
                                          int label = 0) {
  using namespace sstgcn;
  data::Sample s;
  s.label = label;
  s.center = graph::RoadId{1};
  s.n = n_slices;
  s.k = 5;
  s.t = 100;
  for (std::size_t i = 0; i < nodes; ++i) s.nodes.push_back(graph::RoadId{static_cast<int>(i) + 1});
  auto lap = std::make_shared<const Matrix>(graph::normalized_laplacian(random_weights(rng, nodes)));
  for (int q = 0; q < n_slices; ++q) {
    s.slices.push_back({random_matrix(rng, nodes, data::kNodeFeatureWidth, 0.0, 1.0), lap});
    s.statics.push_back(random_matrix(rng, 1, data::kStaticWidth, 0.0, 1.0));
  }
  return s;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("sstgcn_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

}  // namespace testsupport
