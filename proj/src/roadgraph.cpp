#include "sstgcn/roadgraph.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "sstgcn/errors.hpp"

namespace sstgcn::graph {

using nlohmann::json;

namespace {

std::string id_string(RoadId id) { return std::to_string(to_int(id)); }

}  // namespace

void validate_attributes(const RoadAttributes& a) {
  auto fail = [](const std::string& what) { throw ValidationError("road attribute " + what); };
  if (a.lanes < 1 || a.lanes > 7) fail("lanes outside [1, 7]: " + std::to_string(a.lanes));
  if (!(a.speed_limit >= 10.0 && a.speed_limit <= 110.0))
    fail("speed_limit outside [10, 110]: " + std::to_string(a.speed_limit));
  if (!(a.length_m > 0.0) || !std::isfinite(a.length_m))
    fail("length_m must be positive: " + std::to_string(a.length_m));
  for (int c : a.poi)
    if (c < 0 || c > 10) fail("poi count outside [0, 10]: " + std::to_string(c));
  if (!(a.heading_deg >= 0.0 && a.heading_deg < 360.0))
    fail("heading_deg outside [0, 360): " + std::to_string(a.heading_deg));
}

std::size_t RoadNetwork::add_road(Road road) {
  validate_attributes(road.attributes);
  if (index_.contains(road.id)) throw ValidationError("duplicate road id " + id_string(road.id));
  const std::size_t idx = roads_.size();
  index_.emplace(road.id, idx);
  roads_.push_back(std::move(road));
  adjacency_.emplace_back();
  return idx;
}

void RoadNetwork::add_edge(RoadId a, RoadId b) {
  const std::size_t ia = index_of(a);
  const std::size_t ib = index_of(b);
  if (ia == ib) throw ValidationError("self loop on road " + id_string(a));
  auto insert_sorted = [](std::vector<std::size_t>& list, std::size_t v) {
    auto pos = std::lower_bound(list.begin(), list.end(), v);
    if (pos == list.end() || *pos != v) list.insert(pos, v);
  };
  insert_sorted(adjacency_[ia], ib);
  insert_sorted(adjacency_[ib], ia);
}

std::size_t RoadNetwork::index_of(RoadId id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw LookupError("unknown road id " + id_string(id));
  return it->second;
}

bool RoadNetwork::adjacent(std::size_t a, std::size_t b) const {
  const auto& list = adjacency_.at(a);
  return std::binary_search(list.begin(), list.end(), b);
}

std::size_t RoadNetwork::edge_count() const {
  std::size_t twice = 0;
  for (const auto& list : adjacency_) twice += list.size();
  return twice / 2;
}

bool RoadNetwork::connected() const {
  if (roads_.empty()) return true;
  std::vector<bool> seen(roads_.size(), false);
  std::deque<std::size_t> queue{0};
  seen[0] = true;
  std::size_t count = 1;
  while (!queue.empty()) {
    const std::size_t u = queue.front();
    queue.pop_front();
    for (std::size_t v : adjacency_[u]) {
      if (seen[v]) continue;
      seen[v] = true;
      ++count;
      queue.push_back(v);
    }
  }
  return count == roads_.size();
}

RoadNetwork RoadNetwork::from_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("road network: ") + e.what());
  }
  RoadNetwork net;
  try {
    for (const auto& r : doc.at("roads")) {
      Road road;
      road.id = RoadId{r.at("id").get<std::int64_t>()};
      auto& a = road.attributes;
      a.lanes = r.at("lanes").get<int>();
      a.speed_limit = r.at("speed_limit").get<double>();
      a.length_m = r.at("length_m").get<double>();
      a.bump = r.at("bump").get<int>() != 0;
      a.camera = r.at("camera").get<int>() != 0;
      const auto& poi = r.at("poi");
      if (!poi.is_array() || poi.size() != kPoiCategories)
        throw ValidationError("road " + id_string(road.id) + ": poi must hold 10 counts");
      for (std::size_t i = 0; i < kPoiCategories; ++i) a.poi[i] = poi[i].get<int>();
      a.heading_deg = r.at("heading_deg").get<double>();
      net.add_road(std::move(road));
    }
    for (const auto& e : doc.at("edges")) {
      if (!e.is_array() || e.size() != 2) throw ValidationError("edge must be an [id, id] pair");
      net.add_edge(RoadId{e[0].get<std::int64_t>()}, RoadId{e[1].get<std::int64_t>()});
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("road network: ") + e.what());
  }
  return net;
}

std::string RoadNetwork::to_json() const {
  json roads = json::array();
  for (const auto& r : roads_) {
    const auto& a = r.attributes;
    roads.push_back({{"id", to_int(r.id)},
                     {"lanes", a.lanes},
                     {"speed_limit", a.speed_limit},
                     {"length_m", a.length_m},
                     {"bump", a.bump ? 1 : 0},
                     {"camera", a.camera ? 1 : 0},
                     {"poi", a.poi},
                     {"heading_deg", a.heading_deg}});
  }
  json edges = json::array();
  for (std::size_t u = 0; u < adjacency_.size(); ++u)
    for (std::size_t v : adjacency_[u])
      if (u < v) edges.push_back({to_int(roads_[u].id), to_int(roads_[v].id)});
  return json{{"roads", roads}, {"edges", edges}}.dump();
}

RoadNetwork RoadNetwork::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open road network file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str());
}

void RoadNetwork::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write road network file " + path);
  out << to_json() << '\n';
}

// ---------------------------------------------------------------------------

std::vector<RoadId> khop_subgraph(const RoadNetwork& net, RoadId center, int k) {
  if (k < 1) throw ContractError("K-hop radius must be >= 1, got " + std::to_string(k));
  const std::size_t start = net.index_of(center);

  std::vector<int> hop(net.size(), -1);
  hop[start] = 0;
  std::deque<std::size_t> queue{start};
  std::vector<std::size_t> reached{start};
  while (!queue.empty()) {
    const std::size_t u = queue.front();
    queue.pop_front();
    if (hop[u] == k) continue;
    for (std::size_t v : net.neighbors(u)) {
      if (hop[v] >= 0) continue;
      hop[v] = hop[u] + 1;
      reached.push_back(v);
      queue.push_back(v);
    }
  }

  std::sort(reached.begin() + 1, reached.end(), [&](std::size_t a, std::size_t b) {
    if (hop[a] != hop[b]) return hop[a] < hop[b];
    return to_int(net.road(a).id) < to_int(net.road(b).id);
  });
  std::vector<RoadId> out;
  out.reserve(reached.size());
  for (std::size_t idx : reached) out.push_back(net.road(idx).id);
  return out;
}

Matrix floyd_warshall(std::size_t n, std::span<const WeightedEdge> edges) {
  Matrix d(n, n, kDisconnected);
  for (std::size_t i = 0; i < n; ++i) d(i, i) = 0.0;
  for (const auto& e : edges) {
    if (e.u >= n || e.v >= n) throw ContractError("edge endpoint out of range");
    if (!(e.length >= 0.0) || !std::isfinite(e.length))
      throw ValidationError("edge length must be non-negative and finite, got " +
                            std::to_string(e.length));
    if (e.u == e.v) continue;
    d(e.u, e.v) = std::min(d(e.u, e.v), e.length);
    d(e.v, e.u) = d(e.u, e.v);
  }
  for (std::size_t m = 0; m < n; ++m) {
    for (std::size_t i = 0; i < n; ++i) {
      const double dim = d(i, m);
      if (dim == kDisconnected) continue;
      for (std::size_t j = 0; j < n; ++j) {
        const double via = dim + d(m, j);
        if (via < d(i, j)) d(i, j) = via;
      }
    }
  }
  return d;
}

Matrix floyd_warshall(const RoadNetwork& net, std::span<const RoadId> nodes) {
  std::vector<std::size_t> idx;
  idx.reserve(nodes.size());
  for (RoadId id : nodes) idx.push_back(net.index_of(id));
  std::vector<WeightedEdge> edges;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    for (std::size_t j = i + 1; j < idx.size(); ++j) {
      if (!net.adjacent(idx[i], idx[j])) continue;
      const double len =
          (net.road(idx[i]).attributes.length_m + net.road(idx[j]).attributes.length_m) / 2.0;
      edges.push_back({i, j, len});
    }
  }
  return floyd_warshall(nodes.size(), edges);
}

Matrix distance_weight_matrix(const Matrix& distances) {
  const std::size_t n = distances.rows();
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j && std::isfinite(distances(i, j))) {
        total += distances(i, j);
        ++count;
      }
  const double sigma = (count == 0 || total == 0.0) ? 1.0 : total / static_cast<double>(count);

  Matrix w(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j || !std::isfinite(distances(i, j))) continue;
      const double r = distances(i, j) / sigma;
      w(i, j) = std::exp(-r * r);
    }
    w(i, i) += 1.0;
  }
  return w;
}

Matrix adjacency_weight_matrix(const RoadNetwork& net, std::span<const RoadId> nodes) {
  std::vector<std::size_t> idx;
  idx.reserve(nodes.size());
  for (RoadId id : nodes) idx.push_back(net.index_of(id));
  Matrix a = Matrix::identity(nodes.size());
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (std::size_t j = 0; j < idx.size(); ++j)
      if (i != j && net.adjacent(idx[i], idx[j])) a(i, j) = 1.0;
  return a;
}

Matrix gcn_filter(const Matrix& a) {
  if (a.rows() != a.cols()) throw ShapeError("filter input must be square, got " + a.shape_string());
  const std::size_t n = a.rows();
  std::vector<double> inv_sqrt(n);
  for (std::size_t i = 0; i < n; ++i) {
    double deg = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (a(i, j) < 0.0) throw ValidationError("filter input has a negative weight");
      deg += a(i, j);
    }
    if (!(deg > 0.0)) {
      throw DegenerateGraphError("row " + std::to_string(i) + " of the weight matrix sums to zero");
    }
    inv_sqrt[i] = 1.0 / std::sqrt(deg);
  }
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) = inv_sqrt[i] * a(i, j) * inv_sqrt[j];
  // Symmetrize exactly; the two triangles can differ in the last ulp.
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double avg = 0.5 * (out(i, j) + out(j, i));
      out(i, j) = out(j, i) = avg;
    }
  return out;
}

Matrix normalized_laplacian(const Matrix& a) {
  Matrix l = gcn_filter(a);
  for (std::size_t i = 0; i < l.rows(); ++i)
    for (std::size_t j = 0; j < l.cols(); ++j) l(i, j) = (i == j ? 1.0 : 0.0) - l(i, j);
  return l;
}

std::string_view filter_flag(FilterKind kind) {
  switch (kind) {
    case FilterKind::kAdjacentGcn: return "adj-gcn";
    case FilterKind::kAdjacentLaplacian: return "adj-lap";
    case FilterKind::kDistanceGcn: return "dist-gcn";
    case FilterKind::kDistanceLaplacian: return "dist-lap";
  }
  return "?";
}

FilterKind parse_filter_flag(std::string_view flag) {
  for (FilterKind k : kAllFilterKinds)
    if (filter_flag(k) == flag) return k;
  throw ConfigError("unknown filter '" + std::string(flag) +
                    "' (expected adj-gcn, adj-lap, dist-gcn or dist-lap)");
}

std::string_view filter_label(FilterKind kind) {
  switch (kind) {
    case FilterKind::kAdjacentGcn: return "Adjacent Matrix + GCN Filter";
    case FilterKind::kAdjacentLaplacian: return "Adjacent Matrix + Normalized Laplacian Filter";
    case FilterKind::kDistanceGcn: return "Distance Matrix + GCN Filter";
    case FilterKind::kDistanceLaplacian: return "Distance Matrix + Normalized Laplacian Filter";
  }
  return "?";
}

Subgraph build_subgraph(const RoadNetwork& net, RoadId center, int k, FilterKind kind) {
  Subgraph sg;
  sg.nodes = khop_subgraph(net, center, k);
  sg.center_index = 0;
  sg.distances = floyd_warshall(net, sg.nodes);
  const bool distance_based =
      kind == FilterKind::kDistanceGcn || kind == FilterKind::kDistanceLaplacian;
  const Matrix weights = distance_based ? distance_weight_matrix(sg.distances)
                                        : adjacency_weight_matrix(net, sg.nodes);
  const bool laplacian =
      kind == FilterKind::kAdjacentLaplacian || kind == FilterKind::kDistanceLaplacian;
  sg.laplacian = laplacian ? normalized_laplacian(weights) : gcn_filter(weights);
  return sg;
}

}  // namespace sstgcn::graph
