#pragma once

// Road network and graph preprocessing. Roads are nodes; two roads are
// adjacent when they share an intersection.

#include <array>
#include <compare>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sstgcn/tensor.hpp"

namespace sstgcn::graph {

using num::Matrix;

enum class RoadId : std::int64_t {};

inline std::int64_t to_int(RoadId id) { return static_cast<std::int64_t>(id); }

inline constexpr std::size_t kPoiCategories = 10;

struct RoadAttributes {
  int lanes = 1;
  double speed_limit = 50.0;
  double length_m = 100.0;
  bool bump = false;
  bool camera = false;
  std::array<int, kPoiCategories> poi{};
  double heading_deg = 0.0;
};

struct Road {
  RoadId id{};
  RoadAttributes attributes;
};

class RoadNetwork {
 public:
  // Throws ValidationError on duplicate ids or attributes outside the schema.
  std::size_t add_road(Road road);
  // Throws LookupError for unknown ids, ValidationError for self loops.
  // Duplicate edges are ignored.
  void add_edge(RoadId a, RoadId b);

  std::size_t size() const { return roads_.size(); }
  const Road& road(std::size_t index) const { return roads_.at(index); }
  const std::vector<Road>& roads() const { return roads_; }
  bool contains(RoadId id) const { return index_.contains(id); }
  std::size_t index_of(RoadId id) const;
  // Sorted ascending by index.
  const std::vector<std::size_t>& neighbors(std::size_t index) const {
    return adjacency_.at(index);
  }
  bool adjacent(std::size_t a, std::size_t b) const;
  std::size_t edge_count() const;
  bool connected() const;

  static RoadNetwork from_json(std::string_view text);
  std::string to_json() const;
  static RoadNetwork load(const std::string& path);
  void save(const std::string& path) const;

 private:
  std::vector<Road> roads_;
  std::vector<std::vector<std::size_t>> adjacency_;
  std::unordered_map<RoadId, std::size_t> index_;
};

void validate_attributes(const RoadAttributes& a);

// Roads within K hops of center, center first, then ascending (hop, id).
std::vector<RoadId> khop_subgraph(const RoadNetwork& net, RoadId center, int k);

inline constexpr double kDisconnected = std::numeric_limits<double>::infinity();

struct WeightedEdge {
  std::size_t u = 0;
  std::size_t v = 0;
  double length = 0.0;
};

// All-pairs shortest paths over an undirected weighted graph on n vertices.
// Unreachable pairs hold kDisconnected.
Matrix floyd_warshall(std::size_t n, std::span<const WeightedEdge> edges);

// Distances over the subgraph induced by `nodes`. An edge between adjacent
// roads u and v has length (length_u + length_v) / 2.
Matrix floyd_warshall(const RoadNetwork& net, std::span<const RoadId> nodes);

// Gaussian kernel exp(-(d/sigma)^2), sigma the mean finite off-diagonal
// distance (1 when there is none), zero for disconnected pairs, plus I.
Matrix distance_weight_matrix(const Matrix& distances);

// 0/1 adjacency of the induced subgraph plus I.
Matrix adjacency_weight_matrix(const RoadNetwork& net, std::span<const RoadId> nodes);

// D^{-1/2} A D^{-1/2}, D = diag(row sums of A).
Matrix gcn_filter(const Matrix& a);
// I - D^{-1/2} A D^{-1/2}.
Matrix normalized_laplacian(const Matrix& a);

enum class FilterKind { kAdjacentGcn, kAdjacentLaplacian, kDistanceGcn, kDistanceLaplacian };

inline constexpr std::array<FilterKind, 4> kAllFilterKinds = {
    FilterKind::kAdjacentGcn, FilterKind::kAdjacentLaplacian, FilterKind::kDistanceGcn,
    FilterKind::kDistanceLaplacian};

// "adj-gcn", "adj-lap", "dist-gcn", "dist-lap".
std::string_view filter_flag(FilterKind kind);
FilterKind parse_filter_flag(std::string_view flag);
// Row labels used in the filter comparison table.
std::string_view filter_label(FilterKind kind);

struct Subgraph {
  std::vector<RoadId> nodes;  // center first
  std::size_t center_index = 0;
  Matrix laplacian;  // the filtered propagation matrix fed to the GCN
  Matrix distances;  // raw shortest-path distances, diagnostics only
};

Subgraph build_subgraph(const RoadNetwork& net, RoadId center, int k, FilterKind kind);

}  // namespace sstgcn::graph
