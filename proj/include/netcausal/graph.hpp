#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "netcausal/rng.hpp"

namespace netcausal::graph {

using NodeId = std::size_t;
using Distance = std::uint32_t;
inline constexpr Distance kUnreachable = std::numeric_limits<Distance>::max();
inline constexpr NodeId kNotInSubgraph = std::numeric_limits<NodeId>::max();

using Edge = std::pair<NodeId, NodeId>;

struct GraphStats {
  double avg_degree = 0.0;
  /// Mean path length over ordered pairs i != j of the largest component;
  /// 0 when that component has fewer than two units.
  double avg_path_length = 0.0;
  std::vector<NodeId> largest_component;
  /// degree_histogram[k] = number of units with degree k.
  std::vector<std::size_t> degree_histogram;
  std::size_t component_count = 0;
};

/// Immutable undirected simple graph in compressed adjacency form.
///
/// Neighbor lists are sorted and duplicate-free, and there are no
/// self-links. Directed edge slots `offsets()[i] .. offsets()[i+1]` list the
/// neighbors of i; message-passing code uses this layout directly.
/// Summary statistics are computed on first request and shared between
/// copies; the graph itself never changes, so concurrent reads are safe.
class Graph {
 public:
  Graph();
  explicit Graph(std::size_t n);  // edgeless

  /// Builds a graph from undirected edges. Duplicates and reversed
  /// duplicates are merged; self-links and out-of-range ids throw.
  static Graph from_edges(std::size_t n, std::span<const Edge> edges);

  std::size_t size() const noexcept { return offsets_.size() - 1; }
  std::size_t edge_count() const noexcept { return targets_.size() / 2; }
  std::size_t degree(NodeId i) const { return offsets_[i + 1] - offsets_[i]; }
  std::span<const NodeId> neighbors(NodeId i) const {
    return {targets_.data() + offsets_[i], degree(i)};
  }
  bool has_edge(NodeId i, NodeId j) const;

  std::span<const std::size_t> offsets() const noexcept { return offsets_; }
  std::span<const NodeId> targets() const noexcept { return targets_; }

  std::vector<Edge> edges() const;  // i < j, lexicographic

  /// Relabels units: unit i of this graph becomes unit perm[i].
  Graph permuted(std::span<const NodeId> perm) const;

  const GraphStats& stats() const;

 private:
  struct StatsCache;

  std::vector<std::size_t> offsets_;
  std::vector<NodeId> targets_;
  std::shared_ptr<StatsCache> cache_;
};

// ---------------------------------------------------------------------------
// Generators

/// Random geometric graph on the unit square: positions i.i.d. uniform,
/// link iff Euclidean distance <= sqrt(kappa / (pi n)).
Graph generate_rgg(std::size_t n, double kappa, Rng& rng);

/// Erdos-Renyi graph with link probability kappa / n per unordered pair.
/// Pairs are visited in lexicographic order (i < j), one uniform draw each.
Graph generate_er(std::size_t n, double kappa, Rng& rng);

// ---------------------------------------------------------------------------
// Distances and neighborhoods

std::vector<Distance> bfs_distances(const Graph& g, NodeId source);

/// Reusable breadth-first search bounded by a radius. Avoids clearing an
/// n-length buffer per query, so repeated neighborhood scans cost
/// O(|N(i, radius)|) each.
class BoundedBfs {
 public:
  explicit BoundedBfs(std::size_t n);

  /// Visits N(source, radius) in BFS order; returns (unit, distance) pairs.
  std::span<const std::pair<NodeId, Distance>> run(const Graph& g, NodeId source, Distance radius);

 private:
  std::vector<std::uint32_t> stamp_;
  std::uint32_t epoch_ = 0;
  std::vector<std::pair<NodeId, Distance>> visited_;
};

/// N(i, K) = {j : l(i, j) <= K}, sorted.
std::vector<NodeId> k_neighborhood(const Graph& g, NodeId i, Distance radius);

/// Boundary {j : l(i, j) = s}, sorted.
std::vector<NodeId> neighborhood_boundary(const Graph& g, NodeId i, Distance s);

struct InducedSubgraph {
  Graph graph;
  std::vector<NodeId> to_original;  // local -> original, increasing
  std::vector<NodeId> to_local;     // original -> local or kNotInSubgraph
};

/// Subgraph on `units`, relabeled in increasing order of original labels.
InducedSubgraph induced_subgraph(const Graph& g, std::span<const NodeId> units);

// ---------------------------------------------------------------------------
// Statistics

GraphStats compute_stats(const Graph& g);

/// Thrown when the HAC bandwidth rule is not defined for a graph.
class BandwidthUndefined : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

enum class BandwidthRegime { quarter_path_length, fourth_root };

struct BandwidthDiagnostics {
  double avg_degree = 0.0;
  double avg_path_length = 0.0;
  double threshold = 0.0;  // 2 log n / log avg_degree
  BandwidthRegime regime = BandwidthRegime::quarter_path_length;
  double unrounded = 0.0;
  std::size_t bandwidth = 0;
};

BandwidthDiagnostics bandwidth_diagnostics(const Graph& g);

/// HAC bandwidth: ceil(L/4) when L < 2 log n / log delta, else
/// ceil(L^(1/4)), with L the average path length of the largest component
/// and delta the average degree. Throws BandwidthUndefined if delta <= 1
/// or the largest component has fewer than two units.
std::size_t hac_bandwidth(const Graph& g);

/// (1/n) sum_i |{j : l(i,j) = s}|^k.
double boundary_moment(const Graph& g, Distance s, double k);

/// (1/n) sum_i |N(i, radius)|^k.
double neighborhood_size_moment(const Graph& g, Distance radius, double k);

// ---------------------------------------------------------------------------
// Edge-list I/O: "i j" per line, 0-indexed, '#' comments allowed.

Graph read_edge_list(std::istream& in, std::size_t n = 0);
Graph read_edge_list_file(const std::string& path, std::size_t n = 0);
void write_edge_list(std::ostream& out, const Graph& g);

}  // namespace netcausal::graph
