#pragma once

// Independent reference computations shared by the unit tests. Nothing here
// calls into the library except to build graphs.

#include <algorithm>
#include <cstddef>
#include <limits>
#include <vector>

#include "netcausal/graph.hpp"
#include "netcausal/rng.hpp"

namespace support {

inline constexpr std::size_t kFar = std::numeric_limits<std::size_t>::max() / 4;

/// All-pairs shortest path lengths by Floyd-Warshall on a dense matrix.
inline std::vector<std::vector<std::size_t>> floyd(const netcausal::graph::Graph& g) {
  const std::size_t n = g.size();
  std::vector<std::vector<std::size_t>> d(n, std::vector<std::size_t>(n, kFar));
  for (std::size_t i = 0; i < n; ++i) {
    d[i][i] = 0;
    for (auto j : g.neighbors(i)) d[i][j] = 1;
  }
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (d[i][k] + d[k][j] < d[i][j]) d[i][j] = d[i][k] + d[k][j];
  return d;
}

/// G(n, p) built edge by edge with the test's own coin flips.
inline netcausal::graph::Graph random_graph(std::size_t n, double p, netcausal::Rng& rng) {
  std::vector<netcausal::graph::Edge> edges;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (rng.uniform() < p) edges.emplace_back(i, j);
  return netcausal::graph::Graph::from_edges(n, edges);
}

/// Random tree plus extra random edges, so the graph is connected.
inline netcausal::graph::Graph random_connected(std::size_t n, double extra, netcausal::Rng& rng) {
  std::vector<netcausal::graph::Edge> edges;
  for (std::size_t i = 1; i < n; ++i) edges.emplace_back(rng.index(i), i);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (rng.uniform() < extra) edges.emplace_back(i, j);
  return netcausal::graph::Graph::from_edges(n, edges);
}

inline netcausal::graph::Graph path(std::size_t n) {
  std::vector<netcausal::graph::Edge> edges;
  for (std::size_t i = 1; i < n; ++i) edges.emplace_back(i - 1, i);
  return netcausal::graph::Graph::from_edges(n, edges);
}

inline netcausal::graph::Graph complete(std::size_t n) {
  std::vector<netcausal::graph::Edge> edges;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) edges.emplace_back(i, j);
  return netcausal::graph::Graph::from_edges(n, edges);
}

inline std::vector<std::size_t> random_permutation(std::size_t n, netcausal::Rng& rng) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng.index(i)]);
  return p;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace support
