#include "netcausal/graph.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <istream>
#include <mutex>
#include <numbers>
#include <ostream>
#include <sstream>

namespace netcausal::graph {

struct Graph::StatsCache {
  std::once_flag once;
  GraphStats stats;
};

Graph::Graph() : offsets_{0}, cache_(std::make_shared<StatsCache>()) {}

Graph::Graph(std::size_t n) : offsets_(n + 1, 0), cache_(std::make_shared<StatsCache>()) {}

Graph Graph::from_edges(std::size_t n, std::span<const Edge> edges) {
  std::vector<std::vector<NodeId>> adjacency(n);
  for (const auto& [a, b] : edges) {
    if (a >= n || b >= n) throw std::out_of_range("edge endpoint out of range");
    if (a == b) throw std::invalid_argument("self-links are not allowed");
    adjacency[a].push_back(b);
    adjacency[b].push_back(a);
  }
  Graph g(n);
  g.targets_.clear();
  for (std::size_t i = 0; i < n; ++i) {
    auto& row = adjacency[i];
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
    g.offsets_[i + 1] = g.offsets_[i] + row.size();
    g.targets_.insert(g.targets_.end(), row.begin(), row.end());
  }
  return g;
}

bool Graph::has_edge(NodeId i, NodeId j) const {
  const auto row = neighbors(i);
  return std::binary_search(row.begin(), row.end(), j);
}

std::vector<Edge> Graph::edges() const {
  std::vector<Edge> out;
  out.reserve(edge_count());
  for (NodeId i = 0; i < size(); ++i)
    for (NodeId j : neighbors(i))
      if (i < j) out.emplace_back(i, j);
  return out;
}

Graph Graph::permuted(std::span<const NodeId> perm) const {
  if (perm.size() != size()) throw std::invalid_argument("permutation size mismatch");
  std::vector<Edge> relabeled;
  relabeled.reserve(edge_count());
  for (const auto& [a, b] : edges()) relabeled.emplace_back(perm[a], perm[b]);
  return from_edges(size(), relabeled);
}

const GraphStats& Graph::stats() const {
  std::call_once(cache_->once, [this] { cache_->stats = compute_stats(*this); });
  return cache_->stats;
}

// ---------------------------------------------------------------------------

Graph generate_rgg(std::size_t n, double kappa, Rng& rng) {
  if (n < 1) throw std::invalid_argument("generate_rgg: n must be >= 1");
  if (!(kappa > 0.0)) throw std::invalid_argument("generate_rgg: kappa must be > 0");

  std::vector<double> px(n), py(n);
  for (std::size_t i = 0; i < n; ++i) {
    px[i] = rng.uniform();
    py[i] = rng.uniform();
  }
  const double radius = std::sqrt(kappa / (std::numbers::pi * static_cast<double>(n)));
  const double r2 = radius * radius;

  // Bucket positions into square cells of side >= radius; candidate
  // neighbors then lie in the 3x3 block around a unit's cell.
  const std::size_t cells =
      std::max<std::size_t>(1, std::min<std::size_t>(n, static_cast<std::size_t>(1.0 / radius)));
  auto cell_of = [cells](double v) {
    return std::min(cells - 1, static_cast<std::size_t>(v * static_cast<double>(cells)));
  };
  std::vector<std::vector<NodeId>> buckets(cells * cells);
  for (std::size_t i = 0; i < n; ++i) buckets[cell_of(px[i]) * cells + cell_of(py[i])].push_back(i);

  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t cx = cell_of(px[i]), cy = cell_of(py[i]);
    for (std::size_t bx = (cx == 0 ? 0 : cx - 1); bx <= std::min(cells - 1, cx + 1); ++bx) {
      for (std::size_t by = (cy == 0 ? 0 : cy - 1); by <= std::min(cells - 1, cy + 1); ++by) {
        for (NodeId j : buckets[bx * cells + by]) {
          if (j <= i) continue;
          const double dx = px[i] - px[j], dy = py[i] - py[j];
          if (dx * dx + dy * dy <= r2) edges.emplace_back(i, j);
        }
      }
    }
  }
  return Graph::from_edges(n, edges);
}

Graph generate_er(std::size_t n, double kappa, Rng& rng) {
  if (!(kappa > 0.0) || !(kappa < static_cast<double>(n)))
    throw std::invalid_argument("generate_er: requires 0 < kappa < n");
  const double p = kappa / static_cast<double>(n);
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (rng.uniform() < p) edges.emplace_back(i, j);
  return Graph::from_edges(n, edges);
}

// ---------------------------------------------------------------------------

std::vector<Distance> bfs_distances(const Graph& g, NodeId source) {
  if (source >= g.size()) throw std::out_of_range("bfs source out of range");
  std::vector<Distance> dist(g.size(), kUnreachable);
  std::vector<NodeId> frontier{source};
  dist[source] = 0;
  for (std::size_t head = 0; head < frontier.size(); ++head) {
    const NodeId u = frontier[head];
    for (NodeId v : g.neighbors(u)) {
      if (dist[v] == kUnreachable) {
        dist[v] = dist[u] + 1;
        frontier.push_back(v);
      }
    }
  }
  return dist;
}

BoundedBfs::BoundedBfs(std::size_t n) : stamp_(n, 0) {}

std::span<const std::pair<NodeId, Distance>> BoundedBfs::run(const Graph& g, NodeId source,
                                                             Distance radius) {
  if (stamp_.size() < g.size()) stamp_.assign(g.size(), 0), epoch_ = 0;
  if (++epoch_ == 0) {
    std::fill(stamp_.begin(), stamp_.end(), 0);
    epoch_ = 1;
  }
  visited_.clear();
  visited_.emplace_back(source, 0);
  stamp_[source] = epoch_;
  for (std::size_t head = 0; head < visited_.size(); ++head) {
    const auto [u, d] = visited_[head];
    if (d == radius) continue;
    for (NodeId v : g.neighbors(u)) {
      if (stamp_[v] != epoch_) {
        stamp_[v] = epoch_;
        visited_.emplace_back(v, d + 1);
      }
    }
  }
  return visited_;
}

std::vector<NodeId> k_neighborhood(const Graph& g, NodeId i, Distance radius) {
  if (i >= g.size()) throw std::out_of_range("unit out of range");
  BoundedBfs bfs(g.size());
  std::vector<NodeId> out;
  for (const auto& [j, d] : bfs.run(g, i, radius)) out.push_back(j);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<NodeId> neighborhood_boundary(const Graph& g, NodeId i, Distance s) {
  if (i >= g.size()) throw std::out_of_range("unit out of range");
  BoundedBfs bfs(g.size());
  std::vector<NodeId> out;
  for (const auto& [j, d] : bfs.run(g, i, s))
    if (d == s) out.push_back(j);
  std::sort(out.begin(), out.end());
  return out;
}

InducedSubgraph induced_subgraph(const Graph& g, std::span<const NodeId> units) {
  if (units.empty()) throw std::invalid_argument("induced_subgraph: empty unit set");
  InducedSubgraph sub;
  sub.to_original.assign(units.begin(), units.end());
  std::sort(sub.to_original.begin(), sub.to_original.end());
  sub.to_original.erase(std::unique(sub.to_original.begin(), sub.to_original.end()),
                        sub.to_original.end());
  sub.to_local.assign(g.size(), kNotInSubgraph);
  for (std::size_t k = 0; k < sub.to_original.size(); ++k) {
    if (sub.to_original[k] >= g.size()) throw std::out_of_range("unit out of range");
    sub.to_local[sub.to_original[k]] = k;
  }
  std::vector<Edge> edges;
  for (std::size_t k = 0; k < sub.to_original.size(); ++k)
    for (NodeId j : g.neighbors(sub.to_original[k]))
      if (sub.to_local[j] != kNotInSubgraph && k < sub.to_local[j])
        edges.emplace_back(k, sub.to_local[j]);
  sub.graph = Graph::from_edges(sub.to_original.size(), edges);
  return sub;
}

// ---------------------------------------------------------------------------

GraphStats compute_stats(const Graph& g) {
  GraphStats s;
  const std::size_t n = g.size();
  if (n == 0) return s;

  std::size_t max_degree = 0;
  for (NodeId i = 0; i < n; ++i) max_degree = std::max(max_degree, g.degree(i));
  s.degree_histogram.assign(max_degree + 1, 0);
  for (NodeId i = 0; i < n; ++i) ++s.degree_histogram[g.degree(i)];
  s.avg_degree = 2.0 * static_cast<double>(g.edge_count()) / static_cast<double>(n);

  // Components in order of their minimum label; strict '>' keeps the
  // earliest on size ties.
  std::vector<std::size_t> component(n, n);
  std::size_t best_label = 0, best_size = 0;
  std::vector<NodeId> queue;
  for (NodeId root = 0; root < n; ++root) {
    if (component[root] != n) continue;
    const std::size_t label = s.component_count++;
    queue.assign(1, root);
    component[root] = label;
    for (std::size_t head = 0; head < queue.size(); ++head)
      for (NodeId v : g.neighbors(queue[head]))
        if (component[v] == n) component[v] = label, queue.push_back(v);
    if (queue.size() > best_size) best_size = queue.size(), best_label = label;
  }
  for (NodeId i = 0; i < n; ++i)
    if (component[i] == best_label) s.largest_component.push_back(i);

  const std::size_t m = s.largest_component.size();
  if (m >= 2) {
    std::uint64_t total = 0;
    BoundedBfs bfs(n);
    for (NodeId i : s.largest_component)
      for (const auto& [j, d] : bfs.run(g, i, kUnreachable - 1)) total += d;
    s.avg_path_length = static_cast<double>(total) / (static_cast<double>(m) * static_cast<double>(m - 1));
  }
  return s;
}

BandwidthDiagnostics bandwidth_diagnostics(const Graph& g) {
  const GraphStats& s = g.stats();
  if (!(s.avg_degree > 1.0))
    throw BandwidthUndefined("bandwidth undefined: average degree must exceed 1");
  if (s.largest_component.size() < 2)
    throw BandwidthUndefined("bandwidth undefined: largest component has fewer than two units");

  BandwidthDiagnostics b;
  b.avg_degree = s.avg_degree;
  b.avg_path_length = s.avg_path_length;
  b.threshold = 2.0 * std::log(static_cast<double>(g.size())) / std::log(s.avg_degree);
  if (b.avg_path_length < b.threshold) {
    b.regime = BandwidthRegime::quarter_path_length;
    b.unrounded = b.avg_path_length / 4.0;
  } else {
    b.regime = BandwidthRegime::fourth_root;
    b.unrounded = std::pow(b.avg_path_length, 0.25);
  }
  b.bandwidth = static_cast<std::size_t>(std::ceil(b.unrounded));
  return b;
}

std::size_t hac_bandwidth(const Graph& g) { return bandwidth_diagnostics(g).bandwidth; }

double boundary_moment(const Graph& g, Distance s, double k) {
  if (g.size() == 0) return 0.0;
  BoundedBfs bfs(g.size());
  double total = 0.0;
  for (NodeId i = 0; i < g.size(); ++i) {
    std::size_t count = 0;
    for (const auto& [j, d] : bfs.run(g, i, s)) count += (d == s);
    total += std::pow(static_cast<double>(count), k);
  }
  return total / static_cast<double>(g.size());
}

double neighborhood_size_moment(const Graph& g, Distance radius, double k) {
  if (g.size() == 0) return 0.0;
  BoundedBfs bfs(g.size());
  double total = 0.0;
  for (NodeId i = 0; i < g.size(); ++i)
    total += std::pow(static_cast<double>(bfs.run(g, i, radius).size()), k);
  return total / static_cast<double>(g.size());
}

// ---------------------------------------------------------------------------

Graph read_edge_list(std::istream& in, std::size_t n) {
  std::vector<Edge> edges;
  std::size_t max_id = 0;
  bool any = false;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    long long a = 0, b = 0;
    if (!(fields >> a)) continue;
    if (!(fields >> b) || a < 0 || b < 0)
      throw std::runtime_error("edge list: malformed line " + std::to_string(line_no));
    edges.emplace_back(static_cast<NodeId>(a), static_cast<NodeId>(b));
    max_id = std::max({max_id, static_cast<std::size_t>(a), static_cast<std::size_t>(b)});
    any = true;
  }
  const std::size_t size = n > 0 ? n : (any ? max_id + 1 : 0);
  return Graph::from_edges(size, edges);
}

Graph read_edge_list_file(const std::string& path, std::size_t n) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open edge list: " + path);
  return read_edge_list(in, n);
}

void write_edge_list(std::ostream& out, const Graph& g) {
  for (const auto& [a, b] : g.edges()) out << a << ' ' << b << '\n';
}

}  // namespace netcausal::graph
