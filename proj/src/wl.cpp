#include "netcausal/wl.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace netcausal::wl {

namespace {

template <typename T>
std::vector<Color> dense_rank(std::span<const T> labels) {
  std::vector<T> sorted(labels.begin(), labels.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::vector<Color> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i)
    out[i] = static_cast<Color>(std::lower_bound(sorted.begin(), sorted.end(), labels[i]) - sorted.begin());
  return out;
}

std::size_t count_classes(std::span<const Color> colors) {
  if (colors.empty()) return 0;
  return *std::max_element(colors.begin(), colors.end()) + 1;
}

Coloring run(const graph::Graph& g, std::span<const std::size_t> labels, std::size_t max_iters) {
  if (labels.size() != g.size()) throw std::invalid_argument("wl: label length mismatch");
  Coloring c;
  c.colors = canonical_labels(labels);
  c.class_count = count_classes(c.colors);
  while (c.iterations < max_iters) {
    auto next = refine_step(g, c.colors);
    const std::size_t classes = count_classes(next);
    ++c.iterations;
    // Refinement never merges classes, so equal counts mean equal partitions.
    const bool stable = classes == c.class_count;
    c.colors = std::move(next);
    c.class_count = classes;
    if (stable) {
      c.converged = true;
      break;
    }
  }
  return c;
}

}  // namespace

std::vector<Color> canonical_labels(std::span<const double> labels) { return dense_rank(labels); }

std::vector<Color> canonical_labels(std::span<const std::size_t> labels) { return dense_rank(labels); }

std::vector<Color> refine_step(const graph::Graph& g, std::span<const Color> colors) {
  if (colors.size() != g.size()) throw std::invalid_argument("wl: color length mismatch");
  const std::size_t n = g.size();
  std::vector<std::vector<Color>> sig(n);
  for (graph::NodeId i = 0; i < n; ++i) {
    auto& s = sig[i];
    s.reserve(g.degree(i) + 1);
    s.push_back(colors[i]);
    for (graph::NodeId j : g.neighbors(i)) s.push_back(colors[j]);
    std::sort(s.begin() + 1, s.end());
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sig[a] < sig[b]; });
  std::vector<Color> out(n);
  Color next = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (k > 0 && sig[order[k]] != sig[order[k - 1]]) ++next;
    out[order[k]] = next;
  }
  return out;
}

Coloring wl_refine(const graph::Graph& g, std::span<const std::size_t> labels, std::size_t max_iters) {
  return run(g, labels, max_iters);
}

Coloring wl_colors_at(const graph::Graph& g, std::span<const std::size_t> labels, std::size_t rounds) {
  return run(g, labels, rounds);
}

std::size_t iterations_to_convergence(const graph::Graph& g, std::span<const std::size_t> labels) {
  return run(g, labels, std::max<std::size_t>(g.size(), 1)).iterations;
}

std::map<Color, std::size_t> color_histogram(std::span<const Color> colors) {
  std::map<Color, std::size_t> h;
  for (Color c : colors) ++h[c];
  return h;
}

bool wl_distinguish(const graph::Graph& g1, std::span<const std::size_t> labels1, const graph::Graph& g2,
                    std::span<const std::size_t> labels2, std::size_t rounds) {
  if (labels1.size() != g1.size() || labels2.size() != g2.size())
    throw std::invalid_argument("wl: label length mismatch");
  const std::size_t n1 = g1.size();
  std::vector<graph::Edge> edges = g1.edges();
  for (const auto& [a, b] : g2.edges()) edges.emplace_back(a + n1, b + n1);
  const auto joint = graph::Graph::from_edges(n1 + g2.size(), edges);
  std::vector<std::size_t> labels(labels1.begin(), labels1.end());
  labels.insert(labels.end(), labels2.begin(), labels2.end());
  const auto c = run(joint, labels, rounds);
  const std::span<const Color> all(c.colors);
  return color_histogram(all.first(n1)) != color_histogram(all.subspan(n1));
}

std::vector<std::size_t> constant_labels(std::size_t n) { return std::vector<std::size_t>(n, 0); }

}  // namespace netcausal::wl
