#include "netcausal/dgp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace netcausal::dgp {

namespace {

template <typename T>
std::vector<double> neighbor_mean_impl(const graph::Graph& g, std::span<const T> v) {
  if (v.size() != g.size()) throw std::invalid_argument("neighbor_mean: length mismatch");
  std::vector<double> out(g.size(), 0.0);
  for (graph::NodeId i = 0; i < g.size(); ++i) {
    const auto nbrs = g.neighbors(i);
    if (nbrs.empty()) continue;
    double total = 0.0;
    for (graph::NodeId j : nbrs) total += static_cast<double>(v[j]);
    out[i] = total / static_cast<double>(nbrs.size());
  }
  return out;
}

void check_length(const graph::Graph& g, std::size_t len, const char* what) {
  if (len != g.size()) throw std::invalid_argument(std::string(what) + ": length mismatch");
}

}  // namespace

std::vector<double> neighbor_mean(const graph::Graph& g, std::span<const double> v) {
  return neighbor_mean_impl(g, v);
}

std::vector<double> neighbor_mean(const graph::Graph& g, std::span<const int> v) {
  return neighbor_mean_impl(g, v);
}

Primitives draw_primitives(std::size_t n, Rng& rng) {
  if (n < 1) throw std::invalid_argument("draw_primitives: n must be >= 1");
  static constexpr double kSupport[] = {0.0, 0.25, 0.5, 0.75, 1.0};
  Primitives p;
  p.x.resize(n);
  p.eps.resize(n);
  p.nu.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    p.x[i] = kSupport[rng.index(5)];
    p.eps[i] = rng.normal();
    p.nu[i] = rng.normal();
  }
  return p;
}

SelectionResult simulate_selection(const graph::Graph& g, std::span<const double> x,
                                   std::span<const double> nu, const SelectionParams& p,
                                   std::size_t max_iter) {
  check_length(g, x.size(), "simulate_selection");
  check_length(g, nu.size(), "simulate_selection");
  if (max_iter < 1) throw std::invalid_argument("simulate_selection: max_iter must be >= 1");

  const std::size_t n = g.size();
  const auto mean_x = neighbor_mean(g, x);
  const auto mean_nu = neighbor_mean(g, nu);
  std::vector<double> base(n);
  for (std::size_t i = 0; i < n; ++i)
    base[i] = p.alpha + p.delta * mean_x[i] + p.gamma * x[i] + nu[i] +
              (p.neighbor_unobservables ? mean_nu[i] : 0.0);

  SelectionResult r;
  r.treatments.resize(n);
  for (std::size_t i = 0; i < n; ++i) r.treatments[i] = base[i] > 0.0 ? 1 : 0;

  BinaryVector next(n);
  while (r.iterations < max_iter) {
    const auto mean_d = neighbor_mean(g, std::span<const int>(r.treatments));
    for (std::size_t i = 0; i < n; ++i) next[i] = base[i] + p.beta * mean_d[i] > 0.0 ? 1 : 0;
    ++r.iterations;
    if (next == r.treatments) {
      r.converged = true;
      break;
    }
    r.treatments.swap(next);
  }
  return r;
}

std::vector<double> simulate_outcomes(const graph::Graph& g, std::span<const double> x,
                                      std::span<const int> d, std::span<const double> eps,
                                      const OutcomeParams& p, double tol) {
  check_length(g, x.size(), "simulate_outcomes");
  check_length(g, d.size(), "simulate_outcomes");
  check_length(g, eps.size(), "simulate_outcomes");
  if (!(std::abs(p.beta) < 1.0))
    throw std::invalid_argument("simulate_outcomes: |beta| must be < 1 for a unique solution");
  if (!(tol > 0.0)) throw std::invalid_argument("simulate_outcomes: tol must be > 0");

  const std::size_t n = g.size();
  const auto mean_x = neighbor_mean(g, x);
  const auto mean_eps = neighbor_mean(g, eps);
  const auto mean_d = neighbor_mean(g, d);
  std::vector<double> rhs(n);
  for (std::size_t i = 0; i < n; ++i)
    rhs[i] = p.alpha + p.delta * mean_x[i] + p.gamma * x[i] + p.own_treatment * d[i] +
             p.peer_treatment * mean_d[i] + eps[i] + (p.neighbor_unobservables ? mean_eps[i] : 0.0);

  std::vector<double> y(n, 0.0), next(n);
  // Contraction with modulus |beta|; the cap only guards against tol below
  // floating-point resolution.
  constexpr std::size_t kMaxSweeps = 1'000'000;
  for (std::size_t sweep = 0; sweep < kMaxSweeps; ++sweep) {
    double change = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto nbrs = g.neighbors(i);
      double peer = 0.0;
      if (!nbrs.empty()) {
        for (graph::NodeId j : nbrs) peer += y[j];
        peer /= static_cast<double>(nbrs.size());
      }
      next[i] = rhs[i] + p.beta * peer;
      change = std::max(change, std::abs(next[i] - y[i]));
    }
    y.swap(next);
    if (change < tol) return y;
  }
  throw std::runtime_error("simulate_outcomes: fixed-point iteration did not reach tolerance");
}

double treated_fraction(std::span<const int> d) {
  if (d.empty()) return 0.0;
  double total = 0.0;
  for (int v : d) total += v;
  return total / static_cast<double>(d.size());
}

SimDraw simulate(graph::Graph g, const SelectionParams& sel, const OutcomeParams& out, Rng& rng,
                 std::size_t max_iter, double tol) {
  SimDraw draw;
  auto prim = draw_primitives(g.size(), rng);
  auto selected = simulate_selection(g, prim.x, prim.nu, sel, max_iter);
  draw.y = simulate_outcomes(g, prim.x, selected.treatments, prim.eps, out, tol);
  draw.graph = std::move(g);
  draw.x = std::move(prim.x);
  draw.eps = std::move(prim.eps);
  draw.nu = std::move(prim.nu);
  draw.d = std::move(selected.treatments);
  draw.selection = sel;
  draw.outcome = out;
  draw.selection_iterations = selected.iterations;
  draw.selection_converged = selected.converged;
  return draw;
}

}  // namespace netcausal::dgp
