#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "netcausal/graph.hpp"
#include "netcausal/rng.hpp"

namespace netcausal {

/// Binary per-unit vector (treatments, exposure indicators).
using BinaryVector = std::vector<int>;

}  // namespace netcausal

namespace netcausal::dgp {

/// Coefficients of the binary-game selection index
///   alpha + beta mean(D_nbr) + delta mean(X_nbr) + gamma X_i + nu_i + mean(nu_nbr).
struct SelectionParams {
  double alpha = -0.5;
  double beta = 1.5;
  double delta = 1.0;
  double gamma = -1.0;
  /// Include mean(nu_nbr) in the index. Turning this off makes treatments
  /// conditionally independent across units when beta = 0.
  bool neighbor_unobservables = true;
};

/// Coefficients of the linear-in-means outcome
///   Y_i = alpha + beta mean(Y_nbr) + delta mean(X_nbr) + gamma X_i
///         + own_treatment D_i + peer_treatment mean(D_nbr) + eps_i + mean(eps_nbr).
/// The simulation design leaves both treatment coefficients at zero.
struct OutcomeParams {
  double alpha = 0.5;
  double beta = 0.8;
  double delta = 10.0;
  double gamma = -1.0;
  double own_treatment = 0.0;
  double peer_treatment = 0.0;
  bool neighbor_unobservables = true;
};

struct Primitives {
  std::vector<double> x;
  std::vector<double> eps;
  std::vector<double> nu;
};

struct SelectionResult {
  BinaryVector treatments;
  std::size_t iterations = 0;  // best-response rounds performed
  bool converged = false;      // true iff a fixed point was reached
};

struct SimDraw {
  graph::Graph graph;
  std::vector<double> x, eps, nu;
  BinaryVector d;
  std::vector<double> y;
  SelectionParams selection;
  OutcomeParams outcome;
  std::size_t selection_iterations = 0;
  bool selection_converged = false;
};

/// Mean of v over the neighbors of each unit; isolated units get 0.
std::vector<double> neighbor_mean(const graph::Graph& g, std::span<const double> v);
std::vector<double> neighbor_mean(const graph::Graph& g, std::span<const int> v);

/// eps, nu ~ N(0,1) and X ~ uniform on {0, .25, .5, .75, 1}, all independent.
/// Per unit the draw order is X, eps, nu.
Primitives draw_primitives(std::size_t n, Rng& rng);

/// Synchronous myopic best-response dynamics started from the beta = 0
/// profile. Returns the fixed point, or the last iterate with
/// `converged = false` after max_iter rounds.
SelectionResult simulate_selection(const graph::Graph& g, std::span<const double> x,
                                   std::span<const double> nu, const SelectionParams& p,
                                   std::size_t max_iter = 100);

/// Solves the linear-in-means system by fixed-point iteration from Y = 0
/// until the sup-norm change falls below tol. Requires |beta| < 1.
std::vector<double> simulate_outcomes(const graph::Graph& g, std::span<const double> x,
                                      std::span<const int> d, std::span<const double> eps,
                                      const OutcomeParams& p, double tol = 1e-10);

double treated_fraction(std::span<const int> d);

/// Full draw for a given graph: primitives, selection, outcomes.
SimDraw simulate(graph::Graph g, const SelectionParams& sel, const OutcomeParams& out, Rng& rng,
                 std::size_t max_iter = 100, double tol = 1e-10);

}  // namespace netcausal::dgp
