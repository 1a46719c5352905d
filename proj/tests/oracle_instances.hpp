#pragma once

// Random tiny models for the enumeration oracle and a second, separately
// coded enumerator for tau used to cross-check it.

#include <cmath>
#include <vector>

#include "netcausal/dgp.hpp"
#include "netcausal/exposure.hpp"
#include "netcausal/graph.hpp"
#include "netcausal/oracle.hpp"
#include "netcausal/rng.hpp"

namespace oracleinst {

namespace oracle = netcausal::oracle;
namespace graph = netcausal::graph;
namespace dgp = netcausal::dgp;
using netcausal::Rng;

/// Connected random graph on n units with two-point unobservables.
/// `independent` switches off selection spillovers (beta = 0, own nu only).
inline oracle::DiscreteDgp random_instance(Rng& rng, std::size_t n, bool independent, double outcome_beta = 0.0) {
  oracle::DiscreteDgp m;
  std::vector<graph::Edge> edges;
  for (std::size_t i = 1; i < n; ++i) edges.emplace_back(rng.index(i), i);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (rng.uniform() < 0.3) edges.emplace_back(i, j);
  m.graph = graph::Graph::from_edges(n, edges);
  for (std::size_t i = 0; i < n; ++i) {
    m.x.push_back(rng.uniform(-1.0, 1.0));
    m.eps.push_back({{-rng.uniform(0.2, 1.5), rng.uniform(0.2, 1.5)}, {0.5, 0.5}});
    // Wide enough that either draw can flip the selection index.
    const double q = rng.uniform(0.2, 0.8);
    m.nu.push_back({{-rng.uniform(5.5, 8.0), rng.uniform(5.5, 8.0)}, {q, 1.0 - q}});
  }
  dgp::SelectionParams sel;
  sel.alpha = rng.uniform(-1.0, 1.0);
  sel.delta = rng.uniform(-1.0, 1.0);
  sel.gamma = rng.uniform(-1.0, 1.0);
  if (independent) {
    sel.beta = 0.0;
    sel.neighbor_unobservables = false;
  } else {
    sel.beta = rng.uniform(0.5, 2.0);
  }
  dgp::OutcomeParams out;
  out.alpha = rng.uniform(-1.0, 1.0);
  out.beta = outcome_beta;
  out.delta = rng.uniform(-2.0, 2.0);
  out.gamma = rng.uniform(-2.0, 2.0);
  out.own_treatment = rng.uniform(0.5, 2.0);
  out.peer_treatment = rng.uniform(-1.0, 1.0);
  m.selection = oracle::best_response_selection(sel);
  m.outcome = oracle::linear_in_means_outcome(out);
  return m;
}

/// Untreated with no treated neighbors; pins D on N(i, 1).
inline netcausal::exposure::ExposureSpec isolated_control() {
  return {0, 0.0, 0.0, 0.0, netcausal::exposure::kInfinity};
}

/// tau by enumerating eps before nu with the first unit's digit fastest,
/// accumulating joint moments and dividing at the end.
inline double dual_tau(const oracle::DiscreteDgp& m, const netcausal::exposure::ExposureSpec& t,
                       const netcausal::exposure::ExposureSpec& tp) {
  const std::size_t n = m.graph.size();
  std::vector<std::size_t> radix;
  for (const auto& s : m.eps) radix.push_back(s.values.size());
  for (const auto& s : m.nu) radix.push_back(s.values.size());
  std::vector<std::size_t> digit(2 * n, 0);
  std::vector<double> pt(n, 0.0), ptp(n, 0.0), yt(n, 0.0), ytp(n, 0.0);
  std::vector<double> eps(n), nu(n);
  for (;;) {
    double prob = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      eps[i] = m.eps[i].values[digit[i]];
      nu[i] = m.nu[i].values[digit[n + i]];
      prob *= m.eps[i].probs[digit[i]] * m.nu[i].probs[digit[n + i]];
    }
    const auto d = m.selection(m.graph, m.x, nu);
    const auto y = m.outcome(m.graph, m.x, d, eps);
    for (std::size_t i = 0; i < n; ++i) {
      const auto id = static_cast<graph::NodeId>(i);
      if (netcausal::exposure::indicator(m.graph, d, t, id)) {
        pt[i] += prob;
        yt[i] += prob * y[i];
      }
      if (netcausal::exposure::indicator(m.graph, d, tp, id)) {
        ptp[i] += prob;
        ytp[i] += prob * y[i];
      }
    }
    std::size_t k = 0;
    while (k < digit.size() && ++digit[k] == radix[k]) digit[k++] = 0;
    if (k == digit.size()) break;
  }
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (pt[i] > 0.0 && ptp[i] > 0.0) {
      total += yt[i] / pt[i] - ytp[i] / ptp[i];
      ++count;
    }
  return count ? total / static_cast<double>(count) : NAN;
}

}  // namespace oracleinst
