#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "netcausal/dgp.hpp"
#include "netcausal/exposure.hpp"
#include "netcausal/graph.hpp"

namespace netcausal::oracle {

/// Finite distribution on the reals.
struct DiscreteSupport {
  std::vector<double> values;
  std::vector<double> probs;

  static DiscreteSupport point(double v) { return {{v}, {1.0}}; }
  static DiscreteSupport uniform(std::vector<double> values);
  void validate() const;
};

using SelectionRule =
    std::function<BinaryVector(const graph::Graph&, std::span<const double> x, std::span<const double> nu)>;
using OutcomeRule = std::function<std::vector<double>(const graph::Graph&, std::span<const double> x,
                                                      std::span<const int> d, std::span<const double> eps)>;

/// Small model whose unobservables have finite support, so every
/// conditional expectation is a finite sum. eps and nu are independent
/// across units and of each other.
struct DiscreteDgp {
  graph::Graph graph;
  std::vector<double> x;
  std::vector<DiscreteSupport> eps, nu;
  SelectionRule selection;
  OutcomeRule outcome;

  void validate() const;
  /// Product of all support sizes; throws if above `limit`.
  std::size_t atom_count(std::size_t limit = 1u << 22) const;
  /// Relabels units: unit i becomes perm[i].
  DiscreteDgp permuted(std::span<const graph::NodeId> perm) const;
};

/// Best-response dynamics of the selection model.
SelectionRule best_response_selection(const dgp::SelectionParams& p, std::size_t max_iter = 100);
/// Linear-in-means outcomes, solved exactly by a dense linear solve.
OutcomeRule linear_in_means_outcome(const dgp::OutcomeParams& p);

/// Visits every (nu, eps) atom with its probability, the resulting
/// treatments and outcomes. Order: mixed radix over
/// (nu_0, ..., nu_{n-1}, eps_0, ..., eps_{n-1}) with the last digit fastest.
using AtomVisitor = std::function<void(double prob, std::span<const double> nu, std::span<const double> eps,
                                       const BinaryVector& d, const std::vector<double>& y)>;
void for_each_atom(const DiscreteDgp& m, const AtomVisitor& visit);

/// Sum of all atom probabilities.
double total_probability(const DiscreteDgp& m);

class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct TauResult {
  double tau = 0.0;
  std::vector<double> p_t, p_tp;    // P(T_i = t), P(T_i = t')
  std::vector<double> mu_t, mu_tp;  // E[Y_i | T_i = .]; 0 where undefined
  std::vector<std::size_t> included;
  std::vector<std::string> warnings;
};

/// tau(t, t') = mean over units of E[Y_i | T_i = t] - E[Y_i | T_i = t'],
/// conditional on X and A. Units with P(T_i = t) = 0 or P(T_i = t') = 0 are
/// excluded with a warning; throws if every unit is excluded.
TauResult exact_tau(const DiscreteDgp& m, const exposure::ExposureSpec& t, const exposure::ExposureSpec& tp);

struct Decomposition {
  double lhs = 0.0;
  double rhs = 0.0;
  double diff = 0.0;  // |lhs - rhs|, the remainder in magnitude
  double remainder = 0.0;  // lhs - rhs
  bool treatments_independent = false;
  std::vector<std::string> warnings;
};

/// Identification under K-neighborhood interference in outcomes:
/// rhs = mean_i sum_{d_N} E[Y~_i(d_N) - Y~_i(delta)] P(D_N = d_N | T_i = t).
/// Throws PreconditionError if the outcome rule depends on treatments
/// outside N(i, K), or if T_i = t' does not pin D on N(i, K).
Decomposition verify_neighborhood_identification(const DiscreteDgp& m, const exposure::ExposureSpec& t,
                                                 const exposure::ExposureSpec& tp, std::size_t k);

/// Identification up to a remainder:
/// rhs = mean_i sum_d E[Y_i(d_N, d_-N) - Y_i(delta, d_-N)] P(D = d | T_i = t),
/// remainder = lhs - rhs. Throws PreconditionError if the exposure is not
/// determined by N(i, K) or T_i = t' does not pin D on N(i, K).
Decomposition verify_independent_identification(const DiscreteDgp& m, const exposure::ExposureSpec& t,
                                                const exposure::ExposureSpec& tp, std::size_t k);

struct TruncationGap {
  double full = 0.0;
  double truncated = 0.0;
  double gap = 0.0;
};

/// P(T_i = t | X, A) against the same probability when the network is the
/// induced subgraph on N(i, L) (labels kept in increasing order).
TruncationGap truncated_pscore(const DiscreteDgp& m, graph::NodeId i, const exposure::ExposureSpec& t,
                               std::size_t radius);

/// E[mean_i tau_i] with the exact p and mu as nuisances, over included
/// units. Equals exact_tau by the moment condition.
double expected_dr_with_exact_nuisances(const DiscreteDgp& m, const exposure::ExposureSpec& t,
                                        const exposure::ExposureSpec& tp);

}  // namespace netcausal::oracle
