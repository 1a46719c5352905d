#include "netcausal/oracle.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace netcausal::oracle {

namespace {

constexpr double kProbTol = 1e-12;

// Odometer over a mixed-radix index, last digit fastest. Returns false
// after the last configuration.
bool next_digits(std::vector<std::size_t>& digits, std::span<const DiscreteSupport> supports) {
  for (std::size_t k = digits.size(); k-- > 0;) {
    if (++digits[k] < supports[k].values.size()) return true;
    digits[k] = 0;
  }
  return false;
}

double configure(const std::vector<std::size_t>& digits, std::span<const DiscreteSupport> supports,
                 std::vector<double>& values) {
  double prob = 1.0;
  for (std::size_t k = 0; k < digits.size(); ++k) {
    values[k] = supports[k].values[digits[k]];
    prob *= supports[k].probs[digits[k]];
  }
  return prob;
}

// Enumerates nu atoms only: (prob, treatments).
void for_each_selection(const DiscreteDgp& m, const std::function<void(double, const BinaryVector&)>& visit) {
  const std::size_t n = m.graph.size();
  std::vector<std::size_t> digits(n, 0);
  std::vector<double> nu(n);
  do {
    const double p = configure(digits, m.nu, nu);
    visit(p, m.selection(m.graph, m.x, nu));
  } while (next_digits(digits, m.nu));
}

// E over eps of Y(d), memoized by d.
class OutcomeMeans {
 public:
  explicit OutcomeMeans(const DiscreteDgp& m) : m_(m) {}

  const std::vector<double>& operator()(const BinaryVector& d) {
    auto it = cache_.find(d);
    if (it != cache_.end()) return it->second;
    const std::size_t n = m_.graph.size();
    std::vector<double> mean(n, 0.0);
    std::vector<std::size_t> digits(n, 0);
    std::vector<double> eps(n);
    do {
      const double p = configure(digits, m_.eps, eps);
      const auto y = m_.outcome(m_.graph, m_.x, d, eps);
      for (std::size_t i = 0; i < n; ++i) mean[i] += p * y[i];
    } while (next_digits(digits, m_.eps));
    return cache_.emplace(d, std::move(mean)).first->second;
  }

 private:
  const DiscreteDgp& m_;
  std::map<BinaryVector, std::vector<double>> cache_;
};

std::vector<std::vector<graph::NodeId>> neighborhoods(const graph::Graph& g, std::size_t k) {
  std::vector<std::vector<graph::NodeId>> out(g.size());
  const auto radius = static_cast<graph::Distance>(std::min<std::size_t>(k, g.size()));
  for (graph::NodeId i = 0; i < g.size(); ++i) out[i] = graph::k_neighborhood(g, i, radius);
  return out;
}

BinaryVector restrict_to(const BinaryVector& d, std::span<const graph::NodeId> units) {
  BinaryVector out(d.size(), 0);
  for (graph::NodeId j : units) out[j] = d[j];
  return out;
}

BinaryVector with_profile(BinaryVector d, std::span<const graph::NodeId> units, const BinaryVector& profile) {
  for (std::size_t k = 0; k < units.size(); ++k) d[units[k]] = profile[k];
  return d;
}

BinaryVector profile_of(const BinaryVector& d, std::span<const graph::NodeId> units) {
  BinaryVector p(units.size());
  for (std::size_t k = 0; k < units.size(); ++k) p[k] = d[units[k]];
  return p;
}

// delta_i such that T_i = t' forces D_{N(i,K)} = delta_i on the support;
// throws otherwise. Units with P(T_i = t') = 0 get an empty profile.
std::vector<BinaryVector> pinned_profiles(const DiscreteDgp& m, const exposure::ExposureSpec& tp,
                                          const std::vector<std::vector<graph::NodeId>>& hoods) {
  const std::size_t n = m.graph.size();
  std::vector<BinaryVector> pinned(n);
  std::vector<bool> seen(n, false);
  for_each_selection(m, [&](double p, const BinaryVector& d) {
    if (!(p > 0.0)) return;
    for (std::size_t i = 0; i < n; ++i) {
      if (!exposure::indicator(m.graph, d, tp, i)) continue;
      auto prof = profile_of(d, hoods[i]);
      if (!seen[i]) {
        pinned[i] = std::move(prof);
        seen[i] = true;
      } else if (prof != pinned[i]) {
        throw PreconditionError("exposure value t' does not pin the treatments of unit " + std::to_string(i) +
                                "'s neighborhood");
      }
    }
  });
  return pinned;
}

bool treatments_independent(const DiscreteDgp& m) {
  const std::size_t n = m.graph.size();
  std::map<BinaryVector, double> joint;
  std::vector<double> marginal(n, 0.0);
  for_each_selection(m, [&](double p, const BinaryVector& d) {
    joint[d] += p;
    for (std::size_t i = 0; i < n; ++i) marginal[i] += p * d[i];
  });
  BinaryVector d(n, 0);
  for (std::size_t code = 0; code < (std::size_t{1} << n); ++code) {
    double product = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      d[i] = static_cast<int>((code >> i) & 1u);
      product *= d[i] ? marginal[i] : 1.0 - marginal[i];
    }
    const auto it = joint.find(d);
    const double pj = it == joint.end() ? 0.0 : it->second;
    if (std::abs(pj - product) > kProbTol) return false;
  }
  return true;
}

void require_local_outcomes(const DiscreteDgp& m, const std::vector<std::vector<graph::NodeId>>& hoods,
                            std::size_t k) {
  const std::size_t n = m.graph.size();
  if (n > 16) throw PreconditionError("locality check needs n <= 16");
  std::vector<std::size_t> digits(n, 0);
  std::vector<double> eps(n);
  BinaryVector d(n);
  do {
    configure(digits, m.eps, eps);
    for (std::size_t code = 0; code < (std::size_t{1} << n); ++code) {
      for (std::size_t i = 0; i < n; ++i) d[i] = static_cast<int>((code >> i) & 1u);
      const auto y = m.outcome(m.graph, m.x, d, eps);
      for (std::size_t i = 0; i < n; ++i) {
        const double yi = m.outcome(m.graph, m.x, restrict_to(d, hoods[i]), eps)[i];
        if (std::abs(yi - y[i]) > 1e-12 * (1.0 + std::abs(y[i])))
          throw PreconditionError("outcomes depend on treatments beyond radius " + std::to_string(k));
      }
    }
  } while (next_digits(digits, m.eps));
}

struct UnitTerms {
  std::vector<double> p_t;
  std::vector<double> sum;  // sum over atoms with T_i = t of prob * term
};

}  // namespace

DiscreteSupport DiscreteSupport::uniform(std::vector<double> values) {
  DiscreteSupport s;
  s.probs.assign(values.size(), values.empty() ? 0.0 : 1.0 / static_cast<double>(values.size()));
  s.values = std::move(values);
  return s;
}

void DiscreteSupport::validate() const {
  if (values.empty() || values.size() != probs.size())
    throw std::invalid_argument("support: values and probabilities must be nonempty and of equal length");
  double total = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0)) throw std::invalid_argument("support: negative probability");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("support: probabilities must sum to 1");
}

void DiscreteDgp::validate() const {
  const std::size_t n = graph.size();
  if (x.size() != n || eps.size() != n || nu.size() != n)
    throw std::invalid_argument("discrete model: per-unit vectors must have one entry per unit");
  for (const auto& s : eps) s.validate();
  for (const auto& s : nu) s.validate();
  if (!selection || !outcome) throw std::invalid_argument("discrete model: missing selection or outcome rule");
}

std::size_t DiscreteDgp::atom_count(std::size_t limit) const {
  std::size_t count = 1;
  for (const auto* list : {&eps, &nu})
    for (const auto& s : *list) {
      count *= s.values.size();
      if (count > limit) throw std::invalid_argument("discrete model: joint support too large to enumerate");
    }
  return count;
}

DiscreteDgp DiscreteDgp::permuted(std::span<const graph::NodeId> perm) const {
  const std::size_t n = graph.size();
  if (perm.size() != n) throw std::invalid_argument("permuted: permutation length mismatch");
  DiscreteDgp out = *this;
  out.graph = graph.permuted(perm);
  for (std::size_t i = 0; i < n; ++i) {
    out.x[perm[i]] = x[i];
    out.eps[perm[i]] = eps[i];
    out.nu[perm[i]] = nu[i];
  }
  return out;
}

SelectionRule best_response_selection(const dgp::SelectionParams& p, std::size_t max_iter) {
  return [p, max_iter](const graph::Graph& g, std::span<const double> x, std::span<const double> nu) {
    return dgp::simulate_selection(g, x, nu, p, max_iter).treatments;
  };
}

OutcomeRule linear_in_means_outcome(const dgp::OutcomeParams& p) {
  return [p](const graph::Graph& g, std::span<const double> x, std::span<const int> d,
             std::span<const double> eps) {
    const std::size_t n = g.size();
    const auto mx = dgp::neighbor_mean(g, x);
    const auto md = dgp::neighbor_mean(g, d);
    const auto me = dgp::neighbor_mean(g, eps);
    Eigen::MatrixXd a = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    Eigen::VectorXd b(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      b(r) = p.alpha + p.delta * mx[i] + p.gamma * x[i] + p.own_treatment * d[i] + p.peer_treatment * md[i] +
             eps[i] + (p.neighbor_unobservables ? me[i] : 0.0);
      const auto nbrs = g.neighbors(i);
      for (graph::NodeId j : nbrs) a(r, static_cast<Eigen::Index>(j)) -= p.beta / static_cast<double>(nbrs.size());
    }
    const Eigen::VectorXd y = a.partialPivLu().solve(b);
    return std::vector<double>(y.data(), y.data() + y.size());
  };
}

void for_each_atom(const DiscreteDgp& m, const AtomVisitor& visit) {
  m.validate();
  m.atom_count();
  const std::size_t n = m.graph.size();
  std::vector<std::size_t> nu_digits(n, 0);
  std::vector<double> nu(n), eps(n);
  do {
    const double pn = configure(nu_digits, m.nu, nu);
    const BinaryVector d = m.selection(m.graph, m.x, nu);
    std::vector<std::size_t> eps_digits(n, 0);
    do {
      const double pe = configure(eps_digits, m.eps, eps);
      const auto y = m.outcome(m.graph, m.x, d, eps);
      visit(pn * pe, nu, eps, d, y);
    } while (next_digits(eps_digits, m.eps));
  } while (next_digits(nu_digits, m.nu));
}

double total_probability(const DiscreteDgp& m) {
  double total = 0.0;
  for_each_atom(m, [&](double p, auto, auto, const auto&, const auto&) { total += p; });
  return total;
}

TauResult exact_tau(const DiscreteDgp& m, const exposure::ExposureSpec& t, const exposure::ExposureSpec& tp) {
  t.validate();
  tp.validate();
  const std::size_t n = m.graph.size();
  TauResult r;
  r.p_t.assign(n, 0.0);
  r.p_tp.assign(n, 0.0);
  r.mu_t.assign(n, 0.0);
  r.mu_tp.assign(n, 0.0);
  for_each_atom(m, [&](double p, auto, auto, const BinaryVector& d, const std::vector<double>& y) {
    for (std::size_t i = 0; i < n; ++i) {
      if (exposure::indicator(m.graph, d, t, i)) {
        r.p_t[i] += p;
        r.mu_t[i] += p * y[i];
      }
      if (exposure::indicator(m.graph, d, tp, i)) {
        r.p_tp[i] += p;
        r.mu_tp[i] += p * y[i];
      }
    }
  });
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const bool ok_t = r.p_t[i] > kProbTol, ok_tp = r.p_tp[i] > kProbTol;
    r.mu_t[i] = ok_t ? r.mu_t[i] / r.p_t[i] : 0.0;
    r.mu_tp[i] = ok_tp ? r.mu_tp[i] / r.p_tp[i] : 0.0;
    if (ok_t && ok_tp) {
      r.included.push_back(i);
      total += r.mu_t[i] - r.mu_tp[i];
    } else {
      r.warnings.push_back("unit " + std::to_string(i) + " excluded: exposure value has probability zero");
    }
  }
  if (r.included.empty()) throw std::domain_error("exact_tau: every unit has a zero-probability exposure value");
  r.tau = total / static_cast<double>(r.included.size());
  return r;
}

Decomposition verify_neighborhood_identification(const DiscreteDgp& m, const exposure::ExposureSpec& t,
                                                 const exposure::ExposureSpec& tp, std::size_t k) {
  m.validate();
  const auto hoods = neighborhoods(m.graph, k);
  require_local_outcomes(m, hoods, k);
  const auto pinned = pinned_profiles(m, tp, hoods);
  const auto lhs = exact_tau(m, t, tp);

  const std::size_t n = m.graph.size();
  OutcomeMeans means(m);
  std::vector<double> sum(n, 0.0);
  for_each_selection(m, [&](double p, const BinaryVector& d) {
    if (!(p > 0.0)) return;
    for (std::size_t i : lhs.included) {
      if (!exposure::indicator(m.graph, d, t, i)) continue;
      const double a = means(restrict_to(d, hoods[i]))[i];
      const double b = means(with_profile(BinaryVector(n, 0), hoods[i], pinned[i]))[i];
      sum[i] += p * (a - b);
    }
  });
  Decomposition out;
  out.lhs = lhs.tau;
  double total = 0.0;
  for (std::size_t i : lhs.included) total += sum[i] / lhs.p_t[i];
  out.rhs = total / static_cast<double>(lhs.included.size());
  out.remainder = out.lhs - out.rhs;
  out.diff = std::abs(out.remainder);
  out.treatments_independent = treatments_independent(m);
  out.warnings = lhs.warnings;
  return out;
}

Decomposition verify_independent_identification(const DiscreteDgp& m, const exposure::ExposureSpec& t,
                                                const exposure::ExposureSpec& tp, std::size_t k) {
  m.validate();
  if (k == 0) {
    for (const auto* s : {&t, &tp}) {
      const bool full = s->delta_lo <= 0.0 && s->delta_hi == exposure::kInfinity && s->gamma_lo <= 0.0 &&
                        s->gamma_hi == exposure::kInfinity;
      if (!full) throw PreconditionError("exposure depends on neighbors, so it is not determined at radius 0");
    }
  }
  const auto hoods = neighborhoods(m.graph, k);
  const auto pinned = pinned_profiles(m, tp, hoods);
  const auto lhs = exact_tau(m, t, tp);

  const std::size_t n = m.graph.size();
  OutcomeMeans means(m);
  std::vector<double> sum(n, 0.0);
  for_each_selection(m, [&](double p, const BinaryVector& d) {
    if (!(p > 0.0)) return;
    for (std::size_t i : lhs.included) {
      if (!exposure::indicator(m.graph, d, t, i)) continue;
      const double a = means(d)[i];
      const double b = means(with_profile(d, hoods[i], pinned[i]))[i];
      sum[i] += p * (a - b);
    }
  });
  Decomposition out;
  out.lhs = lhs.tau;
  double total = 0.0;
  for (std::size_t i : lhs.included) total += sum[i] / lhs.p_t[i];
  out.rhs = total / static_cast<double>(lhs.included.size());
  out.remainder = out.lhs - out.rhs;
  out.diff = std::abs(out.remainder);
  out.treatments_independent = treatments_independent(m);
  out.warnings = lhs.warnings;
  return out;
}

TruncationGap truncated_pscore(const DiscreteDgp& m, graph::NodeId i, const exposure::ExposureSpec& t,
                               std::size_t radius) {
  m.validate();
  if (i >= m.graph.size()) throw std::invalid_argument("truncated_pscore: unit out of range");
  TruncationGap out;
  for_each_selection(m, [&](double p, const BinaryVector& d) {
    if (exposure::indicator(m.graph, d, t, i)) out.full += p;
  });

  const auto r = static_cast<graph::Distance>(std::min<std::size_t>(radius, m.graph.size()));
  const auto sub = graph::induced_subgraph(m.graph, graph::k_neighborhood(m.graph, i, r));
  DiscreteDgp local;
  local.graph = sub.graph;
  for (graph::NodeId j : sub.to_original) {
    local.x.push_back(m.x[j]);
    local.nu.push_back(m.nu[j]);
    local.eps.push_back(m.eps[j]);
  }
  local.selection = m.selection;
  local.outcome = m.outcome;
  const graph::NodeId li = sub.to_local[i];
  for_each_selection(local, [&](double p, const BinaryVector& d) {
    if (exposure::indicator(local.graph, d, t, li)) out.truncated += p;
  });
  out.gap = std::abs(out.full - out.truncated);
  return out;
}

double expected_dr_with_exact_nuisances(const DiscreteDgp& m, const exposure::ExposureSpec& t,
                                        const exposure::ExposureSpec& tp) {
  const auto truth = exact_tau(m, t, tp);
  const auto& units = truth.included;
  double expected = 0.0;
  for_each_atom(m, [&](double p, auto, auto, const BinaryVector& d, const std::vector<double>& y) {
    double mean = 0.0;
    for (std::size_t i : units) {
      const int it = exposure::indicator(m.graph, d, t, i);
      const int itp = exposure::indicator(m.graph, d, tp, i);
      mean += it * (y[i] - truth.mu_t[i]) / truth.p_t[i] + truth.mu_t[i] -
              itp * (y[i] - truth.mu_tp[i]) / truth.p_tp[i] - truth.mu_tp[i];
    }
    expected += p * mean / static_cast<double>(units.size());
  });
  return expected;
}

}  // namespace netcausal::oracle
