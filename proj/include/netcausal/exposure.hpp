#pragma once

#include <limits>
#include <span>
#include <vector>

#include "netcausal/dgp.hpp"
#include "netcausal/graph.hpp"

namespace netcausal::exposure {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// Exposure value t given by own treatment d, an interval for the number of
/// treated neighbors and an interval for the degree. Endpoints are closed;
/// infinite endpoints use kInfinity.
struct ExposureSpec {
  int d = 1;
  double delta_lo = 0.0;
  double delta_hi = kInfinity;
  double gamma_lo = 0.0;
  double gamma_hi = kInfinity;

  /// T_i = D_i with value d.
  static ExposureSpec own_treatment(int d) { return ExposureSpec{d, 0.0, kInfinity, 0.0, kInfinity}; }

  void validate() const;
  bool treated_count_in_range(double count) const { return delta_lo <= count && count <= delta_hi; }
  bool degree_in_range(double degree) const { return gamma_lo <= degree && degree <= gamma_hi; }
  bool operator==(const ExposureSpec&) const = default;
};

/// 1{D_i = d, sum_j A_ij D_j in Delta, deg(i) in Gamma}.
int indicator(const graph::Graph& g, std::span<const int> d, const ExposureSpec& spec,
              graph::NodeId i);

BinaryVector indicators(const graph::Graph& g, std::span<const int> d, const ExposureSpec& spec);

/// Units whose degree lies in Gamma (the propensity-score fitting set).
std::vector<graph::NodeId> gamma_population(const graph::Graph& g, const ExposureSpec& spec);

}  // namespace netcausal::exposure
