#include "netcausal/exposure.hpp"

#include <cmath>
#include <stdexcept>

namespace netcausal::exposure {

void ExposureSpec::validate() const {
  if (d != 0 && d != 1) throw std::invalid_argument("exposure: d must be 0 or 1");
  if (std::isnan(delta_lo) || std::isnan(delta_hi) || std::isnan(gamma_lo) || std::isnan(gamma_hi))
    throw std::invalid_argument("exposure: NaN endpoint");
  if (delta_lo > delta_hi || gamma_lo > gamma_hi)
    throw std::invalid_argument("exposure: interval endpoints out of order");
  if (delta_hi < 0.0 || gamma_hi < 0.0)
    throw std::invalid_argument("exposure: intervals must intersect the nonnegative reals");
}

int indicator(const graph::Graph& g, std::span<const int> d, const ExposureSpec& spec,
              graph::NodeId i) {
  if (d.size() != g.size()) throw std::invalid_argument("exposure: treatment length mismatch");
  if (d[i] != spec.d) return 0;
  if (!spec.degree_in_range(static_cast<double>(g.degree(i)))) return 0;
  std::size_t treated = 0;
  for (graph::NodeId j : g.neighbors(i)) treated += (d[j] != 0);
  return spec.treated_count_in_range(static_cast<double>(treated)) ? 1 : 0;
}

BinaryVector indicators(const graph::Graph& g, std::span<const int> d, const ExposureSpec& spec) {
  BinaryVector out(g.size());
  for (graph::NodeId i = 0; i < g.size(); ++i) out[i] = indicator(g, d, spec, i);
  return out;
}

std::vector<graph::NodeId> gamma_population(const graph::Graph& g, const ExposureSpec& spec) {
  std::vector<graph::NodeId> out;
  for (graph::NodeId i = 0; i < g.size(); ++i)
    if (spec.degree_in_range(static_cast<double>(g.degree(i)))) out.push_back(i);
  return out;
}

}  // namespace netcausal::exposure
