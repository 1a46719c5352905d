#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <vector>

#include "netcausal/graph.hpp"

namespace netcausal::wl {

using Color = std::size_t;

struct Coloring {
  std::vector<Color> colors;  // dense ids 0..class_count-1
  std::size_t class_count = 0;
  std::size_t iterations = 0;  // refinement rounds performed
  bool converged = false;      // last round left the partition unchanged
};

/// Dense ids for arbitrary labels, assigned in increasing label order.
std::vector<Color> canonical_labels(std::span<const double> labels);
std::vector<Color> canonical_labels(std::span<const std::size_t> labels);

/// One round: the new color of i is the rank of (C(i), sorted neighbor
/// colors) among all distinct signatures in lexicographic order.
std::vector<Color> refine_step(const graph::Graph& g, std::span<const Color> colors);

/// Refines from canonicalized `labels` until a round leaves the partition
/// unchanged or max_iters rounds have run.
Coloring wl_refine(const graph::Graph& g, std::span<const std::size_t> labels, std::size_t max_iters);

/// Coloring after exactly `rounds` rounds (fewer if stable earlier, which
/// gives the same partition).
Coloring wl_colors_at(const graph::Graph& g, std::span<const std::size_t> labels, std::size_t rounds);

/// First round t at which the partition equals the one at t - 1.
std::size_t iterations_to_convergence(const graph::Graph& g, std::span<const std::size_t> labels);

/// color -> count.
std::map<Color, std::size_t> color_histogram(std::span<const Color> colors);

/// True iff the color-count histograms of the two labeled graphs differ
/// after `rounds` parallel rounds (colors shared through the disjoint union).
bool wl_distinguish(const graph::Graph& g1, std::span<const std::size_t> labels1, const graph::Graph& g2,
                    std::span<const std::size_t> labels2, std::size_t rounds);

/// Constant labels of length n.
std::vector<std::size_t> constant_labels(std::size_t n);

}  // namespace netcausal::wl
