#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <vector>

#include "netcausal/graph.hpp"

namespace netcausal::glm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Rows W_i = (X_i, mean of X over neighbors (0 if isolated), degree).
Matrix build_controls(const graph::Graph& g, std::span<const double> x);

/// Number of monomials of total degree <= order in p variables, C(p + order, order).
std::size_t feature_count(std::size_t p, std::size_t order);

/// Intercept plus every monomial of total degree 1..order in the columns
/// of w. Columns are grouped by degree; within a degree, exponent tuples
/// appear in lexicographic order of the variable indices used.
Matrix polynomial_features(const Matrix& w, std::size_t order);

struct LinearFit {
  Vector coef;
  std::vector<double> fitted;  // all rows
  bool ridge_used = false;
};

/// Least squares on the rows in `mask` via normal equations. Columns are
/// scaled to unit root-mean-square on the mask before solving; a ridge
/// term 1e-8 * mean(diag) is added if the scaled system is rank deficient.
LinearFit linear_fit(const Matrix& features, std::span<const double> y, std::span<const std::size_t> mask);

struct LogisticFit {
  Vector coef;
  std::vector<double> probabilities;  // all rows
  std::size_t iterations = 0;
  bool converged = false;
  bool ridge_used = false;
};

/// Maximum likelihood by Newton/IRLS with step halving on the
/// log-likelihood. Stops when the sup-norm of the accepted step is below
/// tol or after max_iter iterations.
LogisticFit logistic_fit(const Matrix& features, std::span<const double> labels,
                         std::span<const std::size_t> mask, std::size_t max_iter = 100, double tol = 1e-8);

}  // namespace netcausal::glm
