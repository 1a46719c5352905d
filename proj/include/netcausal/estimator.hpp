#pragma once

#include <array>
#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "netcausal/exposure.hpp"
#include "netcausal/gnn.hpp"
#include "netcausal/graph.hpp"
#include "netcausal/rng.hpp"

namespace netcausal::estimator {

struct TrimBounds {
  double lo = 0.01;
  double hi = 0.99;
};

std::vector<double> trim(std::span<const double> p, double lo, double hi);

// ---------------------------------------------------------------------------
// Nuisance learners

/// Fits p_t and mu_t on a masked set and predicts for every unit.
class NuisanceLearner {
 public:
  virtual ~NuisanceLearner() = default;
  virtual std::string name() const = 0;
  /// P(label = 1) for every unit, trained on rows in `mask`.
  virtual std::vector<double> fit_probability(const graph::Graph& g, std::span<const double> x,
                                              std::span<const double> labels,
                                              std::span<const std::size_t> mask, Rng& rng) = 0;
  /// Regression of y for every unit, trained on rows in `mask`.
  virtual std::vector<double> fit_regression(const graph::Graph& g, std::span<const double> x,
                                             std::span<const double> y, std::span<const std::size_t> mask,
                                             Rng& rng) = 0;
  /// Epochs used by the most recent fit (0 for closed-form learners).
  virtual std::size_t trained_epochs() const { return 0; }
};

class GnnLearner : public NuisanceLearner {
 public:
  explicit GnnLearner(gnn::GnnConfig config) : config_(config) {}
  std::string name() const override;
  std::vector<double> fit_probability(const graph::Graph& g, std::span<const double> x,
                                      std::span<const double> labels, std::span<const std::size_t> mask,
                                      Rng& rng) override;
  std::vector<double> fit_regression(const graph::Graph& g, std::span<const double> x,
                                     std::span<const double> y, std::span<const std::size_t> mask,
                                     Rng& rng) override;
  std::size_t trained_epochs() const override { return epochs_; }

 private:
  gnn::GnnConfig config_;
  std::size_t epochs_ = 0;
};

/// Logistic / linear regression on polynomial sieves of the controls
/// (X_i, neighbor mean of X, degree).
class GlmLearner : public NuisanceLearner {
 public:
  explicit GlmLearner(std::size_t order) : order_(order) {}
  std::string name() const override;
  std::vector<double> fit_probability(const graph::Graph& g, std::span<const double> x,
                                      std::span<const double> labels, std::span<const std::size_t> mask,
                                      Rng& rng) override;
  std::vector<double> fit_regression(const graph::Graph& g, std::span<const double> x,
                                     std::span<const double> y, std::span<const std::size_t> mask,
                                     Rng& rng) override;

 private:
  std::size_t order_;
};

/// Trains on 1{T_i = t} over units whose degree lies in Gamma. Throws if
/// that population is empty.
std::vector<double> fit_propensity(const graph::Graph& g, std::span<const double> x, std::span<const int> d,
                                   const exposure::ExposureSpec& spec, NuisanceLearner& learner, Rng& rng);

/// Trains on {i : indicator_i = 1}. Throws if fewer than two such units.
std::vector<double> fit_outcome(const graph::Graph& g, std::span<const double> x, std::span<const double> y,
                                std::span<const int> indicator, NuisanceLearner& learner, Rng& rng);

/// True when 1{T = t'} = 1 - 1{T = t} for every treatment vector and graph:
/// opposite own treatment and unrestricted neighbor and degree intervals.
bool complementary(const exposure::ExposureSpec& t, const exposure::ExposureSpec& tp);

// ---------------------------------------------------------------------------
// Point estimate and variance

struct NuisanceFits {
  std::vector<double> p_t, p_tp;    // trimmed propensities
  std::vector<double> mu_t, mu_tp;  // outcome regressions
};

struct PointEstimate {
  double tau_hat = 0.0;
  std::vector<double> contributions;
};

/// tau_i = 1_i(t)(Y_i - mu_t)/p_t + mu_t - 1_i(t')(Y_i - mu_t')/p_t' - mu_t'.
PointEstimate doubly_robust(std::span<const double> y, std::span<const int> ind_t, std::span<const int> ind_tp,
                            const NuisanceFits& fits);

/// (1/n) sum_i sum_j (c_i - cbar)(c_j - cbar) 1{l(i,j) <= b}. May be negative.
double hac_variance(std::span<const double> contributions, const graph::Graph& g, std::size_t bandwidth);

/// (1/n) sum_i (c_i - cbar)^2.
double iid_variance(std::span<const double> contributions);

/// sqrt(max(variance, 0) / n).
double standard_error(double variance, std::size_t n);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

double normal_critical_value(double level);
Interval confidence_interval(double tau_hat, double se, double level = 0.95);

// ---------------------------------------------------------------------------
// Full pipeline

struct EstimateOptions {
  exposure::ExposureSpec t = exposure::ExposureSpec::own_treatment(1);
  exposure::ExposureSpec tp = exposure::ExposureSpec::own_treatment(0);
  TrimBounds trim;
  double level = 0.95;
  /// Overrides the path-length bandwidth rule when set.
  std::optional<std::size_t> bandwidth;
  /// For complementary exposures use p_t' = 1 - p_t from a single fit.
  bool share_complementary_propensity = true;
};

struct EstimateReport {
  double tau_hat = 0.0;
  std::vector<double> contributions;
  double hac_variance = 0.0;  // before clamping
  double hac_se = 0.0;
  double iid_variance = 0.0;
  double iid_se = 0.0;
  std::size_t bandwidth = 0;
  Interval hac_ci, iid_ci;
  std::size_t treated_count = 0;  // units with T_i = t
  std::size_t control_count = 0;  // units with T_i = t'
  std::size_t trimmed_count = 0;  // propensities moved by trimming
  std::array<std::size_t, 10> overlap_histogram{};  // p_t over ten equal bins of [0, 1]
  std::size_t trained_epochs = 0;
  std::vector<std::string> warnings;
};

/// Variance, intervals and diagnostics from fitted nuisances. Clamps a
/// negative HAC variance to 0 and records a warning.
EstimateReport assemble_report(const graph::Graph& g, std::span<const double> y, std::span<const int> ind_t,
                               std::span<const int> ind_tp, const NuisanceFits& fits, std::size_t bandwidth,
                               double level);

/// Fits nuisances with `learner`, trims, and reports tau(t, t').
EstimateReport estimate(const graph::Graph& g, std::span<const double> x, std::span<const int> d,
                        std::span<const double> y, const EstimateOptions& options, NuisanceLearner& learner,
                        Rng& rng);

}  // namespace netcausal::estimator
