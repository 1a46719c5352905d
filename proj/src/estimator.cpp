#include "netcausal/estimator.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "netcausal/glm.hpp"

namespace netcausal::estimator {

namespace {

std::vector<double> as_double(std::span<const int> v) { return std::vector<double>(v.begin(), v.end()); }

void check_length(std::size_t n, std::size_t len, const char* what) {
  if (len != n) throw std::invalid_argument(std::string(what) + ": length mismatch");
}

}  // namespace

std::vector<double> trim(std::span<const double> p, double lo, double hi) {
  if (!(0.0 < lo && lo <= hi && hi < 1.0)) throw std::invalid_argument("trim: bounds must satisfy 0 < lo <= hi < 1");
  std::vector<double> out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) out[i] = std::clamp(p[i], lo, hi);
  return out;
}

// ---------------------------------------------------------------------------

std::string GnnLearner::name() const { return "gnn_L" + std::to_string(config_.depth); }

std::vector<double> GnnLearner::fit_probability(const graph::Graph& g, std::span<const double> x,
                                                std::span<const double> labels, std::span<const std::size_t> mask,
                                                Rng& rng) {
  auto config = config_;
  config.loss = gnn::Loss::logistic;
  const auto xm = gnn::column(x);
  auto r = gnn::train_gnn(g, xm, labels, mask, config, rng);
  epochs_ = r.model.trained_epochs();
  return r.model.predict_probability(g, xm);
}

std::vector<double> GnnLearner::fit_regression(const graph::Graph& g, std::span<const double> x,
                                               std::span<const double> y, std::span<const std::size_t> mask,
                                               Rng& rng) {
  auto config = config_;
  config.loss = gnn::Loss::least_squares;
  const auto xm = gnn::column(x);
  auto r = gnn::train_gnn(g, xm, y, mask, config, rng);
  epochs_ = r.model.trained_epochs();
  return r.model.predict(g, xm);
}

std::string GlmLearner::name() const { return "glm_order_" + std::to_string(order_); }

std::vector<double> GlmLearner::fit_probability(const graph::Graph& g, std::span<const double> x,
                                                std::span<const double> labels, std::span<const std::size_t> mask,
                                                Rng&) {
  const auto f = glm::polynomial_features(glm::build_controls(g, x), order_);
  return glm::logistic_fit(f, labels, mask).probabilities;
}

std::vector<double> GlmLearner::fit_regression(const graph::Graph& g, std::span<const double> x,
                                               std::span<const double> y, std::span<const std::size_t> mask,
                                               Rng&) {
  const auto f = glm::polynomial_features(glm::build_controls(g, x), order_);
  return glm::linear_fit(f, y, mask).fitted;
}

std::vector<double> fit_propensity(const graph::Graph& g, std::span<const double> x, std::span<const int> d,
                                   const exposure::ExposureSpec& spec, NuisanceLearner& learner, Rng& rng) {
  check_length(g.size(), x.size(), "fit_propensity");
  check_length(g.size(), d.size(), "fit_propensity");
  spec.validate();
  const auto mask = exposure::gamma_population(g, spec);
  if (mask.empty()) throw std::invalid_argument("fit_propensity: no unit has a degree in the exposure's range");
  const auto labels = as_double(exposure::indicators(g, d, spec));
  return learner.fit_probability(g, x, labels, mask, rng);
}

std::vector<double> fit_outcome(const graph::Graph& g, std::span<const double> x, std::span<const double> y,
                                std::span<const int> indicator, NuisanceLearner& learner, Rng& rng) {
  check_length(g.size(), x.size(), "fit_outcome");
  check_length(g.size(), y.size(), "fit_outcome");
  check_length(g.size(), indicator.size(), "fit_outcome");
  std::vector<std::size_t> mask;
  for (std::size_t i = 0; i < indicator.size(); ++i)
    if (indicator[i]) mask.push_back(i);
  if (mask.size() < 2) throw std::invalid_argument("fit_outcome: fewer than two units with the exposure value");
  return learner.fit_regression(g, x, y, mask, rng);
}

bool complementary(const exposure::ExposureSpec& t, const exposure::ExposureSpec& tp) {
  const auto full = [](const exposure::ExposureSpec& s) {
    return s.delta_lo <= 0.0 && s.delta_hi == exposure::kInfinity && s.gamma_lo <= 0.0 &&
           s.gamma_hi == exposure::kInfinity;
  };
  return t.d != tp.d && full(t) && full(tp);
}

// ---------------------------------------------------------------------------

PointEstimate doubly_robust(std::span<const double> y, std::span<const int> ind_t, std::span<const int> ind_tp,
                            const NuisanceFits& fits) {
  const std::size_t n = y.size();
  if (n == 0) throw std::invalid_argument("doubly_robust: no units");
  for (std::size_t len : {ind_t.size(), ind_tp.size(), fits.p_t.size(), fits.p_tp.size(), fits.mu_t.size(),
                          fits.mu_tp.size()})
    check_length(n, len, "doubly_robust");
  PointEstimate out;
  out.contributions.resize(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double pt = fits.p_t[i], ptp = fits.p_tp[i];
    if (!(pt > 0.0 && pt < 1.0 && ptp > 0.0 && ptp < 1.0))
      throw std::logic_error("doubly_robust: propensity outside (0, 1) after trimming");
    const double c = ind_t[i] * (y[i] - fits.mu_t[i]) / pt + fits.mu_t[i] -
                     ind_tp[i] * (y[i] - fits.mu_tp[i]) / ptp - fits.mu_tp[i];
    out.contributions[i] = c;
    total += c;
  }
  out.tau_hat = total / static_cast<double>(n);
  return out;
}

double hac_variance(std::span<const double> contributions, const graph::Graph& g, std::size_t bandwidth) {
  const std::size_t n = contributions.size();
  check_length(g.size(), n, "hac_variance");
  if (n == 0) return 0.0;
  double mean = 0.0;
  for (double c : contributions) mean += c;
  mean /= static_cast<double>(n);
  std::vector<double> centered(n);
  for (std::size_t i = 0; i < n; ++i) centered[i] = contributions[i] - mean;

  const auto radius = static_cast<graph::Distance>(std::min<std::size_t>(bandwidth, graph::kUnreachable - 1));
  graph::BoundedBfs bfs(n);
  double total = 0.0;
  for (graph::NodeId i = 0; i < n; ++i) {
    double inner = 0.0;
    for (const auto& [j, dist] : bfs.run(g, i, radius)) inner += centered[j];
    total += centered[i] * inner;
  }
  return total / static_cast<double>(n);
}

double iid_variance(std::span<const double> contributions) {
  const std::size_t n = contributions.size();
  if (n == 0) return 0.0;
  double mean = 0.0;
  for (double c : contributions) mean += c;
  mean /= static_cast<double>(n);
  double total = 0.0;
  for (double c : contributions) total += (c - mean) * (c - mean);
  return total / static_cast<double>(n);
}

double standard_error(double variance, std::size_t n) {
  if (n == 0) return 0.0;
  return std::sqrt(std::max(variance, 0.0) / static_cast<double>(n));
}

double normal_critical_value(double level) {
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("confidence level must lie in (0, 1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), 0.5 + level / 2.0);
}

Interval confidence_interval(double tau_hat, double se, double level) {
  if (!(se >= 0.0)) throw std::invalid_argument("confidence_interval: negative standard error");
  const double half = normal_critical_value(level) * se;
  return {tau_hat - half, tau_hat + half};
}

// ---------------------------------------------------------------------------

EstimateReport assemble_report(const graph::Graph& g, std::span<const double> y, std::span<const int> ind_t,
                               std::span<const int> ind_tp, const NuisanceFits& fits, std::size_t bandwidth,
                               double level) {
  EstimateReport r;
  auto point = doubly_robust(y, ind_t, ind_tp, fits);
  r.tau_hat = point.tau_hat;
  r.contributions = std::move(point.contributions);
  const std::size_t n = y.size();
  r.bandwidth = bandwidth;
  r.hac_variance = hac_variance(r.contributions, g, bandwidth);
  if (r.hac_variance < 0.0) r.warnings.push_back("negative HAC variance clamped to 0");
  r.hac_se = standard_error(r.hac_variance, n);
  r.iid_variance = iid_variance(r.contributions);
  r.iid_se = standard_error(r.iid_variance, n);
  r.hac_ci = confidence_interval(r.tau_hat, r.hac_se, level);
  r.iid_ci = confidence_interval(r.tau_hat, r.iid_se, level);
  for (std::size_t i = 0; i < n; ++i) {
    r.treated_count += ind_t[i] != 0;
    r.control_count += ind_tp[i] != 0;
    const auto bin = std::min<std::size_t>(9, static_cast<std::size_t>(fits.p_t[i] * 10.0));
    ++r.overlap_histogram[bin];
  }
  return r;
}

EstimateReport estimate(const graph::Graph& g, std::span<const double> x, std::span<const int> d,
                        std::span<const double> y, const EstimateOptions& options, NuisanceLearner& learner,
                        Rng& rng) {
  const std::size_t n = g.size();
  check_length(n, x.size(), "estimate");
  check_length(n, d.size(), "estimate");
  check_length(n, y.size(), "estimate");
  options.t.validate();
  options.tp.validate();
  const std::size_t bandwidth = options.bandwidth ? *options.bandwidth : graph::hac_bandwidth(g);

  const auto ind_t = exposure::indicators(g, d, options.t);
  const auto ind_tp = exposure::indicators(g, d, options.tp);

  Rng rng_pt = rng.split(), rng_ptp = rng.split(), rng_mt = rng.split(), rng_mtp = rng.split();
  std::size_t epochs = 0;
  const auto raw_t = fit_propensity(g, x, d, options.t, learner, rng_pt);
  epochs = std::max(epochs, learner.trained_epochs());
  std::vector<double> raw_tp;
  if (options.share_complementary_propensity && complementary(options.t, options.tp)) {
    raw_tp.resize(n);
    for (std::size_t i = 0; i < n; ++i) raw_tp[i] = 1.0 - raw_t[i];
  } else {
    raw_tp = fit_propensity(g, x, d, options.tp, learner, rng_ptp);
    epochs = std::max(epochs, learner.trained_epochs());
  }

  NuisanceFits fits;
  fits.p_t = trim(raw_t, options.trim.lo, options.trim.hi);
  fits.p_tp = trim(raw_tp, options.trim.lo, options.trim.hi);
  fits.mu_t = fit_outcome(g, x, y, ind_t, learner, rng_mt);
  epochs = std::max(epochs, learner.trained_epochs());
  fits.mu_tp = fit_outcome(g, x, y, ind_tp, learner, rng_mtp);
  epochs = std::max(epochs, learner.trained_epochs());

  auto report = assemble_report(g, y, ind_t, ind_tp, fits, bandwidth, options.level);
  report.trained_epochs = epochs;
  for (std::size_t i = 0; i < n; ++i)
    report.trimmed_count += (fits.p_t[i] != raw_t[i]) || (fits.p_tp[i] != raw_tp[i]);
  if (report.trimmed_count > 0)
    report.warnings.push_back(std::to_string(report.trimmed_count) + " propensities trimmed");
  return report;
}

}  // namespace netcausal::estimator
