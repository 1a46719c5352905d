#include <cmath>
#include <vector>

#include "doctest.h"
#include "hac_oracle.hpp"
#include "netcausal/estimator.hpp"
#include "netcausal/exposure.hpp"
#include "netcausal/graph.hpp"
#include "netcausal/rng.hpp"
#include "support.hpp"

namespace est = netcausal::estimator;
namespace exposure = netcausal::exposure;
namespace graph = netcausal::graph;
using netcausal::Rng;

namespace {

// Returns fixed vectors and records what it was asked to fit.
class FixedLearner : public est::NuisanceLearner {
 public:
  std::vector<double> probability, regression;
  std::vector<std::vector<std::size_t>> masks;
  int probability_calls = 0;

  std::string name() const override { return "fixed"; }
  std::vector<double> fit_probability(const graph::Graph&, std::span<const double>, std::span<const double>,
                                      std::span<const std::size_t> mask, Rng&) override {
    ++probability_calls;
    masks.emplace_back(mask.begin(), mask.end());
    return probability;
  }
  std::vector<double> fit_regression(const graph::Graph&, std::span<const double>, std::span<const double>,
                                     std::span<const std::size_t> mask, Rng&) override {
    masks.emplace_back(mask.begin(), mask.end());
    return regression;
  }
};

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

}  // namespace

TEST_CASE("trim examples") {
  const std::vector<double> p{0.5, 0.0, 1.0, 0.005, 0.999};
  const auto t = est::trim(p, 0.01, 0.99);
  CHECK(t == std::vector<double>{0.5, 0.01, 0.99, 0.01, 0.99});
  CHECK_THROWS(est::trim(p, 0.6, 0.4));
}

TEST_CASE("doubly robust three-unit hand example") {
  const std::vector<double> y{2, 1, 3};
  const std::vector<int> it{1, 0, 0}, itp{0, 1, 1};
  est::NuisanceFits f{{0.5, 0.25, 0.8}, {0.5, 0.75, 0.2}, {1, 1, 2}, {0, 1, 2}};
  const auto r = est::doubly_robust(y, it, itp, f);
  REQUIRE(r.contributions.size() == 3);
  CHECK(r.contributions[0] == doctest::Approx(3.0));
  CHECK(r.contributions[1] == doctest::Approx(0.0));
  CHECK(r.contributions[2] == doctest::Approx(-5.0));
  CHECK(r.tau_hat == doctest::Approx(-2.0 / 3.0));
}

TEST_CASE("exact outcome regressions make residuals vanish") {
  Rng rng(1);
  const std::size_t n = 50;
  std::vector<double> y(n);
  std::vector<int> it(n), itp(n);
  est::NuisanceFits f;
  for (std::size_t i = 0; i < n; ++i) {
    it[i] = rng.uniform() < 0.5;
    itp[i] = 1 - it[i];
    f.mu_t.push_back(rng.normal());
    f.mu_tp.push_back(rng.normal());
    f.p_t.push_back(rng.uniform(0.05, 0.95));
    f.p_tp.push_back(rng.uniform(0.05, 0.95));
    y[i] = it[i] ? f.mu_t[i] : f.mu_tp[i];
  }
  double direct = 0.0;
  for (std::size_t i = 0; i < n; ++i) direct += f.mu_t[i] - f.mu_tp[i];
  CHECK(est::doubly_robust(y, it, itp, f).tau_hat == doctest::Approx(direct / n).epsilon(1e-13));
}

TEST_CASE("zero outcome regressions give the Horvitz-Thompson contrast") {
  Rng rng(2);
  const std::size_t n = 80;
  std::vector<double> y(n);
  std::vector<int> it(n), itp(n);
  est::NuisanceFits f;
  f.mu_t.assign(n, 0.0);
  f.mu_tp.assign(n, 0.0);
  double ht = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double q = rng.uniform(0.2, 0.8);
    it[i] = rng.uniform() < q;
    itp[i] = 1 - it[i];
    f.p_t.push_back(q);
    f.p_tp.push_back(1 - q);
    y[i] = rng.normal() + it[i];
    ht += it[i] * y[i] / q - itp[i] * y[i] / (1 - q);
  }
  CHECK(std::abs(est::doubly_robust(y, it, itp, f).tau_hat - ht / n) < 1e-12);
}

TEST_CASE("doubly robust rejects propensities outside the open unit interval") {
  const std::vector<double> y{1, 2};
  const std::vector<int> it{1, 0}, itp{0, 1};
  est::NuisanceFits f{{0.5, 1.0}, {0.5, 0.5}, {0, 0}, {0, 0}};
  CHECK_THROWS_AS(est::doubly_robust(y, it, itp, f), std::logic_error);
  f.p_t = {0.5, 0.5};
  f.p_tp = {0.0, 0.5};
  CHECK_THROWS_AS(est::doubly_robust(y, it, itp, f), std::logic_error);
}

TEST_CASE("HAC examples") {
  const auto p3 = support::path(3);
  const std::vector<double> c{1, 2, 3};
  CHECK(est::hac_variance(c, p3, 1) == doctest::Approx(2.0 / 3.0));
  CHECK(est::hac_variance(c, p3, 0) == doctest::Approx(est::iid_variance(c)));
  CHECK(est::iid_variance(c) == doctest::Approx(2.0 / 3.0));
  CHECK(std::abs(est::hac_variance(c, p3, 2)) < 1e-15);
  CHECK(std::abs(est::hac_variance(c, p3, 50)) < 1e-15);
}

TEST_CASE("HAC matches a brute-force double sum") {
  Rng rng(3);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = 2 + rng.index(99);
    const auto g = support::random_graph(n, rng.uniform(0.5, 4.0) / static_cast<double>(n), rng);
    std::vector<double> c(n);
    for (auto& v : c) v = rng.normal() * 3.0 + 1.0;
    const std::size_t b = rng.index(6);
    const double oracle = hacoracle::brute_force_hac(c, g, b);
    CHECK(std::abs(est::hac_variance(c, g, b) - oracle) <= 1e-12 * std::max(1.0, std::abs(oracle)));
    CHECK(std::abs(est::hac_variance(c, g, 0) - est::iid_variance(c)) <= 1e-12 * std::max(1.0, est::iid_variance(c)));
  }
}

TEST_CASE("standard errors and intervals") {
  CHECK(est::standard_error(4.0, 100) == doctest::Approx(0.2));
  CHECK(est::standard_error(-1.0, 100) == 0.0);
  CHECK(est::normal_critical_value(0.95) == doctest::Approx(1.959964).epsilon(1e-6));
  const auto ci = est::confidence_interval(0.0, 1.0);
  CHECK(ci.lo == doctest::Approx(-1.9600).epsilon(1e-4));
  CHECK(ci.hi == doctest::Approx(1.9600).epsilon(1e-4));
  const auto point = est::confidence_interval(0.3, 0.0);
  CHECK(point.lo == 0.3);
  CHECK(point.hi == 0.3);
  CHECK_THROWS(est::normal_critical_value(1.0));
}

TEST_CASE("complementary exposures") {
  using exposure::ExposureSpec;
  CHECK(est::complementary(ExposureSpec::own_treatment(1), ExposureSpec::own_treatment(0)));
  CHECK(est::complementary(ExposureSpec::own_treatment(0), ExposureSpec::own_treatment(1)));
  CHECK_FALSE(est::complementary(ExposureSpec::own_treatment(1), ExposureSpec::own_treatment(1)));
  CHECK_FALSE(est::complementary(ExposureSpec::own_treatment(1), ExposureSpec{0, 0, 0, 0, exposure::kInfinity}));
  CHECK_FALSE(est::complementary(ExposureSpec{1, 0, 2, 0, exposure::kInfinity}, ExposureSpec::own_treatment(0)));
}

TEST_CASE("pipeline shares one propensity fit for complementary exposures") {
  const auto g = support::path(6);
  const std::vector<double> x{0, 1, 2, 3, 4, 5}, y{1, 2, 1, 2, 1, 2};
  const std::vector<int> d{1, 0, 1, 0, 1, 0};
  FixedLearner learner;
  learner.probability = {0.3, 0.3, 0.3, 0.3, 0.3, 0.3};
  learner.regression = {1.5, 1.5, 1.5, 1.5, 1.5, 1.5};
  Rng rng(4);
  est::EstimateOptions opt;
  opt.bandwidth = 1;
  const auto r = est::estimate(g, x, d, y, opt, learner, rng);
  CHECK(learner.probability_calls == 1);
  CHECK(r.treated_count == 3);
  CHECK(r.control_count == 3);
  CHECK(r.bandwidth == 1);
  // tau_i = 1(d)(y - 1.5)/0.3 - 1(1-d)(y - 1.5)/0.7
  double expect = 0.0;
  for (std::size_t i = 0; i < 6; ++i) expect += d[i] ? (y[i] - 1.5) / 0.3 : -(y[i] - 1.5) / 0.7;
  CHECK(r.tau_hat == doctest::Approx(expect / 6));
  CHECK(r.overlap_histogram[3] == 6);

  opt.share_complementary_propensity = false;
  learner.probability_calls = 0;
  est::estimate(g, x, d, y, opt, learner, rng);
  CHECK(learner.probability_calls == 2);
}

TEST_CASE("pipeline trims and counts") {
  const auto g = support::path(4);
  const std::vector<double> x{0, 0, 0, 0}, y{1, 0, 1, 0};
  const std::vector<int> d{1, 0, 1, 0};
  FixedLearner learner;
  learner.probability = {1.0, 0.5, 0.5, 0.0};
  learner.regression = {0.5, 0.5, 0.5, 0.5};
  Rng rng(5);
  est::EstimateOptions opt;
  const auto r = est::estimate(g, x, d, y, opt, learner, rng);
  CHECK(r.trimmed_count == 2);
  CHECK_FALSE(r.warnings.empty());
  CHECK(std::isfinite(r.tau_hat));
}

TEST_CASE("outcome fits use the exposure's units") {
  const auto g = support::path(5);
  const std::vector<double> x(5, 0.0), y{1, 2, 3, 4, 5};
  FixedLearner learner;
  learner.regression.assign(5, 0.0);
  Rng rng(6);
  est::fit_outcome(g, x, y, std::vector<int>{1, 0, 1, 1, 0}, learner, rng);
  CHECK(learner.masks.back() == std::vector<std::size_t>{0, 2, 3});
  CHECK_THROWS_AS(est::fit_outcome(g, x, y, std::vector<int>{0, 0, 1, 0, 0}, learner, rng), std::invalid_argument);
}

TEST_CASE("propensity fits use the degree population") {
  const auto g = graph::Graph::from_edges(4, std::vector<graph::Edge>{{0, 1}, {1, 2}});
  const std::vector<double> x(4, 0.0);
  const std::vector<int> d{1, 1, 0, 0};
  FixedLearner learner;
  learner.probability.assign(4, 0.5);
  Rng rng(7);
  est::fit_propensity(g, x, d, exposure::ExposureSpec{1, 0, exposure::kInfinity, 1, 1}, learner, rng);
  CHECK(learner.masks.back() == std::vector<std::size_t>{0, 2});
  CHECK_THROWS_AS(est::fit_propensity(g, x, d, exposure::ExposureSpec{1, 0, exposure::kInfinity, 5, 9}, learner, rng),
                  std::invalid_argument);
}

TEST_CASE("negative HAC variance is clamped with a warning") {
  // Contributions alternate in sign along a path, so neighbor products are negative.
  const auto g = support::path(6);
  const std::vector<double> y(6, 2.0);
  const std::vector<int> it{1, 0, 1, 0, 1, 0}, itp{0, 1, 0, 1, 0, 1};
  est::NuisanceFits f{std::vector<double>(6, 0.5), std::vector<double>(6, 0.5), std::vector<double>(6, 0.0),
                      std::vector<double>(6, 0.0)};
  const auto r = est::assemble_report(g, y, it, itp, f, 1, 0.95);
  CHECK(r.hac_variance < 0.0);
  CHECK(r.hac_se == 0.0);
  CHECK_FALSE(r.warnings.empty());
  CHECK(r.iid_se > 0.0);
}

TEST_CASE("GNN propensity under a null design is about one half") {
  Rng rng(8);
  const auto g = graph::generate_er(600, 5.0, rng);
  std::vector<double> x(600);
  std::vector<int> d(600);
  for (std::size_t i = 0; i < 600; ++i) {
    x[i] = rng.normal();
    d[i] = rng.uniform() < 0.5;
  }
  netcausal::gnn::GnnConfig c;
  c.depth = 1;
  c.train.epochs = 150;
  est::GnnLearner learner(c);
  const auto p = est::fit_propensity(g, x, d, exposure::ExposureSpec::own_treatment(1), learner, rng);
  double mean = 0.0;
  for (double v : p) mean += v;
  CHECK(std::abs(mean / 600 - 0.5) < 0.05);
  CHECK(learner.trained_epochs() == 150);
}

TEST_CASE("degenerate labels trim to the upper bound") {
  const graph::Graph g(50);
  std::vector<double> x(50);
  for (std::size_t i = 0; i < 50; ++i) x[i] = static_cast<double>(i) / 50.0;
  const std::vector<int> d(50, 1);
  netcausal::gnn::GnnConfig c;
  c.depth = 1;
  c.train.epochs = 1000;
  c.train.adam.learning_rate = 0.1;
  est::GnnLearner learner(c);
  Rng rng(9);
  const auto p = est::trim(est::fit_propensity(g, x, d, exposure::ExposureSpec::own_treatment(1), learner, rng), 0.01, 0.99);
  for (double v : p) CHECK(v == 0.99);
}

TEST_CASE("GNN outcome fits") {
  Rng rng(10);
  const graph::Graph g(1000);
  std::vector<double> x(1000), y(1000), c(1000, -1.25);
  for (std::size_t i = 0; i < 1000; ++i) {
    x[i] = rng.normal();
    y[i] = 3.0 * x[i];
  }
  netcausal::gnn::GnnConfig cfg;
  cfg.depth = 1;
  cfg.train.epochs = 300;
  cfg.train.adam.learning_rate = 0.05;
  est::GnnLearner learner(cfg);
  const std::vector<int> all(1000, 1);
  const auto mc = est::fit_outcome(g, x, c, all, learner, rng);
  for (double v : mc) CHECK(std::abs(v + 1.25) < 0.05);
  const auto my = est::fit_outcome(g, x, y, all, learner, rng);
  double mse = 0.0;
  for (std::size_t i = 0; i < 1000; ++i) mse += (my[i] - y[i]) * (my[i] - y[i]);
  CHECK(mse / 1000 < 0.1);
}

TEST_CASE("GLM learners recover a linear outcome") {
  Rng rng(11);
  const auto g = graph::generate_er(300, 4.0, rng);
  std::vector<double> x(300);
  for (auto& v : x) v = rng.normal();
  std::vector<double> y(300);
  for (std::size_t i = 0; i < 300; ++i) {
    double m = 0.0;
    for (auto j : g.neighbors(static_cast<graph::NodeId>(i))) m += x[j];
    if (g.degree(static_cast<graph::NodeId>(i)) > 0) m /= static_cast<double>(g.degree(static_cast<graph::NodeId>(i)));
    y[i] = 1.0 + 2.0 * x[i] - m + 0.1 * static_cast<double>(g.degree(static_cast<graph::NodeId>(i)));
  }
  for (std::size_t order : {1, 2, 3}) {
    est::GlmLearner learner(order);
    CHECK(learner.name() == "glm_order_" + std::to_string(order));
    const auto fit = learner.fit_regression(g, x, y, iota(300), rng);
    CHECK(support::max_abs_diff(fit, y) < 1e-6);
  }
}
