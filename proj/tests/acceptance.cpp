// Acceptance report: one PASS/FAIL line per criterion. Exit status is
// nonzero if any selected criterion fails.

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <queue>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "fd_check.hpp"
#include "gnn_props.hpp"
#include "hac_oracle.hpp"
#include "netcausal/dgp.hpp"
#include "netcausal/estimator.hpp"
#include "netcausal/graph.hpp"
#include "netcausal/harness.hpp"
#include "netcausal/oracle.hpp"
#include "netcausal/runtime.hpp"
#include "oracle_instances.hpp"
#include "support.hpp"

namespace nc = netcausal;
namespace graph = nc::graph;
namespace hn = nc::harness;
using nc::Rng;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

const hn::TableRow* row_for(const std::vector<hn::TableRow>& rows, const std::string& id) {
  for (const auto& r : rows)
    if (r.estimator == id) return &r;
  return nullptr;
}

// ---------------------------------------------------------------------------

Outcome table_reproduction(const std::vector<hn::TableRow>& rows) {
  const auto* r = row_for(rows, "gnn_L2");
  if (!r) return {false, "no gnn_L2 row"};
  const bool bias_ok = std::abs(r->bias) <= 0.05;
  const bool cov_ok = r->hac_coverage >= 0.88 && r->hac_coverage <= 0.97;
  const double rel = std::abs(r->hac_se - r->oracle_se) / r->oracle_se;
  const bool se_ok = rel <= 0.30;
  return {bias_ok && cov_ok && se_ok,
          fmt("reps=%zu |bias|=%.4f (<=0.05) hac_coverage=%.4f ([0.88,0.97]) hac_se=%.4f oracle_se=%.4f "
              "rel_diff=%.3f (<=0.30)",
              r->replications, std::abs(r->bias), r->hac_coverage, r->hac_se, r->oracle_se, rel)};
}

Outcome directional_claims(const std::vector<hn::TableRow>& rows) {
  const auto* l1 = row_for(rows, "gnn_L1");
  const auto* l2 = row_for(rows, "gnn_L2");
  const auto* l3 = row_for(rows, "gnn_L3");
  if (!l1 || !l2 || !l3) return {false, "missing GNN rows"};
  const bool a = l2->iid_coverage < 0.88;
  bool b = true;
  std::string glm;
  for (int k = 1; k <= 3; ++k) {
    const auto* g = row_for(rows, "glm_order_" + std::to_string(k));
    if (!g) return {false, "missing GLM rows"};
    b = b && std::abs(g->bias) >= 2.0 * std::abs(l2->bias);
    glm += fmt(" glm%d=%.4f", k, std::abs(g->bias));
  }
  const bool c = std::abs(l2->bias) < std::abs(l1->bias) && std::abs(l2->bias) < std::abs(l3->bias);
  return {a && b && c,
          fmt("(a) iid_coverage=%.4f <0.88 %s; (b) |bias| gnn_L2=%.4f", l2->iid_coverage, a ? "ok" : "FAIL",
              std::abs(l2->bias)) +
              glm + (b ? " ok" : " FAIL") +
              fmt("; (c) |bias| L1=%.4f L2=%.4f L3=%.4f %s", std::abs(l1->bias), std::abs(l2->bias),
                  std::abs(l3->bias), c ? "ok" : "FAIL")};
}

Outcome treated_fraction(std::size_t workers) {
  std::string detail;
  bool pass = true;
  for (auto model : {hn::GraphModel::er, hn::GraphModel::rgg}) {
    hn::ExperimentConfig c;
    c.graph_model = model;
    c.n = 2000;
    std::vector<double> frac(100);
    std::vector<std::jthread> pool;
    std::atomic<std::size_t> next{0};
    const std::size_t threads = std::max<std::size_t>(1, workers);
    for (std::size_t w = 0; w < threads; ++w)
      pool.emplace_back([&] {
        for (std::size_t r = next++; r < frac.size(); r = next++) {
          Rng rng(hn::replication_seed(c.seed, r));
          auto g = model == hn::GraphModel::er ? graph::generate_er(c.n, c.kappa, rng)
                                               : graph::generate_rgg(c.n, c.kappa, rng);
          const auto draw = nc::dgp::simulate(std::move(g), c.selection, c.outcome, rng);
          frac[r] = nc::dgp::treated_fraction(draw.d);
        }
      });
    pool.clear();
    double mean = 0.0;
    for (double f : frac) mean += f / 100.0;
    const bool ok = std::abs(mean - 0.57) <= 0.03;
    pass = pass && ok;
    detail += fmt("%s mean=%.4f ", hn::to_string(model).c_str(), mean);
  }
  return {pass, detail + "(target 0.57 +/- 0.03, 100 reps each, n=2000)"};
}

Outcome path_lengths() {
  double rgg = 0.0, er = 0.0;
  Rng rng = Rng::stream(20240601, {4});
  for (int k = 0; k < 20; ++k) {
    rgg += graph::generate_rgg(2000, 5.0, rng).stats().avg_path_length / 20.0;
    er += graph::generate_er(2000, 5.0, rng).stats().avg_path_length / 20.0;
  }
  const bool ok = std::abs(rgg - 39.5) <= 5.0 && std::abs(er - 4.9) <= 0.5;
  return {ok, fmt("rgg=%.3f (39.5 +/- 5) er=%.3f (4.9 +/- 0.5), 20 draws each", rgg, er)};
}

Outcome hac_equivalence() {
  Rng rng = Rng::stream(20240601, {5});
  double worst = 0.0, worst_iid = 0.0;
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = 2 + rng.index(99);
    const auto g = support::random_graph(n, rng.uniform(0.5, 4.0) / static_cast<double>(n), rng);
    std::vector<double> c(n);
    for (auto& v : c) v = rng.normal() * 3.0 + 1.0;
    const std::size_t b = rng.index(6);
    worst = std::max(worst, std::abs(nc::estimator::hac_variance(c, g, b) - hacoracle::brute_force_hac(c, g, b)));
    worst_iid = std::max(worst_iid, std::abs(nc::estimator::hac_variance(c, g, 0) - nc::estimator::iid_variance(c)));
  }
  return {worst < 1e-12 && worst_iid < 1e-12,
          fmt("200 graphs n<=100: max|hac-brute|=%.3g max|hac(b=0)-iid|=%.3g (<1e-12)", worst, worst_iid)};
}

Outcome identification() {
  Rng rng = Rng::stream(20240601, {6});
  const auto t = nc::exposure::ExposureSpec::own_treatment(1);
  const auto tp = oracleinst::isolated_control();
  double worst31 = 0.0, worst32 = 0.0;
  std::size_t n31 = 0, n32 = 0;
  for (int rep = 0; rep < 25; ++rep) {
    const std::size_t n = 3 + rng.index(4);
    const auto local = oracleinst::random_instance(rng, n, false, 0.0);
    worst31 = std::max(worst31, nc::oracle::verify_neighborhood_identification(local, t, tp, 1).diff);
    ++n31;
    const auto indep = oracleinst::random_instance(rng, n, true, rep % 2 ? 0.5 : 0.0);
    const auto r = nc::oracle::verify_independent_identification(indep, t, tp, 1);
    if (!r.treatments_independent) return {false, "independent design not detected as independent"};
    worst32 = std::max(worst32, std::abs(r.remainder));
    ++n32;
  }
  return {worst31 < 1e-10 && worst32 < 1e-10,
          fmt("%zu local-outcome instances max|lhs-rhs|=%.3g; %zu independent instances max|R_n|=%.3g (<1e-10)",
              n31, worst31, n32, worst32)};
}

Outcome gnn_invariance() {
  Rng rng = Rng::stream(20240601, {7});
  const nc::gnn::Architecture archs[] = {nc::gnn::Architecture::gcn, nc::gnn::Architecture::sum_mlp,
                                         nc::gnn::Architecture::pna};
  double eq = 0.0, loc = 0.0, wl = 0.0;
  std::size_t nonvacuous = 0;
  for (int rep = 0; rep < 50; ++rep) {
    const auto t = gnnprops::random_triple(rng, archs[rep % 3], 1 + rng.index(3));
    eq = std::max(eq, gnnprops::equivariance_error(t, rng));
    loc = std::max(loc, gnnprops::locality_error(t, rng));
    wl = std::max(wl, gnnprops::wl_error(t));
    nonvacuous += gnnprops::shared_classes(t) > 0;
  }
  return {eq < 1e-10 && loc < 1e-10 && wl < 1e-10,
          fmt("50 triples: equivariance=%.3g locality=%.3g wl=%.3g (<1e-10); %zu with shared WL classes", eq, loc,
              wl, nonvacuous)};
}

Outcome autodiff() {
  Rng rng = Rng::stream(20240601, {8});
  double worst = 0.0;
  std::string worst_name;
  std::size_t ops = 0;
  for (const auto& op : fdcheck::operator_cases()) {
    const auto s = fdcheck::check_case(op, rng, 100);
    if (s.max_error >= worst) {
      worst = s.max_error;
      worst_name = op.name;
    }
    ++ops;
  }
  // Message-passing layers, through the full training objective.
  std::size_t layer_entries = 0, kinks = 0;
  for (auto arch : {nc::gnn::Architecture::gcn, nc::gnn::Architecture::sum_mlp, nc::gnn::Architecture::pna})
    for (auto agg : {nc::gnn::Aggregators::gamma1, nc::gnn::Aggregators::gamma2}) {
      if (arch != nc::gnn::Architecture::pna && agg == nc::gnn::Aggregators::gamma1) continue;
      nc::gnn::GnnConfig c;
      c.architecture = arch;
      c.aggregators = agg;
      c.depth = 2;
      c.first_layer_width = 3;
      c.hidden_width = 2;
      for (int point = 0; point < 100; ++point) {
        c.loss = point % 2 ? nc::gnn::Loss::logistic : nc::gnn::Loss::least_squares;
        const auto g = support::random_graph(12, 0.25, rng);
        nc::ad::Matrix x(12, 2);
        for (Eigen::Index k = 0; k < x.size(); ++k) x.data()[k] = rng.normal();
        std::vector<double> y(12);
        for (auto& v : y) v = c.loss == nc::gnn::Loss::logistic ? static_cast<double>(rng.index(2)) : rng.normal();
        const std::vector<std::size_t> mask{0, 1, 3, 4, 6, 8, 9, 11};
        auto model = nc::gnn::GnnModel::create(c, 2, g, rng);
        std::vector<nc::ad::Matrix> grad;
        nc::gnn::training_loss(model, g, x, y, mask, &grad);
        const double h = 1e-5;
        for (std::size_t k = 0; k < grad.size(); ++k)
          for (Eigen::Index e = 0; e < grad[k].size(); ++e) {
            double& w = model.parameters()[k].data()[e];
            const double orig = w;
            w = orig + h;
            const double up = nc::gnn::training_loss(model, g, x, y, mask);
            w = orig - h;
            const double down = nc::gnn::training_loss(model, g, x, y, mask);
            w = orig;
            const double fd = (up - down) / (2 * h);
            const double an = grad[k].data()[e];
            // A step that crosses a min/max switch shows up as disagreement
            // with the half step; such entries are not differentiable there.
            w = orig + h / 2;
            const double up2 = nc::gnn::training_loss(model, g, x, y, mask);
            w = orig - h / 2;
            const double down2 = nc::gnn::training_loss(model, g, x, y, mask);
            w = orig;
            const double fd2 = (up2 - down2) / h;
            if (std::abs(fd - fd2) > 1e-8 * std::max(1.0, std::abs(fd))) {
              ++kinks;
              continue;
            }
            ++layer_entries;
            const double err = std::abs(an - fd) / std::max({1.0, std::abs(an), std::abs(fd)});
            if (err >= worst) {
              worst = err;
              worst_name = nc::gnn::to_string(arch) + "_layer";
            }
          }
      }
      ++ops;
    }
  return {worst < 1e-5,
          fmt("%zu operators x 100 points, h=1e-5: max relative error=%.3g (%s) (<1e-5); layer entries checked=%zu, "
              "skipped at kinks=%zu",
              ops, worst, worst_name.c_str(), layer_entries, kinks)};
}

// Independent-treatment design on a fixed graph and covariates: D_i =
// 1{a + d mean(X_nbr) + g X_i + nu_i > 0}, so P(D_i = 1) = Phi(a + ...).
// The true outcome regressions follow from M = (I - beta G)^{-1}.
Outcome double_robustness(std::size_t workers) {
  const std::size_t n = 2000, reps = 200;
  Rng base = Rng::stream(20240601, {9});
  const auto g = graph::generate_er(n, 5.0, base);
  const auto prim = nc::dgp::draw_primitives(n, base);
  const auto& x = prim.x;

  nc::dgp::SelectionParams sel;
  sel.beta = 0.0;
  sel.neighbor_unobservables = false;
  nc::dgp::OutcomeParams out;
  out.own_treatment = 1.0;
  out.peer_treatment = 0.5;

  const auto mean_x = nc::dgp::neighbor_mean(g, x);
  const boost::math::normal std_normal;
  std::vector<double> p(n);
  for (std::size_t i = 0; i < n; ++i)
    p[i] = boost::math::cdf(std_normal, sel.alpha + sel.delta * mean_x[i] + sel.gamma * x[i]);

  Eigen::MatrixXd gm = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (graph::NodeId i = 0; i < n; ++i)
    for (graph::NodeId j : g.neighbors(i)) gm(i, j) = 1.0 / static_cast<double>(g.degree(i));
  const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(gm.rows(), gm.cols()) - out.beta * gm;
  const Eigen::MatrixXd m = a.partialPivLu().inverse();
  const Eigen::MatrixXd d_effect = out.own_treatment * m + out.peer_treatment * m * gm;  // dE[Y]/dD_j
  Eigen::VectorXd base_y(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) base_y(i) = out.alpha + out.delta * mean_x[i] + out.gamma * x[i];
  const Eigen::VectorXd c = m * base_y;
  const Eigen::VectorXd pv = Eigen::Map<const Eigen::VectorXd>(p.data(), static_cast<Eigen::Index>(n));
  const Eigen::VectorXd spill = d_effect * pv;
  std::vector<double> mu1(n), mu0(n);
  double tau = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const double others = spill(ii) - d_effect(ii, ii) * p[i];
    mu1[i] = c(ii) + others + d_effect(ii, ii);
    mu0[i] = c(ii) + others;
    tau += d_effect(ii, ii) / static_cast<double>(n);
  }

  enum Arm { true_p_noise_mu, true_mu_noise_p, both_noise };
  std::vector<std::array<double, 3>> est(reps);
  std::vector<std::jthread> pool;
  std::atomic<std::size_t> next{0};
  for (std::size_t w = 0; w < std::max<std::size_t>(1, workers); ++w)
    pool.emplace_back([&] {
      for (std::size_t r = next++; r < reps; r = next++) {
        Rng rng = Rng::stream(20240601, {9, r + 1});
        std::vector<double> eps(n), nu(n);
        for (std::size_t i = 0; i < n; ++i) {
          eps[i] = rng.normal();
          nu[i] = rng.normal();
        }
        const auto d = nc::dgp::simulate_selection(g, x, nu, sel).treatments;
        const auto y = nc::dgp::simulate_outcomes(g, x, d, eps, out);
        std::vector<int> it(n), itp(n);
        for (std::size_t i = 0; i < n; ++i) {
          it[i] = d[i];
          itp[i] = 1 - d[i];
        }
        std::vector<double> noise_mu1(n), noise_mu0(n), noise_p(n), comp_p(n), comp_noise(n);
        for (std::size_t i = 0; i < n; ++i) {
          noise_mu1[i] = 3.0 * rng.normal();
          noise_mu0[i] = 3.0 * rng.normal();
          noise_p[i] = rng.uniform(0.1, 0.9);
          comp_p[i] = 1.0 - p[i];
          comp_noise[i] = 1.0 - noise_p[i];
        }
        const auto tp = nc::estimator::trim(p, 0.01, 0.99);
        const auto tcp = nc::estimator::trim(comp_p, 0.01, 0.99);
        est[r][true_p_noise_mu] = nc::estimator::doubly_robust(y, it, itp, {tp, tcp, noise_mu1, noise_mu0}).tau_hat;
        est[r][true_mu_noise_p] = nc::estimator::doubly_robust(y, it, itp, {noise_p, comp_noise, mu1, mu0}).tau_hat;
        est[r][both_noise] = nc::estimator::doubly_robust(y, it, itp, {noise_p, comp_noise, noise_mu1, noise_mu0}).tau_hat;
      }
    });
  pool.clear();

  // True p never needs trimming in this design; check so trimming cannot bias the first arm.
  const auto [pmin, pmax] = std::minmax_element(p.begin(), p.end());
  std::string detail = fmt("tau=%.4f p in [%.3f,%.3f]", tau, *pmin, *pmax);
  bool pass = true;
  const char* names[] = {"true_p+noise_mu", "true_mu+noise_p", "both_noise"};
  for (int arm = 0; arm < 3; ++arm) {
    double mean = 0.0;
    for (const auto& e : est) mean += e[arm] / static_cast<double>(reps);
    double ss = 0.0;
    for (const auto& e : est) ss += (e[arm] - mean) * (e[arm] - mean);
    const double mc_se = std::sqrt(ss / static_cast<double>(reps - 1) / static_cast<double>(reps));
    const double bias = mean - tau;
    if (arm < 2) pass = pass && std::abs(bias) < 3.0 * mc_se;
    detail += fmt("; %s bias=%.4f mc_se=%.4f ratio=%.2f%s", names[arm], bias, mc_se, std::abs(bias) / mc_se,
                  arm == 2 ? " (info)" : "");
  }
  return {pass, detail};
}

// Average path length by breadth-first search over the largest component.
double independent_path_length(const graph::Graph& g) {
  const std::size_t n = g.size();
  std::vector<int> comp(n, -1);
  int best = -1;
  std::size_t best_size = 0;
  for (std::size_t s = 0, label = 0; s < n; ++s) {
    if (comp[s] >= 0) continue;
    std::size_t size = 0;
    std::queue<std::size_t> q;
    q.push(s);
    comp[s] = static_cast<int>(label);
    while (!q.empty()) {
      const auto u = q.front();
      q.pop();
      ++size;
      for (auto v : g.neighbors(static_cast<graph::NodeId>(u)))
        if (comp[v] < 0) {
          comp[v] = static_cast<int>(label);
          q.push(v);
        }
    }
    if (size > best_size) {
      best_size = size;
      best = static_cast<int>(label);
    }
    ++label;
  }
  double total = 0.0;
  std::vector<long> dist(n);
  for (std::size_t s = 0; s < n; ++s) {
    if (comp[s] != best) continue;
    std::fill(dist.begin(), dist.end(), -1);
    std::queue<std::size_t> q;
    q.push(s);
    dist[s] = 0;
    while (!q.empty()) {
      const auto u = q.front();
      q.pop();
      total += static_cast<double>(dist[u]);
      for (auto v : g.neighbors(static_cast<graph::NodeId>(u)))
        if (dist[v] < 0) {
          dist[v] = dist[u] + 1;
          q.push(v);
        }
    }
  }
  return total / (static_cast<double>(best_size) * static_cast<double>(best_size - 1));
}

std::size_t independent_bandwidth(const graph::Graph& g) {
  const double n = static_cast<double>(g.size());
  const double delta = 2.0 * static_cast<double>(g.edge_count()) / n;
  const double l = independent_path_length(g);
  return l < 2.0 * std::log(n) / std::log(delta) ? static_cast<std::size_t>(std::ceil(l / 4.0))
                                                 : static_cast<std::size_t>(std::ceil(std::pow(l, 0.25)));
}

Outcome bandwidth_rule() {
  const auto p10 = support::path(10);
  const auto k10 = support::complete(10);
  Rng rng = Rng::stream(20240601, {10});
  const auto rgg = graph::generate_rgg(2000, 5.0, rng);
  const auto diag = graph::bandwidth_diagnostics(rgg);
  const std::size_t bp = graph::hac_bandwidth(p10), bk = graph::hac_bandwidth(k10), br = graph::hac_bandwidth(rgg);
  const std::size_t ir = independent_bandwidth(rgg);
  const bool ok = bp == 1 && bk == 1 && br == ir && diag.regime == graph::BandwidthRegime::fourth_root &&
                  independent_bandwidth(p10) == 1 && independent_bandwidth(k10) == 1;
  return {ok, fmt("P10 b=%zu (1) K10 b=%zu (1) RGG n=2000: L=%.2f threshold=%.2f fourth-root=%s b=%zu "
                  "independent=%zu",
                  bp, bk, diag.avg_path_length, diag.threshold,
                  diag.regime == graph::BandwidthRegime::fourth_root ? "yes" : "no", br, ir)};
}

}  // namespace

int main(int argc, char** argv) {
  nc::tune_allocator();
  CLI::App app{"Acceptance report"};
  std::vector<int> only;
  std::size_t workers = 0;
  std::size_t replications = 500;
  std::string table_path, records_path;
  app.add_option("--only", only, "Criteria to run (default: all)")->delimiter(',');
  app.add_option("--workers", workers, "Worker threads (0: one per hardware thread)");
  app.add_option("--replications", replications, "Replications for criteria 1 and 2");
  app.add_option("--table", table_path, "Write the criteria 1-2 table (markdown) here");
  app.add_option("--records", records_path, "Write the criteria 1-2 per-replication records here");
  CLI11_PARSE(app, argc, argv);
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  auto selected = [&](int k) { return only.empty() || std::find(only.begin(), only.end(), k) != only.end(); };

  bool all = true;
  auto report = [&](int k, const Outcome& o) {
    std::printf("%s criterion %d: %s\n", o.pass ? "PASS" : "FAIL", k, o.detail.c_str());
    std::fflush(stdout);
    all = all && o.pass;
  };
  auto guarded = [&](int k, const std::function<Outcome()>& f) {
    if (!selected(k)) return;
    try {
      report(k, f());
    } catch (const std::exception& e) {
      report(k, {false, std::string("exception: ") + e.what()});
    }
  };

  guarded(10, bandwidth_rule);
  guarded(5, hac_equivalence);
  guarded(8, autodiff);
  guarded(7, gnn_invariance);
  guarded(6, identification);
  guarded(4, path_lengths);
  guarded(3, [&] { return treated_fraction(workers); });
  guarded(9, [&] { return double_robustness(workers); });

  if (selected(1) || selected(2)) {
    hn::ExperimentConfig config;
    config.replications = replications;
    config.workers = workers;
    try {
      const auto result = hn::run_experiment(config);
      if (!table_path.empty()) std::ofstream(table_path) << hn::emit_table(result.rows, hn::TableFormat::markdown);
      if (!records_path.empty()) std::ofstream(records_path) << hn::emit_records(result.records);
      std::printf("info: %zu replications, %zu failed\n", replications, result.failures.size());
      if (selected(1)) report(1, table_reproduction(result.rows));
      if (selected(2)) report(2, directional_claims(result.rows));
    } catch (const std::exception& e) {
      if (selected(1)) report(1, {false, std::string("exception: ") + e.what()});
      if (selected(2)) report(2, {false, std::string("exception: ") + e.what()});
    }
  }
  return all ? 0 : 1;
}
