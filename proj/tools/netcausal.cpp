// Command-line front end: Monte Carlo runs, single-dataset estimation,
// enumeration checks, WL refinement and graph statistics.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "netcausal/estimator.hpp"
#include "netcausal/graph.hpp"
#include "netcausal/harness.hpp"
#include "netcausal/oracle.hpp"
#include "netcausal/runtime.hpp"
#include "netcausal/wl.hpp"

namespace nc = netcausal;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::string out_path;
  std::string format = "markdown";
};

nc::harness::ExperimentConfig resolve_config(const Common& c) {
  auto config = c.config_path.empty() ? nc::harness::ExperimentConfig{} : nc::harness::load_config(c.config_path);
  if (c.seed) config.seed = *c.seed;
  if (c.workers) config.workers = *c.workers;
  config.validate();
  return config;
}

void write_output(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

struct Dataset {
  std::vector<double> x, y;
  nc::BinaryVector d;
};

// CSV with a header naming columns x, d and y, one row per unit.
Dataset read_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
  const auto header = split_csv_line(line);
  auto column = [&](const std::string& name) {
    for (std::size_t k = 0; k < header.size(); ++k)
      if (header[k] == name) return k;
    throw std::runtime_error(path + ": missing column " + name);
  };
  const auto cx = column("x"), cd = column("d"), cy = column("y");
  Dataset data;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != header.size()) throw std::runtime_error(path + ": ragged row");
    data.x.push_back(std::stod(f[cx]));
    data.d.push_back(std::stoi(f[cd]));
    data.y.push_back(std::stod(f[cy]));
  }
  return data;
}

nc::graph::Graph load_or_generate(const std::string& path, const std::string& model, std::size_t n, double kappa,
                                  std::uint64_t seed) {
  if (!path.empty()) return nc::graph::read_edge_list_file(path, n);
  nc::Rng rng(seed);
  return nc::harness::parse_graph_model(model) == nc::harness::GraphModel::rgg ? nc::graph::generate_rgg(n, kappa, rng)
                                                                               : nc::graph::generate_er(n, kappa, rng);
}

// Random connected instance on n <= 6 units with two-point supports.
nc::oracle::DiscreteDgp random_instance(nc::Rng& rng, std::size_t n, bool independent) {
  nc::oracle::DiscreteDgp m;
  std::vector<nc::graph::Edge> edges;
  for (std::size_t i = 1; i < n; ++i) edges.emplace_back(rng.index(i), i);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (rng.bernoulli(0.25)) edges.emplace_back(i, j);
  m.graph = nc::graph::Graph::from_edges(n, edges);
  for (std::size_t i = 0; i < n; ++i) {
    m.x.push_back(0.25 * static_cast<double>(rng.index(5)));
    m.eps.push_back({{-rng.uniform(0.2, 1.5), rng.uniform(0.2, 1.5)}, {0.5, 0.5}});
    const double q = rng.uniform(0.2, 0.8);
    m.nu.push_back({{-rng.uniform(5.5, 8.0), rng.uniform(5.5, 8.0)}, {q, 1.0 - q}});
  }
  nc::dgp::SelectionParams sel;
  if (independent) {
    sel.beta = 0.0;
    sel.neighbor_unobservables = false;
  }
  nc::dgp::OutcomeParams out;
  out.beta = 0.0;
  out.own_treatment = 1.0;
  out.peer_treatment = 0.7;
  m.selection = nc::oracle::best_response_selection(sel);
  m.outcome = nc::oracle::linear_in_means_outcome(out);
  return m;
}

int cmd_simulate(const Common& c, std::optional<std::size_t> replications, bool full_scale,
                 const std::string& records_path) {
  auto config = resolve_config(c);
  if (full_scale) config.replications = 5000;
  if (replications) config.replications = *replications;
  config.validate();
  const auto format = nc::harness::parse_table_format(c.format);
  std::size_t last = 0;
  auto result = nc::harness::run_experiment(config, [&](std::size_t done, std::size_t total) {
    if (done * 10 / total != last || done == total) {
      last = done * 10 / total;
      std::fprintf(stderr, "\r%zu/%zu replications", done, total);
      if (done == total) std::fputc('\n', stderr);
    }
  });
  for (const auto& f : result.failures)
    std::fprintf(stderr, "replication %zu failed: %s\n", f.replication, f.message.c_str());
  std::fprintf(stderr, "%zu of %zu replications failed\n", result.failures.size(), config.replications);
  write_output(c.out_path, nc::harness::emit_table(result.rows, format));
  if (!records_path.empty()) write_output(records_path, nc::harness::emit_records(result.records));
  return 0;
}

int cmd_estimate(const Common& c, const std::string& graph_path, const std::string& data_path,
                 const std::string& learner_id) {
  const auto config = resolve_config(c);
  const auto data = read_dataset(data_path);
  const auto g = nc::graph::read_edge_list_file(graph_path, data.x.size());
  if (g.size() != data.x.size()) throw std::runtime_error("graph and data disagree on the number of units");
  nc::estimator::EstimateOptions options;
  options.t = config.t;
  options.tp = config.tp;
  options.trim = config.trim;
  options.level = config.level;
  options.bandwidth = config.bandwidth;
  options.share_complementary_propensity = config.share_complementary_propensity;
  auto learner = nc::harness::make_learner(learner_id, config);
  nc::Rng rng = nc::Rng::stream(config.seed, {0});
  const auto r = nc::estimator::estimate(g, data.x, data.d, data.y, options, *learner, rng);

  std::ostringstream out;
  out.precision(10);
  out << "estimator      " << learner->name() << '\n'
      << "tau_hat        " << r.tau_hat << '\n'
      << "hac_se         " << r.hac_se << "  (b_n = " << r.bandwidth << ")\n"
      << "hac_ci         [" << r.hac_ci.lo << ", " << r.hac_ci.hi << "]\n"
      << "iid_se         " << r.iid_se << '\n'
      << "iid_ci         [" << r.iid_ci.lo << ", " << r.iid_ci.hi << "]\n"
      << "treated        " << r.treated_count << '\n'
      << "controls       " << r.control_count << '\n'
      << "trimmed        " << r.trimmed_count << '\n'
      << "overlap        ";
  for (auto h : r.overlap_histogram) out << h << ' ';
  out << '\n';
  for (const auto& w : r.warnings) out << "warning        " << w << '\n';
  write_output(c.out_path, out.str());
  return 0;
}

int cmd_oracle(const Common& c, std::size_t instances, std::size_t n, std::size_t k) {
  const auto config = resolve_config(c);
  std::ostringstream out;
  out.precision(6);
  out << "instance,check,lhs,rhs,diff,independent\n";
  for (std::size_t r = 0; r < instances; ++r) {
    nc::Rng rng = nc::Rng::stream(config.seed, {r});
    for (bool independent : {false, true}) {
      const auto m = random_instance(rng, n, independent);
      // t' = untreated with no treated neighbors pins D on N(i, 1).
      const auto t = nc::exposure::ExposureSpec::own_treatment(1);
      const nc::exposure::ExposureSpec tp{0, 0.0, 0.0, 0.0, nc::exposure::kInfinity};
      try {
        const auto res = independent ? nc::oracle::verify_independent_identification(m, t, tp, k)
                                     : nc::oracle::verify_neighborhood_identification(m, t, tp, k);
        out << r << ',' << (independent ? "independent" : "neighborhood") << ',' << res.lhs << ',' << res.rhs << ','
            << res.diff << ',' << (res.treatments_independent ? "yes" : "no") << '\n';
      } catch (const nc::oracle::PreconditionError& e) {
        out << r << ',' << (independent ? "independent" : "neighborhood") << ",,,,precondition: " << e.what()
            << '\n';
      }
    }
  }
  write_output(c.out_path, out.str());
  return 0;
}

int cmd_wl(const Common& c, const std::string& graph_path, const std::string& labels_path, std::size_t rounds) {
  const auto g = nc::graph::read_edge_list_file(graph_path);
  std::vector<std::size_t> labels = nc::wl::constant_labels(g.size());
  if (!labels_path.empty()) {
    std::ifstream in(labels_path);
    if (!in) throw std::runtime_error("cannot open " + labels_path);
    labels.clear();
    for (std::size_t v; in >> v;) labels.push_back(v);
    if (labels.size() != g.size()) throw std::runtime_error("one label per unit expected");
  }
  const auto converge = nc::wl::iterations_to_convergence(g, labels);
  const auto coloring = rounds ? nc::wl::wl_colors_at(g, labels, rounds) : nc::wl::wl_refine(g, labels, g.size());
  std::ostringstream out;
  out << "units                " << g.size() << '\n'
      << "convergence_round    " << converge << '\n'
      << "rounds_run           " << coloring.iterations << '\n'
      << "classes              " << coloring.class_count << '\n'
      << "color,count\n";
  for (const auto& [color, count] : nc::wl::color_histogram(coloring.colors)) out << color << ',' << count << '\n';
  write_output(c.out_path, out.str());
  return 0;
}

int cmd_graph_stats(const Common& c, const std::string& graph_path, const std::string& model, std::size_t n,
                    double kappa) {
  const auto g = load_or_generate(graph_path, model, n, kappa, c.seed.value_or(1));
  const auto& s = g.stats();
  std::ostringstream out;
  out.precision(8);
  out << "units                " << g.size() << '\n'
      << "edges                " << g.edge_count() << '\n'
      << "components           " << s.component_count << '\n'
      << "largest_component    " << s.largest_component.size() << '\n'
      << "avg_degree           " << s.avg_degree << '\n'
      << "avg_path_length      " << s.avg_path_length << '\n';
  try {
    const auto b = nc::graph::bandwidth_diagnostics(g);
    out << "threshold            " << b.threshold << '\n'
        << "regime               "
        << (b.regime == nc::graph::BandwidthRegime::quarter_path_length ? "L/4" : "L^(1/4)") << '\n'
        << "b_n                  " << b.bandwidth << '\n';
  } catch (const nc::graph::BandwidthUndefined& e) {
    out << "b_n                  undefined (" << e.what() << ")\n";
  }
  write_output(c.out_path, out.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  nc::tune_allocator();
  CLI::App app{"Network causal effects with graph neural network nuisances"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "Experiment config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", common.seed, "Base seed");
    sub->add_option("--workers", common.workers, "Worker threads (0: all cores)");
    sub->add_option("--out", common.out_path, "Output path (default stdout)");
    sub->add_option("--format", common.format, "Table format")->check(CLI::IsMember({"csv", "markdown"}));
  };

  auto* simulate = app.add_subcommand("simulate", "Run the Monte Carlo experiment");
  add_common(simulate);
  std::optional<std::size_t> replications;
  bool full_scale = false;
  std::string records_path;
  simulate->add_option("--replications", replications, "Override the replication count");
  simulate->add_flag("--full-scale", full_scale, "Use 5000 replications");
  simulate->add_option("--records", records_path, "Per-replication CSV output");

  auto* estimate = app.add_subcommand("estimate", "Estimate tau(t, t') on one dataset");
  add_common(estimate);
  std::string graph_path, data_path, learner_id = "gnn_L2";
  estimate->add_option("--graph", graph_path, "Edge list")->required()->check(CLI::ExistingFile);
  estimate->add_option("--data", data_path, "CSV with columns x, d, y")->required()->check(CLI::ExistingFile);
  estimate->add_option("--learner", learner_id, "gnn_L<depth> or glm_order_<k>");

  auto* oracle = app.add_subcommand("oracle", "Exact identification checks on random small instances");
  add_common(oracle);
  std::size_t instances = 20, oracle_n = 5, oracle_k = 1;
  oracle->add_option("--instances", instances, "Number of instances");
  oracle->add_option("--units", oracle_n, "Units per instance")->check(CLI::Range(2, 6));
  oracle->add_option("--radius", oracle_k, "Neighborhood radius K");

  auto* wl = app.add_subcommand("wl", "1-WL color refinement report");
  add_common(wl);
  std::string wl_graph, wl_labels;
  std::size_t wl_rounds = 0;
  wl->add_option("--graph", wl_graph, "Edge list")->required()->check(CLI::ExistingFile);
  wl->add_option("--labels", wl_labels, "Initial labels, one integer per unit");
  wl->add_option("--rounds", wl_rounds, "Stop after this many rounds (0: until stable)");

  auto* stats = app.add_subcommand("graph-stats", "Average degree, path length and HAC bandwidth");
  add_common(stats);
  std::string stats_graph, model = "er";
  std::size_t stats_n = 1000;
  double kappa = 5.0;
  stats->add_option("--graph", stats_graph, "Edge list (otherwise a generated graph)");
  stats->add_option("--model", model, "rgg or er")->check(CLI::IsMember({"rgg", "er"}));
  stats->add_option("--units", stats_n, "Units for a generated graph");
  stats->add_option("--kappa", kappa, "Expected degree parameter");

  auto* print = app.add_subcommand("print-config", "Print the effective configuration");
  add_common(print);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*simulate) return cmd_simulate(common, replications, full_scale, records_path);
    if (*estimate) return cmd_estimate(common, graph_path, data_path, learner_id);
    if (*oracle) return cmd_oracle(common, instances, oracle_n, oracle_k);
    if (*wl) return cmd_wl(common, wl_graph, wl_labels, wl_rounds);
    if (*stats) return cmd_graph_stats(common, stats_graph, model, stats_n, kappa);
    if (*print) {
      std::ostringstream out;
      nc::harness::write_config(out, resolve_config(common));
      write_output(common.out_path, out.str());
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
