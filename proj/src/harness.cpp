#include "netcausal/harness.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <boost/tokenizer.hpp>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

namespace netcausal::harness {

namespace {

// Shortest text that parses back to the same double.
std::string fmt(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string trim_ws(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim_ws(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_double(const std::string& key, const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw std::invalid_argument("config: " + key + ": not a number: '" + s + "'");
  return v;
}

std::uint64_t to_u64(const std::string& key, const std::string& s) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
    throw std::invalid_argument("config: " + key + ": not a nonnegative integer: '" + s + "'");
  try {
    return std::stoull(s);
  } catch (const std::exception&) {
    throw std::invalid_argument("config: " + key + ": out of range: '" + s + "'");
  }
}

bool to_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw std::invalid_argument("config: " + key + ": expected true or false, got '" + s + "'");
}

std::string bool_str(bool b) { return b ? "true" : "false"; }

struct Field {
  std::string section;
  std::string key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string& name, const std::string&)> set;
};

#define NC_DOUBLE(sec, name, member)                                                            \
  Field {                                                                                       \
    sec, name, [](const ExperimentConfig& c) { return fmt(c.member); },                         \
        [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.member = to_double(k, v); } \
  }
#define NC_SIZE(sec, name, member)                                                               \
  Field {                                                                                        \
    sec, name, [](const ExperimentConfig& c) { return std::to_string(c.member); },               \
        [](ExperimentConfig& c, const std::string& k, const std::string& v) {                    \
          c.member = static_cast<decltype(c.member)>(to_u64(k, v));                              \
        }                                                                                        \
  }
#define NC_BOOL(sec, name, member)                                                              \
  Field {                                                                                       \
    sec, name, [](const ExperimentConfig& c) { return bool_str(c.member); },                    \
        [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.member = to_bool(k, v); } \
  }

#define NC_EXPOSURE(prefix, member)                                                      \
  Field{"exposure", prefix "_d", [](const ExperimentConfig& c) { return std::to_string(c.member.d); }, \
        [](ExperimentConfig& c, const std::string& k, const std::string& v) {            \
          c.member.d = static_cast<int>(to_u64(k, v));                                   \
        }},                                                                              \
      NC_DOUBLE("exposure", prefix "_delta_lo", member.delta_lo),                        \
      NC_DOUBLE("exposure", prefix "_delta_hi", member.delta_hi),                        \
      NC_DOUBLE("exposure", prefix "_gamma_lo", member.gamma_lo),                        \
      NC_DOUBLE("exposure", prefix "_gamma_hi", member.gamma_hi)

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      Field{"experiment", "graph", [](const ExperimentConfig& c) { return to_string(c.graph_model); },
            [](ExperimentConfig& c, const std::string&, const std::string& v) {
              c.graph_model = parse_graph_model(v);
            }},
      NC_SIZE("experiment", "n", n),
      NC_DOUBLE("experiment", "kappa", kappa),
      NC_SIZE("experiment", "replications", replications),
      NC_SIZE("experiment", "seed", seed),
      NC_SIZE("experiment", "workers", workers),
      Field{"experiment", "depths",
            [](const ExperimentConfig& c) {
              std::string s;
              for (std::size_t k = 0; k < c.depths.size(); ++k) s += (k ? "," : "") + std::to_string(c.depths[k]);
              return s;
            },
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
              c.depths.clear();
              for (const auto& item : split_list(v)) c.depths.push_back(to_u64(k, item));
            }},
      Field{"experiment", "estimators",
            [](const ExperimentConfig& c) {
              std::string s;
              for (std::size_t k = 0; k < c.estimators.size(); ++k) s += (k ? "," : "") + c.estimators[k];
              return s;
            },
            [](ExperimentConfig& c, const std::string&, const std::string& v) { c.estimators = split_list(v); }},
      NC_DOUBLE("experiment", "true_tau", true_tau),
      NC_DOUBLE("experiment", "level", level),
      NC_DOUBLE("experiment", "max_failure_rate", max_failure_rate),

      NC_DOUBLE("selection", "alpha", selection.alpha),
      NC_DOUBLE("selection", "beta", selection.beta),
      NC_DOUBLE("selection", "delta", selection.delta),
      NC_DOUBLE("selection", "gamma", selection.gamma),
      NC_BOOL("selection", "neighbor_unobservables", selection.neighbor_unobservables),
      NC_SIZE("selection", "max_iter", selection_max_iter),

      NC_DOUBLE("outcome", "alpha", outcome.alpha),
      NC_DOUBLE("outcome", "beta", outcome.beta),
      NC_DOUBLE("outcome", "delta", outcome.delta),
      NC_DOUBLE("outcome", "gamma", outcome.gamma),
      NC_DOUBLE("outcome", "own_treatment", outcome.own_treatment),
      NC_DOUBLE("outcome", "peer_treatment", outcome.peer_treatment),
      NC_BOOL("outcome", "neighbor_unobservables", outcome.neighbor_unobservables),
      NC_DOUBLE("outcome", "tol", outcome_tol),

      NC_EXPOSURE("t", t),
      NC_EXPOSURE("tp", tp),

      NC_DOUBLE("estimation", "trim_lo", trim.lo),
      NC_DOUBLE("estimation", "trim_hi", trim.hi),
      NC_BOOL("estimation", "share_complementary_propensity", share_complementary_propensity),
      Field{"estimation", "bandwidth",
            [](const ExperimentConfig& c) { return c.bandwidth ? std::to_string(*c.bandwidth) : std::string("auto"); },
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
              if (v == "auto")
                c.bandwidth.reset();
              else
                c.bandwidth = to_u64(k, v);
            }},

      Field{"gnn", "architecture", [](const ExperimentConfig& c) { return gnn::to_string(c.gnn.architecture); },
            [](ExperimentConfig& c, const std::string&, const std::string& v) {
              c.gnn.architecture = gnn::parse_architecture(v);
            }},
      Field{"gnn", "aggregators", [](const ExperimentConfig& c) { return gnn::to_string(c.gnn.aggregators); },
            [](ExperimentConfig& c, const std::string&, const std::string& v) {
              c.gnn.aggregators = gnn::parse_aggregators(v);
            }},
      NC_SIZE("gnn", "first_layer_width", gnn.first_layer_width),
      NC_SIZE("gnn", "hidden_width", gnn.hidden_width),
      NC_SIZE("gnn", "epochs", gnn.train.epochs),
      NC_DOUBLE("gnn", "learning_rate", gnn.train.adam.learning_rate),
      NC_DOUBLE("gnn", "beta1", gnn.train.adam.beta1),
      NC_DOUBLE("gnn", "beta2", gnn.train.adam.beta2),
      NC_DOUBLE("gnn", "epsilon", gnn.train.adam.epsilon),
  };
  return table;
}

#undef NC_DOUBLE
#undef NC_SIZE
#undef NC_BOOL
#undef NC_EXPOSURE

std::optional<std::size_t> glm_order(const std::string& id) {
  const std::string prefix = "glm_order_";
  if (id.rfind(prefix, 0) != 0) return std::nullopt;
  const auto rest = id.substr(prefix.size());
  if (rest.empty() || rest.find_first_not_of("0123456789") != std::string::npos) return std::nullopt;
  const auto k = std::stoull(rest);
  if (k == 0) return std::nullopt;
  return k;
}

std::optional<std::size_t> gnn_depth(const std::string& id) {
  const std::string prefix = "gnn_L";
  if (id.rfind(prefix, 0) != 0) return std::nullopt;
  const auto rest = id.substr(prefix.size());
  if (rest.empty() || rest.find_first_not_of("0123456789") != std::string::npos) return std::nullopt;
  const auto k = std::stoull(rest);
  if (k == 0) return std::nullopt;
  return k;
}

std::size_t id_depth(const std::string& id) {
  if (auto k = gnn_depth(id)) return *k;
  if (auto k = glm_order(id)) return *k;
  return 0;
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string s;
  for (std::size_t k = 0; k < parts.size(); ++k) s += (k ? sep : "") + parts[k];
  return s;
}

}  // namespace

std::string to_string(GraphModel m) { return m == GraphModel::rgg ? "rgg" : "er"; }

GraphModel parse_graph_model(const std::string& s) {
  if (s == "rgg") return GraphModel::rgg;
  if (s == "er") return GraphModel::er;
  throw std::invalid_argument("unknown graph model '" + s + "' (expected rgg or er)");
}

void ExperimentConfig::validate() const {
  if (n < 2) throw std::invalid_argument("config: n must be at least 2");
  if (!(kappa > 0.0)) throw std::invalid_argument("config: kappa must be positive");
  if (replications < 1) throw std::invalid_argument("config: replications must be at least 1");
  if (!(0.0 < level && level < 1.0)) throw std::invalid_argument("config: level must lie in (0, 1)");
  if (!(0.0 <= max_failure_rate && max_failure_rate <= 1.0))
    throw std::invalid_argument("config: max_failure_rate must lie in [0, 1]");
  if (estimators.empty()) throw std::invalid_argument("config: no estimators");
  for (const auto& e : estimators) {
    if (e == "gnn") {
      if (depths.empty()) throw std::invalid_argument("config: estimator gnn needs at least one depth");
      for (auto d : depths)
        if (d == 0) throw std::invalid_argument("config: GNN depths must be positive");
    } else if (!glm_order(e) && !gnn_depth(e)) {
      throw std::invalid_argument("config: unknown estimator '" + e + "'");
    }
  }
  if (selection_max_iter < 1) throw std::invalid_argument("config: selection max_iter must be positive");
  if (!(std::abs(outcome.beta) < 1.0)) throw std::invalid_argument("config: outcome beta must satisfy |beta| < 1");
  if (!(outcome_tol > 0.0)) throw std::invalid_argument("config: outcome tol must be positive");
  t.validate();
  tp.validate();
  estimator::trim(std::vector<double>{}, trim.lo, trim.hi);
  gnn.validate();
}

std::vector<std::string> ExperimentConfig::estimator_ids() const {
  std::vector<std::string> ids;
  for (const auto& e : estimators) {
    if (e == "gnn") {
      for (auto d : depths) ids.push_back("gnn_L" + std::to_string(d));
    } else {
      ids.push_back(e);
    }
  }
  std::vector<std::string> unique;
  for (auto& id : ids)
    if (std::find(unique.begin(), unique.end(), id) == unique.end()) unique.push_back(id);
  return unique;
}

ExperimentConfig parse_config(std::istream& in) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  ExperimentConfig c;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty())
      throw std::invalid_argument("config: key '" + section + "' outside a section");
    for (const auto& [key, value] : body) {
      const auto& table = fields();
      auto it = std::find_if(table.begin(), table.end(),
                             [&](const Field& f) { return f.section == section && f.key == key; });
      if (it == table.end()) throw std::invalid_argument("config: unknown key [" + section + "] " + key);
      it->set(c, section + "." + key, trim_ws(value.data()));
    }
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  return parse_config(in);
}

void write_config(std::ostream& out, const ExperimentConfig& config) {
  std::string section;
  for (const auto& f : fields()) {
    if (f.section != section) {
      if (!section.empty()) out << '\n';
      section = f.section;
      out << '[' << section << "]\n";
    }
    out << f.key << " = " << f.get(config) << '\n';
  }
}

std::unique_ptr<estimator::NuisanceLearner> make_learner(const std::string& id, const ExperimentConfig& config) {
  if (auto d = gnn_depth(id)) {
    auto g = config.gnn;
    g.depth = *d;
    return std::make_unique<estimator::GnnLearner>(g);
  }
  if (auto k = glm_order(id)) return std::make_unique<estimator::GlmLearner>(*k);
  throw std::invalid_argument("unknown estimator '" + id + "'");
}

std::uint64_t replication_seed(std::uint64_t base, std::size_t replication) {
  return Rng::stream(base, {replication}).seed();
}

std::vector<ReplicationRecord> run_replication(const ExperimentConfig& config, std::size_t replication) {
  const std::uint64_t seed = replication_seed(config.seed, replication);
  Rng data(seed);
  auto g = config.graph_model == GraphModel::rgg ? graph::generate_rgg(config.n, config.kappa, data)
                                                 : graph::generate_er(config.n, config.kappa, data);
  const auto draw =
      dgp::simulate(std::move(g), config.selection, config.outcome, data, config.selection_max_iter, config.outcome_tol);

  estimator::EstimateOptions options;
  options.t = config.t;
  options.tp = config.tp;
  options.trim = config.trim;
  options.level = config.level;
  options.share_complementary_propensity = config.share_complementary_propensity;
  options.bandwidth = config.bandwidth ? *config.bandwidth : graph::hac_bandwidth(draw.graph);

  const auto ids = config.estimator_ids();
  std::vector<ReplicationRecord> out;
  for (std::size_t k = 0; k < ids.size(); ++k) {
    auto learner = make_learner(ids[k], config);
    Rng fit = Rng::stream(config.seed, {replication, k + 1});
    auto report = estimator::estimate(draw.graph, draw.x, draw.d, draw.y, options, *learner, fit);
    if (!draw.selection_converged) report.warnings.insert(report.warnings.begin(), "selection did not converge");
    ReplicationRecord r;
    r.replication = replication;
    r.seed = seed;
    r.estimator = ids[k];
    r.tau_hat = report.tau_hat;
    r.hac_se = report.hac_se;
    r.iid_se = report.iid_se;
    r.bandwidth = report.bandwidth;
    r.treated_count = report.treated_count;
    r.trained_epochs = report.trained_epochs;
    r.warnings = join(report.warnings, "; ");
    out.push_back(std::move(r));
  }
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& config, const Progress& progress) {
  config.validate();
  const std::size_t total = config.replications;
  std::size_t workers = config.workers ? config.workers : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, total);
  const auto allowed = static_cast<std::size_t>(std::floor(config.max_failure_rate * static_cast<double>(total)));

  std::vector<std::vector<ReplicationRecord>> results(total);
  std::vector<std::optional<std::string>> errors(total);
  std::atomic<std::size_t> next{0}, failed{0};
  std::atomic<bool> stop{false};
  std::mutex progress_mutex;
  std::size_t done = 0;

  auto work = [&] {
    for (;;) {
      if (stop.load()) return;
      const std::size_t r = next.fetch_add(1);
      if (r >= total) return;
      try {
        results[r] = run_replication(config, r);
      } catch (const std::exception& e) {
        errors[r] = e.what();
        if (failed.fetch_add(1) + 1 > allowed) stop.store(true);
      }
      if (progress) {
        std::lock_guard lock(progress_mutex);
        progress(++done, total);
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }

  ExperimentResult result;
  for (std::size_t r = 0; r < total; ++r) {
    if (errors[r]) {
      result.failures.push_back({r, *errors[r]});
      continue;
    }
    for (auto& rec : results[r]) result.records.push_back(std::move(rec));
  }
  if (result.failures.size() > allowed) {
    throw ExperimentAborted(std::to_string(result.failures.size()) + " replication failures exceed the limit of " +
                            std::to_string(allowed) + "; first: replication " +
                            std::to_string(result.failures.front().replication) + ": " +
                            result.failures.front().message);
  }
  result.rows = aggregate(result.records, config);
  return result;
}

std::vector<TableRow> aggregate(const std::vector<ReplicationRecord>& records, const ExperimentConfig& config) {
  std::vector<std::string> order = config.estimator_ids();
  std::map<std::string, std::vector<const ReplicationRecord*>> groups;
  for (const auto& r : records) {
    groups[r.estimator].push_back(&r);
    if (std::find(order.begin(), order.end(), r.estimator) == order.end()) order.push_back(r.estimator);
  }
  const double z = estimator::normal_critical_value(config.level);
  std::vector<TableRow> rows;
  for (const auto& id : order) {
    auto it = groups.find(id);
    if (it == groups.end()) continue;
    auto group = it->second;
    std::sort(group.begin(), group.end(),
              [](const auto* a, const auto* b) { return a->replication < b->replication; });
    const auto m = static_cast<double>(group.size());

    TableRow row;
    row.estimator = id;
    row.n = config.n;
    row.depth = id_depth(id);
    row.replications = group.size();
    for (const auto* r : group) {
      row.mean_tau += r->tau_hat;
      row.hac_se += r->hac_se;
      row.iid_se += r->iid_se;
      row.treated_mean += static_cast<double>(r->treated_count);
    }
    row.mean_tau /= m;
    row.hac_se /= m;
    row.iid_se /= m;
    row.treated_mean /= m;
    row.bias = row.mean_tau - config.true_tau;

    double ss = 0.0;
    for (const auto* r : group) ss += (r->tau_hat - row.mean_tau) * (r->tau_hat - row.mean_tau);
    row.oracle_se = group.size() > 1 ? std::sqrt(ss / (m - 1.0)) : 0.0;

    for (const auto* r : group) {
      const double err = std::abs(r->tau_hat - config.true_tau);
      row.hac_coverage += err <= z * r->hac_se;
      row.iid_coverage += err <= z * r->iid_se;
      row.oracle_coverage += err <= z * row.oracle_se;
    }
    row.hac_coverage /= m;
    row.iid_coverage /= m;
    row.oracle_coverage /= m;
    rows.push_back(row);
  }
  return rows;
}

TableFormat parse_table_format(const std::string& s) {
  if (s == "csv") return TableFormat::csv;
  if (s == "markdown" || s == "md") return TableFormat::markdown;
  throw std::invalid_argument("unknown table format '" + s + "' (expected csv or markdown)");
}

std::string emit_table(const std::vector<TableRow>& rows, TableFormat format) {
  const std::vector<std::string> header{"estimator",   "n",           "L",           "replications", "mean_tau",
                                        "bias",        "hac_coverage", "oracle_coverage", "iid_coverage",
                                        "hac_se",      "oracle_se",   "iid_se",      "treated_mean"};
  auto number = [&](double v) {
    if (format == TableFormat::csv) return fmt(v);
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return std::string(buf);
  };
  std::vector<std::vector<std::string>> cells{header};
  for (const auto& r : rows) {
    cells.push_back({r.estimator, std::to_string(r.n), std::to_string(r.depth), std::to_string(r.replications),
                     number(r.mean_tau), number(r.bias), number(r.hac_coverage), number(r.oracle_coverage),
                     number(r.iid_coverage), number(r.hac_se), number(r.oracle_se), number(r.iid_se),
                     number(r.treated_mean)});
  }

  std::ostringstream out;
  if (format == TableFormat::csv) {
    for (const auto& line : cells) out << join(line, ",") << '\n';
    return out.str();
  }
  std::vector<std::size_t> width(header.size(), 3);
  for (const auto& line : cells)
    for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], line[c].size());
  auto emit_line = [&](const std::vector<std::string>& line) {
    out << '|';
    for (std::size_t c = 0; c < line.size(); ++c) {
      const auto pad = std::string(width[c] - line[c].size(), ' ');
      out << ' ' << (c == 0 ? line[c] + pad : pad + line[c]) << " |";
    }
    out << '\n';
  };
  emit_line(cells[0]);
  out << '|';
  for (std::size_t c = 0; c < header.size(); ++c)
    out << (c == 0 ? " :" + std::string(width[c] - 1, '-') : " " + std::string(width[c] - 1, '-') + ":") << " |";
  out << '\n';
  for (std::size_t k = 1; k < cells.size(); ++k) emit_line(cells[k]);
  return out.str();
}

std::string emit_records(const std::vector<ReplicationRecord>& records) {
  std::ostringstream out;
  out << "replication,seed,estimator,tau_hat,hac_se,iid_se,b_n,treated_count,trained_epochs,warnings\n";
  for (const auto& r : records) {
    std::string w;
    for (char ch : r.warnings) {
      if (ch == '"' || ch == '\\') w += '\\';
      w += ch;
    }
    out << r.replication << ',' << r.seed << ',' << r.estimator << ',' << fmt(r.tau_hat) << ',' << fmt(r.hac_se)
        << ',' << fmt(r.iid_se) << ',' << r.bandwidth << ',' << r.treated_count << ',' << r.trained_epochs << ",\""
        << w << "\"\n";
  }
  return out.str();
}

std::vector<ReplicationRecord> parse_records(std::istream& in) {
  using Tokenizer = boost::tokenizer<boost::escaped_list_separator<char>>;
  std::vector<ReplicationRecord> out;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    Tokenizer tok(line);
    std::vector<std::string> f(tok.begin(), tok.end());
    if (f.size() != 10) throw std::invalid_argument("records: expected 10 fields, got " + std::to_string(f.size()));
    ReplicationRecord r;
    r.replication = to_u64("replication", f[0]);
    r.seed = to_u64("seed", f[1]);
    r.estimator = f[2];
    r.tau_hat = to_double("tau_hat", f[3]);
    r.hac_se = to_double("hac_se", f[4]);
    r.iid_se = to_double("iid_se", f[5]);
    r.bandwidth = to_u64("b_n", f[6]);
    r.treated_count = to_u64("treated_count", f[7]);
    r.trained_epochs = to_u64("trained_epochs", f[8]);
    r.warnings = f[9];
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace netcausal::harness
