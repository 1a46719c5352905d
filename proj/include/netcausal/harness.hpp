#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "netcausal/dgp.hpp"
#include "netcausal/estimator.hpp"
#include "netcausal/exposure.hpp"
#include "netcausal/gnn.hpp"
#include "netcausal/graph.hpp"

namespace netcausal::harness {

enum class GraphModel { rgg, er };

std::string to_string(GraphModel m);
GraphModel parse_graph_model(const std::string& s);

struct ExperimentConfig {
  GraphModel graph_model = GraphModel::er;
  std::size_t n = 1000;
  double kappa = 5.0;
  std::size_t replications = 500;
  std::uint64_t seed = 20240601;
  std::size_t workers = 0;  // 0: one per hardware thread
  std::vector<std::size_t> depths{1, 2, 3};
  /// "gnn" expands to gnn_L<d> for every depth; "glm_order_<k>" for k >= 1.
  std::vector<std::string> estimators{"gnn", "glm_order_1", "glm_order_2", "glm_order_3"};
  double true_tau = 0.0;
  double level = 0.95;
  double max_failure_rate = 0.01;

  dgp::SelectionParams selection;
  std::size_t selection_max_iter = 100;
  dgp::OutcomeParams outcome;
  double outcome_tol = 1e-10;

  exposure::ExposureSpec t = exposure::ExposureSpec::own_treatment(1);
  exposure::ExposureSpec tp = exposure::ExposureSpec::own_treatment(0);

  estimator::TrimBounds trim;
  bool share_complementary_propensity = true;
  std::optional<std::size_t> bandwidth;  // unset: path-length rule

  /// Template for every GNN learner; depth is set per estimator.
  gnn::GnnConfig gnn;

  void validate() const;
  /// Expanded estimator ids in run order.
  std::vector<std::string> estimator_ids() const;
};

/// Sectioned key = value text. Unknown sections or keys are errors;
/// missing keys keep their defaults.
ExperimentConfig parse_config(std::istream& in);
ExperimentConfig load_config(const std::string& path);
/// Writes every field, so the output parses back to the same config.
void write_config(std::ostream& out, const ExperimentConfig& config);

/// Learner for an expanded estimator id such as gnn_L2 or glm_order_3.
std::unique_ptr<estimator::NuisanceLearner> make_learner(const std::string& id, const ExperimentConfig& config);

struct ReplicationRecord {
  std::size_t replication = 0;
  std::uint64_t seed = 0;  // seed of the replication's data stream
  std::string estimator;
  double tau_hat = 0.0;
  double hac_se = 0.0;
  double iid_se = 0.0;
  std::size_t bandwidth = 0;
  std::size_t treated_count = 0;
  std::size_t trained_epochs = 0;
  std::string warnings;  // joined with "; "
};

struct TableRow {
  std::string estimator;
  std::size_t n = 0;
  std::size_t depth = 0;  // GNN depth or polynomial order
  std::size_t replications = 0;
  double mean_tau = 0.0;
  double bias = 0.0;
  double hac_coverage = 0.0;
  double oracle_coverage = 0.0;
  double iid_coverage = 0.0;
  double hac_se = 0.0;     // mean over replications
  double oracle_se = 0.0;  // sample standard deviation of tau_hat
  double iid_se = 0.0;     // mean over replications
  double treated_mean = 0.0;
};

struct ReplicationFailure {
  std::size_t replication = 0;
  std::string message;
};

struct ExperimentResult {
  std::vector<TableRow> rows;
  std::vector<ReplicationRecord> records;  // replication-major, estimator order within
  std::vector<ReplicationFailure> failures;
};

class ExperimentAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Seed of replication r's data stream.
std::uint64_t replication_seed(std::uint64_t base, std::size_t replication);

/// One replication: graph, primitives, selection, outcomes, then every
/// estimator on the same data. Throws on any failure.
std::vector<ReplicationRecord> run_replication(const ExperimentConfig& config, std::size_t replication);

using Progress = std::function<void(std::size_t done, std::size_t total)>;

/// Runs all replications on `config.workers` threads. A failed replication
/// is dropped for every estimator and listed in `failures`; throws
/// ExperimentAborted if more than max_failure_rate of them fail.
ExperimentResult run_experiment(const ExperimentConfig& config, const Progress& progress = {});

/// Table rows, one per estimator id, from records in any order. Oracle
/// coverage uses the across-replication standard deviation as the SE.
std::vector<TableRow> aggregate(const std::vector<ReplicationRecord>& records, const ExperimentConfig& config);

enum class TableFormat { csv, markdown };
TableFormat parse_table_format(const std::string& s);

std::string emit_table(const std::vector<TableRow>& rows, TableFormat format);
std::string emit_records(const std::vector<ReplicationRecord>& records);

/// Parses emit_records output.
std::vector<ReplicationRecord> parse_records(std::istream& in);

}  // namespace netcausal::harness
