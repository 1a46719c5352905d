#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "netcausal/autodiff.hpp"
#include "netcausal/graph.hpp"
#include "netcausal/rng.hpp"

namespace netcausal::gnn {

using ad::Matrix;

enum class Architecture { gcn, sum_mlp, pna };
enum class Aggregators { gamma1, gamma2 };
enum class Loss { least_squares, logistic };

std::string to_string(Architecture a);
std::string to_string(Aggregators a);
std::string to_string(Loss l);
Architecture parse_architecture(const std::string& s);
Aggregators parse_aggregators(const std::string& s);
Loss parse_loss(const std::string& s);

struct TrainOptions {
  std::size_t epochs = 200;
  ad::AdamOptions adam;
};

/// Layer l has message width `first_layer_width` for l = 1 and
/// `hidden_width` otherwise; hidden layers emit that many sigmoid units and
/// the last layer emits one linear unit.
struct GnnConfig {
  std::size_t depth = 2;
  Architecture architecture = Architecture::pna;
  Aggregators aggregators = Aggregators::gamma2;
  std::size_t first_layer_width = 8;
  std::size_t hidden_width = 1;
  Loss loss = Loss::least_squares;
  TrainOptions train;

  void validate() const;
};

/// Number of aggregate columns per message column.
std::size_t aggregator_count(Aggregators a);

/// Gamma1 = (mean, std, sum, min, max) of the rows of `messages`, column by
/// column, blocked by statistic. Gamma2 appends the same block scaled by
/// S(k, 1) and S(k, -1), S(k, a) = (log(k + 1) / delta)^a, k = row count.
/// Empty input gives zeros; delta <= 0 turns the scalers into 1.
std::vector<double> pna_aggregate(const Matrix& messages, double delta, Aggregators selector);

/// sigma(mean_{j in nbr(i)} h_j W + b); isolated units aggregate to zero.
Matrix gcn_layer(const Matrix& h, const graph::Graph& g, const Matrix& weight, const Matrix& bias,
                 ad::Activation activation);

/// mean_i log(degree(i) + 1).
double log_degree_normalizer(const graph::Graph& g);

/// Per-graph index arrays for message passing.
struct MessageIndex {
  std::vector<std::size_t> offsets;  // edge slots per receiving unit
  std::vector<ad::Index> receiver;   // per edge slot
  std::vector<ad::Index> sender;     // per edge slot
  std::vector<double> inverse_degree;
  std::vector<double> amplify;       // S(deg, 1)
  std::vector<double> attenuate;     // S(deg, -1)

  MessageIndex(const graph::Graph& g, double delta);
};

class GnnModel {
 public:
  /// Fresh model with random parameters; delta is taken from g.
  static GnnModel create(const GnnConfig& config, std::size_t input_width, const graph::Graph& g,
                         Rng& rng);

  const GnnConfig& config() const { return config_; }
  std::size_t input_width() const { return input_width_; }
  double delta() const { return delta_; }
  double target_shift() const { return shift_; }
  double target_scale() const { return scale_; }
  void set_target_transform(double shift, double scale);
  std::size_t trained_epochs() const { return trained_epochs_; }
  void set_trained_epochs(std::size_t e) { trained_epochs_ = e; }

  ad::ParameterStore& parameters() { return params_; }
  const ad::ParameterStore& parameters() const { return params_; }

  /// h^(L) for every unit, recorded on a tape.
  ad::Var forward(std::span<const ad::Var> params, const MessageIndex& index, ad::Var x) const;

  /// h^(L) for every unit.
  std::vector<double> forward(const graph::Graph& g, const Matrix& x) const;

  /// Least squares: shift + scale * h^(L). Logistic: the logit h^(L).
  std::vector<double> predict(const graph::Graph& g, const Matrix& x) const;

  /// sigmoid(h^(L)); requires a logistic model.
  std::vector<double> predict_probability(const graph::Graph& g, const Matrix& x) const;

  void save(std::ostream& out) const;
  static GnnModel load(std::istream& in);
  void save_file(const std::string& path) const;
  static GnnModel load_file(const std::string& path);

 private:
  struct Layer {
    ad::Dense message;  // phi_1 (pna: on (h_i, h_j); sum_mlp: on h_j; gcn: the layer itself)
    ad::Dense update;   // phi_0 on (h_i, aggregate); unused for gcn
  };

  void build(Rng& rng);
  ad::Var layer_forward(std::span<const ad::Var> params, const MessageIndex& index, const Layer& layer,
                        ad::Var h, std::size_t l) const;

  GnnConfig config_;
  std::size_t input_width_ = 0;
  double delta_ = 0.0;
  double shift_ = 0.0;
  double scale_ = 1.0;
  std::size_t trained_epochs_ = 0;
  ad::ParameterStore params_;
  std::vector<Layer> layers_;
};

struct TrainResult {
  GnnModel model;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::vector<double> loss_history;  // loss before each Adam step
};

/// Full-batch Adam on sum_{i in mask} loss(target_i, h_i^(L)). For least
/// squares the targets are standardized over the mask first and the model
/// maps predictions back. Throws on an empty mask.
TrainResult train_gnn(const graph::Graph& g, const Matrix& x, std::span<const double> targets,
                      std::span<const std::size_t> mask, const GnnConfig& config, Rng& rng);

/// Training objective at the model's current parameters (targets in
/// original units), and its gradient per parameter block if requested.
double training_loss(const GnnModel& model, const graph::Graph& g, const Matrix& x,
                     std::span<const double> targets, std::span<const std::size_t> mask,
                     std::vector<Matrix>* gradient = nullptr);

/// n x 1 matrix from a covariate vector.
Matrix column(std::span<const double> v);

}  // namespace netcausal::gnn
