#include "netcausal/gnn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <memory>
#include <ostream>
#include <stdexcept>
#include <tuple>

namespace netcausal::gnn {

namespace {

constexpr const char* kFormatTag = "netcausal-gnn";
constexpr int kFormatVersion = 1;

ad::Index as_index(std::size_t v) { return static_cast<ad::Index>(v); }

double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::size_t message_width(const GnnConfig& c, std::size_t l) {
  return l == 1 ? c.first_layer_width : c.hidden_width;
}

std::size_t output_width(const GnnConfig& c, std::size_t l) {
  return l == c.depth ? 1 : message_width(c, l);
}

std::vector<ad::Var> bind_constants(ad::Tape& tape, const ad::ParameterStore& store) {
  std::vector<ad::Var> out;
  out.reserve(store.size());
  for (const auto& v : store.values()) out.push_back(tape.constant(v));
  return out;
}

void check_inputs(const graph::Graph& g, const Matrix& x, std::size_t width) {
  if (static_cast<std::size_t>(x.rows()) != g.size())
    throw std::invalid_argument("gnn: covariate rows must equal the number of units");
  if (static_cast<std::size_t>(x.cols()) != width)
    throw std::invalid_argument("gnn: covariate width does not match the model");
}

template <typename Enum>
Enum parse_enum(const std::string& s, std::initializer_list<std::pair<const char*, Enum>> table,
                const char* what) {
  for (const auto& [name, value] : table)
    if (s == name) return value;
  throw std::invalid_argument(std::string("gnn: unknown ") + what + " '" + s + "'");
}

std::vector<double> standardized_targets(const GnnModel& model, std::span<const double> targets) {
  std::vector<double> z(targets.begin(), targets.end());
  if (model.config().loss == Loss::least_squares)
    for (double& v : z) v = (v - model.target_shift()) / model.target_scale();
  return z;
}

ad::Var loss_node(const GnnConfig& config, ad::Var out, std::span<const double> z,
                  std::span<const std::size_t> mask) {
  return config.loss == Loss::least_squares ? ad::least_squares_loss(out, z, mask)
                                            : ad::logistic_loss(out, z, mask);
}

}  // namespace

std::string to_string(Architecture a) {
  switch (a) {
    case Architecture::gcn: return "gcn";
    case Architecture::sum_mlp: return "sum_mlp";
    case Architecture::pna: return "pna";
  }
  return "?";
}

std::string to_string(Aggregators a) { return a == Aggregators::gamma1 ? "gamma1" : "gamma2"; }

std::string to_string(Loss l) { return l == Loss::least_squares ? "least_squares" : "logistic"; }

Architecture parse_architecture(const std::string& s) {
  return parse_enum<Architecture>(
      s, {{"gcn", Architecture::gcn}, {"sum_mlp", Architecture::sum_mlp}, {"pna", Architecture::pna}},
      "architecture");
}

Aggregators parse_aggregators(const std::string& s) {
  return parse_enum<Aggregators>(s, {{"gamma1", Aggregators::gamma1}, {"gamma2", Aggregators::gamma2}},
                                 "aggregator set");
}

Loss parse_loss(const std::string& s) {
  return parse_enum<Loss>(s, {{"least_squares", Loss::least_squares}, {"logistic", Loss::logistic}},
                          "loss");
}

void GnnConfig::validate() const {
  if (depth < 1) throw std::invalid_argument("gnn: depth must be >= 1");
  if (first_layer_width < 1 || hidden_width < 1)
    throw std::invalid_argument("gnn: layer widths must be >= 1");
  if (!(train.adam.learning_rate > 0.0)) throw std::invalid_argument("gnn: learning rate must be > 0");
}

std::size_t aggregator_count(Aggregators a) { return a == Aggregators::gamma1 ? 5 : 15; }

double log_degree_normalizer(const graph::Graph& g) {
  if (g.size() == 0) return 0.0;
  double total = 0.0;
  for (graph::NodeId i = 0; i < g.size(); ++i) total += std::log(static_cast<double>(g.degree(i)) + 1.0);
  return total / static_cast<double>(g.size());
}

namespace {

std::pair<double, double> scalers(std::size_t degree, double delta) {
  if (!(delta > 0.0)) return {1.0, 1.0};
  if (degree == 0) return {0.0, 0.0};
  const double s = std::log(static_cast<double>(degree) + 1.0) / delta;
  return {s, 1.0 / s};
}

}  // namespace

std::vector<double> pna_aggregate(const Matrix& messages, double delta, Aggregators selector) {
  const std::size_t m = static_cast<std::size_t>(messages.cols());
  const std::size_t k = static_cast<std::size_t>(messages.rows());
  std::vector<double> out(aggregator_count(selector) * m, 0.0);
  if (k == 0) return out;
  for (std::size_t c = 0; c < m; ++c) {
    const auto col = messages.col(as_index(c));
    const double mean = col.mean();
    const double var = std::max(0.0, (col.array() - mean).square().mean());
    out[0 * m + c] = mean;
    out[1 * m + c] = std::sqrt(var);
    out[2 * m + c] = col.sum();
    out[3 * m + c] = col.minCoeff();
    out[4 * m + c] = col.maxCoeff();
  }
  if (selector == Aggregators::gamma2) {
    const auto [amp, att] = scalers(k, delta);
    for (std::size_t c = 0; c < 5 * m; ++c) {
      out[5 * m + c] = amp * out[c];
      out[10 * m + c] = att * out[c];
    }
  }
  return out;
}

Matrix gcn_layer(const Matrix& h, const graph::Graph& g, const Matrix& weight, const Matrix& bias,
                 ad::Activation activation) {
  if (static_cast<std::size_t>(h.rows()) != g.size() || weight.rows() != h.cols() ||
      bias.rows() != 1 || bias.cols() != weight.cols())
    throw std::invalid_argument("gcn_layer: shape mismatch");
  Matrix mean = Matrix::Zero(h.rows(), h.cols());
  for (graph::NodeId i = 0; i < g.size(); ++i) {
    const auto nbrs = g.neighbors(i);
    if (nbrs.empty()) continue;
    for (graph::NodeId j : nbrs) mean.row(as_index(i)) += h.row(as_index(j));
    mean.row(as_index(i)) /= static_cast<double>(nbrs.size());
  }
  Matrix out = (mean * weight).rowwise() + bias.row(0);
  if (activation == ad::Activation::sigmoid) out = out.unaryExpr([](double v) { return sigmoid_scalar(v); });
  return out;
}

MessageIndex::MessageIndex(const graph::Graph& g, double delta) {
  const auto off = g.offsets();
  const auto tgt = g.targets();
  offsets.assign(off.begin(), off.end());
  receiver.resize(tgt.size());
  sender.resize(tgt.size());
  inverse_degree.resize(g.size());
  amplify.resize(g.size());
  attenuate.resize(g.size());
  for (graph::NodeId i = 0; i < g.size(); ++i) {
    for (std::size_t s = off[i]; s < off[i + 1]; ++s) {
      receiver[s] = as_index(i);
      sender[s] = as_index(tgt[s]);
    }
    const std::size_t deg = g.degree(i);
    inverse_degree[i] = deg == 0 ? 0.0 : 1.0 / static_cast<double>(deg);
    std::tie(amplify[i], attenuate[i]) = scalers(deg, delta);
  }
}

// ---------------------------------------------------------------------------
// Fused PNA layer. Computes the pre-activation
//   z_i = (h_i, Gamma(msg_i)) U + c,  msg_ij = sigma((h_i, h_j) W + b)
// without materializing the scaled Gamma2 blocks: with A the Gamma1 block,
// Gamma2 U = A U_1 + amp * (A U_2) + att * (A U_3) row by row.
// The index must outlive the tape's backward pass.

namespace {

using IndexMatrix = Eigen::Matrix<ad::Index, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct PnaCache {
  Matrix msg;       // edge slots x m
  Matrix stats;     // n x 5m, Gamma1 block
  Matrix sd;        // n x m
  IndexMatrix argmin, argmax;
};

void gamma1(const Matrix& x, const MessageIndex& index, PnaCache& c) {
  const ad::Index m = x.cols();
  const auto n = static_cast<ad::Index>(index.offsets.size() - 1);
  c.stats = Matrix::Zero(n, 5 * m);
  c.sd = Matrix::Zero(n, m);
  c.argmin = IndexMatrix::Constant(n, m, -1);
  c.argmax = IndexMatrix::Constant(n, m, -1);
  for (ad::Index i = 0; i < n; ++i) {
    const auto lo = static_cast<ad::Index>(index.offsets[i]);
    const auto hi = static_cast<ad::Index>(index.offsets[i + 1]);
    if (lo == hi) continue;
    const double count = static_cast<double>(hi - lo);
    for (ad::Index k = 0; k < m; ++k) {
      double total = 0.0;
      ad::Index amin = lo, amax = lo;
      for (ad::Index r = lo; r < hi; ++r) {
        const double v = x(r, k);
        total += v;
        if (v < x(amin, k)) amin = r;
        if (v > x(amax, k)) amax = r;
      }
      const double mu = total / count;
      double ss = 0.0;
      for (ad::Index r = lo; r < hi; ++r) ss += (x(r, k) - mu) * (x(r, k) - mu);
      const double s = std::sqrt(std::max(0.0, ss / count));
      c.sd(i, k) = s;
      c.argmin(i, k) = amin;
      c.argmax(i, k) = amax;
      c.stats(i, k) = mu;
      c.stats(i, m + k) = s;
      c.stats(i, 2 * m + k) = total;
      c.stats(i, 3 * m + k) = x(amin, k);
      c.stats(i, 4 * m + k) = x(amax, k);
    }
  }
}

ad::Var pna_layer(ad::Var h, ad::Var wm, ad::Var bm, ad::Var wu, ad::Var bu, const MessageIndex& index,
                  Aggregators selector) {
  const Matrix& hv = h.value();
  const ad::Index in = hv.cols();
  const ad::Index m = wm.cols();
  const ad::Index blocks = selector == Aggregators::gamma2 ? 3 : 1;
  if (wm.rows() != 2 * in || bm.rows() != 1 || bm.cols() != m || wu.rows() != in + blocks * 5 * m ||
      bu.rows() != 1 || bu.cols() != wu.cols())
    throw std::invalid_argument("gnn: pna layer shape mismatch");
  const auto n = hv.rows();
  const auto edges = static_cast<ad::Index>(index.sender.size());

  auto cache = std::make_shared<PnaCache>();
  {
    const Matrix p = hv * wm.value().topRows(in);
    const Matrix q = hv * wm.value().bottomRows(in);
    const auto b = bm.value().row(0);
    cache->msg.resize(edges, m);
    for (ad::Index s = 0; s < edges; ++s)
      cache->msg.row(s) = p.row(index.receiver[s]) + q.row(index.sender[s]) + b;
    cache->msg = cache->msg.unaryExpr([](double v) { return sigmoid_scalar(v); });
  }
  gamma1(cache->msg, index, *cache);

  const Matrix& u = wu.value();
  const ad::Index w5 = 5 * m;
  Matrix z = hv * u.topRows(in) + cache->stats * u.middleRows(in, w5);
  if (blocks == 3) {
    const Matrix za = cache->stats * u.middleRows(in + w5, w5);
    const Matrix zb = cache->stats * u.middleRows(in + 2 * w5, w5);
    for (ad::Index i = 0; i < n; ++i) z.row(i) += index.amplify[i] * za.row(i) + index.attenuate[i] * zb.row(i);
  }
  z.rowwise() += bu.value().row(0);

  const std::size_t ih = h.id(), iwm = wm.id(), ibm = bm.id(), iwu = wu.id(), ibu = bu.id();
  const MessageIndex* idx = &index;
  return h.tape().record(std::move(z), {h, wm, bm, wu, bu}, [=](ad::Tape& t, std::size_t self) {
    const Matrix& dz = t.adjoint(self);
    const Matrix& hv = t.value(ih);
    const Matrix& u = t.value(iwu);
    const Matrix& wmv = t.value(iwm);
    const PnaCache& c = *cache;
    const ad::Index in = hv.cols();
    const ad::Index m = c.msg.cols();
    const ad::Index w5 = 5 * m;
    const ad::Index rows = hv.rows();

    Matrix dza, dzb;
    if (blocks == 3) {
      dza = dz;
      dzb = dz;
      for (ad::Index i = 0; i < rows; ++i) {
        dza.row(i) *= idx->amplify[i];
        dzb.row(i) *= idx->attenuate[i];
      }
    }
    if (t.requires_grad(ibu)) t.adjoint_buffer(ibu) += dz.colwise().sum();
    if (t.requires_grad(iwu)) {
      Matrix& gu = t.adjoint_buffer(iwu);
      gu.topRows(in).noalias() += hv.transpose() * dz;
      gu.middleRows(in, w5).noalias() += c.stats.transpose() * dz;
      if (blocks == 3) {
        gu.middleRows(in + w5, w5).noalias() += c.stats.transpose() * dza;
        gu.middleRows(in + 2 * w5, w5).noalias() += c.stats.transpose() * dzb;
      }
    }
    if (t.requires_grad(ih)) t.adjoint_buffer(ih).noalias() += dz * u.topRows(in).transpose();

    // Gradient with respect to the Gamma1 block.
    Matrix ds = dz * u.middleRows(in, w5).transpose();
    if (blocks == 3) {
      ds.noalias() += dza * u.middleRows(in + w5, w5).transpose();
      ds.noalias() += dzb * u.middleRows(in + 2 * w5, w5).transpose();
    }

    // Back through the aggregators to the messages, then the sigmoid.
    Matrix dmsg = Matrix::Zero(c.msg.rows(), m);
    for (ad::Index i = 0; i < rows; ++i) {
      const auto lo = static_cast<ad::Index>(idx->offsets[i]);
      const auto hi = static_cast<ad::Index>(idx->offsets[i + 1]);
      if (lo == hi) continue;
      const double count = static_cast<double>(hi - lo);
      for (ad::Index k = 0; k < m; ++k) {
        const double mu = c.stats(i, k);
        const double flat = ds(i, k) / count + ds(i, 2 * m + k);
        const double spread = c.sd(i, k) > 0.0 ? ds(i, m + k) / (count * c.sd(i, k)) : 0.0;
        for (ad::Index r = lo; r < hi; ++r) dmsg(r, k) += flat + spread * (c.msg(r, k) - mu);
        dmsg(c.argmin(i, k), k) += ds(i, 3 * m + k);
        dmsg(c.argmax(i, k), k) += ds(i, 4 * m + k);
      }
    }
    dmsg.array() *= c.msg.array() * (1.0 - c.msg.array());

    Matrix dp = Matrix::Zero(rows, m), dq = Matrix::Zero(rows, m);
    for (ad::Index s = 0; s < dmsg.rows(); ++s) {
      dp.row(idx->receiver[s]) += dmsg.row(s);
      dq.row(idx->sender[s]) += dmsg.row(s);
    }
    if (t.requires_grad(ibm)) t.adjoint_buffer(ibm) += dmsg.colwise().sum();
    if (t.requires_grad(iwm)) {
      Matrix& gw = t.adjoint_buffer(iwm);
      gw.topRows(in).noalias() += hv.transpose() * dp;
      gw.bottomRows(in).noalias() += hv.transpose() * dq;
    }
    if (t.requires_grad(ih)) {
      Matrix& gh = t.adjoint_buffer(ih);
      gh.noalias() += dp * wmv.topRows(in).transpose();
      gh.noalias() += dq * wmv.bottomRows(in).transpose();
    }
  });
}

}  // namespace

// ---------------------------------------------------------------------------

GnnModel GnnModel::create(const GnnConfig& config, std::size_t input_width, const graph::Graph& g,
                          Rng& rng) {
  config.validate();
  if (input_width < 1) throw std::invalid_argument("gnn: input width must be >= 1");
  GnnModel model;
  model.config_ = config;
  model.input_width_ = input_width;
  model.delta_ = log_degree_normalizer(g);
  model.build(rng);
  return model;
}

void GnnModel::build(Rng& rng) {
  params_ = ad::ParameterStore();
  layers_.clear();
  std::size_t in = input_width_;
  for (std::size_t l = 1; l <= config_.depth; ++l) {
    const std::size_t m = message_width(config_, l);
    const std::size_t out = output_width(config_, l);
    const auto act = l == config_.depth ? ad::Activation::identity : ad::Activation::sigmoid;
    Layer layer;
    switch (config_.architecture) {
      case Architecture::gcn:
        layer.message = ad::Dense::create(params_, as_index(in), as_index(out), act, rng);
        break;
      case Architecture::sum_mlp:
        layer.message = ad::Dense::create(params_, as_index(in), as_index(m), ad::Activation::sigmoid, rng);
        layer.update = ad::Dense::create(params_, as_index(in + m), as_index(out), act, rng);
        break;
      case Architecture::pna:
        layer.message = ad::Dense::create(params_, as_index(2 * in), as_index(m), ad::Activation::sigmoid, rng);
        layer.update = ad::Dense::create(
            params_, as_index(in + aggregator_count(config_.aggregators) * m), as_index(out), act, rng);
        break;
    }
    layers_.push_back(layer);
    in = out;
  }
}

void GnnModel::set_target_transform(double shift, double scale) {
  if (!std::isfinite(shift) || !(scale > 0.0) || !std::isfinite(scale))
    throw std::invalid_argument("gnn: target transform must have finite shift and positive scale");
  shift_ = shift;
  scale_ = scale;
}

ad::Var GnnModel::layer_forward(std::span<const ad::Var> params, const MessageIndex& index,
                                const Layer& layer, ad::Var h, std::size_t) const {
  const std::span<const std::size_t> offsets(index.offsets);
  switch (config_.architecture) {
    case Architecture::gcn: {
      ad::Var mean = ad::segment_mean(ad::gather_rows(h, index.sender), offsets);
      return layer.message.forward(params, mean);
    }
    case Architecture::sum_mlp: {
      ad::Var msg = layer.message.forward(params, h);
      ad::Var agg = ad::segment_sum(ad::gather_rows(msg, index.sender), offsets);
      return layer.update.forward(params, ad::concat_cols({h, agg}));
    }
    case Architecture::pna: {
      ad::Var z = pna_layer(h, params[layer.message.weight], params[layer.message.bias],
                            params[layer.update.weight], params[layer.update.bias], index, config_.aggregators);
      return ad::activate(z, layer.update.activation);
    }
  }
  throw std::logic_error("gnn: unknown architecture");
}

ad::Var GnnModel::forward(std::span<const ad::Var> params, const MessageIndex& index, ad::Var x) const {
  if (static_cast<std::size_t>(x.cols()) != input_width_)
    throw std::invalid_argument("gnn: covariate width does not match the model");
  ad::Var h = x;
  for (std::size_t l = 1; l <= layers_.size(); ++l) h = layer_forward(params, index, layers_[l - 1], h, l);
  return h;
}

std::vector<double> GnnModel::forward(const graph::Graph& g, const Matrix& x) const {
  check_inputs(g, x, input_width_);
  const MessageIndex index(g, delta_);
  ad::Tape tape;
  const auto params = bind_constants(tape, params_);
  const Matrix& out = forward(params, index, tape.constant(x)).value();
  return std::vector<double>(out.data(), out.data() + out.size());
}

std::vector<double> GnnModel::predict(const graph::Graph& g, const Matrix& x) const {
  auto f = forward(g, x);
  if (config_.loss == Loss::least_squares)
    for (double& v : f) v = shift_ + scale_ * v;
  return f;
}

std::vector<double> GnnModel::predict_probability(const graph::Graph& g, const Matrix& x) const {
  if (config_.loss != Loss::logistic)
    throw std::logic_error("gnn: probabilities require a logistic-loss model");
  auto f = forward(g, x);
  for (double& v : f) v = sigmoid_scalar(v);
  return f;
}

// ---------------------------------------------------------------------------

void GnnModel::save(std::ostream& out) const {
  out << kFormatTag << ' ' << kFormatVersion << '\n';
  out << std::setprecision(17);
  out << "architecture " << to_string(config_.architecture) << '\n'
      << "aggregators " << to_string(config_.aggregators) << '\n'
      << "loss " << to_string(config_.loss) << '\n'
      << "depth " << config_.depth << '\n'
      << "first_layer_width " << config_.first_layer_width << '\n'
      << "hidden_width " << config_.hidden_width << '\n'
      << "epochs " << config_.train.epochs << '\n'
      << "learning_rate " << config_.train.adam.learning_rate << '\n'
      << "beta1 " << config_.train.adam.beta1 << '\n'
      << "beta2 " << config_.train.adam.beta2 << '\n'
      << "epsilon " << config_.train.adam.epsilon << '\n'
      << "input_width " << input_width_ << '\n'
      << "delta " << delta_ << '\n'
      << "target_shift " << shift_ << '\n'
      << "target_scale " << scale_ << '\n'
      << "trained_epochs " << trained_epochs_ << '\n'
      << "parameters " << params_.size() << '\n';
  for (const auto& p : params_.values()) {
    out << p.rows() << ' ' << p.cols();
    for (ad::Index k = 0; k < p.size(); ++k) out << ' ' << p.data()[k];
    out << '\n';
  }
  if (!out) throw std::runtime_error("gnn: failed to write model");
}

GnnModel GnnModel::load(std::istream& in) {
  std::string tag;
  int version = 0;
  if (!(in >> tag >> version) || tag != kFormatTag) throw std::runtime_error("gnn: not a model file");
  if (version != kFormatVersion)
    throw std::runtime_error("gnn: unsupported model format version " + std::to_string(version));

  auto expect = [&](const char* key) {
    std::string k;
    if (!(in >> k) || k != key) throw std::runtime_error(std::string("gnn: expected key '") + key + "'");
  };
  auto read_string = [&](const char* key) {
    expect(key);
    std::string v;
    if (!(in >> v)) throw std::runtime_error(std::string("gnn: missing value for ") + key);
    return v;
  };
  auto read_number = [&]<typename T>(const char* key, T& v) {
    expect(key);
    if (!(in >> v)) throw std::runtime_error(std::string("gnn: bad value for ") + key);
  };

  GnnModel model;
  GnnConfig& c = model.config_;
  c.architecture = parse_architecture(read_string("architecture"));
  c.aggregators = parse_aggregators(read_string("aggregators"));
  c.loss = parse_loss(read_string("loss"));
  read_number("depth", c.depth);
  read_number("first_layer_width", c.first_layer_width);
  read_number("hidden_width", c.hidden_width);
  read_number("epochs", c.train.epochs);
  read_number("learning_rate", c.train.adam.learning_rate);
  read_number("beta1", c.train.adam.beta1);
  read_number("beta2", c.train.adam.beta2);
  read_number("epsilon", c.train.adam.epsilon);
  read_number("input_width", model.input_width_);
  read_number("delta", model.delta_);
  read_number("target_shift", model.shift_);
  read_number("target_scale", model.scale_);
  read_number("trained_epochs", model.trained_epochs_);
  std::size_t count = 0;
  read_number("parameters", count);
  c.validate();

  Rng unused(0);
  model.build(unused);
  if (count != model.params_.size()) throw std::runtime_error("gnn: parameter count does not match architecture");
  for (std::size_t k = 0; k < count; ++k) {
    Matrix& p = model.params_[k];
    ad::Index rows = 0, cols = 0;
    if (!(in >> rows >> cols) || rows != p.rows() || cols != p.cols())
      throw std::runtime_error("gnn: parameter shape does not match architecture");
    for (ad::Index e = 0; e < p.size(); ++e)
      if (!(in >> p.data()[e])) throw std::runtime_error("gnn: truncated parameter block");
  }
  return model;
}

void GnnModel::save_file(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("gnn: cannot open " + path);
  save(out);
}

GnnModel GnnModel::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("gnn: cannot open " + path);
  return load(in);
}

// ---------------------------------------------------------------------------

double training_loss(const GnnModel& model, const graph::Graph& g, const Matrix& x,
                     std::span<const double> targets, std::span<const std::size_t> mask,
                     std::vector<Matrix>* gradient) {
  check_inputs(g, x, model.input_width());
  if (targets.size() != g.size()) throw std::invalid_argument("gnn: target length mismatch");
  const auto z = standardized_targets(model, targets);
  const MessageIndex index(g, model.delta());
  ad::Tape tape;
  const auto params = gradient ? model.parameters().bind(tape) : bind_constants(tape, model.parameters());
  ad::Var loss = loss_node(model.config(), model.forward(params, index, tape.constant(x)), z, mask);
  if (gradient) {
    tape.backward(loss);
    gradient->clear();
    for (const auto& p : params) gradient->push_back(tape.gradient(p));
  }
  return loss.scalar();
}

TrainResult train_gnn(const graph::Graph& g, const Matrix& x, std::span<const double> targets,
                      std::span<const std::size_t> mask, const GnnConfig& config, Rng& rng) {
  config.validate();
  if (mask.empty()) throw std::invalid_argument("train_gnn: node mask is empty");
  if (targets.size() != g.size()) throw std::invalid_argument("train_gnn: target length mismatch");
  check_inputs(g, x, static_cast<std::size_t>(x.cols()));
  for (std::size_t i : mask) {
    if (i >= g.size()) throw std::invalid_argument("train_gnn: mask index out of range");
    if (!std::isfinite(targets[i])) throw std::invalid_argument("train_gnn: non-finite target");
    if (config.loss == Loss::logistic && (targets[i] < 0.0 || targets[i] > 1.0))
      throw std::invalid_argument("train_gnn: logistic labels must lie in [0, 1]");
  }

  TrainResult result{GnnModel::create(config, static_cast<std::size_t>(x.cols()), g, rng), 0.0, 0.0, {}};
  GnnModel& model = result.model;
  if (config.loss == Loss::least_squares) {
    double mean = 0.0;
    for (std::size_t i : mask) mean += targets[i];
    mean /= static_cast<double>(mask.size());
    double var = 0.0;
    for (std::size_t i : mask) var += (targets[i] - mean) * (targets[i] - mean);
    const double sd = std::sqrt(var / static_cast<double>(mask.size()));
    model.set_target_transform(mean, sd > 0.0 ? sd : 1.0);
  }
  const auto z = standardized_targets(model, targets);
  const MessageIndex index(g, model.delta());

  ad::AdamState adam(config.train.adam, model.parameters().values());
  std::vector<Matrix> grads(model.parameters().size());
  result.loss_history.reserve(config.train.epochs);
  for (std::size_t epoch = 0; epoch < config.train.epochs; ++epoch) {
    ad::Tape tape;
    const auto params = model.parameters().bind(tape);
    ad::Var loss = loss_node(config, model.forward(params, index, tape.constant(x)), z, mask);
    result.loss_history.push_back(loss.scalar());
    tape.backward(loss);
    for (std::size_t k = 0; k < params.size(); ++k) grads[k] = tape.gradient(params[k]);
    adam.step(model.parameters().values(), grads);
  }
  model.set_trained_epochs(config.train.epochs);
  result.final_loss = training_loss(model, g, x, targets, mask);
  result.initial_loss = result.loss_history.empty() ? result.final_loss : result.loss_history.front();
  return result;
}

Matrix column(std::span<const double> v) {
  Matrix m(as_index(v.size()), 1);
  for (std::size_t i = 0; i < v.size(); ++i) m(as_index(i), 0) = v[i];
  return m;
}

}  // namespace netcausal::gnn
