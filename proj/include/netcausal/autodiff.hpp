#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "netcausal/rng.hpp"

// Minimal define-by-run reverse-mode differentiation over dense row-major
// matrices. A Tape records nodes in creation order, which is a topological
// order, so backward() is a single reverse sweep.

namespace netcausal::ad {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

class Tape;

/// Handle to a tape node. Cheap to copy; valid while its tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  double scalar() const;
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var parameter(Matrix value);

  /// Propagates d(output)/d(node) to every node; output must be 1x1.
  void backward(Var output);

  /// Gradient of the last backward() output; zeros if v is unreachable.
  Matrix gradient(Var v) const;

  std::size_t size() const { return nodes_.size(); }

  // Operator plumbing.
  Var record(Matrix value, std::initializer_list<Var> inputs, Backward backward);
  Var record(Matrix value, std::span<const Var> inputs, Backward backward);
  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  const Matrix& adjoint(std::size_t id) const { return nodes_[id].adjoint; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Adjoint buffer of node id, zero-initialized on first use.
  Matrix& adjoint_buffer(std::size_t id);

 private:
  struct Node {
    Matrix value;
    Matrix adjoint;
    Backward backward;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Operators

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
Var scale(Var a, double factor);
/// a + 1 * row, broadcasting a 1 x k row over the rows of a.
Var add_row(Var a, Var row);
Var sigmoid(Var a);
Var exp(Var a);
Var log(Var a);
/// Sum / mean over all entries, 1x1.
Var sum(Var a);
Var mean(Var a);
Var concat_cols(std::span<const Var> parts);
Var concat_cols(std::initializer_list<Var> parts);
/// out.row(r) = a.row(index[r]).
Var gather_rows(Var a, std::span<const Index> index);
/// out.row(r) = factors[r] * a.row(r). factors are constants.
Var scale_rows(Var a, std::span<const double> factors);

/// Column-wise reductions over row segments [offsets[s], offsets[s+1]).
/// Empty segments produce zero rows. min/max route gradients to the first
/// attaining row; std is the population standard deviation with zero
/// derivative at zero variance.
Var segment_sum(Var a, std::span<const std::size_t> offsets);
Var segment_mean(Var a, std::span<const std::size_t> offsets);
Var segment_max(Var a, std::span<const std::size_t> offsets);
Var segment_min(Var a, std::span<const std::size_t> offsets);
Var segment_std(Var a, std::span<const std::size_t> offsets);

/// sum over rows in `rows` of 0.5 (target - pred)^2; pred is n x 1.
Var least_squares_loss(Var pred, std::span<const double> target, std::span<const std::size_t> rows);
/// sum over rows in `rows` of -y f + log(1 + e^f); logit is n x 1.
Var logistic_loss(Var logit, std::span<const double> label, std::span<const std::size_t> rows);

// Scalar conveniences (all-rows mask).
double least_squares_value(double pred, double target);
double logistic_value(double logit, double label);

// ---------------------------------------------------------------------------
// Parameters and layers

class ParameterStore {
 public:
  std::size_t add(Matrix init);
  std::size_t size() const { return values_.size(); }
  Matrix& operator[](std::size_t k) { return values_[k]; }
  const Matrix& operator[](std::size_t k) const { return values_[k]; }
  std::vector<Matrix>& values() { return values_; }
  const std::vector<Matrix>& values() const { return values_; }
  std::size_t scalar_count() const;

  /// Registers every parameter on the tape, in store order.
  std::vector<Var> bind(Tape& tape) const;

 private:
  std::vector<Matrix> values_;
};

enum class Activation { identity, sigmoid };

Var activate(Var x, Activation activation);

/// One fully connected layer x W + b. Weights and bias are initialized
/// uniform on [-1/sqrt(in), 1/sqrt(in)].
struct Dense {
  std::size_t weight = 0;
  std::size_t bias = 0;
  Index in = 0;
  Index out = 0;
  Activation activation = Activation::identity;

  static Dense create(ParameterStore& store, Index in, Index out, Activation activation, Rng& rng);
  Var forward(std::span<const Var> params, Var x) const;
};

class Mlp {
 public:
  Mlp() = default;
  /// widths = (input, hidden..., output). Hidden layers use `hidden`,
  /// the last layer uses `output`.
  static Mlp create(ParameterStore& store, std::span<const Index> widths, Activation hidden,
                    Activation output, Rng& rng);

  Var forward(std::span<const Var> params, Var x) const;
  const std::vector<Dense>& layers() const { return layers_; }

 private:
  std::vector<Dense> layers_;
};

// ---------------------------------------------------------------------------
// Adam

struct AdamOptions {
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam moments for a fixed list of parameter shapes, with bias correction.
class AdamState {
 public:
  AdamState(AdamOptions options, const std::vector<Matrix>& params);

  void step(std::vector<Matrix>& params, std::span<const Matrix> grads);

  std::size_t steps() const { return steps_; }
  const AdamOptions& options() const { return options_; }
  const std::vector<Matrix>& first_moment() const { return m_; }
  const std::vector<Matrix>& second_moment() const { return v_; }

 private:
  AdamOptions options_;
  std::vector<Matrix> m_, v_;
  std::size_t steps_ = 0;
};

}  // namespace netcausal::ad
