#include "netcausal/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace netcausal::ad {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(std::string("autodiff: ") + what);
}

void require_same_tape(Var a, Var b) { require(&a.tape() == &b.tape(), "operands on different tapes"); }

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

void check_offsets(Var a, std::span<const std::size_t> offsets) {
  require(!offsets.empty() && offsets.front() == 0, "segment offsets must start at 0");
  require(offsets.back() == static_cast<std::size_t>(a.rows()), "segment offsets must end at row count");
  for (std::size_t s = 1; s < offsets.size(); ++s)
    require(offsets[s - 1] <= offsets[s], "segment offsets must be nondecreasing");
}

}  // namespace

const Matrix& Var::value() const { return tape_->value(id_); }

double Var::scalar() const {
  const Matrix& v = value();
  require(v.rows() == 1 && v.cols() == 1, "scalar() on non-scalar node");
  return v(0, 0);
}

Var Tape::constant(Matrix value) { return record(std::move(value), std::span<const Var>{}, nullptr); }

Var Tape::parameter(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), nullptr, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, Backward backward) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
}

Var Tape::record(Matrix value, std::span<const Var> inputs, Backward backward) {
  bool needs = false;
  for (const Var& v : inputs) {
    require(&v.tape() == this, "operand recorded on a different tape");
    needs = needs || nodes_[v.id()].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), Matrix(), needs ? std::move(backward) : nullptr, needs});
  return Var(this, nodes_.size() - 1);
}

Matrix& Tape::adjoint_buffer(std::size_t id) {
  Node& node = nodes_[id];
  if (node.adjoint.size() == 0) node.adjoint = Matrix::Zero(node.value.rows(), node.value.cols());
  return node.adjoint;
}

void Tape::backward(Var output) {
  require(&output.tape() == this, "backward on a foreign node");
  require(output.rows() == 1 && output.cols() == 1, "backward requires a scalar output");
  for (Node& node : nodes_) node.adjoint.resize(0, 0);
  adjoint_buffer(output.id())(0, 0) = 1.0;
  for (std::size_t id = output.id() + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (node.backward && node.adjoint.size() != 0) node.backward(*this, id);
  }
}

Matrix Tape::gradient(Var v) const {
  const Node& node = nodes_[v.id()];
  if (node.adjoint.size() == 0) return Matrix::Zero(node.value.rows(), node.value.cols());
  return node.adjoint;
}

// ---------------------------------------------------------------------------

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  require(a.cols() == b.rows(), "matmul shape mismatch");
  const std::size_t ia = a.id(), ib = b.id();
  Matrix out = a.value() * b.value();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.adjoint(self);
    if (t.requires_grad(ia)) t.adjoint_buffer(ia).noalias() += g * t.value(ib).transpose();
    if (t.requires_grad(ib)) t.adjoint_buffer(ib).noalias() += t.value(ia).transpose() * g;
  });
}

Var add(Var a, Var b) {
  require_same_tape(a, b);
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add shape mismatch");
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(a.value() + b.value(), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.adjoint(self);
    if (t.requires_grad(ia)) t.adjoint_buffer(ia) += g;
    if (t.requires_grad(ib)) t.adjoint_buffer(ib) += g;
  });
}

Var sub(Var a, Var b) {
  require_same_tape(a, b);
  require(a.rows() == b.rows() && a.cols() == b.cols(), "sub shape mismatch");
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(a.value() - b.value(), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.adjoint(self);
    if (t.requires_grad(ia)) t.adjoint_buffer(ia) += g;
    if (t.requires_grad(ib)) t.adjoint_buffer(ib) -= g;
  });
}

Var hadamard(Var a, Var b) {
  require_same_tape(a, b);
  require(a.rows() == b.rows() && a.cols() == b.cols(), "hadamard shape mismatch");
  const std::size_t ia = a.id(), ib = b.id();
  Matrix out = a.value().cwiseProduct(b.value());
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.adjoint(self);
    if (t.requires_grad(ia)) t.adjoint_buffer(ia) += g.cwiseProduct(t.value(ib));
    if (t.requires_grad(ib)) t.adjoint_buffer(ib) += g.cwiseProduct(t.value(ia));
  });
}

Var scale(Var a, double factor) {
  const std::size_t ia = a.id();
  return a.tape().record(a.value() * factor, {a}, [ia, factor](Tape& t, std::size_t self) {
    t.adjoint_buffer(ia) += factor * t.adjoint(self);
  });
}

Var add_row(Var a, Var row) {
  require_same_tape(a, row);
  require(row.rows() == 1 && row.cols() == a.cols(), "add_row expects a 1 x cols row");
  const std::size_t ia = a.id(), ir = row.id();
  Matrix out = a.value().rowwise() + row.value().row(0);
  return a.tape().record(std::move(out), {a, row}, [ia, ir](Tape& t, std::size_t self) {
    const Matrix& g = t.adjoint(self);
    if (t.requires_grad(ia)) t.adjoint_buffer(ia) += g;
    if (t.requires_grad(ir)) t.adjoint_buffer(ir) += g.colwise().sum();
  });
}

Var sigmoid(Var a) {
  const std::size_t ia = a.id();
  Matrix out = a.value().unaryExpr([](double x) { return stable_sigmoid(x); });
  return a.tape().record(std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    const Matrix& y = t.value(self);
    t.adjoint_buffer(ia).array() += t.adjoint(self).array() * y.array() * (1.0 - y.array());
  });
}

Var exp(Var a) {
  const std::size_t ia = a.id();
  Matrix out = a.value().array().exp().matrix();
  return a.tape().record(std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    t.adjoint_buffer(ia).array() += t.adjoint(self).array() * t.value(self).array();
  });
}

Var log(Var a) {
  const std::size_t ia = a.id();
  Matrix out = a.value().array().log().matrix();
  return a.tape().record(std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    t.adjoint_buffer(ia).array() += t.adjoint(self).array() / t.value(ia).array();
  });
}

Var sum(Var a) {
  const std::size_t ia = a.id();
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape().record(std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    t.adjoint_buffer(ia).array() += t.adjoint(self)(0, 0);
  });
}

Var mean(Var a) {
  require(a.value().size() > 0, "mean of empty matrix");
  const std::size_t ia = a.id();
  const double count = static_cast<double>(a.value().size());
  Matrix out(1, 1);
  out(0, 0) = a.value().sum() / count;
  return a.tape().record(std::move(out), {a}, [ia, count](Tape& t, std::size_t self) {
    t.adjoint_buffer(ia).array() += t.adjoint(self)(0, 0) / count;
  });
}

Var concat_cols(std::initializer_list<Var> parts) {
  return concat_cols(std::span<const Var>(parts.begin(), parts.size()));
}

Var concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols of nothing");
  const Index rows = parts.front().rows();
  Index cols = 0;
  for (const Var& p : parts) {
    require_same_tape(parts.front(), p);
    require(p.rows() == rows, "concat_cols row mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<std::pair<std::size_t, Index>> layout;  // (node id, first column)
  Index at = 0;
  for (const Var& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    layout.emplace_back(p.id(), at);
    at += p.cols();
  }
  return parts.front().tape().record(std::move(out), parts, [layout](Tape& t, std::size_t self) {
    const Matrix& g = t.adjoint(self);
    for (const auto& [id, first] : layout) {
      if (!t.requires_grad(id)) continue;
      Matrix& buf = t.adjoint_buffer(id);
      buf += g.middleCols(first, buf.cols());
    }
  });
}

Var gather_rows(Var a, std::span<const Index> index) {
  const Matrix& src = a.value();
  Matrix out(static_cast<Index>(index.size()), src.cols());
  for (std::size_t r = 0; r < index.size(); ++r) {
    require(index[r] >= 0 && index[r] < src.rows(), "gather index out of range");
    out.row(static_cast<Index>(r)) = src.row(index[r]);
  }
  const std::size_t ia = a.id();
  std::vector<Index> idx(index.begin(), index.end());
  return a.tape().record(std::move(out), {a}, [ia, idx = std::move(idx)](Tape& t, std::size_t self) {
    const Matrix& g = t.adjoint(self);
    Matrix& buf = t.adjoint_buffer(ia);
    for (std::size_t r = 0; r < idx.size(); ++r) buf.row(idx[r]) += g.row(static_cast<Index>(r));
  });
}

Var scale_rows(Var a, std::span<const double> factors) {
  require(static_cast<Index>(factors.size()) == a.rows(), "scale_rows length mismatch");
  Eigen::Map<const Eigen::VectorXd> f(factors.data(), static_cast<Index>(factors.size()));
  Matrix out = f.asDiagonal() * a.value();
  const std::size_t ia = a.id();
  Eigen::VectorXd fv = f;
  return a.tape().record(std::move(out), {a}, [ia, fv = std::move(fv)](Tape& t, std::size_t self) {
    t.adjoint_buffer(ia) += fv.asDiagonal() * t.adjoint(self);
  });
}

// ---------------------------------------------------------------------------

Var segment_sum(Var a, std::span<const std::size_t> offsets) {
  check_offsets(a, offsets);
  const Matrix& x = a.value();
  const Index segs = static_cast<Index>(offsets.size() - 1);
  Matrix out = Matrix::Zero(segs, x.cols());
  for (Index s = 0; s < segs; ++s)
    for (std::size_t r = offsets[s]; r < offsets[s + 1]; ++r) out.row(s) += x.row(static_cast<Index>(r));
  const std::size_t ia = a.id();
  std::vector<std::size_t> off(offsets.begin(), offsets.end());
  return a.tape().record(std::move(out), {a}, [ia, off = std::move(off)](Tape& t, std::size_t self) {
    const Matrix& g = t.adjoint(self);
    Matrix& buf = t.adjoint_buffer(ia);
    for (std::size_t s = 0; s + 1 < off.size(); ++s)
      for (std::size_t r = off[s]; r < off[s + 1]; ++r)
        buf.row(static_cast<Index>(r)) += g.row(static_cast<Index>(s));
  });
}

Var segment_mean(Var a, std::span<const std::size_t> offsets) {
  check_offsets(a, offsets);
  const Matrix& x = a.value();
  const Index segs = static_cast<Index>(offsets.size() - 1);
  Matrix out = Matrix::Zero(segs, x.cols());
  for (Index s = 0; s < segs; ++s) {
    const std::size_t count = offsets[s + 1] - offsets[s];
    if (count == 0) continue;
    for (std::size_t r = offsets[s]; r < offsets[s + 1]; ++r) out.row(s) += x.row(static_cast<Index>(r));
    out.row(s) /= static_cast<double>(count);
  }
  const std::size_t ia = a.id();
  std::vector<std::size_t> off(offsets.begin(), offsets.end());
  return a.tape().record(std::move(out), {a}, [ia, off = std::move(off)](Tape& t, std::size_t self) {
    const Matrix& g = t.adjoint(self);
    Matrix& buf = t.adjoint_buffer(ia);
    for (std::size_t s = 0; s + 1 < off.size(); ++s) {
      const std::size_t count = off[s + 1] - off[s];
      if (count == 0) continue;
      const double w = 1.0 / static_cast<double>(count);
      for (std::size_t r = off[s]; r < off[s + 1]; ++r)
        buf.row(static_cast<Index>(r)) += w * g.row(static_cast<Index>(s));
    }
  });
}

namespace {

template <typename Better>
Var segment_extreme(Var a, std::span<const std::size_t> offsets, Better better) {
  check_offsets(a, offsets);
  const Matrix& x = a.value();
  const Index segs = static_cast<Index>(offsets.size() - 1);
  const Index cols = x.cols();
  Matrix out = Matrix::Zero(segs, cols);
  // arg(s, c) = attaining row, or -1 for empty segments.
  Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> arg =
      Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>::Constant(segs, cols, -1);
  for (Index s = 0; s < segs; ++s) {
    if (offsets[s] == offsets[s + 1]) continue;
    for (Index c = 0; c < cols; ++c) {
      Index best = static_cast<Index>(offsets[s]);
      for (std::size_t r = offsets[s] + 1; r < offsets[s + 1]; ++r)
        if (better(x(static_cast<Index>(r), c), x(best, c))) best = static_cast<Index>(r);
      arg(s, c) = best;
      out(s, c) = x(best, c);
    }
  }
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia, arg = std::move(arg)](Tape& t, std::size_t self) {
    const Matrix& g = t.adjoint(self);
    Matrix& buf = t.adjoint_buffer(ia);
    for (Index s = 0; s < arg.rows(); ++s)
      for (Index c = 0; c < arg.cols(); ++c)
        if (arg(s, c) >= 0) buf(arg(s, c), c) += g(s, c);
  });
}

}  // namespace

Var segment_max(Var a, std::span<const std::size_t> offsets) {
  return segment_extreme(a, offsets, [](double cand, double best) { return cand > best; });
}

Var segment_min(Var a, std::span<const std::size_t> offsets) {
  return segment_extreme(a, offsets, [](double cand, double best) { return cand < best; });
}

Var segment_std(Var a, std::span<const std::size_t> offsets) {
  check_offsets(a, offsets);
  const Matrix& x = a.value();
  const Index segs = static_cast<Index>(offsets.size() - 1);
  const Index cols = x.cols();
  Matrix out = Matrix::Zero(segs, cols);
  Matrix centers = Matrix::Zero(segs, cols);
  for (Index s = 0; s < segs; ++s) {
    const std::size_t count = offsets[s + 1] - offsets[s];
    if (count == 0) continue;
    for (std::size_t r = offsets[s]; r < offsets[s + 1]; ++r) centers.row(s) += x.row(static_cast<Index>(r));
    centers.row(s) /= static_cast<double>(count);
    for (std::size_t r = offsets[s]; r < offsets[s + 1]; ++r)
      out.row(s).array() += (x.row(static_cast<Index>(r)) - centers.row(s)).array().square();
    out.row(s) = (out.row(s) / static_cast<double>(count)).cwiseMax(0.0).cwiseSqrt();
  }
  const std::size_t ia = a.id();
  std::vector<std::size_t> off(offsets.begin(), offsets.end());
  return a.tape().record(
      std::move(out), {a},
      [ia, off = std::move(off), centers = std::move(centers)](Tape& t, std::size_t self) {
        const Matrix& g = t.adjoint(self);
        const Matrix& y = t.value(self);
        const Matrix& xv = t.value(ia);
        Matrix& buf = t.adjoint_buffer(ia);
        for (std::size_t s = 0; s + 1 < off.size(); ++s) {
          const double count = static_cast<double>(off[s + 1] - off[s]);
          const Index si = static_cast<Index>(s);
          for (Index c = 0; c < y.cols(); ++c) {
            if (!(y(si, c) > 0.0)) continue;
            const double w = g(si, c) / (count * y(si, c));
            for (std::size_t r = off[s]; r < off[s + 1]; ++r)
              buf(static_cast<Index>(r), c) += w * (xv(static_cast<Index>(r), c) - centers(si, c));
          }
        }
      });
}

// ---------------------------------------------------------------------------

Var least_squares_loss(Var pred, std::span<const double> target, std::span<const std::size_t> rows) {
  require(pred.cols() == 1, "least_squares_loss expects a column");
  require(static_cast<Index>(target.size()) == pred.rows(), "least_squares_loss target length");
  const Matrix& f = pred.value();
  double total = 0.0;
  for (std::size_t r : rows) {
    require(static_cast<Index>(r) < f.rows(), "loss row out of range");
    const double e = target[r] - f(static_cast<Index>(r), 0);
    total += 0.5 * e * e;
  }
  Matrix out(1, 1);
  out(0, 0) = total;
  const std::size_t ip = pred.id();
  std::vector<double> y(target.begin(), target.end());
  std::vector<std::size_t> mask(rows.begin(), rows.end());
  return pred.tape().record(std::move(out), {pred},
                            [ip, y = std::move(y), mask = std::move(mask)](Tape& t, std::size_t self) {
                              const double g = t.adjoint(self)(0, 0);
                              const Matrix& f = t.value(ip);
                              Matrix& buf = t.adjoint_buffer(ip);
                              for (std::size_t r : mask) {
                                const Index ri = static_cast<Index>(r);
                                buf(ri, 0) += g * (f(ri, 0) - y[r]);
                              }
                            });
}

Var logistic_loss(Var logit, std::span<const double> label, std::span<const std::size_t> rows) {
  require(logit.cols() == 1, "logistic_loss expects a column");
  require(static_cast<Index>(label.size()) == logit.rows(), "logistic_loss label length");
  const Matrix& f = logit.value();
  double total = 0.0;
  for (std::size_t r : rows) {
    require(static_cast<Index>(r) < f.rows(), "loss row out of range");
    total += logistic_value(f(static_cast<Index>(r), 0), label[r]);
  }
  Matrix out(1, 1);
  out(0, 0) = total;
  const std::size_t il = logit.id();
  std::vector<double> y(label.begin(), label.end());
  std::vector<std::size_t> mask(rows.begin(), rows.end());
  return logit.tape().record(std::move(out), {logit},
                             [il, y = std::move(y), mask = std::move(mask)](Tape& t, std::size_t self) {
                               const double g = t.adjoint(self)(0, 0);
                               const Matrix& f = t.value(il);
                               Matrix& buf = t.adjoint_buffer(il);
                               for (std::size_t r : mask) {
                                 const Index ri = static_cast<Index>(r);
                                 buf(ri, 0) += g * (stable_sigmoid(f(ri, 0)) - y[r]);
                               }
                             });
}

double least_squares_value(double pred, double target) {
  const double e = target - pred;
  return 0.5 * e * e;
}

double logistic_value(double logit, double label) { return -label * logit + softplus(logit); }

// ---------------------------------------------------------------------------

std::size_t ParameterStore::add(Matrix init) {
  values_.push_back(std::move(init));
  return values_.size() - 1;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t total = 0;
  for (const auto& v : values_) total += static_cast<std::size_t>(v.size());
  return total;
}

std::vector<Var> ParameterStore::bind(Tape& tape) const {
  std::vector<Var> out;
  out.reserve(values_.size());
  for (const auto& v : values_) out.push_back(tape.parameter(v));
  return out;
}

Var activate(Var x, Activation activation) {
  switch (activation) {
    case Activation::identity: return x;
    case Activation::sigmoid: return sigmoid(x);
  }
  return x;
}

Dense Dense::create(ParameterStore& store, Index in, Index out, Activation activation, Rng& rng) {
  require(in >= 1 && out >= 1, "dense layer widths must be positive");
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  auto draw = [&](Index rows, Index cols) {
    Matrix m(rows, cols);
    for (Index r = 0; r < rows; ++r)
      for (Index c = 0; c < cols; ++c) m(r, c) = rng.uniform(-bound, bound);
    return m;
  };
  Dense d;
  d.in = in;
  d.out = out;
  d.activation = activation;
  d.weight = store.add(draw(in, out));
  d.bias = store.add(draw(1, out));
  return d;
}

Var Dense::forward(std::span<const Var> params, Var x) const {
  require(x.cols() == in, "dense input width mismatch");
  return activate(add_row(matmul(x, params[weight]), params[bias]), activation);
}

Mlp Mlp::create(ParameterStore& store, std::span<const Index> widths, Activation hidden,
                Activation output, Rng& rng) {
  require(widths.size() >= 2, "mlp needs input and output widths");
  Mlp m;
  for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
    const bool last = k + 2 == widths.size();
    m.layers_.push_back(Dense::create(store, widths[k], widths[k + 1], last ? output : hidden, rng));
  }
  return m;
}

Var Mlp::forward(std::span<const Var> params, Var x) const {
  for (const Dense& layer : layers_) x = layer.forward(params, x);
  return x;
}

// ---------------------------------------------------------------------------

AdamState::AdamState(AdamOptions options, const std::vector<Matrix>& params) : options_(options) {
  for (const auto& p : params) {
    m_.push_back(Matrix::Zero(p.rows(), p.cols()));
    v_.push_back(Matrix::Zero(p.rows(), p.cols()));
  }
}

void AdamState::step(std::vector<Matrix>& params, std::span<const Matrix> grads) {
  require(params.size() == m_.size() && grads.size() == m_.size(), "adam parameter count mismatch");
  ++steps_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    require(grads[k].rows() == params[k].rows() && grads[k].cols() == params[k].cols(),
            "adam gradient shape mismatch");
    m_[k] = b1 * m_[k] + (1.0 - b1) * grads[k];
    v_[k] = b2 * v_[k] + (1.0 - b2) * grads[k].cwiseProduct(grads[k]);
    params[k].array() -= options_.learning_rate * (m_[k].array() / c1) /
                         ((v_[k].array() / c2).sqrt() + options_.epsilon);
  }
}

}  // namespace netcausal::ad
