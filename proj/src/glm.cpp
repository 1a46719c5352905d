#include "netcausal/glm.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

#include "netcausal/dgp.hpp"

namespace netcausal::glm {

namespace {

using Index = Eigen::Index;

void check_mask(const Matrix& f, std::size_t target_len, std::span<const std::size_t> mask) {
  if (static_cast<std::size_t>(f.rows()) != target_len)
    throw std::invalid_argument("glm: target length must equal feature rows");
  if (mask.empty()) throw std::invalid_argument("glm: empty fitting mask");
  for (std::size_t i : mask)
    if (i >= target_len) throw std::invalid_argument("glm: mask index out of range");
}

Matrix masked_rows(const Matrix& f, std::span<const std::size_t> mask) {
  Matrix out(static_cast<Index>(mask.size()), f.cols());
  for (std::size_t r = 0; r < mask.size(); ++r) out.row(static_cast<Index>(r)) = f.row(static_cast<Index>(mask[r]));
  return out;
}

Vector column_scales(const Matrix& fm) {
  Vector s(fm.cols());
  for (Index c = 0; c < fm.cols(); ++c) {
    const double rms = std::sqrt(fm.col(c).squaredNorm() / static_cast<double>(fm.rows()));
    s(c) = rms > 0.0 ? rms : 1.0;
  }
  return s;
}

// Solves G b = r for symmetric positive semidefinite G; adds a small ridge
// if G is numerically singular.
Vector solve_normal(Matrix g, const Vector& r, bool& ridge_used) {
  Eigen::LDLT<Matrix> ldlt(g);
  const auto d = ldlt.vectorD();
  const double dmax = d.cwiseAbs().maxCoeff();
  const bool singular = ldlt.info() != Eigen::Success || !(d.minCoeff() > 1e-12 * dmax);
  if (singular) {
    ridge_used = true;
    const double jitter = 1e-8 * std::max(g.diagonal().mean(), 1.0);
    g.diagonal().array() += jitter;
    ldlt.compute(g);
  }
  return ldlt.solve(r);
}

double sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

double log_likelihood(const Vector& eta, const Vector& y) {
  double ll = 0.0;
  for (Index i = 0; i < eta.size(); ++i) {
    const double f = eta(i);
    const double sp = f > 0.0 ? f + std::log1p(std::exp(-f)) : std::log1p(std::exp(f));
    ll += y(i) * f - sp;
  }
  return ll;
}

}  // namespace

Matrix build_controls(const graph::Graph& g, std::span<const double> x) {
  if (x.size() != g.size()) throw std::invalid_argument("build_controls: length mismatch");
  const auto mean = dgp::neighbor_mean(g, x);
  Matrix w(static_cast<Index>(g.size()), 3);
  for (graph::NodeId i = 0; i < g.size(); ++i) {
    const auto r = static_cast<Index>(i);
    w(r, 0) = x[i];
    w(r, 1) = mean[i];
    w(r, 2) = static_cast<double>(g.degree(i));
  }
  return w;
}

std::size_t feature_count(std::size_t p, std::size_t order) {
  std::size_t c = 1;
  for (std::size_t k = 1; k <= order; ++k) c = c * (p + k) / k;
  return c;
}

Matrix polynomial_features(const Matrix& w, std::size_t order) {
  if (order < 1) throw std::invalid_argument("polynomial_features: order must be >= 1");
  const auto p = static_cast<std::size_t>(w.cols());
  Matrix out(w.rows(), static_cast<Index>(feature_count(p, order)));
  out.col(0).setOnes();
  Index col = 1;
  std::vector<std::size_t> vars;
  std::function<void(std::size_t, std::size_t)> emit = [&](std::size_t start, std::size_t remaining) {
    if (remaining == 0) {
      Vector v = Vector::Ones(w.rows());
      for (std::size_t k : vars) v.array() *= w.col(static_cast<Index>(k)).array();
      out.col(col++) = v;
      return;
    }
    for (std::size_t k = start; k < p; ++k) {
      vars.push_back(k);
      emit(k, remaining - 1);
      vars.pop_back();
    }
  };
  for (std::size_t degree = 1; degree <= order; ++degree) emit(0, degree);
  return out;
}

LinearFit linear_fit(const Matrix& features, std::span<const double> y, std::span<const std::size_t> mask) {
  check_mask(features, y.size(), mask);
  const Matrix fm = masked_rows(features, mask);
  const Vector scale = column_scales(fm);
  const Matrix fs = fm * scale.cwiseInverse().asDiagonal();
  Vector ym(static_cast<Index>(mask.size()));
  for (std::size_t r = 0; r < mask.size(); ++r) ym(static_cast<Index>(r)) = y[mask[r]];

  LinearFit fit;
  const Vector b = solve_normal(fs.transpose() * fs, fs.transpose() * ym, fit.ridge_used);
  fit.coef = b.cwiseQuotient(scale);
  const Vector pred = features * fit.coef;
  fit.fitted.assign(pred.data(), pred.data() + pred.size());
  return fit;
}

LogisticFit logistic_fit(const Matrix& features, std::span<const double> labels,
                         std::span<const std::size_t> mask, std::size_t max_iter, double tol) {
  check_mask(features, labels.size(), mask);
  const Matrix fm = masked_rows(features, mask);
  const Vector scale = column_scales(fm);
  const Matrix fs = fm * scale.cwiseInverse().asDiagonal();
  Vector y(static_cast<Index>(mask.size()));
  for (std::size_t r = 0; r < mask.size(); ++r) {
    y(static_cast<Index>(r)) = labels[mask[r]];
    if (labels[mask[r]] < 0.0 || labels[mask[r]] > 1.0)
      throw std::invalid_argument("logistic_fit: labels must lie in [0, 1]");
  }

  LogisticFit fit;
  Vector b = Vector::Zero(fs.cols());
  Vector eta = Vector::Zero(fs.rows());
  double ll = log_likelihood(eta, y);
  while (fit.iterations < max_iter) {
    ++fit.iterations;
    Vector p(eta.size()), w(eta.size());
    for (Index i = 0; i < eta.size(); ++i) {
      p(i) = sigmoid(eta(i));
      w(i) = p(i) * (1.0 - p(i));
    }
    const Matrix h = fs.transpose() * w.asDiagonal() * fs;
    const Vector step = solve_normal(h, fs.transpose() * (y - p), fit.ridge_used);

    double t = 1.0;
    Vector cand = b + step;
    Vector cand_eta = fs * cand;
    double cand_ll = log_likelihood(cand_eta, y);
    for (int halving = 0; halving < 30 && !(cand_ll >= ll - 1e-12 * std::abs(ll)); ++halving) {
      t *= 0.5;
      cand = b + t * step;
      cand_eta = fs * cand;
      cand_ll = log_likelihood(cand_eta, y);
    }
    const double moved = (t * step).cwiseAbs().maxCoeff();
    b = std::move(cand);
    eta = std::move(cand_eta);
    ll = cand_ll;
    if (moved < tol) {
      fit.converged = true;
      break;
    }
  }
  fit.coef = b.cwiseQuotient(scale);
  const Vector all = features * fit.coef;
  fit.probabilities.resize(static_cast<std::size_t>(all.size()));
  for (Index i = 0; i < all.size(); ++i) fit.probabilities[static_cast<std::size_t>(i)] = sigmoid(all(i));
  return fit;
}

}  // namespace netcausal::glm
