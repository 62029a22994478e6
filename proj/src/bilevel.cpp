#include "shinbo/bilevel.hpp"

#include <chrono>
#include <cmath>
#include <random>
#include <string>

namespace shinbo {

namespace {

// Column reductions over the data needed by the row update and its
// derivatives, accumulated in one pass:
//   n_j    = sum_i w_i x_ij / wh_ij^2        (update numerator)
//   d_fit  = sum_i w_i / wh_ij               (update denominator, fit part)
//   c2_j   = sum_i w_i^2 / wh_ij^2
//   c3_j   = sum_i w_i^2 x_ij / wh_ij^3
// with wh_ij = max(base_ij + w_i h_j, floor) and x floored the same way.
struct RowTerms {
  RowVector n, d_fit, c2, c3;
};

void accumulate_row_terms(const Matrix& x, const Matrix& base,
                          const Vector& w_col, const RowVector& h_row,
                          double floor, RowTerms& out) {
  const Index m = x.rows();
  const Index cols = x.cols();
  out.n.resize(cols);
  out.d_fit.resize(cols);
  out.c2.resize(cols);
  out.c3.resize(cols);
  for (Index j = 0; j < cols; ++j) {
    const double hj = h_row[j];
    double acc_n = 0.0, acc_d = 0.0, acc_c2 = 0.0, acc_c3 = 0.0;
    const double* bcol = base.col(j).data();
    const double* xcol = x.col(j).data();
    const double* wv = w_col.data();
    for (Index i = 0; i < m; ++i) {
      const double wi = wv[i];
      const double wh = std::max(bcol[i] + wi * hj, floor);
      const double inv = 1.0 / wh;
      const double xr2 = std::max(xcol[i], floor) * inv * inv;
      acc_n += wi * xr2;
      acc_d += wi * inv;
      acc_c2 += wi * wi * inv * inv;
      acc_c3 += wi * wi * xr2 * inv;
    }
    out.n[j] = acc_n;
    out.d_fit[j] = acc_d;
    out.c2[j] = acc_c2;
    out.c3[j] = acc_c3;
  }
}

RowVector penalized_denominator(const RowTerms& terms, const RowVector& h_row,
                                double lambda_l, double floor) {
  RowVector d = terms.d_fit;
  d.array() += 2.0 * lambda_l * lambda_l * h_row.sum();
  return d.cwiseMax(floor);
}

Vector jacobian_from_terms(const RowTerms& terms, const RowVector& d,
                           const RowVector& h_row, double lambda_l) {
  const double lam2 = 2.0 * lambda_l * lambda_l;
  const auto n = terms.n.array();
  const auto dd = d.array();
  return (n / dd -
          h_row.array() * (2.0 * terms.c3.array() * dd - n * terms.c2.array() +
                           lam2 * n) /
              (dd * dd))
      .transpose();
}

Vector sensitivity_from_terms(const RowTerms& terms, const RowVector& d,
                              const RowVector& h_row, double lambda_l) {
  const double scale = -4.0 * lambda_l * h_row.sum();
  return (scale * h_row.array() * terms.n.array() /
          (d.array() * d.array()))
      .transpose();
}

// Reconstruction of the other components, used as the fixed part of WH during
// a row's inner loop.
Matrix other_components(const Matrix& w, const Matrix& h, Index l) {
  Matrix base = w * h;
  base.noalias() -= w.col(l) * h.row(l);
  return base;
}

void check_row_args(const Matrix& x, const Matrix& w, const Matrix& h,
                    const RowVector& h_row, Index l) {
  if (w.cols() != h.rows() || x.rows() != w.rows() || x.cols() != h.cols())
    throw DimensionError("row sensitivity: factor shapes do not match X");
  if (l < 0 || l >= h.rows())
    throw DimensionError("row sensitivity: row index out of range");
  if (h_row.size() != h.cols())
    throw DimensionError("row sensitivity: row length != H cols");
}

}  // namespace

Matrix residual(const Matrix& x, const Matrix& w, const Matrix& h, Index l) {
  if (w.cols() != h.rows() || x.rows() != w.rows() || x.cols() != h.cols())
    throw DimensionError("residual: factor shapes do not match X");
  if (l < 0 || l >= h.rows())
    throw DimensionError("residual: component index out of range");
  return x - other_components(w, h, l);
}

double response_row(const Matrix& x, const Matrix& r, const Vector& w_col,
                    const RowVector& h_row) {
  if (r.rows() != x.rows() || r.cols() != x.cols() ||
      w_col.size() != x.rows() || h_row.size() != x.cols())
    throw DimensionError("response_row: shape mismatch");
  Matrix err = x - r;
  err.noalias() -= w_col * h_row;
  return err.squaredNorm();
}

RowVector outer_gradient(const Matrix& x, const Matrix& r,
                         const Vector& w_col, const RowVector& h_row) {
  if (r.rows() != x.rows() || r.cols() != x.cols() ||
      w_col.size() != x.rows() || h_row.size() != x.cols())
    throw DimensionError("outer_gradient: shape mismatch");
  RowVector g = w_col.transpose() * (x - r);
  g.noalias() -= w_col.squaredNorm() * h_row;
  return -2.0 * g;
}

Vector jacobian_diag(const RowVector& h_row, Index l, const Matrix& x,
                     const Matrix& w, const Matrix& h, double lambda_l,
                     double floor) {
  check_row_args(x, w, h, h_row, l);
  const Matrix base = other_components(w, h, l);
  RowTerms terms;
  accumulate_row_terms(x, base, w.col(l), h_row, floor, terms);
  const RowVector d = penalized_denominator(terms, h_row, lambda_l, floor);
  Vector a = jacobian_from_terms(terms, d, h_row, lambda_l);
  if (!a.allFinite())
    throw NumericError("jacobian_diag: non-finite entry for row " +
                       std::to_string(l));
  return a;
}

Vector sensitivity_b(const RowVector& h_row, Index l, const Matrix& x,
                     const Matrix& w, const Matrix& h, double lambda_l,
                     double floor) {
  check_row_args(x, w, h, h_row, l);
  const Matrix base = other_components(w, h, l);
  RowTerms terms;
  accumulate_row_terms(x, base, w.col(l), h_row, floor, terms);
  const RowVector d = penalized_denominator(terms, h_row, lambda_l, floor);
  Vector b = sensitivity_from_terms(terms, d, h_row, lambda_l);
  if (!b.allFinite())
    throw NumericError("sensitivity_b: non-finite entry for row " +
                       std::to_string(l));
  return b;
}

FmdState fmd_step(const FmdState& prev, const Vector& a_diag,
                  const Vector& b) {
  if (prev.s.size() != a_diag.size() || a_diag.size() != b.size())
    throw DimensionError("fmd_step: length mismatch");
  FmdState next;
  next.s = a_diag.cwiseProduct(prev.s) + b;
  next.a_diag = a_diag;
  next.b = b;
  return next;
}

double hypergradient_row(const RowVector& g, const Vector& s) {
  if (g.size() != s.size())
    throw DimensionError("hypergradient_row: length mismatch");
  return g.dot(s);
}

Vector update_lambda(const Vector& lambda, const Vector& grad, double alpha) {
  if (lambda.size() != grad.size())
    throw DimensionError("update_lambda: length mismatch");
  if (alpha <= 0.0) throw ConfigError("update_lambda: alpha must be > 0");
  return (lambda - alpha * grad).cwiseMax(0.0);
}

ResponseReport response_report(const Matrix& x, const Matrix& w,
                               const Matrix& h) {
  ResponseReport report;
  report.per_row.resize(h.rows());
  const Matrix wh = w * h;
  for (Index l = 0; l < h.rows(); ++l) {
    Matrix others = wh;
    others.noalias() -= w.col(l) * h.row(l);
    report.per_row[l] = response_row(x, others, w.col(l), h.row(l));
  }
  report.total = report.per_row.sum();
  return report;
}

SolveResult run_shinbo(const Matrix& x, const SolverConfig& config,
                       const FactorPair& init) {
  if ((x.array() < 0.0).any())
    throw DomainError("run_shinbo: X has negative entries");
  if (config.lambda_mode != LambdaMode::kPerRowAdaptive)
    throw ConfigError("run_shinbo: lambda_mode must be per-row adaptive");
  if (config.inner_iters < 1)
    throw ConfigError("run_shinbo: inner_iters must be >= 1");
  if (config.rank < 1 || config.max_outer_iters < 1 || config.tol <= 0.0 ||
      config.step_alpha <= 0.0)
    throw ConfigError(
        "run_shinbo: rank, iteration cap, tol and step alpha must be "
        "positive");
  if (init.w.cols() != config.rank || init.h.rows() != config.rank)
    throw DimensionError("run_shinbo: init rank does not match config");
  if (x.rows() != init.w.rows() || x.cols() != init.h.cols())
    throw DimensionError("run_shinbo: init shapes do not match X");

  const Index rank = config.rank;
  const Index n = x.cols();

  SolveResult result;
  result.factors = init;
  Matrix& w = result.factors.w;
  Matrix& h = result.factors.h;

  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  result.lambda.resize(rank);
  for (Index l = 0; l < rank; ++l) result.lambda[l] = unit(rng);
  Vector& lambda = result.lambda;

  double prev_fit = penalized_objective(x, w, h, lambda, config.floor).fit;

  RowTerms terms;
  Matrix base(x.rows(), x.cols());
  Vector grads = Vector::Zero(rank);

  const auto start = std::chrono::steady_clock::now();
  for (int k = 1; k <= config.max_outer_iters; ++k) {
    try {
      w = update_w(x, w, h, config.w_update_rule, config.floor);
    } catch (const NumericError& e) {
      throw NumericError("run_shinbo: outer " + std::to_string(k) + ": " +
                         e.what());
    }

    Matrix wh = w * h;
    for (Index l = 0; l < rank; ++l) {
      const Vector w_col = w.col(l);
      base = wh;
      base.noalias() -= w_col * h.row(l);
      RowVector h_t = h.row(l);
      Vector s = Vector::Zero(n);  // s^0 = b_0 = 0: warm start carries no
                                   // lambda dependence
      const double lam = lambda[l];
      for (int t = 1; t <= config.inner_iters; ++t) {
        accumulate_row_terms(x, base, w_col, h_t, config.floor, terms);
        const RowVector d =
            penalized_denominator(terms, h_t, lam, config.floor);
        const Vector a_diag = jacobian_from_terms(terms, d, h_t, lam);
        const Vector b = sensitivity_from_terms(terms, d, h_t, lam);
        s = a_diag.cwiseProduct(s) + b;
        h_t = h_t.cwiseProduct(terms.n).cwiseQuotient(d);
        if (!h_t.allFinite() || !s.allFinite())
          throw NumericError("run_shinbo: non-finite at outer " +
                             std::to_string(k) + ", row " + std::to_string(l) +
                             ", inner " + std::to_string(t));
      }

      // Hypergradient at t = T.  The R slot receives the reconstruction of
      // the other components so the outer objective is the Frobenius fit of
      // the full model; its direct partial in lambda is identically zero.
      RowVector g = w_col.transpose() * x;
      g.noalias() -= w_col.transpose() * base;
      g.noalias() -= w_col.squaredNorm() * h_t;
      g *= -2.0;
      const double direct_partial = 0.0;
      const double hyper = direct_partial + hypergradient_row(g, s);
      double scaled = hyper;
      if (config.lambda_step == LambdaStepRule::kNormalized) {
        const double magnitude = g.norm() * s.norm();
        scaled = magnitude > 0.0 ? hyper / magnitude : 0.0;
      }

      if (config.lambda_batched) {
        grads[l] = scaled;
      } else {
        double next = std::max(lam - config.step_alpha * scaled, 0.0);
        if (config.lambda_max > 0.0) next = std::min(next, config.lambda_max);
        lambda[l] = next;
      }
      h.row(l) = h_t;
      wh = base;
      wh.noalias() += w_col * h_t;
    }
    if (config.lambda_batched) {
      lambda = update_lambda(lambda, grads, config.step_alpha);
      if (config.lambda_max > 0.0)
        lambda = lambda.cwiseMin(config.lambda_max);
    }

    normalize_columns(w, h);

    const ObjectiveValue obj =
        penalized_objective(x, w, h, lambda, config.floor);
    TraceRow row;
    row.iter = k;
    row.objective = obj;
    row.response = response_report(x, w, h).total;
    row.lambda = lambda;
    row.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    result.trace.push_back(row);
    result.iterations = k;
    if (relative_change(prev_fit, obj.fit) <= config.tol) {
      result.converged = true;
      break;
    }
    prev_fit = obj.fit;
  }
  return result;
}

}  // namespace shinbo
