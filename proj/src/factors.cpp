#include "shinbo/factors.hpp"

#include "shinbo/bilevel.hpp"

#include <Eigen/SVD>

#include <chrono>
#include <cmath>
#include <random>
#include <string>

namespace shinbo {

namespace {

void check_factor_shapes(const Matrix& x, const Matrix& w, const Matrix& h) {
  if (w.cols() != h.rows())
    throw DimensionError("factor updates: W cols != H rows");
  if (x.rows() != w.rows() || x.cols() != h.cols())
    throw DimensionError("factor updates: X shape does not match WH");
}

void check_finite(const Matrix& m, const char* where) {
  if (!m.allFinite())
    throw NumericError(std::string(where) + ": non-finite entry in result");
}

}  // namespace

Matrix update_w(const Matrix& x, const Matrix& w, const Matrix& h,
                WUpdateRule rule, double floor) {
  check_factor_shapes(x, w, h);
  Matrix next;
  if (rule == WUpdateRule::kEuclidean) {
    const Matrix numer = x * h.transpose();
    const Matrix denom = (w * (h * h.transpose())).cwiseMax(floor);
    next = w.cwiseProduct(numer.cwiseQuotient(denom));
  } else {
    // X is floored like WH so that structural zeros sit at the neutral
    // fixed point x = wh = floor instead of feeding 1/floor spikes.
    const Matrix wh = (w * h).cwiseMax(floor);
    const Matrix numer =
        x.cwiseMax(floor).cwiseQuotient(wh.cwiseAbs2()) * h.transpose();
    const Matrix denom = (wh.cwiseInverse() * h.transpose()).cwiseMax(floor);
    next = w.cwiseProduct(numer.cwiseQuotient(denom));
  }
  check_finite(next, "update_w");
  return next;
}

Matrix update_h_full(const Matrix& x, const Matrix& w, const Matrix& h,
                     const Vector& lambda, double floor) {
  check_factor_shapes(x, w, h);
  if (lambda.size() != h.rows())
    throw DimensionError("update_h_full: lambda length != rank");
  const Matrix wh = (w * h).cwiseMax(floor);
  const Matrix numer =
      w.transpose() * x.cwiseMax(floor).cwiseQuotient(wh.cwiseAbs2());
  Matrix denom = w.transpose() * wh.cwiseInverse();
  // (H E)_lj is the l-th row sum, so the penalty adds a per-row constant.
  for (Index l = 0; l < h.rows(); ++l)
    denom.row(l).array() += 2.0 * lambda[l] * lambda[l] * h.row(l).sum();
  Matrix next = h.cwiseProduct(numer.cwiseQuotient(denom.cwiseMax(floor)));
  check_finite(next, "update_h_full");
  return next;
}

RowVector update_h_row(const RowVector& h_row, Index l, const Matrix& x,
                       const Matrix& w, const Matrix& h, double lambda_l,
                       double floor) {
  check_factor_shapes(x, w, h);
  if (l < 0 || l >= h.rows())
    throw DimensionError("update_h_row: row index out of range");
  if (h_row.size() != h.cols())
    throw DimensionError("update_h_row: row length != H cols");
  Matrix wh = w * h;
  if (h_row != h.row(l)) wh.noalias() += w.col(l) * (h_row - h.row(l));
  wh = wh.cwiseMax(floor);
  const RowVector numer =
      w.col(l).transpose() * x.cwiseMax(floor).cwiseQuotient(wh.cwiseAbs2());
  RowVector denom = w.col(l).transpose() * wh.cwiseInverse();
  denom.array() += 2.0 * lambda_l * lambda_l * h_row.sum();
  RowVector next =
      h_row.cwiseProduct(numer.cwiseQuotient(denom.cwiseMax(floor)));
  if (!next.allFinite())
    throw NumericError("update_h_row: non-finite entry in row " +
                       std::to_string(l));
  return next;
}

void normalize_columns(Matrix& w, Matrix& h) {
  if (w.cols() != h.rows())
    throw DimensionError("normalize_columns: W cols != H rows");
  for (Index k = 0; k < w.cols(); ++k) {
    const double mx = w.col(k).maxCoeff();
    if (mx <= 0.0)
      throw DomainError("normalize_columns: column " + std::to_string(k) +
                        " of W has no positive entry");
    w.col(k) /= mx;
    h.row(k) *= mx;
  }
}

FactorPair nndsvd_init(const Matrix& x, Index rank, double floor) {
  if (rank < 1 || rank > std::min(x.rows(), x.cols()))
    throw DimensionError("nndsvd_init: rank out of range");
  if ((x.array() < 0.0).any())
    throw DomainError("nndsvd_init: X has negative entries");

  // JacobiSVD: BDCSVD trips an internal assertion on inputs with many
  // all-zero rows, which sparse factor products routinely produce.
  Eigen::JacobiSVD<Matrix> svd(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Matrix& u = svd.matrixU();
  const Matrix& v = svd.matrixV();
  const Vector& sigma = svd.singularValues();

  FactorPair fp;
  fp.w = Matrix::Zero(x.rows(), rank);
  fp.h = Matrix::Zero(rank, x.cols());
  for (Index j = 0; j < rank; ++j) {
    const Vector up = u.col(j).cwiseMax(0.0);
    const Vector un = (-u.col(j)).cwiseMax(0.0);
    const Vector vp = v.col(j).cwiseMax(0.0);
    const Vector vn = (-v.col(j)).cwiseMax(0.0);
    const double mp = up.norm() * vp.norm();
    const double mn = un.norm() * vn.norm();
    const double mass = std::max(mp, mn);
    if (mass <= 0.0 || sigma[j] <= 0.0) continue;  // degenerate pair
    const Vector& uu = mp >= mn ? up : un;
    const Vector& vv = mp >= mn ? vp : vn;
    const double scale = std::sqrt(sigma[j] * mass);
    fp.w.col(j) = scale / uu.norm() * uu;
    fp.h.row(j) = scale / vv.norm() * vv.transpose();
  }
  if (!fp.w.allFinite() || !fp.h.allFinite())
    throw NumericError("nndsvd_init: SVD produced non-finite values");
  fp.w = fp.w.cwiseMax(floor);
  fp.h = fp.h.cwiseMax(floor);
  return fp;
}

FactorPair truncated_gaussian_init(Index m, Index n, Index rank,
                                   std::uint64_t seed) {
  if (m < 1 || n < 1 || rank < 1)
    throw DimensionError("truncated_gaussian_init: nonpositive dimension");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const auto draw = [&] {
    return (1.5 * std::max(gauss(rng), 0.0) + 0.5) / 2.0;
  };
  FactorPair fp;
  fp.w = Matrix(m, rank);
  fp.h = Matrix(rank, n);
  for (Index j = 0; j < rank; ++j)
    for (Index i = 0; i < m; ++i) fp.w(i, j) = draw();
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < rank; ++i) fp.h(i, j) = draw();
  return fp;
}

FactorPair make_init(const Matrix& x, Index rank, InitMethod method,
                     std::uint64_t seed, double floor) {
  if (method == InitMethod::kNndsvd) return nndsvd_init(x, rank, floor);
  return truncated_gaussian_init(x.rows(), x.cols(), rank, seed);
}

SolveResult run_mu(const Matrix& x, const SolverConfig& config,
                   const FactorPair& init) {
  if ((x.array() < 0.0).any())
    throw DomainError("run_mu: X has negative entries");
  if (config.rank < 1 || config.max_outer_iters < 1 || config.tol <= 0.0)
    throw ConfigError("run_mu: rank, iteration cap and tol must be positive");
  if (init.w.cols() != config.rank || init.h.rows() != config.rank)
    throw DimensionError("run_mu: init rank does not match config");
  check_factor_shapes(x, init.w, init.h);

  SolveResult result;
  result.factors = init;
  result.lambda = Vector::Constant(config.rank, config.lambda_fixed);

  Matrix& w = result.factors.w;
  Matrix& h = result.factors.h;
  double prev_fit =
      penalized_objective(x, w, h, result.lambda, config.floor).fit;

  const auto start = std::chrono::steady_clock::now();
  for (int k = 1; k <= config.max_outer_iters; ++k) {
    try {
      w = update_w(x, w, h, config.w_update_rule, config.floor);
      h = update_h_full(x, w, h, result.lambda, config.floor);
      normalize_columns(w, h);
    } catch (const NumericError& e) {
      throw NumericError("run_mu: iteration " + std::to_string(k) + ": " +
                         e.what());
    }
    const ObjectiveValue obj =
        penalized_objective(x, w, h, result.lambda, config.floor);
    TraceRow row;
    row.iter = k;
    row.objective = obj;
    row.response = response_report(x, w, h).total;
    row.lambda = result.lambda;
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
