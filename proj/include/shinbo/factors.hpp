// Factor-pair representation, multiplicative updates, initializations,
// normalization and the fixed-penalty MU solver.
#pragma once

#include "shinbo/divergence.hpp"
#include "shinbo/types.hpp"

#include <vector>

namespace shinbo {

struct FactorPair {
  Matrix w;  // m x r
  Matrix h;  // r x n
};

enum class WUpdateRule {
  kEuclidean,  // W . (X H^T) ./ (W H H^T)
  kIsDivergence,    // W . ((WH)^-2 . X) H^T ./ ((WH)^-1 H^T)
};

enum class LambdaMode { kFixed, kPerRowAdaptive };
enum class InitMethod { kNndsvd, kTruncatedGaussian };

// Penalty step scaling: the raw projected-gradient step, or the same step
// normalized by ||g|| ||s|| so one iteration moves lambda by at most alpha.
enum class LambdaStepRule { kConstant, kNormalized };

struct SolverConfig {
  Index rank = 2;
  int max_outer_iters = 500;
  int inner_iters = 4;  // T
  double tol = 1e-6;
  LambdaMode lambda_mode = LambdaMode::kFixed;
  double lambda_fixed = 0.0;
  double step_alpha = 5e-3;  // projected-gradient stepsize on lambda
  std::uint64_t seed = 0;
  // The Euclidean rule is the literal printed form but stalls the IS fit on
  // sparse data; the IS rule is what reproduces the reference behavior.
  WUpdateRule w_update_rule = WUpdateRule::kIsDivergence;
  double floor = kDefaultFloor;
  // Update the whole lambda vector after the row loop instead of per row.
  bool lambda_batched = false;
  // Upper clamp applied after each penalty step; matches the U[0,1] draw of
  // the initial penalties and keeps a transient overshoot from stranding a
  // row.  <= 0 disables the cap.
  double lambda_max = 1.0;
  LambdaStepRule lambda_step = LambdaStepRule::kNormalized;
};

struct TraceRow {
  int iter = 0;
  ObjectiveValue objective;
  double response = 0.0;  // sum of per-row outer (Frobenius) responses
  Vector lambda;
  double seconds = 0.0;
};
using RunTrace = std::vector<TraceRow>;

// One multiplicative W step.  Zeros of W stay zero; denominators are floored.
Matrix update_w(const Matrix& x, const Matrix& w, const Matrix& h,
                WUpdateRule rule = WUpdateRule::kIsDivergence,
                double floor = kDefaultFloor);

// Full-matrix penalized H step:
//   H . [W^T((WH)^-2 . X)] ./ [W^T(WH)^-1 + 2 Diag(lambda)^2 H E]
Matrix update_h_full(const Matrix& x, const Matrix& w, const Matrix& h,
                     const Vector& lambda, double floor = kDefaultFloor);

// Row-wise form of the same step for row l, with the other rows of H frozen.
// h_row is the current value of row l (the matrix h supplies the others).
RowVector update_h_row(const RowVector& h_row, Index l, const Matrix& x,
                       const Matrix& w, const Matrix& h, double lambda_l,
                       double floor = kDefaultFloor);

// Scale each column of W to unit max and compensate in H; the product WH is
// unchanged.  Throws DomainError for a zero column.
void normalize_columns(Matrix& w, Matrix& h);

// NNDSVD: rank-r truncated SVD with each singular pair split into
// positive/negative parts, keeping the dominant nonnegative part.  Zeros are
// replaced by `floor`.
FactorPair nndsvd_init(const Matrix& x, Index rank,
                       double floor = kDefaultFloor);

// Entries are (1.5 max(g,0) + 0.5)/2 with g ~ N(0,1); everything is >= 0.25.
FactorPair truncated_gaussian_init(Index m, Index n, Index rank,
                                   std::uint64_t seed);

FactorPair make_init(const Matrix& x, Index rank, InitMethod method,
                     std::uint64_t seed, double floor = kDefaultFloor);

struct SolveResult {
  FactorPair factors;
  Vector lambda;
  RunTrace trace;
  int iterations = 0;
  bool converged = false;
};

// Alternating MU with a fixed penalty lambda_fixed on every row; lambda = 0
// reproduces the unpenalized baseline.  Terminates on relative D0 change
// <= tol or after max_outer_iters.
SolveResult run_mu(const Matrix& x, const SolverConfig& config,
                   const FactorPair& init);

}  // namespace shinbo
