// Bi-level driver: per-row inner dynamical system, forward-mode sensitivity
// propagation, hypergradient assembly and projected-gradient penalty updates.
#pragma once

#include "shinbo/factors.hpp"
#include "shinbo/types.hpp"

namespace shinbo {

// Forward-mode sensitivity state for one row of H.
struct FmdState {
  Vector s;       // d h_l^t / d lambda_l, length n
  Vector a_diag;  // diagonal of the last step Jacobian
  Vector b;       // d Phi_t / d lambda_l at the last step
};

struct ResponseReport {
  Vector per_row;     // r(lambda_l) for l = 1..rank
  double total = 0.0; // R(lambda)
};

// R = X - sum_{j != l} w_j h_j.  By construction X - R equals the
// reconstruction of the other components.
Matrix residual(const Matrix& x, const Matrix& w, const Matrix& h, Index l);

// Outer objective for one row: ||X - R - w_l h_l||_F^2 (un-halved squared
// Frobenius norm, so the gradient below carries the factor -2).
double response_row(const Matrix& x, const Matrix& r, const Vector& w_col,
                    const RowVector& h_row);

// Gradient of response_row with respect to h_l: -2 w_l^T (X - R - w_l h_l).
RowVector outer_gradient(const Matrix& x, const Matrix& r,
                         const Vector& w_col, const RowVector& h_row);

// Diagonal of d Phi / d h_l for the row update, evaluated at (h_row, lambda):
//   A_jj = N_j/D_j - h_j (2 c3_j D_j - N_j c2_j + 2 lambda^2 N_j) / D_j^2
// with N_j = sum_i w_i x_ij / (WH)_ij^2, D_j = sum_i w_i / (WH)_ij
// + 2 lambda^2 ||h||_1, c3_j = sum_i w_i^2 x_ij / (WH)_ij^3 and
// c2_j = sum_i w_i^2 / (WH)_ij^2.
Vector jacobian_diag(const RowVector& h_row, Index l, const Matrix& x,
                     const Matrix& w, const Matrix& h, double lambda_l,
                     double floor = kDefaultFloor);

// d Phi / d lambda: since d D_j / d lambda = 4 lambda ||h||_1,
//   b_j = -4 lambda h_j ||h||_1 N_j / D_j^2.
Vector sensitivity_b(const RowVector& h_row, Index l, const Matrix& x,
                     const Matrix& w, const Matrix& h, double lambda_l,
                     double floor = kDefaultFloor);

// One forward-mode step: s^t = a_diag . s^{t-1} + b (diagonal Jacobian).
FmdState fmd_step(const FmdState& prev, const Vector& a_diag, const Vector& b);

// <g, s>; the direct partial of the response in lambda_l is identically zero
// because lambda enters only through h_l, and is kept as an explicit term.
double hypergradient_row(const RowVector& g, const Vector& s);

// Projected gradient step: max(lambda - alpha * grad, 0) elementwise.
Vector update_lambda(const Vector& lambda, const Vector& grad, double alpha);

// Per-row responses of the current factors, using the reconstruction of the
// other components in the R slot so each row's value is the Frobenius fit of
// the full model.
ResponseReport response_report(const Matrix& x, const Matrix& w,
                               const Matrix& h);

// The adaptive solver: W step, then for each row T inner iterations of the
// row update with forward-mode sensitivities, hypergradient assembly and a
// projected-gradient step on lambda_l, then column normalization.  lambda^0
// is drawn from U[0,1] per entry with config.seed.
SolveResult run_shinbo(const Matrix& x, const SolverConfig& config,
                       const FactorPair& init);

}  // namespace shinbo
