// Beta-divergence family, the row-diversity penalty and the penalized
// objective used by all solvers.
#pragma once

#include "shinbo/types.hpp"

namespace shinbo {

// Elementwise beta-divergence d_beta(x, y).  The three branches are
//   beta not in {0,1}: (x^b + (b-1) y^b - b x y^(b-1)) / (b (b-1))
//   beta = 1:          x log(x/y) - x + y       (Kullback-Leibler)
//   beta = 0:          x/y - log(x/y) - 1       (Itakura-Saito)
// Domain violations throw DomainError.
double beta_divergence_scalar(double x, double y, double beta);

// Sum of d_beta over all entries.  Shapes must match; domain errors name the
// offending entry.
double beta_divergence(const Matrix& a, const Matrix& b, double beta);

// Diversity measure: sum over rows of the squared l1 norm.  Equals
// Tr(A E A^T) for nonnegative A; negative entries are rejected because the
// row-sum identity needs them absent.
double diversity(const Matrix& a);

struct ObjectiveValue {
  double fit = 0.0;      // IS-divergence term
  double penalty = 0.0;  // sum_l lambda_l^2 ||h_l||_1^2
  double total = 0.0;
};

// D_0(X, WH) + sum_l lambda_l^2 ||H_l:||_1^2.  Both X and WH are floored at
// `floor` before the divergence so that structurally sparse data keeps the
// objective finite; identical floored entries contribute zero.
ObjectiveValue penalized_objective(const Matrix& x, const Matrix& w,
                                   const Matrix& h, const Vector& lambda,
                                   double floor = kDefaultFloor);

// |curr - prev| / |prev|, with the 0/0 -> 0 and x/0 -> inf convention used by
// the termination check.
double relative_change(double prev, double curr);

}  // namespace shinbo
