// Factor-quality metrics and the nonparametric comparison pipeline.
#pragma once

#include "shinbo/types.hpp"

#include <vector>

namespace shinbo {

// Reported in place of +inf when the interference energy vanishes.
inline constexpr double kSirCapDb = 300.0;

struct SirReport {
  // permutation[l] = index of the estimated component matched to truth l
  std::vector<Index> permutation;
  Vector per_component_db;
  double mean_db = 0.0;
};

// Components are normalized to unit l2 norm, matched greedily by absolute
// cosine similarity without replacement, and each pair is scored as
// 10 log10(||a||^2 / ||a - a_hat||^2) with a_hat the least-squares rescaling
// of the match.
SirReport sir(const std::vector<Vector>& truth,
              const std::vector<Vector>& estimate);

// Columns of W / rows of H as components.
SirReport sir_columns(const Matrix& true_w, const Matrix& est_w);
SirReport sir_rows(const Matrix& true_h, const Matrix& est_h);

// Percentage of entries not exceeding tau.
double sparsity(const Matrix& a, double tau = 1e-6);

struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

// Two-sided Mann-Whitney U test: exact enumeration when n+m <= 12, otherwise
// a tie-corrected normal approximation with continuity correction.
TestResult mann_whitney(const std::vector<double>& x,
                        const std::vector<double>& y);

// Kruskal-Wallis H test with tie correction; p from the chi-squared
// distribution with (groups - 1) degrees of freedom.
TestResult kruskal_wallis(const std::vector<std::vector<double>>& groups);

// Benjamini-Hochberg step-up adjusted p-values, returned in input order.
std::vector<double> bh_adjust(const std::vector<double>& p_values);

}  // namespace shinbo
