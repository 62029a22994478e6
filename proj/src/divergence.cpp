#include "shinbo/divergence.hpp"

#include <cmath>
#include <limits>

namespace shinbo {

namespace {

[[noreturn]] void domain_error_at(Index i, Index j, const char* what) {
  throw DomainError("beta_divergence: " + std::string(what) + " at (" +
                    std::to_string(i) + ", " + std::to_string(j) + ")");
}

}  // namespace

double beta_divergence_scalar(double x, double y, double beta) {
  if (beta == 0.0) {
    if (x <= 0.0) throw DomainError("beta_divergence: x <= 0 in IS branch");
    if (y <= 0.0) throw DomainError("beta_divergence: y <= 0 in IS branch");
    const double q = x / y;
    return q - std::log(q) - 1.0;
  }
  if (beta == 1.0) {
    if (x < 0.0) throw DomainError("beta_divergence: x < 0 in KL branch");
    if (y <= 0.0) throw DomainError("beta_divergence: y <= 0 in KL branch");
    // x log(x/y) -> 0 as x -> 0
    const double xlog = x > 0.0 ? x * std::log(x / y) : 0.0;
    return xlog - x + y;
  }
  if (x < 0.0) throw DomainError("beta_divergence: x < 0");
  if (y < 0.0 || (y == 0.0 && beta < 1.0))
    throw DomainError("beta_divergence: y outside domain");
  const double c = 1.0 / (beta * (beta - 1.0));
  return c * (std::pow(x, beta) + (beta - 1.0) * std::pow(y, beta) -
              beta * x * std::pow(y, beta - 1.0));
}

double beta_divergence(const Matrix& a, const Matrix& b, double beta) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError("beta_divergence: shape mismatch " +
                         std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " +
                         std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()));
  double sum = 0.0;
  for (Index j = 0; j < a.cols(); ++j) {
    for (Index i = 0; i < a.rows(); ++i) {
      const double x = a(i, j);
      const double y = b(i, j);
      if (beta <= 1.0 && y <= 0.0) domain_error_at(i, j, "nonpositive y");
      if (beta == 0.0 && x <= 0.0) domain_error_at(i, j, "nonpositive x");
      if (x < 0.0) domain_error_at(i, j, "negative x");
      sum += beta_divergence_scalar(x, y, beta);
    }
  }
  return sum;
}

double diversity(const Matrix& a) {
  if ((a.array() < 0.0).any())
    throw DomainError("diversity: negative entry");
  double sum = 0.0;
  for (Index i = 0; i < a.rows(); ++i) {
    const double row_sum = a.row(i).sum();
    sum += row_sum * row_sum;
  }
  return sum;
}

ObjectiveValue penalized_objective(const Matrix& x, const Matrix& w,
                                   const Matrix& h, const Vector& lambda,
                                   double floor) {
  if (w.cols() != h.rows())
    throw DimensionError("penalized_objective: inner dimensions of W, H");
  if (x.rows() != w.rows() || x.cols() != h.cols())
    throw DimensionError("penalized_objective: X vs WH shape");
  if (lambda.size() != h.rows())
    throw DimensionError("penalized_objective: lambda length vs rank");

  const Matrix wh = (w * h).cwiseMax(floor);
  const Matrix xf = x.cwiseMax(floor);
  ObjectiveValue value;
  value.fit = beta_divergence(xf, wh, 0.0);
  for (Index l = 0; l < h.rows(); ++l) {
    const double row_sum = h.row(l).sum();
    value.penalty += lambda[l] * lambda[l] * row_sum * row_sum;
  }
  value.total = value.fit + value.penalty;
  return value;
}

double relative_change(double prev, double curr) {
  if (prev == 0.0)
    return curr == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return std::abs(curr - prev) / std::abs(prev);
}

}  // namespace shinbo
