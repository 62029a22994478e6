#include "shinbo/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace shinbo {

namespace {

// Ranks with ties averaged, plus the tie-group sizes needed for the
// variance corrections.
struct Ranked {
  std::vector<double> ranks;
  std::vector<Index> tie_sizes;
};

Ranked rank_with_ties(const std::vector<double>& pooled) {
  const Index n = static_cast<Index>(pooled.size());
  std::vector<Index> order(n);
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(),
            [&](Index a, Index b) { return pooled[a] < pooled[b]; });
  Ranked out;
  out.ranks.resize(n);
  Index i = 0;
  while (i < n) {
    Index j = i;
    while (j + 1 < n && pooled[order[j + 1]] == pooled[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (Index k = i; k <= j; ++k) out.ranks[order[k]] = avg;
    if (j > i) out.tie_sizes.push_back(j - i + 1);
    i = j + 1;
  }
  return out;
}

double tie_sum_cubed(const std::vector<Index>& tie_sizes) {
  double s = 0.0;
  for (Index t : tie_sizes)
    s += static_cast<double>(t) * t * t - static_cast<double>(t);
  return s;
}

// Regularized upper incomplete gamma Q(a, x): series for the lower part when
// x < a + 1, Lentz continued fraction otherwise.
double gamma_q(double a, double x) {
  if (a <= 0.0 || x < 0.0) throw DomainError("gamma_q: invalid arguments");
  if (x == 0.0) return 1.0;
  const double log_prefactor = -x + a * std::log(x) - std::lgamma(a);
  if (x < a + 1.0) {
    double ap = a;
    double term = 1.0 / a;
    double sum = term;
    for (int it = 0; it < 500; ++it) {
      ap += 1.0;
      term *= x / ap;
      sum += term;
      if (std::abs(term) < std::abs(sum) * 1e-16) break;
    }
    return 1.0 - sum * std::exp(log_prefactor);
  }
  const double tiny = std::numeric_limits<double>::min() / 1e-30;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double frac = d;
  for (int i = 1; i < 500; ++i) {
    const double an = -static_cast<double>(i) * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    frac *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return std::exp(log_prefactor) * frac;
}

double normal_two_sided_p(double z_abs) {
  return std::erfc(z_abs / std::sqrt(2.0));
}

double rank_sum_u(const std::vector<double>& ranks,
                  const std::vector<Index>& subset, Index n1) {
  double r1 = 0.0;
  for (Index idx : subset) r1 += ranks[idx];
  return r1 - 0.5 * static_cast<double>(n1) * (n1 + 1);
}

}  // namespace

SirReport sir(const std::vector<Vector>& truth,
              const std::vector<Vector>& estimate) {
  const Index r = static_cast<Index>(truth.size());
  if (r == 0 || estimate.size() != truth.size())
    throw DimensionError("sir: component counts differ or are empty");

  std::vector<Vector> a(r), e(r);
  for (Index i = 0; i < r; ++i) {
    const double na = truth[i].norm();
    const double ne = estimate[i].norm();
    if (na == 0.0)
      throw DomainError("sir: true component " + std::to_string(i) +
                        " is zero");
    if (ne == 0.0)
      throw DomainError("sir: estimated component " + std::to_string(i) +
                        " is zero");
    if (truth[i].size() != estimate[i].size())
      throw DimensionError("sir: component length mismatch at " +
                           std::to_string(i));
    a[i] = truth[i] / na;
    e[i] = estimate[i] / ne;
  }

  Matrix cosine(r, r);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < r; ++j) cosine(i, j) = std::abs(a[i].dot(e[j]));

  SirReport report;
  report.permutation.assign(r, -1);
  std::vector<bool> used_true(r, false), used_est(r, false);
  for (Index step = 0; step < r; ++step) {
    double best = -1.0;
    Index bi = -1, bj = -1;
    for (Index i = 0; i < r; ++i) {
      if (used_true[i]) continue;
      for (Index j = 0; j < r; ++j) {
        if (used_est[j]) continue;
        if (cosine(i, j) > best) {
          best = cosine(i, j);
          bi = i;
          bj = j;
        }
      }
    }
    report.permutation[bi] = bj;
    used_true[bi] = true;
    used_est[bj] = true;
  }

  report.per_component_db.resize(r);
  for (Index i = 0; i < r; ++i) {
    const double c = a[i].dot(e[report.permutation[i]]);
    const double interference = std::max(1.0 - c * c, 0.0);
    const double db = interference <= 1e-30
                          ? kSirCapDb
                          : 10.0 * std::log10(1.0 / interference);
    report.per_component_db[i] = std::min(db, kSirCapDb);
  }
  report.mean_db = report.per_component_db.mean();
  return report;
}

SirReport sir_columns(const Matrix& true_w, const Matrix& est_w) {
  if (true_w.cols() != est_w.cols() || true_w.rows() != est_w.rows())
    throw DimensionError("sir_columns: shape mismatch");
  std::vector<Vector> a, e;
  for (Index k = 0; k < true_w.cols(); ++k) {
    a.push_back(true_w.col(k));
    e.push_back(est_w.col(k));
  }
  return sir(a, e);
}

SirReport sir_rows(const Matrix& true_h, const Matrix& est_h) {
  if (true_h.rows() != est_h.rows() || true_h.cols() != est_h.cols())
    throw DimensionError("sir_rows: shape mismatch");
  std::vector<Vector> a, e;
  for (Index k = 0; k < true_h.rows(); ++k) {
    a.push_back(true_h.row(k).transpose());
    e.push_back(est_h.row(k).transpose());
  }
  return sir(a, e);
}

double sparsity(const Matrix& a, double tau) {
  const Index total = a.size();
  if (total == 0) throw DimensionError("sparsity: empty matrix");
  const Index above = (a.array() > tau).count();
  return (1.0 - static_cast<double>(above) / static_cast<double>(total)) *
         100.0;
}

TestResult mann_whitney(const std::vector<double>& x,
                        const std::vector<double>& y) {
  const Index n1 = static_cast<Index>(x.size());
  const Index n2 = static_cast<Index>(y.size());
  if (n1 < 2 || n2 < 2)
    throw DomainError("mann_whitney: each sample needs at least 2 values");

  std::vector<double> pooled = x;
  pooled.insert(pooled.end(), y.begin(), y.end());
  const Ranked ranked = rank_with_ties(pooled);
  const Index total = n1 + n2;

  double r1 = 0.0;
  for (Index i = 0; i < n1; ++i) r1 += ranked.ranks[i];
  const double u = r1 - 0.5 * static_cast<double>(n1) * (n1 + 1);
  const double mean_u = 0.5 * static_cast<double>(n1) * n2;

  TestResult result;
  result.statistic = u;

  if (total <= 12) {
    // Exact null: every n1-subset of the pooled ranks is equally likely.
    const double dev = std::abs(u - mean_u);
    std::vector<Index> subset(n1);
    std::iota(subset.begin(), subset.end(), Index{0});
    long hits = 0, count = 0;
    while (true) {
      ++count;
      const double us = rank_sum_u(ranked.ranks, subset, n1);
      if (std::abs(us - mean_u) >= dev - 1e-12) ++hits;
      // next combination
      Index i = n1;
      while (i > 0 && subset[i - 1] == total - n1 + (i - 1)) --i;
      if (i == 0) break;
      ++subset[i - 1];
      for (Index j = i; j < n1; ++j) subset[j] = subset[j - 1] + 1;
    }
    result.p_value = static_cast<double>(hits) / static_cast<double>(count);
    return result;
  }

  const double nt = static_cast<double>(total);
  double var_u = static_cast<double>(n1) * n2 / 12.0 *
                 ((nt + 1.0) - tie_sum_cubed(ranked.tie_sizes) /
                                   (nt * (nt - 1.0)));
  if (var_u <= 0.0) {
    result.p_value = 1.0;
    return result;
  }
  const double z = std::max(std::abs(u - mean_u) - 0.5, 0.0) /
                   std::sqrt(var_u);
  result.p_value = normal_two_sided_p(z);
  return result;
}

TestResult kruskal_wallis(const std::vector<std::vector<double>>& groups) {
  const Index k = static_cast<Index>(groups.size());
  if (k < 2) throw DomainError("kruskal_wallis: need at least 2 groups");
  std::vector<double> pooled;
  for (const auto& g : groups) {
    if (g.size() < 2)
      throw DomainError("kruskal_wallis: each group needs at least 2 values");
    pooled.insert(pooled.end(), g.begin(), g.end());
  }
  const Index n = static_cast<Index>(pooled.size());
  const Ranked ranked = rank_with_ties(pooled);

  const double nd = static_cast<double>(n);
  double stat = 0.0;
  Index offset = 0;
  for (const auto& g : groups) {
    double rsum = 0.0;
    for (Index i = 0; i < static_cast<Index>(g.size()); ++i)
      rsum += ranked.ranks[offset + i];
    stat += rsum * rsum / static_cast<double>(g.size());
    offset += static_cast<Index>(g.size());
  }
  double h = 12.0 / (nd * (nd + 1.0)) * stat - 3.0 * (nd + 1.0);

  const double correction =
      1.0 - tie_sum_cubed(ranked.tie_sizes) / (nd * nd * nd - nd);
  TestResult result;
  if (correction <= 0.0) {  // every pooled value identical
    result.statistic = 0.0;
    result.p_value = 1.0;
    return result;
  }
  h /= correction;
  result.statistic = std::max(h, 0.0);
  result.p_value = gamma_q(0.5 * static_cast<double>(k - 1),
                           0.5 * result.statistic);
  return result;
}

std::vector<double> bh_adjust(const std::vector<double>& p_values) {
  const Index m = static_cast<Index>(p_values.size());
  for (double p : p_values)
    if (!(p >= 0.0 && p <= 1.0))
      throw DomainError("bh_adjust: p-value outside [0, 1]");
  std::vector<Index> order(m);
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(),
            [&](Index a, Index b) { return p_values[a] < p_values[b]; });
  std::vector<double> adjusted(m);
  double running = 1.0;
  for (Index i = m; i-- > 0;) {
    const double scaled =
        p_values[order[i]] * static_cast<double>(m) / static_cast<double>(i + 1);
    running = std::min(running, scaled);
    adjusted[order[i]] = std::min(running, 1.0);
  }
  return adjusted;
}

}  // namespace shinbo
