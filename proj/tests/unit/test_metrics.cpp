#include "shinbo/metrics.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "test_util.hpp"

using namespace shinbo;

namespace {

// Exact two-sided Mann-Whitney p by full enumeration, written independently
// from the library path.
double exact_mw_p(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<double> pooled = x;
  pooled.insert(pooled.end(), y.begin(), y.end());
  const size_t n1 = x.size(), total = pooled.size();

  // observed U: pairs (x > y) + half ties
  double u_obs = 0.0;
  for (double xv : x)
    for (double yv : y) u_obs += xv > yv ? 1.0 : (xv == yv ? 0.5 : 0.0);
  const double mean_u = 0.5 * static_cast<double>(n1) * (total - n1);
  const double dev = std::abs(u_obs - mean_u);

  std::vector<size_t> subset(n1);
  std::iota(subset.begin(), subset.end(), size_t{0});
  long hits = 0, count = 0;
  while (true) {
    ++count;
    double u = 0.0;
    std::vector<bool> in_x(total, false);
    for (size_t idx : subset) in_x[idx] = true;
    for (size_t i = 0; i < total; ++i) {
      if (!in_x[i]) continue;
      for (size_t j = 0; j < total; ++j) {
        if (in_x[j]) continue;
        u += pooled[i] > pooled[j] ? 1.0
                                   : (pooled[i] == pooled[j] ? 0.5 : 0.0);
      }
    }
    if (std::abs(u - mean_u) >= dev - 1e-12) ++hits;
    size_t i = n1;
    while (i > 0 && subset[i - 1] == total - n1 + (i - 1)) --i;
    if (i == 0) break;
    ++subset[i - 1];
    for (size_t j = i; j < n1; ++j) subset[j] = subset[j - 1] + 1;
  }
  return static_cast<double>(hits) / static_cast<double>(count);
}

}  // namespace

TEST_CASE("sir basics") {
  std::vector<Vector> truth, est;
  for (int i = 0; i < 3; ++i)
    truth.push_back(test_util::random_positive(10, 1, 10 + i).col(0));

  SUBCASE("exact estimate hits the sentinel cap") {
    const SirReport report = sir(truth, truth);
    for (Index i = 0; i < 3; ++i)
      CHECK(report.per_component_db[i] == doctest::Approx(kSirCapDb));
  }

  SUBCASE("orthogonal estimate scores 0 dB") {
    Vector a = Vector::Zero(4), b = Vector::Zero(4);
    a[0] = 1.0;
    b[1] = 1.0;
    const SirReport report = sir({a}, {b});
    CHECK(report.per_component_db[0] == doctest::Approx(0.0));
  }

  SUBCASE("matching absorbs a component swap") {
    est = {truth[1], truth[2], truth[0]};
    const SirReport swapped = sir(truth, est);
    const SirReport plain = sir(truth, truth);
    CHECK(swapped.mean_db == doctest::Approx(plain.mean_db).epsilon(1e-9));
    CHECK(swapped.permutation[0] == 2);
    CHECK(swapped.permutation[1] == 0);
    CHECK(swapped.permutation[2] == 1);
  }

  SUBCASE("scale invariance of the estimate") {
    // visible perturbations keep each pair away from the sentinel cap,
    // where rounding in the normalization would dominate
    est = truth;
    for (size_t i = 0; i < est.size(); ++i)
      est[i] += 0.05 * test_util::random_positive(10, 1, 50 + i).col(0);
    const SirReport plain = sir(truth, est);
    for (double factor : {37.5, 0.004}) {
      std::vector<Vector> scaled_est = est;
      for (auto& e : scaled_est) e *= factor;
      const SirReport scaled = sir(truth, scaled_est);
      CHECK(scaled.mean_db ==
            doctest::Approx(plain.mean_db).epsilon(1e-9));
    }
  }

  SUBCASE("zero vector is rejected") {
    est = truth;
    est[1].setZero();
    CHECK_THROWS_AS(sir(truth, est), DomainError);
  }
}

TEST_CASE("sparsity") {
  CHECK(sparsity(Matrix::Zero(5, 5)) == doctest::Approx(100.0));
  CHECK(sparsity(Matrix::Ones(5, 5)) == doctest::Approx(0.0));

  Matrix a = Matrix::Zero(10, 10);
  for (Index k = 0; k < 25; ++k) a(k / 10, k % 10) = 0.5;
  CHECK(sparsity(a) == doctest::Approx(75.0));

  // zeroing entries never decreases the measure
  Matrix b = test_util::random_positive(8, 8, 77, 0.0, 1.0);
  double previous = sparsity(b);
  std::mt19937_64 rng(78);
  for (int step = 0; step < 20; ++step) {
    b(rng() % 8, rng() % 8) = 0.0;
    const double current = sparsity(b);
    CHECK(current >= previous - 1e-12);
    previous = current;
  }
}

TEST_CASE("mann_whitney exact cases") {
  const TestResult separated = mann_whitney({1, 2, 3}, {4, 5, 6});
  CHECK(separated.statistic == doctest::Approx(0.0));
  CHECK(separated.p_value == doctest::Approx(0.1));

  const TestResult same = mann_whitney({1, 2, 3}, {1, 2, 3});
  CHECK(same.p_value >= 0.99);

  CHECK_THROWS_AS(mann_whitney({}, {1, 2}), DomainError);
  CHECK_THROWS_AS(mann_whitney({1.0}, {1, 2}), DomainError);
  CHECK_THROWS_AS(kruskal_wallis({{1, 2, 3}}), DomainError);
}

TEST_CASE("mann_whitney detects a strong shift") {
  std::mt19937_64 rng(123);
  std::normal_distribution<double> gauss(0.0, 1.0);
  int significant = 0;
  const int seeds = 40;
  for (int s = 0; s < seeds; ++s) {
    std::vector<double> x(50), y(50);
    for (auto& v : x) v = gauss(rng);
    for (auto& v : y) v = gauss(rng) + 3.0;
    if (mann_whitney(x, y).p_value < 0.001) ++significant;
  }
  CHECK(static_cast<double>(significant) / seeds >= 0.95);
}

TEST_CASE("mann_whitney normal approximation tracks the exact law") {
  std::mt19937_64 rng(321);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> x(10), y(10);
    for (auto& v : x) v = unif(rng);
    for (auto& v : y) v = unif(rng) + 0.15;
    const double approx_p = mann_whitney(x, y).p_value;
    const double exact_p = exact_mw_p(x, y);
    CHECK(std::abs(approx_p - exact_p) <= 0.02);
  }
}

TEST_CASE("kruskal_wallis") {
  SUBCASE("identical groups give H = 0, p = 1") {
    const TestResult result =
        kruskal_wallis({{1, 2, 3}, {1, 2, 3}, {1, 2, 3}});
    CHECK(result.statistic == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(result.p_value == doctest::Approx(1.0).epsilon(1e-9));
  }
  SUBCASE("all-equal data is degenerate") {
    const TestResult result = kruskal_wallis({{5, 5, 5}, {5, 5, 5}});
    CHECK(result.statistic == 0.0);
    CHECK(result.p_value == 1.0);
  }
  SUBCASE("well-separated groups reach the reported significance regime") {
    std::mt19937_64 rng(55);
    std::normal_distribution<double> gauss(0.0, 0.5);
    std::vector<std::vector<double>> groups(4, std::vector<double>(100));
    for (int g = 0; g < 4; ++g)
      for (auto& v : groups[g]) v = 10.0 * g + gauss(rng);
    const TestResult result = kruskal_wallis(groups);
    CHECK(result.p_value < 1e-14);
  }
  SUBCASE("two groups approach the squared Mann-Whitney z") {
    std::mt19937_64 rng(66);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<double> x(200), y(200);
    for (auto& v : x) v = unif(rng);
    for (auto& v : y) v = unif(rng) + 0.3;
    const TestResult kw = kruskal_wallis({x, y});
    const TestResult mw = mann_whitney(x, y);
    // compare H with the uncorrected z^2 computed directly
    const double mean_u = 0.5 * 200.0 * 200.0;
    const double var_u = 200.0 * 200.0 * 401.0 / 12.0;  // no ties expected
    const double z_nc = (mw.statistic - mean_u) / std::sqrt(var_u);
    CHECK(kw.statistic ==
          doctest::Approx(z_nc * z_nc).epsilon(0.05));
  }
}

TEST_CASE("bh_adjust") {
  CHECK(bh_adjust({0.42}) == std::vector<double>{0.42});

  const std::vector<double> adjusted = bh_adjust({0.01, 0.02, 0.03});
  for (double v : adjusted) CHECK(v == doctest::Approx(0.03));

  const std::vector<double> ones = bh_adjust({1.0, 1.0, 1.0, 1.0});
  for (double v : ones) CHECK(v == doctest::Approx(1.0));

  CHECK_THROWS_AS(bh_adjust({0.5, 1.5}), DomainError);

  // adjusted >= raw, and the step-up rejection set matches the classical rule
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> p(12);
    for (auto& v : p) v = std::pow(unif(rng), 3.0);
    const std::vector<double> adj = bh_adjust(p);
    for (size_t i = 0; i < p.size(); ++i) CHECK(adj[i] >= p[i] - 1e-15);

    const double alpha = 0.05;
    // classical: largest k with p_(k) <= alpha k / m rejects p_(1..k)
    std::vector<size_t> order(p.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return p[a] < p[b]; });
    size_t cut = 0;
    for (size_t k = 1; k <= p.size(); ++k)
      if (p[order[k - 1]] <= alpha * k / p.size()) cut = k;
    std::vector<bool> classical(p.size(), false);
    for (size_t k = 0; k < cut; ++k) classical[order[k]] = true;
    for (size_t i = 0; i < p.size(); ++i)
      CHECK(classical[i] == (adj[i] <= alpha));
  }
}
