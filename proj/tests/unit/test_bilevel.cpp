#include "shinbo/bilevel.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

#include "../oracles.hpp"
#include "test_util.hpp"

using namespace shinbo;

namespace {

struct RowInstance {
  Matrix x, w, h, base;  // base = reconstruction without component l
  Vector w_col;
  RowVector h_row;
  Index l;
};

RowInstance make_instance(Index m, Index n, Index r, Index l,
                          std::uint64_t seed) {
  RowInstance inst;
  inst.w = test_util::random_positive(m, r, seed);
  inst.h = test_util::random_positive(r, n, seed + 1);
  inst.x = test_util::random_positive(m, n, seed + 2);
  inst.l = l;
  inst.w_col = inst.w.col(l);
  inst.h_row = inst.h.row(l);
  inst.base = inst.w * inst.h - inst.w_col * inst.h_row;
  return inst;
}

}  // namespace

TEST_CASE("residual") {
  SUBCASE("rank one leaves X untouched") {
    const RowInstance inst = make_instance(5, 4, 1, 0, 10);
    CHECK((residual(inst.x, inst.w, inst.h, 0) - inst.x)
              .cwiseAbs()
              .maxCoeff() == 0.0);
  }
  SUBCASE("exact fit isolates the component") {
    RowInstance inst = make_instance(5, 4, 3, 1, 20);
    inst.x = inst.w * inst.h;
    const Matrix r = residual(inst.x, inst.w, inst.h, 1);
    CHECK((r - inst.w.col(1) * inst.h.row(1)).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("reconstruction identity") {
    const RowInstance inst = make_instance(4, 3, 2, 0, 30);
    const Matrix r = residual(inst.x, inst.w, inst.h, 0);
    CHECK((r + inst.base - inst.x).cwiseAbs().maxCoeff() < 1e-12);
  }
  CHECK_THROWS_AS(residual(Matrix::Ones(2, 2), Matrix::Ones(2, 2),
                           Matrix::Ones(2, 2), 5),
                  DimensionError);
}

TEST_CASE("response_row") {
  const RowInstance inst = make_instance(6, 5, 2, 0, 40);

  SUBCASE("zero when the component completes the target") {
    // h chosen so that w h equals x - r exactly
    const Matrix r = inst.x - inst.w_col * inst.h_row;
    CHECK(response_row(inst.x, r, inst.w_col, inst.h_row) ==
          doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("zero row gives the remaining energy") {
    const Matrix r = residual(inst.x, inst.w, inst.h, 0);
    const RowVector zero = RowVector::Zero(inst.h_row.size());
    CHECK(response_row(inst.x, r, inst.w_col, zero) ==
          doctest::Approx((inst.x - r).squaredNorm()).epsilon(1e-12));
  }
  SUBCASE("matches the brute-force sum of squares") {
    const Matrix r = residual(inst.x, inst.w, inst.h, 0);
    // the oracle subtracts its second argument elementwise, like the R slot
    const double brute =
        oracle::response_of(inst.x, r, inst.w_col, inst.h_row);
    CHECK(response_row(inst.x, r, inst.w_col, inst.h_row) ==
          doctest::Approx(brute).epsilon(1e-12));
  }
}

TEST_CASE("outer_gradient") {
  const RowInstance inst = make_instance(7, 5, 2, 1, 50);

  SUBCASE("vanishes at an exact component fit") {
    const Matrix r = inst.x - inst.w_col * inst.h_row;
    const RowVector g = outer_gradient(inst.x, r, inst.w_col, inst.h_row);
    CHECK(g.cwiseAbs().maxCoeff() < 1e-10);
  }
  SUBCASE("vanishes for a zero column") {
    const Vector zero_col = Vector::Zero(inst.x.rows());
    const RowVector g = outer_gradient(inst.x, inst.x, zero_col, inst.h_row);
    CHECK(g.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("matches central differences of the response") {
    const Matrix r = residual(inst.x, inst.w, inst.h, 1);
    const RowVector g = outer_gradient(inst.x, r, inst.w_col, inst.h_row);
    const double delta = 1e-6;
    for (Index j = 0; j < inst.h_row.size(); ++j) {
      RowVector up = inst.h_row, down = inst.h_row;
      up[j] += delta;
      down[j] -= delta;
      const double fd = (response_row(inst.x, r, inst.w_col, up) -
                         response_row(inst.x, r, inst.w_col, down)) /
                        (2.0 * delta);
      CHECK(g[j] == doctest::Approx(fd).epsilon(1e-6));
    }
  }
}

TEST_CASE("jacobian_diag against finite differences") {
  const double delta = 1e-6;
  for (std::uint64_t seed : {60u, 61u, 62u}) {
    const RowInstance inst = make_instance(5, 4, 2, 0, seed);
    const double lambda = 0.4;
    const Vector a =
        jacobian_diag(inst.h_row, 0, inst.x, inst.w, inst.h, lambda);
    for (Index j = 0; j < inst.h_row.size(); ++j) {
      RowVector up = inst.h_row, down = inst.h_row;
      up[j] += delta;
      down[j] -= delta;
      const double fd =
          (oracle::coupled_step(inst.x, inst.base, inst.w_col, up, lambda,
                                kDefaultFloor)[j] -
           oracle::coupled_step(inst.x, inst.base, inst.w_col, down, lambda,
                                kDefaultFloor)[j]) /
          (2.0 * delta);
      CHECK(std::abs(a[j] - fd) <= 1e-4 * std::max(std::abs(fd), 0.01));
    }
  }
}

TEST_CASE("jacobian_diag with a zero coordinate keeps the ratio term") {
  RowInstance inst = make_instance(5, 4, 2, 0, 70);
  inst.h_row[2] = 0.0;
  const double lambda = 0.3;
  const Vector a =
      jacobian_diag(inst.h_row, 0, inst.x, inst.w, inst.h, lambda);

  // independent N/D for coordinate 2
  double num = 0.0, den = 0.0;
  for (Index i = 0; i < inst.x.rows(); ++i) {
    const double wh =
        std::max(inst.base(i, 2) + inst.w_col[i] * inst.h_row[2],
                 kDefaultFloor);
    num += inst.w_col[i] * inst.x(i, 2) / (wh * wh);
    den += inst.w_col[i] / wh;
  }
  den += 2.0 * lambda * lambda * inst.h_row.sum();
  CHECK(a[2] == doctest::Approx(num / den).epsilon(1e-12));
}

TEST_CASE("jacobian_diag at an exact fixed point") {
  RowInstance inst = make_instance(6, 5, 2, 1, 80);
  inst.x = inst.w * inst.h;  // exact fit, lambda = 0: the step is an identity
  const Vector a = jacobian_diag(inst.h_row, 1, inst.x, inst.w, inst.h, 0.0);
  const double delta = 1e-6;
  const Matrix base = inst.w * inst.h - inst.w_col * inst.h_row;
  for (Index j = 0; j < inst.h_row.size(); ++j) {
    RowVector up = inst.h_row, down = inst.h_row;
    up[j] += delta;
    down[j] -= delta;
    const double fd = (oracle::coupled_step(inst.x, base, inst.w_col, up, 0.0,
                                            kDefaultFloor)[j] -
                       oracle::coupled_step(inst.x, base, inst.w_col, down,
                                            0.0, kDefaultFloor)[j]) /
                      (2.0 * delta);
    CHECK(std::abs(a[j] - fd) <= 1e-4 * std::max(std::abs(fd), 0.01));
  }
}

TEST_CASE("sensitivity_b") {
  SUBCASE("zero at lambda = 0") {
    const RowInstance inst = make_instance(5, 4, 2, 0, 90);
    const Vector b = sensitivity_b(inst.h_row, 0, inst.x, inst.w, inst.h, 0.0);
    CHECK(b.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("zero for a zero row") {
    const RowInstance inst = make_instance(5, 4, 2, 0, 91);
    const RowVector zero = RowVector::Zero(inst.h_row.size());
    const Vector b = sensitivity_b(zero, 0, inst.x, inst.w, inst.h, 0.6);
    CHECK(b.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("matches central differences in lambda") {
    const double delta = 1e-6;
    for (std::uint64_t seed : {92u, 93u, 94u}) {
      const RowInstance inst = make_instance(6, 5, 3, 1, seed);
      const double lambda = 0.5;
      const Vector b =
          sensitivity_b(inst.h_row, 1, inst.x, inst.w, inst.h, lambda);
      const RowVector up = oracle::coupled_step(
          inst.x, inst.base, inst.w_col, inst.h_row, lambda + delta,
          kDefaultFloor);
      const RowVector down = oracle::coupled_step(
          inst.x, inst.base, inst.w_col, inst.h_row, lambda - delta,
          kDefaultFloor);
      for (Index j = 0; j < b.size(); ++j) {
        const double fd = (up[j] - down[j]) / (2.0 * delta);
        CHECK(std::abs(b[j] - fd) <= 1e-4 * std::max(std::abs(fd), 0.01));
      }
    }
  }
}

TEST_CASE("fmd_step") {
  FmdState state;
  state.s = Vector::Zero(3);

  SUBCASE("zero Jacobian forwards b") {
    state.s << 1.0, -2.0, 3.0;
    const Vector b = Vector::Constant(3, 0.7);
    const FmdState next = fmd_step(state, Vector::Zero(3), b);
    CHECK((next.s - b).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("identity propagation") {
    state.s << 1.0, -2.0, 3.0;
    const FmdState next = fmd_step(state, Vector::Ones(3), Vector::Zero(3));
    CHECK((next.s - state.s).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("unrolled recursion equals the product-sum closed form") {
    std::mt19937_64 rng(123);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    const int steps = 3;
    const Index n = 6;
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<Vector> a(steps + 1), b(steps + 1);
      for (int t = 0; t <= steps; ++t) {
        a[t] = Vector::NullaryExpr(n, [&](Index) { return unif(rng); });
        b[t] = Vector::NullaryExpr(n, [&](Index) { return unif(rng); });
      }
      FmdState st;
      st.s = b[0];  // s^0 = b_0
      for (int t = 1; t <= steps; ++t) st = fmd_step(st, a[t], b[t]);

      // closed form: b_T + sum_t (prod_{s=t+1}^T A_s) b_t
      Vector closed = b[steps];
      for (int t = 0; t < steps; ++t) {
        Vector prod = Vector::Ones(n);
        for (int s = t + 1; s <= steps; ++s)
          prod = prod.cwiseProduct(a[s]);
        closed += prod.cwiseProduct(b[t]);
      }
      CHECK((st.s - closed).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("hypergradient_row and update_lambda") {
  RowVector g(3);
  g << 1.0, 0.0, 0.0;
  Vector s(3);
  s << 1.0, 5.0, -2.0;
  CHECK(hypergradient_row(g, Vector::Zero(3)) == 0.0);
  CHECK(hypergradient_row(g, s) == doctest::Approx(1.0));
  CHECK_THROWS_AS(hypergradient_row(g, Vector::Zero(2)), DimensionError);

  Vector lambda(2), grad(2);
  lambda << 0.1, 1.0;
  grad << 1.0, 0.5;
  const Vector same = update_lambda(lambda, Vector::Zero(2), 0.2);
  CHECK((same - lambda).cwiseAbs().maxCoeff() == 0.0);
  const Vector stepped = update_lambda(lambda, grad, 0.2);
  CHECK(stepped[0] == doctest::Approx(0.0));  // clamped
  CHECK(stepped[1] == doctest::Approx(0.9));
}

TEST_CASE("forward-mode hypergradient matches the unrolled finite difference") {
  std::mt19937_64 rng(777);
  std::uniform_real_distribution<double> lam_dist(0.05, 1.0);
  std::uniform_int_distribution<Index> mdist(5, 20), ndist(4, 15),
      rdist(1, 3);
  const int steps = 4;
  const double delta = 1e-6;

  for (int trial = 0; trial < 25; ++trial) {
    const Index m = mdist(rng), n = ndist(rng), r = rdist(rng);
    const Index l = std::uniform_int_distribution<Index>(0, r - 1)(rng);
    const RowInstance inst = make_instance(m, n, r, l, 5000 + trial * 7);
    const double lambda = lam_dist(rng);

    // analytic forward-mode pass through the public operations
    Vector s = Vector::Zero(n);
    RowVector h_t = inst.h_row;
    for (int t = 1; t <= steps; ++t) {
      const Vector a = jacobian_diag(h_t, l, inst.x, inst.w, inst.h, lambda);
      const Vector b = sensitivity_b(h_t, l, inst.x, inst.w, inst.h, lambda);
      FmdState st;
      st.s = s;
      s = fmd_step(st, a, b).s;
      h_t = oracle::coupled_step(inst.x, inst.base, inst.w_col, h_t, lambda,
                                 kDefaultFloor);
    }
    const RowVector g = outer_gradient(inst.x, inst.base, inst.w_col, h_t);
    const double fmd = hypergradient_row(g, s);

    const double fd = oracle::fd_hypergradient(
        inst.x, inst.base, inst.w_col, inst.h_row, lambda, steps, delta,
        kDefaultFloor);
    CHECK(std::abs(fmd - fd) <= 1e-3 * std::max(std::abs(fd), 1e-8));
  }
}

TEST_CASE("response_report decomposition") {
  const Matrix w = test_util::random_positive(6, 3, 600);
  const Matrix h = test_util::random_positive(3, 5, 601);
  const Matrix x = test_util::random_positive(6, 5, 602);
  const ResponseReport report = response_report(x, w, h);
  CHECK(report.per_row.size() == 3);
  CHECK(report.total ==
        doctest::Approx(report.per_row.sum()).epsilon(1e-12));
  CHECK((report.per_row.array() >= 0.0).all());
}

TEST_CASE("run_shinbo keeps lambda nonnegative and is deterministic") {
  const Matrix x = test_util::random_positive(12, 9, 700, 0.0, 1.0);
  SolverConfig config;
  config.rank = 2;
  config.max_outer_iters = 40;
  config.lambda_mode = LambdaMode::kPerRowAdaptive;
  config.seed = 99;
  const FactorPair init = nndsvd_init(x, 2);

  const SolveResult a = run_shinbo(x, config, init);
  for (const TraceRow& row : a.trace)
    CHECK((row.lambda.array() >= 0.0).all());

  const SolveResult b = run_shinbo(x, config, init);
  REQUIRE(a.trace.size() == b.trace.size());
  for (size_t k = 0; k < a.trace.size(); ++k) {
    CHECK(a.trace[k].objective.fit == b.trace[k].objective.fit);
    CHECK(a.trace[k].response == b.trace[k].response);
    CHECK((a.trace[k].lambda - b.trace[k].lambda).cwiseAbs().maxCoeff() ==
          0.0);
  }
  CHECK((a.factors.w - b.factors.w).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.factors.h - b.factors.h).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("one adaptive iteration applies minus alpha times the hypergradient") {
  const Index m = 10, n = 8, r = 2;
  const Matrix x = test_util::random_positive(m, n, 800, 0.1, 1.0);
  const FactorPair init = {test_util::random_positive(m, r, 801),
                           test_util::random_positive(r, n, 802)};

  SolverConfig config;
  config.rank = r;
  config.max_outer_iters = 1;
  config.lambda_mode = LambdaMode::kPerRowAdaptive;
  config.lambda_step = LambdaStepRule::kConstant;  // the raw projected step
  config.lambda_max = 0.0;
  config.step_alpha = 1e-7;  // small enough to stay off the projection
  config.seed = 4242;
  const SolveResult result = run_shinbo(x, config, init);

  // replicate the documented lambda^0 draw
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Vector lambda0(r);
  for (Index l = 0; l < r; ++l) lambda0[l] = unit(rng);

  // row 0 runs against the post-step W and the init H
  const Matrix w1 = update_w(x, init.w, init.h);
  const Matrix base = w1 * init.h - w1.col(0) * init.h.row(0);
  const double fd = oracle::fd_hypergradient(
      x, base, w1.col(0), init.h.row(0), lambda0[0], config.inner_iters, 1e-6,
      config.floor);

  const double applied =
      (lambda0[0] - result.trace.back().lambda[0]) / config.step_alpha;
  CHECK(applied == doctest::Approx(fd).epsilon(1e-3));
}
