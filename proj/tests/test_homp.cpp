#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "tmvi/homp.hpp"
#include "tmvi/problems.hpp"

using namespace tmvi;

namespace {

QuadraticSaddle toy_quadratic() {
  Matrix one = Matrix::Ones(1, 1);
  return QuadraticSaddle(one, one, one, Vector::Zero(1), Vector::Zero(1));
}

PointZ z1d(double x, double y) {
  Vector vx(1), vy(1);
  vx << x;
  vy << y;
  return {vx, vy};
}

PointZ offset_start(const ProblemInstance& inst, double radius,
                    std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  PointZ u = PointZ::zero(inst.n, inst.m);
  for (Eigen::Index i = 0; i < inst.n; ++i) u.x(i) = normal(rng);
  for (Eigen::Index i = 0; i < inst.m; ++i) u.y(i) = normal(rng);
  u *= radius / norm_z(u);
  return *inst.reference_solution + u;
}

/// Online accounting for the residual bound of the mirror-prox averages.
struct ResidualAccumulator {
  const PointZ* z_star = nullptr;
  double weighted_residual = 0.0;  // sum gamma_t <F(z_hat), z_hat - z*>
  double monotone_part = 0.0;      // sum gamma_t <F(z_hat) - F(z*), z_hat - z*>
  double gamma_total = 0.0;
  PointZ f_star;

  void operator()(const HompIterInfo& info) {
    PointZ diff = *info.z_hat - *z_star;
    weighted_residual += info.gamma * dot_z(*info.f_z_hat, diff);
    monotone_part += info.gamma * dot_z(*info.f_z_hat - f_star, diff);
    gamma_total += info.gamma;
  }
};

}  // namespace

TEST_CASE("implicit step closed forms on the toy quadratic") {
  QuadraticSaddle q = toy_quadratic();
  SolverParams params;
  params.l1 = 2.0;

  PointZ p1 = implicit_step(q, z1d(1, 1), 0.25, 1, params);
  CHECK(p1.x(0) == Catch::Approx(0.5));
  CHECK(p1.y(0) == Catch::Approx(1.0));

  PointZ p2 = implicit_step(q, z1d(1, 1), 0.5, 2, params);
  CHECK(p2.x(0) == Catch::Approx(0.4));
  CHECK(p2.y(0) == Catch::Approx(0.8));

  for (int p = 1; p <= 2; ++p) {
    PointZ fixed = implicit_step(q, z1d(0, 0), 0.7, p, params);
    CHECK(norm_z(fixed) <= 1e-14);
  }

  CHECK_THROWS_AS(implicit_step(q, z1d(1, 1), 0.5, 3, params),
                  std::invalid_argument);
}

TEST_CASE("gamma bracket arithmetic") {
  // p = 2, lp = 2, |d| = 1: [2/(32*2), 2/(16*2)] = [1/32, 1/16].
  GammaBracket b = GammaBracket::at(2, 2.0, 1.0);
  CHECK(b.lower == Catch::Approx(1.0 / 32.0));
  CHECK(b.upper == Catch::Approx(1.0 / 16.0));
  CHECK(b.upper == Catch::Approx(2.0 * b.lower));
  CHECK(b.contains(0.04));
  CHECK_FALSE(b.contains(0.07));

  GammaBracket degenerate = GammaBracket::at(2, 2.0, 0.0);
  CHECK(std::isinf(degenerate.lower));
}

TEST_CASE("find_gamma p=1 has a displacement-free bracket") {
  QuadraticSaddle q = toy_quadratic();
  SolverParams params;
  params.l1 = 2.0;
  PointZ z_t = z1d(1, 1);
  PointZ f_t = operator_f(q, z_t);
  GammaSearchResult res = find_gamma(z_t, f_t, nullptr, 1, params, 1.0);
  // gamma = 1/(16 L_1); for L_1 = 2 that is 1/32, inside [1/64, 1/32].
  CHECK(res.gamma == Catch::Approx(1.0 / 32.0));
  CHECK(res.gamma >= 1.0 / 64.0);
  CHECK(res.gamma <= 1.0 / 32.0);
  CHECK(res.accept == GammaAccept::Bracket);
}

TEST_CASE("find_gamma degenerates gracefully at the solution") {
  QuadraticSaddle q = toy_quadratic();
  SolverParams params;
  params.l1 = 2.0;
  params.lp = 1e-3;
  PointZ z_star = z1d(0, 0);
  PointZ f_star = operator_f(q, z_star);
  Matrix jf = jacobian_f(q, z_star);
  GammaSearchResult res = find_gamma(z_star, f_star, &jf, 2, params, 1.0);
  CHECK(res.accept == GammaAccept::Floor);
  CHECK(res.gamma == params.gamma_max);
  CHECK(norm_z(res.z_hat) <= 1e-13);
}

TEST_CASE("find_gamma satisfies the joint bracket condition on a smooth instance") {
  ProblemInstance inst = generate_instance("smooth_coupled", 4, 5, 5, 1.0, 1.0);
  const double lp = inst.params.lp;
  std::mt19937_64 rng(9);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    PointZ z_t = PointZ::zero(5, 5);
    for (Eigen::Index i = 0; i < 5; ++i) z_t.x(i) = normal(rng);
    for (Eigen::Index i = 0; i < 5; ++i) z_t.y(i) = normal(rng);
    PointZ f_t = operator_f(*inst.oracle, z_t);
    Matrix jf = jacobian_f(*inst.oracle, z_t);
    int violations = 0;
    GammaSearchResult res =
        find_gamma(z_t, f_t, &jf, 2, inst.params, 1.0, &violations);
    REQUIRE(res.accept == GammaAccept::Bracket);
    const double s = res.gamma * lp * norm_z(res.z_hat - z_t);
    CHECK(s >= 2.0 / 32.0 * (1.0 - 1e-9));
    CHECK(s <= 2.0 / 16.0 * (1.0 + 1e-9));
    CHECK(violations == 0);
  }
}

TEST_CASE("find_gamma rejects a nonpositive lp") {
  QuadraticSaddle q = toy_quadratic();
  SolverParams params;
  params.lp = 0.0;
  PointZ z_t = z1d(1, 1);
  PointZ f_t = operator_f(q, z_t);
  Matrix jf = jacobian_f(q, z_t);
  CHECK_THROWS_AS(find_gamma(z_t, f_t, &jf, 2, params, 1.0),
                  std::invalid_argument);
}

TEST_CASE("homp_run single-iteration hand value") {
  QuadraticSaddle q = toy_quadratic();
  SolverParams params;
  params.l1 = 2.0;
  RunTrace trace;
  PointZ out = homp_run(q, params, 1, z1d(1, 1), 1, trace);
  // z_hat = (1,1) - gamma F(1,1) with gamma = 1/32 and F = (2, 0).
  CHECK(out.x(0) == Catch::Approx(1.0 - 1.0 / 16.0));
  CHECK(out.y(0) == Catch::Approx(1.0));
  CHECK(trace.records.size() == 1);
  CHECK(trace.records[0].gamma == Catch::Approx(1.0 / 32.0));
  CHECK(trace.counts.f == 2);  // F(z_t) and F(z_hat)
}

TEST_CASE("homp_run is a fixed point at the solution") {
  QuadraticSaddle q = toy_quadratic();
  SolverParams params;
  params.l1 = 2.0;
  params.lp = 1e-3;
  for (int p = 1; p <= 2; ++p) {
    RunTrace trace;
    PointZ out = homp_run(q, params, p, z1d(0, 0), 5, trace);
    CHECK(norm_z(out) <= 1e-12);
  }
}

TEST_CASE("mirror-prox averaged residual bound across seeds and families") {
  const double slack = 1e-9;
  for (std::uint64_t seed : {1ull, 2ull, 3ull, 4ull, 5ull}) {
    for (const auto& family :
         {std::string("quadratic"), std::string("smooth_coupled")}) {
      ProblemInstance inst = generate_instance(family, seed, 5, 5, 1.0, 1.0);
      for (int p = 1; p <= 2; ++p) {
        const double lp = inst.params.lipschitz_for_order(p);
        PointZ z1 = offset_start(inst, 1.5, seed * 31 + p);
        const double d_init = bregman(*inst.reference_solution, z1);

        ResidualAccumulator acc;
        acc.z_star = &*inst.reference_solution;
        acc.f_star = operator_f(*inst.oracle, *inst.reference_solution);
        std::vector<double> lhs_at;  // prefix value after each t
        RunTrace trace;
        PointZ zbar =
            homp_run(*inst.oracle, inst.params, p, z1, 50, trace, 0,
                     &*inst.reference_solution, [&](const HompIterInfo& info) {
                       acc(info);
                       lhs_at.push_back(acc.weighted_residual /
                                        acc.gamma_total);
                     });

        for (int t : {10, 25, 50}) {
          const double rhs = 16.0 * lp / factorial(p) *
                             std::pow(d_init / t, 0.5 * (p + 1));
          INFO(family << " seed " << seed << " p " << p << " T " << t);
          CHECK(lhs_at[static_cast<std::size_t>(t) - 1] <= rhs + slack);
        }

        // Distance contraction chained through strong monotonicity.
        const double lhs_contraction =
            inst.params.mu *
            std::pow(norm_z(zbar - *inst.reference_solution), 2);
        CHECK(lhs_contraction <= acc.monotone_part / acc.gamma_total + slack);

        CHECK(trace.gamma_monotonicity_violations == 0);
      }
    }
  }
}

TEST_CASE("every bracket-accepted iteration satisfies its bracket") {
  ProblemInstance inst = generate_instance("smooth_coupled", 6, 5, 5, 1.0, 1.0);
  PointZ z1 = offset_start(inst, 1.0, 99);
  RunTrace trace;
  int bracket_count = 0;
  homp_run(*inst.oracle, inst.params, 2, z1, 30, trace, 0, nullptr,
           [&](const HompIterInfo& info) {
             if (info.accept != GammaAccept::Bracket) return;
             ++bracket_count;
             double d_norm = norm_z(*info.z_hat - *info.z_t);
             CHECK(GammaBracket::at(2, inst.params.lp, d_norm)
                       .contains(info.gamma));
           });
  CHECK(bracket_count > 0);
}
