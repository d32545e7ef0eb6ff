#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "tmvi/oracle.hpp"
#include "tmvi/problems.hpp"

using namespace tmvi;

namespace {

// g(x, y) = x^2/2 + x y - y^2/2 with n = m = 1; saddle at the origin,
// F(z) = (x + y, y - x), JF = [[1, 1], [-1, 1]].
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

}  // namespace

TEST_CASE("operator_f on the toy quadratic") {
  QuadraticSaddle q = toy_quadratic();
  OracleCallCounts counts;

  PointZ f0 = operator_f(q, z1d(0, 0), &counts);
  CHECK(f0.x(0) == 0.0);
  CHECK(f0.y(0) == 0.0);

  PointZ f1 = operator_f(q, z1d(1, 1), &counts);
  CHECK(f1.x(0) == Catch::Approx(2.0));
  CHECK(f1.y(0) == Catch::Approx(0.0).margin(1e-15));

  // F = (x + y, -(x - y)); at (1, 0) the second component is -1.
  PointZ f2 = operator_f(q, z1d(1, 0), &counts);
  CHECK(f2.x(0) == Catch::Approx(1.0));
  CHECK(f2.y(0) == Catch::Approx(-1.0));

  CHECK(counts.f == 3);
  CHECK(counts.jf == 0);
}

TEST_CASE("taylor model of F") {
  QuadraticSaddle q = toy_quadratic();
  OracleCallCounts counts;
  TaylorModelF deg0 = make_taylor_model(q, z1d(1, 1), 0, &counts);
  CHECK(counts.jf == 0);
  PointZ v = taylor_f_eval(deg0, z1d(-3, 7));
  CHECK(v.x(0) == Catch::Approx(2.0));
  CHECK(v.y(0) == Catch::Approx(0.0).margin(1e-15));

  TaylorModelF deg1 = make_taylor_model(q, z1d(1, 1), 1, &counts);
  CHECK(counts.jf == 1);
  PointZ at_center = taylor_f_eval(deg1, z1d(1, 1));
  CHECK(at_center.x(0) == Catch::Approx(2.0));
  CHECK(at_center.y(0) == Catch::Approx(0.0).margin(1e-15));

  // Affine F makes the degree-1 model exact everywhere.
  PointZ at_origin = taylor_f_eval(deg1, z1d(0, 0));
  CHECK(at_origin.x(0) == Catch::Approx(0.0).margin(1e-15));
  CHECK(at_origin.y(0) == Catch::Approx(0.0).margin(1e-15));

  TaylorModelF deg2 = deg1;
  deg2.degree = 2;
  CHECK_THROWS_AS(taylor_f_eval(deg2, z1d(0, 0)), std::invalid_argument);
}

TEST_CASE("merit function") {
  QuadraticSaddle q = toy_quadratic();
  CHECK(merit(q, z1d(0, 0)) == 0.0);
  CHECK(merit(q, z1d(1, 1)) == Catch::Approx(2.0));
  CHECK(merit(q, z1d(1, 0)) == Catch::Approx(1.0));
}

TEST_CASE("exact duality gap of the quadratic family") {
  QuadraticSaddle q = toy_quadratic();
  CHECK(duality_gap_exact(q, z1d(0, 0)) == Catch::Approx(0.0).margin(1e-14));
  CHECK(duality_gap_exact(q, z1d(1, 1)) == Catch::Approx(2.0));

  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal(0.0, 3.0);
  for (int k = 0; k < 100; ++k) {
    double gap = duality_gap_exact(q, z1d(normal(rng), normal(rng)));
    CHECK(gap >= -1e-12);
  }

  SmoothCoupledSaddle s(1.0, 1.0, Matrix::Ones(1, 1));
  CHECK_THROWS_AS(duality_gap_exact(s, z1d(0, 0)), std::invalid_argument);
}

TEST_CASE("fd_check validates derivatives and detects corruption") {
  QuadraticSaddle q = toy_quadratic();
  FdReport fd = fd_check(q, z1d(1, 1));
  CHECK(fd.max_grad_rel_err <= 1e-8);
  CHECK(fd.max_jacobian_rel_err <= 1e-8);

  ProblemInstance smooth = generate_instance("smooth_coupled", 5, 4, 4, 1.0, 1.0);
  std::mt19937_64 rng(17);
  std::normal_distribution<double> normal(0.0, 1.0);
  PointZ z = PointZ::zero(4, 4);
  for (Eigen::Index i = 0; i < 4; ++i) z.x(i) = normal(rng);
  for (Eigen::Index i = 0; i < 4; ++i) z.y(i) = normal(rng);
  FdReport fd_smooth = fd_check(*smooth.oracle, z);
  CHECK(fd_smooth.max_grad_rel_err <= 1e-5);
  CHECK(fd_smooth.max_jacobian_rel_err <= 1e-4);

  auto base = std::make_shared<QuadraticSaddle>(toy_quadratic());
  FaultyOracle corrupted(base, GradFault{0, 0.1});
  FdReport fd_bad = fd_check(corrupted, z1d(1, 1));
  CHECK(fd_bad.max_grad_rel_err >= 0.01);
}

TEST_CASE("strong monotonicity and Lipschitz sampling") {
  for (const auto& family : {std::string("quadratic"), std::string("smooth_coupled")}) {
    ProblemInstance inst = generate_instance(family, 11, 5, 5, 1.0, 1.0);
    std::mt19937_64 rng(23);
    std::normal_distribution<double> normal(0.0, 2.0);
    auto sample = [&] {
      PointZ z = PointZ::zero(inst.n, inst.m);
      for (Eigen::Index i = 0; i < inst.n; ++i) z.x(i) = normal(rng);
      for (Eigen::Index i = 0; i < inst.m; ++i) z.y(i) = normal(rng);
      return z;
    };
    for (int k = 0; k < 1000; ++k) {
      PointZ za = sample(), zb = sample();
      PointZ df = operator_f(*inst.oracle, za) - operator_f(*inst.oracle, zb);
      PointZ dz = za - zb;
      CHECK(dot_z(df, dz) >= inst.params.mu * dot_z(dz, dz) - 1e-10);
      CHECK(norm_z(df) <= inst.params.l1 * norm_z(dz) * (1.0 + 1e-9) + 1e-12);
    }
  }
}

TEST_CASE("merit/gap sandwich on quadratic instances") {
  ProblemInstance inst = generate_instance("quadratic", 2, 6, 5, 1.0, 1.0);
  const double mu = inst.params.mu, l1 = inst.params.l1;
  std::mt19937_64 rng(29);
  std::normal_distribution<double> normal(0.0, 2.0);
  for (int k = 0; k < 100; ++k) {
    PointZ z = *inst.reference_solution;
    for (Eigen::Index i = 0; i < inst.n; ++i) z.x(i) += normal(rng);
    for (Eigen::Index i = 0; i < inst.m; ++i) z.y(i) += normal(rng);
    double m = merit(*inst.oracle, z);
    double gap = duality_gap_exact(*inst.oracle, z);
    CHECK(mu / (l1 * l1) * m <= gap + 1e-9);
    CHECK(gap <= l1 / (mu * mu) * m + 1e-9);
  }
}

TEST_CASE("degree-1 taylor remainder respects the L2 bound") {
  ProblemInstance inst = generate_instance("smooth_coupled", 31, 5, 5, 1.0, 0.7);
  const double l2 = inst.params.l2;
  REQUIRE(l2 > 0.0);
  std::mt19937_64 rng(37);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int k = 0; k < 100; ++k) {
    PointZ center = PointZ::zero(inst.n, inst.m);
    PointZ z = PointZ::zero(inst.n, inst.m);
    for (Eigen::Index i = 0; i < inst.n; ++i) {
      center.x(i) = normal(rng);
      z.x(i) = center.x(i) + 0.5 * normal(rng);
    }
    for (Eigen::Index i = 0; i < inst.m; ++i) {
      center.y(i) = normal(rng);
      z.y(i) = center.y(i) + 0.5 * normal(rng);
    }
    TaylorModelF model = make_taylor_model(*inst.oracle, center, 1);
    PointZ remainder = operator_f(*inst.oracle, z) - taylor_f_eval(model, z);
    double d = norm_z(z - center);
    CHECK(norm_z(remainder) <= 0.5 * l2 * d * d * (1.0 + 1e-9) + 1e-12);
  }
}
