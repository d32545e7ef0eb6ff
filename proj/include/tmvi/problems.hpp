#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "tmvi/oracle.hpp"

namespace tmvi {

template <typename Scalar>
using VecT = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

inline double spectral_norm(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(a);
  return svd.singularValues()(0);
}

// ---------------------------------------------------------------------------
// Quadratic family: g(x,y) = 1/2 x'Ax + x'By - 1/2 y'Cy + a'x - c'y
// ---------------------------------------------------------------------------

class QuadraticSaddle : public SaddleOracle {
 public:
  QuadraticSaddle(Matrix A, Matrix B, Matrix C, Vector a, Vector c)
      : A_(std::move(A)),
        B_(std::move(B)),
        C_(std::move(C)),
        a_(std::move(a)),
        c_(std::move(c)) {
    require(A_.rows() == A_.cols() && C_.rows() == C_.cols(),
            "QuadraticSaddle: A and C must be square");
    require(B_.rows() == A_.rows() && B_.cols() == C_.rows(),
            "QuadraticSaddle: B shape mismatch");
    require(a_.size() == A_.rows() && c_.size() == C_.rows(),
            "QuadraticSaddle: linear term shape mismatch");
    llt_a_.compute(A_);
    llt_c_.compute(C_);
  }

  Eigen::Index n() const override { return A_.rows(); }
  Eigen::Index m() const override { return C_.rows(); }

  double value(const PointZ& z) const override {
    return 0.5 * z.x.dot(A_ * z.x) + z.x.dot(B_ * z.y) -
           0.5 * z.y.dot(C_ * z.y) + a_.dot(z.x) - c_.dot(z.y);
  }

  PointZ grad(const PointZ& z) const override {
    return {A_ * z.x + B_ * z.y + a_, B_.transpose() * z.x - C_ * z.y - c_};
  }

  Matrix jacobian_f(const PointZ&) const override { return stacked_jacobian(); }

  std::optional<Matrix> apply_third(const PointZ&,
                                    const PointZ&) const override {
    return Matrix::Zero(n() + m(), n() + m());
  }

  /// Closed-form best responses make the duality gap exact: the inner
  /// maximizer is y*(x) = C^-1 (B'x - c), the inner minimizer
  /// x*(y) = -A^-1 (By + a).
  std::optional<double> exact_duality_gap(const PointZ& z) const override {
    Vector y_best = llt_c_.solve(B_.transpose() * z.x - c_);
    Vector x_best = -llt_a_.solve(B_ * z.y + a_);
    return value({z.x, y_best}) - value({x_best, z.y});
  }

  /// F(z) = J z + (a; c) with J = [[A, B], [-B', C]].
  Matrix stacked_jacobian() const {
    const Eigen::Index nn = n(), mm = m();
    Matrix j(nn + mm, nn + mm);
    j.topLeftCorner(nn, nn) = A_;
    j.topRightCorner(nn, mm) = B_;
    j.bottomLeftCorner(mm, nn) = -B_.transpose();
    j.bottomRightCorner(mm, mm) = C_;
    return j;
  }

  const Matrix& A() const { return A_; }
  const Matrix& B() const { return B_; }
  const Matrix& C() const { return C_; }
  const Vector& a() const { return a_; }
  const Vector& c() const { return c_; }

 private:
  Matrix A_, B_, C_;
  Vector a_, c_;
  Eigen::LLT<Matrix> llt_a_, llt_c_;
};

/// Solves F(z*) = 0, i.e. [[A, B], [-B', C]] z* = -(a; c). The system is
/// nonsingular whenever A, C are positive definite. Solved in extended
/// precision so the residual lands at the rounding floor.
inline PointZ quadratic_exact_solution(const QuadraticSaddle& q) {
  using LD = long double;
  MatT<LD> j = q.stacked_jacobian().cast<LD>();
  VecT<LD> rhs(j.rows());
  rhs.head(q.n()) = -q.a().cast<LD>();
  rhs.tail(q.m()) = -q.c().cast<LD>();
  Eigen::PartialPivLU<MatT<LD>> lu(j);
  VecT<LD> z = lu.solve(rhs);
  LD residual = (j * z - rhs).norm();
  require(std::isfinite(static_cast<double>(residual)),
          "quadratic_exact_solution: singular system");
  Vector zd = z.cast<double>();
  return PointZ::from_stacked(zd, q.n(), q.m());
}

// ---------------------------------------------------------------------------
// Smooth coupled family:
//   g(x,y) = mu/2 |x|^2 + tau lse(x) + x'By - mu/2 |y|^2 - tau lse(y)
// ---------------------------------------------------------------------------

class SmoothCoupledSaddle : public SaddleOracle {
 public:
  SmoothCoupledSaddle(double mu, double tau, Matrix B)
      : mu_(mu), tau_(tau), B_(std::move(B)) {
    require(mu_ > 0.0, "SmoothCoupledSaddle: mu must be positive");
    require(tau_ >= 0.0, "SmoothCoupledSaddle: tau must be nonnegative");
  }

  Eigen::Index n() const override { return B_.rows(); }
  Eigen::Index m() const override { return B_.cols(); }

  double value(const PointZ& z) const override {
    return 0.5 * mu_ * z.x.squaredNorm() + tau_ * lse<double>(z.x) +
           z.x.dot(B_ * z.y) - 0.5 * mu_ * z.y.squaredNorm() -
           tau_ * lse<double>(z.y);
  }

  PointZ grad(const PointZ& z) const override {
    return {mu_ * z.x + tau_ * softmax<double>(z.x) + B_ * z.y,
            B_.transpose() * z.x - mu_ * z.y - tau_ * softmax<double>(z.y)};
  }

  Matrix jacobian_f(const PointZ& z) const override {
    return jacobian_f_t<double>(z.x, z.y);
  }

  double mu() const { return mu_; }
  double tau() const { return tau_; }
  const Matrix& B() const { return B_; }

  template <typename Scalar>
  static Scalar lse(const VecT<Scalar>& v) {
    Scalar vmax = v.maxCoeff();
    return vmax + std::log((v.array() - vmax).exp().sum());
  }

  template <typename Scalar>
  static VecT<Scalar> softmax(const VecT<Scalar>& v) {
    VecT<Scalar> e = (v.array() - v.maxCoeff()).exp();
    return e / e.sum();
  }

  /// F(z) = (mu x + tau softmax(x) + By, -B'x + mu y + tau softmax(y)).
  template <typename Scalar>
  VecT<Scalar> operator_f_t(const VecT<Scalar>& x,
                            const VecT<Scalar>& y) const {
    MatT<Scalar> b = B_.cast<Scalar>();
    VecT<Scalar> out(x.size() + y.size());
    out.head(x.size()) = mu_ * x + Scalar(tau_) * softmax<Scalar>(x) + b * y;
    out.tail(y.size()) =
        -b.transpose() * x + mu_ * y + Scalar(tau_) * softmax<Scalar>(y);
    return out;
  }

  template <typename Scalar>
  MatT<Scalar> jacobian_f_t(const VecT<Scalar>& x,
                            const VecT<Scalar>& y) const {
    const Eigen::Index nn = x.size(), mm = y.size();
    MatT<Scalar> b = B_.cast<Scalar>();
    MatT<Scalar> j(nn + mm, nn + mm);
    j.setZero();
    j.topLeftCorner(nn, nn) = lse_hessian<Scalar>(x) * Scalar(tau_);
    j.topLeftCorner(nn, nn) += Scalar(mu_) * MatT<Scalar>::Identity(nn, nn);
    j.topRightCorner(nn, mm) = b;
    j.bottomLeftCorner(mm, nn) = -b.transpose();
    j.bottomRightCorner(mm, mm) = lse_hessian<Scalar>(y) * Scalar(tau_);
    j.bottomRightCorner(mm, mm) += Scalar(mu_) * MatT<Scalar>::Identity(mm, mm);
    return j;
  }

  template <typename Scalar>
  static MatT<Scalar> lse_hessian(const VecT<Scalar>& v) {
    VecT<Scalar> s = softmax<Scalar>(v);
    MatT<Scalar> h = -(s * s.transpose());
    h.diagonal() += s;
    return h;
  }

 private:
  double mu_;
  double tau_;
  Matrix B_;
};

/// Damped Newton on F(z) = 0, in Scalar precision. Backtracks on |F|.
template <typename Scalar, typename FFunc, typename JFunc>
VecT<Scalar> newton_on_f(const FFunc& f, const JFunc& jf, VecT<Scalar> z,
                         Scalar tol, int max_iters) {
  VecT<Scalar> fz = f(z);
  for (int it = 0; it < max_iters; ++it) {
    Scalar fnorm = fz.norm();
    if (fnorm <= tol) return z;
    MatT<Scalar> j = jf(z);
    VecT<Scalar> step = Eigen::PartialPivLU<MatT<Scalar>>(j).solve(-fz);
    Scalar t = 1.0;
    VecT<Scalar> z_new = z + step;
    VecT<Scalar> f_new = f(z_new);
    while (f_new.norm() > (Scalar(1) - Scalar(0.25) * t) * fnorm &&
           t > Scalar(1e-10)) {
      t *= Scalar(0.5);
      z_new = z + t * step;
      f_new = f(z_new);
    }
    z = std::move(z_new);
    fz = std::move(f_new);
  }
  if (fz.norm() > tol)
    throw InnerSolveError("newton_on_f: no convergence within budget");
  return z;
}

/// Reference saddle point of the smooth family: damped Newton to residual
/// 1e-12 in doubles, then polished in long double. Serves as the independent
/// oracle for all convergence tests on this family.
inline PointZ smooth_reference_solution(const SmoothCoupledSaddle& s) {
  auto fd = [&](const Vector& z) {
    return s.operator_f_t<double>(z.head(s.n()), z.tail(s.m()));
  };
  auto jd = [&](const Vector& z) {
    return s.jacobian_f_t<double>(z.head(s.n()), z.tail(s.m()));
  };
  Vector z0 = Vector::Zero(s.n() + s.m());
  Vector z = newton_on_f<double>(fd, jd, z0, 1e-12, 200);

  using LD = long double;
  auto fl = [&](const VecT<LD>& zl) {
    return s.operator_f_t<LD>(zl.head(s.n()), zl.tail(s.m()));
  };
  auto jl = [&](const VecT<LD>& zl) {
    return s.jacobian_f_t<LD>(zl.head(s.n()), zl.tail(s.m()));
  };
  VecT<LD> zl = newton_on_f<LD>(fl, jl, z.cast<LD>(), LD(1e-17), 8);
  Vector out = zl.cast<double>();
  return PointZ::from_stacked(out, s.n(), s.m());
}

// ---------------------------------------------------------------------------
// Fault injection (for derivative-verification tests)
// ---------------------------------------------------------------------------

struct GradFault {
  Eigen::Index index = 0;  // entry of the stacked gradient
  double delta = 0.0;
};

/// Wraps an oracle and corrupts one gradient entry by a constant offset.
class FaultyOracle : public SaddleOracle {
 public:
  FaultyOracle(std::shared_ptr<const SaddleOracle> base, GradFault fault)
      : base_(std::move(base)), fault_(fault) {}

  Eigen::Index n() const override { return base_->n(); }
  Eigen::Index m() const override { return base_->m(); }
  double value(const PointZ& z) const override { return base_->value(z); }

  PointZ grad(const PointZ& z) const override {
    PointZ g = base_->grad(z);
    if (fault_.index < n())
      g.x(fault_.index) += fault_.delta;
    else
      g.y(fault_.index - n()) += fault_.delta;
    return g;
  }

  Matrix jacobian_f(const PointZ& z) const override {
    return base_->jacobian_f(z);
  }

  std::optional<double> exact_duality_gap(const PointZ& z) const override {
    return base_->exact_duality_gap(z);
  }

 private:
  std::shared_ptr<const SaddleOracle> base_;
  GradFault fault_;
};

// ---------------------------------------------------------------------------
// ProblemInstance
// ---------------------------------------------------------------------------

struct ProblemInstance {
  std::string family;  // "quadratic" | "smooth_coupled"
  std::uint64_t seed = 0;
  Eigen::Index n = 0;
  Eigen::Index m = 0;
  double coupling_scale = 0.0;

  std::shared_ptr<const SaddleOracle> oracle;
  // Typed views into the same instance; exactly one is non-null.
  std::shared_ptr<const QuadraticSaddle> quadratic;
  std::shared_ptr<const SmoothCoupledSaddle> smooth;

  SolverParams params;
  std::optional<PointZ> reference_solution;
  std::string label;
  std::optional<GradFault> fault;

  /// Conventional starting point used when the caller does not supply one.
  PointZ default_start() const {
    return {Vector::Ones(n), Vector::Ones(m)};
  }
};

/// R >= |z1 - z*|: measured and inflated by 1.1 when a reference solution is
/// available, otherwise the user bound is passed through.
inline double estimate_r0(const ProblemInstance& instance, const PointZ& z1,
                          std::optional<double> user_bound = std::nullopt) {
  if (user_bound) {
    require(*user_bound > 0.0, "estimate_r0: user bound must be positive");
    return *user_bound;
  }
  require(instance.reference_solution.has_value(),
          "estimate_r0: no reference solution and no user bound");
  return std::max(1.1 * norm_z(z1 - *instance.reference_solution), 1e-12);
}

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

namespace detail {

inline Matrix random_gaussian(std::mt19937_64& rng, Eigen::Index rows,
                              Eigen::Index cols) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix g(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) g(i, j) = normal(rng);
  return g;
}

/// Q' D Q with prescribed eigenvalues, Q a random orthogonal factor.
inline Matrix random_spd_with_spectrum(std::mt19937_64& rng,
                                       const Vector& eigenvalues) {
  const Eigen::Index k = eigenvalues.size();
  Eigen::HouseholderQR<Matrix> qr(random_gaussian(rng, k, k));
  Matrix q = qr.householderQ();
  return q * eigenvalues.asDiagonal() * q.transpose();
}

inline Matrix random_coupling(std::mt19937_64& rng, Eigen::Index rows,
                              Eigen::Index cols, double norm_target) {
  if (norm_target <= 0.0) return Matrix::Zero(rows, cols);
  Matrix g = random_gaussian(rng, rows, cols);
  return g * (norm_target / spectral_norm(g));
}

/// Sampled Lipschitz constant of the Jacobian of F, inflated by 1.5 and
/// capped at the closed-form bound 2 tau. Any upper bound keeps the theory
/// valid; the sampled value is the sharp operational choice.
inline double certify_l2(const SmoothCoupledSaddle& s, std::mt19937_64& rng,
                         int samples = 128) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const Eigen::Index dim = s.n() + s.m();
  double sup = 0.0;
  for (int k = 0; k < samples; ++k) {
    Vector z1(dim), u(dim);
    for (Eigen::Index i = 0; i < dim; ++i) z1(i) = 1.5 * normal(rng);
    for (Eigen::Index i = 0; i < dim; ++i) u(i) = normal(rng);
    u.normalize();
    const double delta = 1e-4;
    Vector z2 = z1 + delta * u;
    Matrix j1 = s.jacobian_f_t<double>(z1.head(s.n()), z1.tail(s.m()));
    Matrix j2 = s.jacobian_f_t<double>(z2.head(s.n()), z2.tail(s.m()));
    sup = std::max(sup, spectral_norm(j1 - j2) / delta);
  }
  return std::min(1.5 * sup, 2.0 * s.tau());
}

}  // namespace detail

/// Deterministic in seed. Declared constants satisfy the family invariants
/// and a reference solution is attached.
inline ProblemInstance generate_instance(const std::string& family,
                                         std::uint64_t seed, Eigen::Index n,
                                         Eigen::Index m, double mu,
                                         double coupling_scale) {
  require(n >= 1 && m >= 1, "generate_instance: n, m must be >= 1");
  require(mu > 0.0, "generate_instance: mu must be positive");
  std::mt19937_64 rng(seed);

  ProblemInstance inst;
  inst.family = family;
  inst.seed = seed;
  inst.n = n;
  inst.m = m;
  inst.coupling_scale = coupling_scale;
  inst.params.mu = mu;

  if (family == "quadratic") {
    Vector spec_a = Vector::LinSpaced(n, mu, 4.0 * mu + 1.0);
    Vector spec_c = Vector::LinSpaced(m, mu, 4.0 * mu + 1.0);
    Matrix A = detail::random_spd_with_spectrum(rng, spec_a);
    Matrix C = detail::random_spd_with_spectrum(rng, spec_c);
    Matrix B = detail::random_coupling(rng, n, m, coupling_scale);
    Vector a = detail::random_gaussian(rng, n, 1);
    Vector c = detail::random_gaussian(rng, m, 1);
    auto q = std::make_shared<QuadraticSaddle>(A, B, C, a, c);
    inst.quadratic = q;
    inst.oracle = q;
    inst.params.l1 = spectral_norm(q->stacked_jacobian());
    inst.params.l2 = 0.0;
    inst.params.lp = 1e-3;  // operational L_p; the true L_2 vanishes
    inst.reference_solution = quadratic_exact_solution(*q);
    inst.label = "quadratic-s" + std::to_string(seed) + "-n" +
                 std::to_string(n) + "m" + std::to_string(m);
  } else if (family == "smooth_coupled") {
    const double tau = 1.0;
    Matrix B = detail::random_coupling(rng, n, m, coupling_scale);
    auto s = std::make_shared<SmoothCoupledSaddle>(mu, tau, B);
    inst.smooth = s;
    inst.oracle = s;
    inst.params.l1 = mu + tau + spectral_norm(B);
    inst.params.l2 = detail::certify_l2(*s, rng);
    inst.params.lp = inst.params.l2 > 0.0 ? inst.params.l2 : 1e-3;
    inst.reference_solution = smooth_reference_solution(*s);
    inst.label = "smooth-s" + std::to_string(seed) + "-n" + std::to_string(n) +
                 "m" + std::to_string(m);
  } else {
    require(false, "generate_instance: unknown family '" + family + "'");
  }

  // Reference residual must sit far below the scale of F at the default
  // start.
  PointZ f_ref = operator_f(*inst.oracle, *inst.reference_solution);
  PointZ f_start = operator_f(*inst.oracle, inst.default_start());
  internal_check(norm_z(f_ref) <= 1e-10 * (1.0 + norm_z(f_start)),
                 "generate_instance: reference solution residual too large");
  return inst;
}

// ---------------------------------------------------------------------------
// JSON serialization
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::json matrix_to_json(const Matrix& a) {
  std::vector<double> flat(static_cast<std::size_t>(a.size()));
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      flat[static_cast<std::size_t>(i * a.cols() + j)] = a(i, j);
  return nlohmann::json(flat);
}

inline Matrix matrix_from_json(const nlohmann::json& j, Eigen::Index rows,
                               Eigen::Index cols) {
  auto flat = j.get<std::vector<double>>();
  require(flat.size() == static_cast<std::size_t>(rows * cols),
          "instance json: matrix payload size mismatch");
  Matrix a(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j2 = 0; j2 < cols; ++j2)
      a(i, j2) = flat[static_cast<std::size_t>(i * cols + j2)];
  return a;
}

inline nlohmann::json vector_to_json(const Vector& v) {
  return matrix_to_json(v);
}

inline Vector vector_from_json(const nlohmann::json& j, Eigen::Index size) {
  return matrix_from_json(j, size, 1);
}

}  // namespace detail

inline nlohmann::json instance_to_json(const ProblemInstance& inst) {
  nlohmann::json j;
  j["family"] = inst.family;
  j["seed"] = inst.seed;
  j["n"] = inst.n;
  j["m"] = inst.m;
  j["mu"] = inst.params.mu;
  j["coupling_scale"] = inst.coupling_scale;
  j["label"] = inst.label;
  j["constants"] = {{"l1", inst.params.l1},
                    {"l2", inst.params.l2},
                    {"lp", inst.params.lp}};
  nlohmann::json mats;
  if (inst.quadratic) {
    mats["A"] = detail::matrix_to_json(inst.quadratic->A());
    mats["B"] = detail::matrix_to_json(inst.quadratic->B());
    mats["C"] = detail::matrix_to_json(inst.quadratic->C());
    mats["a"] = detail::vector_to_json(inst.quadratic->a());
    mats["c"] = detail::vector_to_json(inst.quadratic->c());
  } else if (inst.smooth) {
    j["tau"] = inst.smooth->tau();
    mats["B"] = detail::matrix_to_json(inst.smooth->B());
  }
  j["matrices"] = mats;
  if (inst.reference_solution) {
    j["reference_solution"] = {
        {"x", detail::vector_to_json(inst.reference_solution->x)},
        {"y", detail::vector_to_json(inst.reference_solution->y)}};
  }
  if (inst.fault) {
    j["fault"] = {{"kind", "grad_offset"},
                  {"index", inst.fault->index},
                  {"delta", inst.fault->delta}};
  }
  return j;
}

/// Rebuilds an instance from its JSON document. Family invariants are NOT
/// re-validated here; `verify.hpp` checks them so that corrupted files can be
/// loaded and then rejected with a named failing check.
inline ProblemInstance instance_from_json(const nlohmann::json& j) {
  ProblemInstance inst;
  inst.family = j.at("family").get<std::string>();
  inst.seed = j.at("seed").get<std::uint64_t>();
  inst.n = j.at("n").get<Eigen::Index>();
  inst.m = j.at("m").get<Eigen::Index>();
  inst.coupling_scale = j.value("coupling_scale", 0.0);
  inst.label = j.value("label", std::string("instance"));
  inst.params.mu = j.at("mu").get<double>();
  const auto& consts = j.at("constants");
  inst.params.l1 = consts.at("l1").get<double>();
  inst.params.l2 = consts.at("l2").get<double>();
  inst.params.lp = consts.at("lp").get<double>();

  const auto& mats = j.at("matrices");
  if (inst.family == "quadratic") {
    auto q = std::make_shared<QuadraticSaddle>(
        detail::matrix_from_json(mats.at("A"), inst.n, inst.n),
        detail::matrix_from_json(mats.at("B"), inst.n, inst.m),
        detail::matrix_from_json(mats.at("C"), inst.m, inst.m),
        detail::vector_from_json(mats.at("a"), inst.n),
        detail::vector_from_json(mats.at("c"), inst.m));
    inst.quadratic = q;
    inst.oracle = q;
  } else if (inst.family == "smooth_coupled") {
    auto s = std::make_shared<SmoothCoupledSaddle>(
        inst.params.mu, j.at("tau").get<double>(),
        detail::matrix_from_json(mats.at("B"), inst.n, inst.m));
    inst.smooth = s;
    inst.oracle = s;
  } else {
    require(false, "instance json: unknown family '" + inst.family + "'");
  }

  if (j.contains("reference_solution")) {
    inst.reference_solution =
        PointZ{detail::vector_from_json(j.at("reference_solution").at("x"),
                                        inst.n),
               detail::vector_from_json(j.at("reference_solution").at("y"),
                                        inst.m)};
  }
  if (j.contains("fault")) {
    GradFault fault;
    fault.index = j.at("fault").at("index").get<Eigen::Index>();
    fault.delta = j.at("fault").at("delta").get<double>();
    inst.fault = fault;
    inst.oracle = std::make_shared<FaultyOracle>(inst.oracle, fault);
  }
  return inst;
}

}  // namespace tmvi
