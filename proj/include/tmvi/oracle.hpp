#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>

#include "tmvi/core.hpp"

namespace tmvi {

// ---------------------------------------------------------------------------
// SaddleOracle
// ---------------------------------------------------------------------------

/// Evaluation interface for a saddle function g(x, y). The monotone operator
/// is derived from it as F(z) = (grad_x g, -grad_y g); jacobian_f returns the
/// Jacobian of F directly (already sign-flipped in the y block).
///
/// Oracles are immutable after construction and safe for concurrent
/// evaluation. Call counters are per-run accumulators owned by the trace,
/// never by the oracle.
class SaddleOracle {
 public:
  virtual ~SaddleOracle() = default;

  virtual Eigen::Index n() const = 0;
  virtual Eigen::Index m() const = 0;

  virtual double value(const PointZ& z) const = 0;

  /// (grad_x g, grad_y g) -- the gradient of g, not of F.
  virtual PointZ grad(const PointZ& z) const = 0;

  /// Jacobian of F, an (n+m) x (n+m) matrix. Needed when p >= 2 or by CRN.
  virtual Matrix jacobian_f(const PointZ& z) const = 0;

  /// Optional directional second derivative of F, i.e. the application of
  /// the third derivative of g: returns the matrix d/dt JF(z + t d) at t=0.
  /// Only user-supplied inner solvers for p >= 3 need it.
  virtual std::optional<Matrix> apply_third(const PointZ& /*z*/,
                                            const PointZ& /*d*/) const {
    return std::nullopt;
  }

  /// Exact duality gap, when the instance has closed-form best responses.
  virtual std::optional<double> exact_duality_gap(const PointZ& /*z*/) const {
    return std::nullopt;
  }
};

inline double oracle_value(const SaddleOracle& oracle, const PointZ& z,
                           OracleCallCounts* counts = nullptr) {
  if (counts) ++counts->g_value;
  return oracle.value(z);
}

/// F(z) = (grad_x g, -grad_y g). One F call per invocation.
inline PointZ operator_f(const SaddleOracle& oracle, const PointZ& z,
                         OracleCallCounts* counts = nullptr) {
  require(z.is_finite(), "operator_f: non-finite input");
  PointZ g = oracle.grad(z);
  if (counts) ++counts->f;
  return {std::move(g.x), -g.y};
}

inline Matrix jacobian_f(const SaddleOracle& oracle, const PointZ& z,
                         OracleCallCounts* counts = nullptr) {
  if (counts) ++counts->jf;
  return oracle.jacobian_f(z);
}

/// Merit function m(z) = 0.5 |F(z)|^2; vanishes exactly at the saddle point.
inline double merit(const SaddleOracle& oracle, const PointZ& z,
                    OracleCallCounts* counts = nullptr) {
  PointZ f = operator_f(oracle, z, counts);
  return 0.5 * (f.x.squaredNorm() + f.y.squaredNorm());
}

inline double merit_of(const PointZ& f_value) {
  return 0.5 * (f_value.x.squaredNorm() + f_value.y.squaredNorm());
}

/// Exact duality gap G(z) = max_y' g(x, y') - min_x' g(x', y). Only
/// available on instances with closed-form best responses.
inline double duality_gap_exact(const SaddleOracle& oracle, const PointZ& z) {
  std::optional<double> gap = oracle.exact_duality_gap(z);
  require(gap.has_value(),
          "duality_gap_exact: instance lacks closed-form best responses");
  return *gap;
}

// ---------------------------------------------------------------------------
// Taylor model of F
// ---------------------------------------------------------------------------

/// Polynomial model of F around a center point, truncated at displacement
/// degree `degree`. Degree 0 is the constant model F(center); degree 1 adds
/// the Jacobian term. Higher degrees require a user-supplied extension.
struct TaylorModelF {
  PointZ center;
  int degree = 1;
  PointZ f_center;
  Matrix jf_center;  // empty unless degree >= 1
};

inline TaylorModelF make_taylor_model(const SaddleOracle& oracle,
                                      const PointZ& center, int degree,
                                      OracleCallCounts* counts = nullptr) {
  require(degree >= 0, "make_taylor_model: negative degree");
  TaylorModelF model;
  model.center = center;
  model.degree = degree;
  model.f_center = operator_f(oracle, center, counts);
  if (degree >= 1) model.jf_center = jacobian_f(oracle, center, counts);
  return model;
}

inline PointZ taylor_f_eval(const TaylorModelF& model, const PointZ& z_eval) {
  require(model.degree <= 1,
          "taylor_f_eval: degree >= 2 requires a user-supplied extension");
  if (model.degree == 0) return model.f_center;
  Vector d = (z_eval - model.center).stacked();
  Vector out = model.f_center.stacked() + model.jf_center * d;
  return PointZ::from_stacked(out, model.center.n(), model.center.m());
}

// ---------------------------------------------------------------------------
// Finite-difference verification
// ---------------------------------------------------------------------------

struct FdReport {
  double max_grad_rel_err = 0.0;      // grad vs central differences of value
  double max_jacobian_rel_err = 0.0;  // jacobian_f vs central differences of F
};

/// Central-difference check of grad against value and of jacobian_f columns
/// against F. Report only; thresholds are the caller's business.
inline FdReport fd_check(const SaddleOracle& oracle, const PointZ& z,
                         double h = 1e-6) {
  require(h > 0.0, "fd_check: step size must be positive");
  const Eigen::Index n = z.n(), m = z.m(), dim = n + m;
  FdReport report;

  const PointZ grad_an = oracle.grad(z);
  const Vector grad_an_s = grad_an.stacked();
  const Matrix jac_an = oracle.jacobian_f(z);

  Vector zs = z.stacked();
  for (Eigen::Index i = 0; i < dim; ++i) {
    Vector e = Vector::Zero(dim);
    e(i) = h;
    PointZ zp = PointZ::from_stacked(zs + e, n, m);
    PointZ zm = PointZ::from_stacked(zs - e, n, m);

    double fd_grad = (oracle.value(zp) - oracle.value(zm)) / (2.0 * h);
    double err = std::abs(fd_grad - grad_an_s(i)) /
                 std::max(1.0, std::abs(grad_an_s(i)));
    report.max_grad_rel_err = std::max(report.max_grad_rel_err, err);

    Vector fd_col =
        (operator_f(oracle, zp).stacked() - operator_f(oracle, zm).stacked()) /
        (2.0 * h);
    for (Eigen::Index r = 0; r < dim; ++r) {
      double jerr = std::abs(fd_col(r) - jac_an(r, i)) /
                    std::max(1.0, std::abs(jac_an(r, i)));
      report.max_jacobian_rel_err = std::max(report.max_jacobian_rel_err, jerr);
    }
  }
  return report;
}

}  // namespace tmvi
