#pragma once

#include <cmath>
#include <functional>
#include <utility>

#include "tmvi/core.hpp"
#include "tmvi/oracle.hpp"

namespace tmvi {

/// Cubic-regularized saddle subproblem at z_k:
///   min_x max_y  g(z_k) + <grad g, z - z_k> + 1/2 Hess g [z - z_k]^2
///                + gamma_k/3 |x - x_k|^3 - gamma_k/3 |y - y_k|^3.
/// Its first-order condition in operator form is
///   F(z_k) + JF(z_k) d + gamma_k (|d_x| d_x, |d_y| d_y) = 0.
struct CubicSubproblem {
  PointZ z_k;
  double gamma_k = 0.0;
  PointZ f_center;   // F(z_k)
  Matrix jf_center;  // JF(z_k)
};

namespace detail {

inline Vector cubic_linear_solve(const Matrix& jf, const Vector& f_s,
                                 double gamma, double r_x, double r_y,
                                 Eigen::Index n, Eigen::Index m) {
  Matrix a = jf;
  a.topLeftCorner(n, n).diagonal().array() += gamma * r_x;
  a.bottomRightCorner(m, m).diagonal().array() += gamma * r_y;
  Eigen::PartialPivLU<Matrix> lu(a);
  Vector b = -f_s;
  Vector d = lu.solve(b);
  d -= lu.solve(a * d - b);
  return d;
}

inline double cubic_residual(const CubicSubproblem& sub, const Vector& d_s) {
  const Eigen::Index n = sub.z_k.n(), m = sub.z_k.m();
  Vector v = sub.f_center.stacked() + sub.jf_center * d_s;
  v.head(n) += sub.gamma_k * d_s.head(n).norm() * d_s.head(n);
  v.tail(m) += sub.gamma_k * d_s.tail(m).norm() * d_s.tail(m);
  return v.norm();
}

}  // namespace detail

/// Solves the subproblem's operator equation via the radius parametrization:
/// for trial radii (r_x, r_y), solve the linear system
///   (JF + blockdiag(gamma r_x I, gamma r_y I)) d = -F,
/// then close the 2-D scalar system r_x = |d_x|, r_y = |d_y| by damped
/// fixed-point iteration, falling back to nested bisection. Every linear
/// system is nonsingular: the symmetric part of JF is positive definite and
/// the added diagonal is nonnegative.
///
/// Returns the displacement d; `mu` bounds the radii via |d| <= |F|/mu.
inline PointZ solve_cubic_subproblem(const CubicSubproblem& sub, double mu,
                                     double tol) {
  require(sub.gamma_k >= 0.0, "cubic subproblem: gamma_k must be >= 0");
  require(mu > 0.0, "cubic subproblem: mu must be positive");
  const Eigen::Index n = sub.z_k.n(), m = sub.z_k.m();
  const Vector f_s = sub.f_center.stacked();
  const double f_norm = f_s.norm();
  const double gamma = sub.gamma_k;

  if (f_norm == 0.0) return PointZ::zero(n, m);

  auto solve_at = [&](double r_x, double r_y) {
    return detail::cubic_linear_solve(sub.jf_center, f_s, gamma, r_x, r_y, n,
                                      m);
  };
  auto accept = [&](const Vector& d_s) {
    return detail::cubic_residual(sub, d_s) <= tol * (1.0 + f_norm);
  };

  // Exact Newton step when the regularization is off.
  if (gamma == 0.0) {
    Vector d = solve_at(0.0, 0.0);
    internal_check(accept(d), "cubic subproblem: Newton residual too large");
    return PointZ::from_stacked(d, n, m);
  }

  const double r_max = f_norm / mu * (1.0 + 1e-9);
  int outer = 0;
  constexpr int kMaxOuter = 100;
  constexpr int kDampedBudget = 30;

  // Damped fixed point on (r_x, r_y).
  double r_x = 0.0, r_y = 0.0;
  Vector d = solve_at(r_x, r_y);
  for (; outer < kDampedBudget; ++outer) {
    const double nx = d.head(n).norm(), ny = d.tail(m).norm();
    if (std::abs(nx - r_x) <= 1e-15 * (1.0 + nx) &&
        std::abs(ny - r_y) <= 1e-15 * (1.0 + ny) && accept(d)) {
      return PointZ::from_stacked(d, n, m);
    }
    r_x = 0.5 * r_x + 0.5 * nx;
    r_y = 0.5 * r_y + 0.5 * ny;
    d = solve_at(r_x, r_y);
  }
  if (accept(d)) return PointZ::from_stacked(d, n, m);

  // Nested bisection fallback. Inner: for fixed r_x the map
  // r_y -> |d_y(r_x, r_y)| is continuous and nonincreasing, so
  // h(r_y) = |d_y| - r_y has exactly one root in [0, r_max].
  auto inner_radius = [&](double rx) {
    double a = 0.0, b = r_max;
    for (int it = 0; it < 60; ++it) {
      double mid = 0.5 * (a + b);
      Vector dm = solve_at(rx, mid);
      if (dm.tail(m).norm() > mid)
        a = mid;
      else
        b = mid;
    }
    return 0.5 * (a + b);
  };

  double a = 0.0, b = r_max;
  for (; outer < kMaxOuter; ++outer) {
    double mid = 0.5 * (a + b);
    double ry = inner_radius(mid);
    Vector dm = solve_at(mid, ry);
    if (dm.head(n).norm() > mid)
      a = mid;
    else
      b = mid;
    if (b - a <= 1e-15 * (1.0 + r_max)) break;
  }
  r_x = 0.5 * (a + b);
  r_y = inner_radius(r_x);
  d = solve_at(r_x, r_y);
  if (!accept(d))
    throw InnerSolveError(
        "cubic subproblem: fixed point not reached within the outer budget");
  return PointZ::from_stacked(d, n, m);
}

struct CrnState {
  PointZ z_k;
  double gamma_k = 0.0;
  int k = 0;
};

struct CrnStepInfo {
  int k = 0;
  double gamma_k = 0.0;
  PointZ d;
  bool took_alpha_step = false;
  PointZ z_next;
};

using CrnObserver = std::function<void(const CrnStepInfo&)>;

namespace detail {

struct CrnEval {
  PointZ f;       // F at the current iterate
  double merit;   // 0.5 |F|^2
};

/// One CRN iteration: reset gamma_k to gamma_bar, shrink it by rho until
/// gamma_k (|d_x| + |d_y|) <= mu, then pick z + alpha d or z + d by merit.
/// Returns the evaluation at the accepted point (its F was already paid for
/// by the merit comparison).
inline CrnEval crn_step(const SaddleOracle& oracle, const SolverParams& params,
                        double gamma_bar, CrnState& state, const CrnEval& at_z,
                        OracleCallCounts* counts, CrnStepInfo* info = nullptr) {
  CubicSubproblem sub;
  sub.z_k = state.z_k;
  sub.f_center = at_z.f;
  sub.jf_center = jacobian_f(oracle, state.z_k, counts);

  double gamma_k = gamma_bar;
  PointZ d;
  constexpr int kMaxBacktracks = 200;
  int backtracks = 0;
  while (true) {
    sub.gamma_k = gamma_k;
    d = solve_cubic_subproblem(sub, params.mu, params.inner_tol);
    if (gamma_k * (d.x.norm() + d.y.norm()) <= params.mu) break;
    gamma_k *= params.rho;
    if (++backtracks > kMaxBacktracks)
      throw InnerSolveError("crn_step: backtracking exceeded 200 shrinks");
  }
  internal_check(gamma_k * (d.x.norm() + d.y.norm()) <= params.mu,
                 "crn_step: backtracking postcondition failed");

  PointZ z_full = state.z_k + d;
  PointZ z_alpha = state.z_k + params.alpha * d;
  PointZ f_full = operator_f(oracle, z_full, counts);
  PointZ f_alpha = operator_f(oracle, z_alpha, counts);
  const double m_full = merit_of(f_full);
  const double m_alpha = merit_of(f_alpha);

  const bool take_alpha = m_alpha < m_full;
  state.z_k = take_alpha ? std::move(z_alpha) : std::move(z_full);
  state.gamma_k = gamma_k;
  state.k += 1;

  if (info) {
    info->gamma_k = gamma_k;
    info->d = std::move(d);
    info->took_alpha_step = take_alpha;
    info->z_next = state.z_k;
  }
  return take_alpha ? CrnEval{std::move(f_alpha), m_alpha}
                    : CrnEval{std::move(f_full), m_full};
}

}  // namespace detail

/// CRN-SPP: iterate until m(z_k) <= eps_merit. gamma_bar is the initial
/// cubic weight (0 collapses every step to a pure Newton step, the exact
/// limit of the formulas).
inline PointZ crn_run(const SaddleOracle& oracle, const SolverParams& params,
                      double gamma_bar, const PointZ& z0, double eps_merit,
                      RunTrace& trace, int max_iters = 100,
                      const PointZ* z_ref = nullptr,
                      const CrnObserver& observer = {}) {
  require(eps_merit > 0.0, "crn_run: eps_merit must be positive");
  require(gamma_bar >= 0.0, "crn_run: gamma_bar must be nonnegative");

  CrnState state;
  state.z_k = z0;
  detail::CrnEval eval{operator_f(oracle, z0, &trace.counts), 0.0};
  eval.merit = merit_of(eval.f);

  while (eval.merit > eps_merit) {
    if (state.k >= max_iters) {
      trace.status = RunStatus::BudgetExceeded;
      return state.z_k;
    }
    CrnStepInfo info;
    info.k = state.k;
    const double f_norm_before = norm_z(eval.f);
    std::optional<double> dist_before;
    if (z_ref) dist_before = norm_z(state.z_k - *z_ref);

    eval = detail::crn_step(oracle, params, gamma_bar, state, eval,
                            &trace.counts, &info);

    IterationRecord rec;
    rec.phase = Phase::Crn;
    rec.iter = state.k;
    rec.gamma = state.gamma_k;
    rec.f_norm = f_norm_before;
    rec.dist_to_ref = dist_before;
    trace.add_record(rec);
    if (observer) observer(info);
  }
  return state.z_k;
}

}  // namespace tmvi
