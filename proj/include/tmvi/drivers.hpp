#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <vector>

#include "tmvi/core.hpp"
#include "tmvi/crn.hpp"
#include "tmvi/homp.hpp"
#include "tmvi/oracle.hpp"

namespace tmvi {

namespace detail {

/// Ceil with a relative guard so that analytically integer values (64^{2/3},
/// log2 of powers of two) do not round up by one.
inline int ceil_guarded(double v) {
  return static_cast<int>(std::ceil(v - std::abs(v) * 1e-12 - 1e-12));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Restart schedules
// ---------------------------------------------------------------------------

/// Halving radii R_i = R / 2^{i-1} with per-restart budgets
/// T_i = ceil((64 L_p R_i^{p-1} / mu)^{2/(p+1)}), clamped to >= 1.
struct RestartSchedule {
  int n = 1;
  std::vector<double> radii;
  std::vector<int> budgets;

  static int budget_for_radius(const SolverParams& params, int p,
                               double radius) {
    const double lp = params.lipschitz_for_order(p);
    const double t = std::pow(64.0 * lp * std::pow(radius, p - 1) / params.mu,
                              2.0 / (p + 1));
    return std::max(1, detail::ceil_guarded(t));
  }

  static RestartSchedule with_restart_count(const SolverParams& params, int p,
                                            int n) {
    RestartSchedule s;
    s.n = std::max(1, n);
    double radius = params.r0;
    for (int i = 1; i <= s.n; ++i) {
      s.radii.push_back(radius);
      s.budgets.push_back(budget_for_radius(params, p, radius));
      radius *= 0.5;
    }
    return s;
  }

  /// Restart count for a duality-gap target: n = ceil(1/2 log2(mu R^2 / eps)).
  static RestartSchedule for_gap_target(const SolverParams& params, int p) {
    const double v =
        0.5 * std::log2(params.mu * params.r0 * params.r0 / params.eps_gap);
    return with_restart_count(params, p, detail::ceil_guarded(v));
  }

  /// Restart count that lands inside the CRN quadratic-convergence region
  /// |z - z*| <= mu/(L2 xi): n = ceil(log2(L2 R xi / mu) + 1). With L2 = 0
  /// the region is all of space and a single restart suffices.
  static RestartSchedule for_quadratic_region(const SolverParams& params,
                                              int p) {
    if (params.l2 <= 0.0) return with_restart_count(params, p, 1);
    const double v =
        std::log2(params.l2 * params.r0 * params.xi() / params.mu) + 1.0;
    return with_restart_count(params, p, detail::ceil_guarded(v));
  }
};

using RestartObserver =
    std::function<void(int restart_index, const PointZ& z_tilde)>;

namespace detail {

inline PointZ run_restart_loop(const SaddleOracle& oracle,
                               const SolverParams& params, int p,
                               const RestartSchedule& schedule,
                               const PointZ& z1, RunTrace& trace,
                               const PointZ* z_ref,
                               const RestartObserver& on_restart) {
  PointZ z_tilde = z1;
  for (int i = 1; i <= schedule.n; ++i) {
    z_tilde = homp_run(oracle, params, p, z_tilde, schedule.budgets[i - 1],
                       trace, i, z_ref);
    if (on_restart) on_restart(i, z_tilde);
  }
  return z_tilde;
}

}  // namespace detail

/// Restarted HighOrderMirrorProx. After n = ceil(1/2 log2(mu R^2/eps_gap))
/// restarts the averaged residual is below eps_gap and the distance to the
/// solution has halved once per restart.
inline PointZ restarted_homp(const SaddleOracle& oracle,
                             const SolverParams& params, const PointZ& z1,
                             RunTrace& trace, const PointZ* z_ref = nullptr,
                             const RestartObserver& on_restart = {}) {
  params.validate();
  RestartSchedule schedule = RestartSchedule::for_gap_target(params, params.p);
  PointZ out = detail::run_restart_loop(oracle, params, params.p, schedule, z1,
                                        trace, z_ref, on_restart);
  trace.final_point = out;
  return out;
}

/// Restarted mirror-prox until the iterate enters the CRN quadratic
/// convergence region, then CRN down to merit level mu^2 eps_gap / L1, which
/// bounds the duality gap by eps_gap.
inline PointZ hybrid_solve(const SaddleOracle& oracle,
                           const SolverParams& params, const PointZ& z1,
                           RunTrace& trace, const PointZ* z_ref = nullptr,
                           int crn_budget = 100,
                           const RestartObserver& on_restart = {},
                           const CrnObserver& crn_observer = {}) {
  params.validate();
  RestartSchedule schedule =
      RestartSchedule::for_quadratic_region(params, params.p);
  PointZ handoff = detail::run_restart_loop(oracle, params, params.p, schedule,
                                            z1, trace, z_ref, on_restart);
  trace.handoff_point = handoff;

  const double eps_merit = params.mu * params.mu * params.eps_gap / params.l1;
  const double gamma_bar =
      params.l2 * params.mu * params.mu / (2.0 * params.l1 * params.l1);
  PointZ out = crn_run(oracle, params, gamma_bar, handoff, eps_merit, trace,
                       crn_budget, z_ref, crn_observer);
  trace.final_point = out;
  return out;
}

// ---------------------------------------------------------------------------
// Tensor step
// ---------------------------------------------------------------------------

/// Min-max point of the regularized Taylor model Omega_{z,p,M}. For p = 2
/// the regularizer M sqrt(2)/3! (|d_x|^3 - |d_y|^3) yields the stationarity
/// system F(z) + JF(z) d + (M sqrt(2)/2)(|d_x| d_x, |d_y| d_y) = 0, which
/// reuses the cubic subproblem solver with gamma_eff = M sqrt(2)/2.
inline PointZ tensor_step(const SaddleOracle& oracle, const PointZ& z, int p,
                          double big_m, const SolverParams& params,
                          OracleCallCounts* counts = nullptr) {
  require(p == 2, "tensor_step: built-in path requires p = 2");
  const double lp = params.lipschitz_for_order(p);
  require(big_m >= std::sqrt(2.0) * p * lp * (1.0 - 1e-12),
          "tensor_step: M must be >= sqrt(2) p L_p");
  CubicSubproblem sub;
  sub.z_k = z;
  sub.gamma_k = big_m * std::sqrt(2.0) / 2.0;
  sub.f_center = operator_f(oracle, z, counts);
  sub.jf_center = jacobian_f(oracle, z, counts);
  PointZ d = solve_cubic_subproblem(sub, params.mu, params.inner_tol);
  return z + d;
}

/// Both sides of the gradient-norm/objective-residual inequality satisfied
/// by a tensor step output z_tilde from z:
///   |grad g(z~)|^{(p+1)/p} M^{(3p+1)/(2p)} / (2^{(2p^2+p+1)/(2p)} p (p+1)!)
///     <= g(x, y~) - g(x~, y).
struct TensorGapCheck {
  double lhs = 0.0;
  double rhs = 0.0;
};

inline TensorGapCheck tensor_step_gap_check(const SaddleOracle& oracle,
                                            const PointZ& z,
                                            const PointZ& z_tilde, int p,
                                            double big_m,
                                            OracleCallCounts* counts =
                                                nullptr) {
  TensorGapCheck check;
  const double grad_norm = norm_z(operator_f(oracle, z_tilde, counts));
  const double pd = static_cast<double>(p);
  check.lhs = std::pow(grad_norm, (pd + 1.0) / pd) *
              std::pow(big_m, (3.0 * pd + 1.0) / (2.0 * pd)) /
              (std::pow(2.0, (2.0 * pd * pd + pd + 1.0) / (2.0 * pd)) * pd *
               factorial(p + 1));
  check.rhs = oracle_value(oracle, {z.x, z_tilde.y}, counts) -
              oracle_value(oracle, {z_tilde.x, z.y}, counts);
  return check;
}

// ---------------------------------------------------------------------------
// Gradient-norm minimization
// ---------------------------------------------------------------------------

/// g_mu(x, y) = g(x, y) + mu_reg/2 (|x - x1|^2 - |y - y1|^2). Its operator is
/// F(z) + mu_reg (z - z1) in the stacked convention, so the strong
/// monotonicity modulus grows by exactly mu_reg.
class RegularizedOracle : public SaddleOracle {
 public:
  RegularizedOracle(const SaddleOracle& base, PointZ anchor, double mu_reg)
      : base_(&base), anchor_(std::move(anchor)), mu_reg_(mu_reg) {
    require(mu_reg_ >= 0.0, "RegularizedOracle: mu_reg must be >= 0");
  }

  Eigen::Index n() const override { return base_->n(); }
  Eigen::Index m() const override { return base_->m(); }

  double value(const PointZ& z) const override {
    return base_->value(z) +
           0.5 * mu_reg_ * ((z.x - anchor_.x).squaredNorm() -
                            (z.y - anchor_.y).squaredNorm());
  }

  PointZ grad(const PointZ& z) const override {
    PointZ g = base_->grad(z);
    g.x += mu_reg_ * (z.x - anchor_.x);
    g.y -= mu_reg_ * (z.y - anchor_.y);
    return g;
  }

  Matrix jacobian_f(const PointZ& z) const override {
    Matrix j = base_->jacobian_f(z);
    j.diagonal().array() += mu_reg_;
    return j;
  }

  double mu_reg() const { return mu_reg_; }
  const PointZ& anchor() const { return anchor_; }
  const SaddleOracle& base() const { return *base_; }

 private:
  const SaddleOracle* base_;
  PointZ anchor_;
  double mu_reg_;
};

/// Observability handle for the gradient-norm driver.
struct GradnormDetails {
  double mu_reg = 0.0;
  double big_m = 0.0;
  double eps_prime = 0.0;
  double eps_merit = 0.0;
  SolverParams params_reg;  // constants of the regularized problem
  PointZ crn_output;        // input of the final tensor step
  std::shared_ptr<RegularizedOracle> regularized;
};

/// Gradient-norm minimization: regularize around z1 with mu_reg =
/// eps_grad/(4R), run the restarted mirror-prox + CRN pipeline on g_mu to a
/// merit level derived from eps', then take one tensor step with
/// M = sqrt(2) p L_p. The output satisfies |grad g| <= eps_grad for the
/// ORIGINAL objective.
inline PointZ gradnorm_solve(const SaddleOracle& oracle,
                             const SolverParams& params, const PointZ& z1,
                             double eps_grad, double big_r, RunTrace& trace,
                             GradnormDetails* details = nullptr,
                             int crn_budget = 100,
                             const RestartObserver& on_restart = {}) {
  params.validate();
  require(eps_grad > 0.0, "gradnorm_solve: eps_grad must be positive");
  require(big_r > 0.0, "gradnorm_solve: R must be positive");
  const int p = params.p;
  require(p == 2, "gradnorm_solve: built-in path requires p = 2");

  const double mu_reg = eps_grad / (4.0 * big_r);
  auto reg = std::make_shared<RegularizedOracle>(oracle, z1, mu_reg);

  // The regularized problem is (mu + mu_reg)-strongly monotone with
  // Lipschitz constant L1 + mu_reg; second and higher orders are untouched.
  SolverParams reg_params = params;
  reg_params.mu = params.mu + mu_reg;
  reg_params.l1 = params.l1 + mu_reg;
  reg_params.r0 = big_r;

  const double pd = static_cast<double>(p);
  const double big_m = std::sqrt(2.0) * pd * params.lipschitz_for_order(p);
  const double eps_prime =
      std::pow(big_m, (3.0 * pd + 1.0) / (2.0 * pd)) *
      std::pow(eps_grad, (pd + 1.0) / pd) /
      (std::pow(2.0, (2.0 * pd * pd + 3.0 * pd + 3.0) / (2.0 * pd)) * pd *
       factorial(p + 1));
  const double eps_merit =
      reg_params.mu * reg_params.mu * eps_prime / reg_params.l1;

  RestartSchedule schedule =
      RestartSchedule::for_quadratic_region(reg_params, p);
  PointZ handoff = detail::run_restart_loop(*reg, reg_params, p, schedule, z1,
                                            trace, nullptr, on_restart);
  trace.handoff_point = handoff;

  const double gamma_bar = reg_params.l2 * reg_params.mu * reg_params.mu /
                           (2.0 * reg_params.l1 * reg_params.l1);
  PointZ z_k = crn_run(*reg, reg_params, gamma_bar, handoff, eps_merit, trace,
                       crn_budget);

  PointZ out = tensor_step(*reg, z_k, p, big_m, reg_params, &trace.counts);

  IterationRecord rec;
  rec.phase = Phase::TensorStep;
  rec.iter = 1;
  rec.gamma = big_m * std::sqrt(2.0) / 2.0;
  rec.f_norm = norm_z(operator_f(*reg, out, &trace.counts));
  trace.add_record(rec);
  trace.final_point = out;

  if (details) {
    details->mu_reg = mu_reg;
    details->big_m = big_m;
    details->eps_prime = eps_prime;
    details->eps_merit = eps_merit;
    details->params_reg = reg_params;
    details->crn_output = z_k;
    details->regularized = reg;
  }
  return out;
}

}  // namespace tmvi
