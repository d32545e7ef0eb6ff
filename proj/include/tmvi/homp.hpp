#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "tmvi/core.hpp"
#include "tmvi/oracle.hpp"

namespace tmvi {

inline double factorial(int p) {
  double f = 1.0;
  for (int i = 2; i <= p; ++i) f *= i;
  return f;
}

/// Admissible step-size window of the implicit step, as a function of the
/// displacement d = z_hat - z_t it produces:
///   p!/(32 L_p |d|^{p-1}) <= gamma <= p!/(16 L_p |d|^{p-1}).
struct GammaBracket {
  double lower = 0.0;
  double upper = 0.0;

  static GammaBracket at(int p, double lp, double d_norm) {
    const double denom = lp * std::pow(d_norm, p - 1);
    if (denom <= 0.0) {
      constexpr double inf = std::numeric_limits<double>::infinity();
      return {inf, inf};
    }
    return {factorial(p) / (32.0 * denom), factorial(p) / (16.0 * denom)};
  }

  bool contains(double gamma, double rel_slack = 1e-9) const {
    return gamma >= lower * (1.0 - rel_slack) &&
           gamma <= upper * (1.0 + rel_slack);
  }
};

/// Hook for user-supplied inner solvers at p >= 3: must return z_hat with
/// gamma * Phi^F_{z_t,p}(z_hat) + (z_hat - z_t) = 0 to the caller's
/// tolerance.
using CustomImplicitStep = std::function<PointZ(
    const SaddleOracle& oracle, const PointZ& z_t, double gamma)>;

namespace detail {

/// Order-p implicit step from cached F(z_t) (and, for p = 2, JF(z_t)).
/// p = 1 is the closed form z_t - gamma F(z_t); p = 2 solves the linear
/// system (I + gamma JF) d = -gamma F, well-posed because the symmetric part
/// of JF is positive semidefinite.
inline PointZ implicit_step_cached(const PointZ& z_t, const PointZ& f_zt,
                                   const Matrix* jf_zt, double gamma, int p,
                                   double inner_tol) {
  require(gamma > 0.0, "implicit_step: gamma must be positive");
  if (p == 1) return z_t - gamma * f_zt;

  require(p == 2 && jf_zt != nullptr,
          "implicit_step: built-in path supports p in {1, 2}");
  const Eigen::Index dim = z_t.dim();
  Matrix a = Matrix::Identity(dim, dim) + gamma * (*jf_zt);
  Vector b = -gamma * f_zt.stacked();
  Eigen::PartialPivLU<Matrix> lu(a);
  Vector d = lu.solve(b);
  // Two refinement sweeps keep the optimality residual at the rounding
  // floor even when gamma is large.
  for (int sweep = 0; sweep < 2; ++sweep) d -= lu.solve(a * d - b);

  const double residual = (a * d - b).norm();
  internal_check(residual <= inner_tol * (1.0 + norm_z(f_zt)),
                 "implicit_step: optimality residual above tolerance");
  return z_t + PointZ::from_stacked(d, z_t.n(), z_t.m());
}

}  // namespace detail

/// Public form of the implicit step; evaluates the oracle at z_t.
inline PointZ implicit_step(const SaddleOracle& oracle, const PointZ& z_t,
                            double gamma, int p, const SolverParams& params,
                            OracleCallCounts* counts = nullptr,
                            const CustomImplicitStep& custom = {}) {
  if (p >= 3) {
    require(static_cast<bool>(custom),
            "implicit_step: p >= 3 requires a user-supplied inner solver");
    return custom(oracle, z_t, gamma);
  }
  PointZ f_zt = operator_f(oracle, z_t, counts);
  if (p == 1)
    return detail::implicit_step_cached(z_t, f_zt, nullptr, gamma, p,
                                        params.inner_tol);
  Matrix jf = jacobian_f(oracle, z_t, counts);
  return detail::implicit_step_cached(z_t, f_zt, &jf, gamma, p,
                                      params.inner_tol);
}

/// How a gamma search terminated.
enum class GammaAccept {
  Bracket,  // the joint bracket condition holds
  Floor,    // displacement below the stationarity floor at gamma_max
  Cap       // gamma_max reached with s(gamma) still under the bracket
};

struct GammaSearchResult {
  double gamma = 0.0;
  PointZ z_hat;
  GammaAccept accept = GammaAccept::Bracket;
  int probes = 0;
};

/// Determines (gamma_t, z_hat_t) jointly: s(gamma) = gamma L_p |d(gamma)|^{p-1}
/// must land in [p!/32, p!/16]. Expansion doubles/jumps gamma, then bisects
/// on log gamma once the target is straddled; each probe is one implicit
/// step. For p = 1 the condition is gamma-only and no search runs.
///
/// The bisection presumes |d(gamma)| nondecreasing in gamma; violations are
/// counted via `monotonicity_violations` rather than assumed away.
inline GammaSearchResult find_gamma(const PointZ& z_t, const PointZ& f_zt,
                                    const Matrix* jf_zt, int p,
                                    const SolverParams& params,
                                    double gamma_warm,
                                    int* monotonicity_violations = nullptr,
                                    const std::function<PointZ(double)>&
                                        custom_probe = {}) {
  const double lp = params.lipschitz_for_order(p);
  require(lp > 0.0, "find_gamma: lp must be positive");

  if (p == 1) {
    // The residual bound needs Gamma_T >= T/(16 L_1), so the top end of the
    // displacement-free bracket is the only admissible fixed choice.
    GammaSearchResult res;
    res.gamma = factorial(p) / (16.0 * lp);
    res.z_hat = detail::implicit_step_cached(z_t, f_zt, nullptr, res.gamma, p,
                                             params.inner_tol);
    res.probes = 1;
    return res;
  }

  auto probe = [&](double gamma) {
    return custom_probe ? custom_probe(gamma)
                        : detail::implicit_step_cached(
                              z_t, f_zt, jf_zt, gamma, p, params.inner_tol);
  };

  const double lo = factorial(p) / 32.0;
  const double hi = factorial(p) / 16.0;
  const double floor_d = 1e-13 * (1.0 + norm_z(z_t));
  constexpr int kMaxProbes = 60;

  std::vector<std::pair<double, double>> probe_log;  // (gamma, |d|)
  std::optional<double> below, above;
  double gamma = std::clamp(gamma_warm, 1e-12, params.gamma_max);

  GammaSearchResult res;
  for (res.probes = 1; res.probes <= kMaxProbes; ++res.probes) {
    PointZ z_hat = probe(gamma);
    const double d_norm = norm_z(z_hat - z_t);
    probe_log.emplace_back(gamma, d_norm);
    const double s = gamma * lp * std::pow(d_norm, p - 1);

    auto finish = [&](GammaAccept accept) {
      res.gamma = gamma;
      res.z_hat = std::move(z_hat);
      res.accept = accept;
      if (monotonicity_violations) {
        std::sort(probe_log.begin(), probe_log.end());
        for (std::size_t i = 1; i < probe_log.size(); ++i) {
          if (probe_log[i].second <
              probe_log[i - 1].second * (1.0 - 1e-10) - 1e-15) {
            ++*monotonicity_violations;
            break;
          }
        }
      }
      return res;
    };

    if (s >= lo * (1.0 - 1e-9) && s <= hi * (1.0 + 1e-9))
      return finish(GammaAccept::Bracket);

    if (s < lo) {
      below = gamma;
      if (gamma >= params.gamma_max * (1.0 - 1e-12)) {
        // The bracket is unreachable under the cap; a tiny displacement
        // means the iterate is numerically converged.
        gamma = params.gamma_max;
        return finish(d_norm <= floor_d ? GammaAccept::Floor
                                        : GammaAccept::Cap);
      }
      if (above) {
        gamma = std::sqrt(below.value() * above.value());
      } else {
        double jump = s > 0.0 ? std::min(1e4, std::max(2.0, 1.05 * lo / s))
                              : std::numeric_limits<double>::infinity();
        gamma = std::min(gamma * jump, params.gamma_max);
      }
    } else {  // s > hi
      above = gamma;
      if (below) {
        gamma = std::sqrt(below.value() * above.value());
      } else {
        gamma *= 0.5;
        if (gamma < 1e-300)
          throw InnerSolveError("find_gamma: gamma underflow");
      }
    }
  }
  throw InnerSolveError(
      "find_gamma: bracket not located in 60 probes (non-monotone s(gamma) "
      "or degenerate instance)");
}

/// Per-iteration view handed to observers; needed by the residual-bound
/// accounting of the tests.
struct HompIterInfo {
  int t = 0;
  double gamma = 0.0;
  GammaAccept accept = GammaAccept::Bracket;
  const PointZ* z_t = nullptr;
  const PointZ* z_hat = nullptr;
  const PointZ* f_z_hat = nullptr;
};

using HompObserver = std::function<void(const HompIterInfo&)>;

/// HighOrderMirrorProx: T implicit extragradient iterations from z1,
/// returning the gamma-weighted average of the z_hat iterates. The trace is
/// extended with one record per iteration.
inline PointZ homp_run(const SaddleOracle& oracle, const SolverParams& params,
                       int p, const PointZ& z1, int iterations,
                       RunTrace& trace, int restart_index = 0,
                       const PointZ* z_ref = nullptr,
                       const HompObserver& observer = {},
                       const CustomImplicitStep& custom = {}) {
  require(iterations >= 1, "homp_run: need at least one iteration");
  require(p >= 1, "homp_run: p must be >= 1");
  require(p <= 2 || static_cast<bool>(custom),
          "homp_run: p >= 3 requires a user-supplied inner solver");

  PointZ z_t = z1;
  PointZ weighted_sum = PointZ::zero(z1.n(), z1.m());
  double gamma_total = 0.0;
  double gamma_warm = 1.0;

  for (int t = 1; t <= iterations; ++t) {
    PointZ f_t = operator_f(oracle, z_t, &trace.counts);
    Matrix jf_t;
    if (p == 2) jf_t = jacobian_f(oracle, z_t, &trace.counts);

    std::function<PointZ(double)> custom_probe;
    if (custom)
      custom_probe = [&](double g) { return custom(oracle, z_t, g); };

    GammaSearchResult step =
        find_gamma(z_t, f_t, p == 2 ? &jf_t : nullptr, p, params, gamma_warm,
                   &trace.gamma_monotonicity_violations, custom_probe);

    if (step.accept == GammaAccept::Bracket) {
      const double d_norm = norm_z(step.z_hat - z_t);
      internal_check(
          GammaBracket::at(p, params.lipschitz_for_order(p), d_norm)
              .contains(step.gamma),
          "homp_run: accepted gamma escaped its bracket");
    }

    PointZ f_hat = operator_f(oracle, step.z_hat, &trace.counts);

    IterationRecord rec;
    rec.phase = Phase::Homp;
    rec.restart_index = restart_index;
    rec.iter = t;
    rec.gamma = step.gamma;
    rec.f_norm = norm_z(f_t);
    if (z_ref) rec.dist_to_ref = norm_z(z_t - *z_ref);
    trace.add_record(rec);

    if (observer) {
      HompIterInfo info;
      info.t = t;
      info.gamma = step.gamma;
      info.accept = step.accept;
      info.z_t = &z_t;
      info.z_hat = &step.z_hat;
      info.f_z_hat = &f_hat;
      observer(info);
    }

    weighted_sum += step.gamma * step.z_hat;
    gamma_total += step.gamma;
    gamma_warm = step.gamma;
    z_t = z_t - step.gamma * f_hat;
  }

  internal_check(gamma_total > 0.0, "homp_run: Gamma_T must be positive");
  return weighted_sum * (1.0 / gamma_total);
}

}  // namespace tmvi
