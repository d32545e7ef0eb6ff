#pragma once

#include <random>
#include <string>
#include <vector>

#include "tmvi/problems.hpp"

namespace tmvi {

struct VerifyCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct VerifyReport {
  std::vector<VerifyCheck> checks;

  bool all_passed() const {
    for (const auto& c : checks)
      if (!c.passed) return false;
    return true;
  }

  const VerifyCheck* first_failure() const {
    for (const auto& c : checks)
      if (!c.passed) return &c;
    return nullptr;
  }
};

namespace detail {

inline PointZ sample_point(const ProblemInstance& inst, std::mt19937_64& rng,
                           double scale = 1.5) {
  std::normal_distribution<double> normal(0.0, 1.0);
  PointZ center = inst.reference_solution
                      ? *inst.reference_solution
                      : PointZ::zero(inst.n, inst.m);
  PointZ z = center;
  for (Eigen::Index i = 0; i < inst.n; ++i) z.x(i) += scale * normal(rng);
  for (Eigen::Index i = 0; i < inst.m; ++i) z.y(i) += scale * normal(rng);
  return z;
}

}  // namespace detail

/// Derivative, monotonicity, Lipschitz and family-invariant checks against
/// the instance's declared constants. Report only; the CLI maps a failure to
/// exit code 4.
inline VerifyReport verify_instance(const ProblemInstance& inst,
                                    std::uint64_t sample_seed = 20240) {
  VerifyReport report;
  std::mt19937_64 rng(sample_seed);
  const SaddleOracle& oracle = *inst.oracle;
  const double mu = inst.params.mu;

  // Central-difference agreement of grad with value and jacobian_f with F.
  {
    double worst_grad = 0.0, worst_jac = 0.0;
    for (int k = 0; k < 20; ++k) {
      FdReport fd = fd_check(oracle, detail::sample_point(inst, rng));
      worst_grad = std::max(worst_grad, fd.max_grad_rel_err);
      worst_jac = std::max(worst_jac, fd.max_jacobian_rel_err);
    }
    report.checks.push_back({"fd_grad", worst_grad <= 1e-5,
                             "max rel err " + std::to_string(worst_grad)});
    report.checks.push_back({"fd_jacobian", worst_jac <= 1e-4,
                             "max rel err " + std::to_string(worst_jac)});
  }

  // <F(z1) - F(z2), z1 - z2> >= mu |z1 - z2|^2, sampled.
  {
    double worst = 0.0;  // most negative slack seen
    for (int k = 0; k < 1000; ++k) {
      PointZ z1 = detail::sample_point(inst, rng);
      PointZ z2 = detail::sample_point(inst, rng);
      PointZ df = operator_f(oracle, z1) - operator_f(oracle, z2);
      PointZ dz = z1 - z2;
      double slack = dot_z(df, dz) - mu * dot_z(dz, dz);
      worst = std::min(worst, slack);
    }
    report.checks.push_back({"strong_monotonicity", worst >= -1e-10,
                             "worst slack " + std::to_string(worst)});
  }

  // |F(z1) - F(z2)| <= L1 |z1 - z2|, sampled.
  {
    double worst_ratio = 0.0;
    for (int k = 0; k < 1000; ++k) {
      PointZ z1 = detail::sample_point(inst, rng);
      PointZ z2 = detail::sample_point(inst, rng);
      double dz = norm_z(z1 - z2);
      if (dz < 1e-12) continue;
      double df = norm_z(operator_f(oracle, z1) - operator_f(oracle, z2));
      worst_ratio = std::max(worst_ratio, df / dz);
    }
    report.checks.push_back(
        {"lipschitz_f", worst_ratio <= inst.params.l1 * (1.0 + 1e-9),
         "worst ratio " + std::to_string(worst_ratio) + " vs l1 " +
             std::to_string(inst.params.l1)});
  }

  if (inst.quadratic) {
    const auto& q = *inst.quadratic;
    double asym = (q.A() - q.A().transpose()).cwiseAbs().maxCoeff() +
                  (q.C() - q.C().transpose()).cwiseAbs().maxCoeff();
    report.checks.push_back(
        {"block_symmetry", asym <= 1e-10, "asymmetry " + std::to_string(asym)});

    Eigen::SelfAdjointEigenSolver<Matrix> eig_a(q.A());
    Eigen::SelfAdjointEigenSolver<Matrix> eig_c(q.C());
    double lam = std::min(eig_a.eigenvalues().minCoeff(),
                          eig_c.eigenvalues().minCoeff());
    report.checks.push_back(
        {"eigenvalue_floor", lam >= mu - 1e-9,
         "lambda_min " + std::to_string(lam) + " vs mu " + std::to_string(mu)});

    double jn = spectral_norm(q.stacked_jacobian());
    report.checks.push_back(
        {"l1_declared", inst.params.l1 >= jn * (1.0 - 1e-9),
         "|J| " + std::to_string(jn) + " vs l1 " +
             std::to_string(inst.params.l1)});
  }

  if (inst.smooth) {
    const auto& s = *inst.smooth;
    double l1_true = s.mu() + s.tau() + spectral_norm(s.B());
    report.checks.push_back(
        {"l1_declared", inst.params.l1 >= l1_true - 1e-9,
         "bound " + std::to_string(l1_true) + " vs l1 " +
             std::to_string(inst.params.l1)});
    double sampled = detail::certify_l2(s, rng, 64) / 1.5;
    report.checks.push_back(
        {"l2_declared", inst.params.l2 >= sampled * (1.0 - 1e-9),
         "sampled " + std::to_string(sampled) + " vs l2 " +
             std::to_string(inst.params.l2)});
  }

  if (inst.reference_solution) {
    double res = norm_z(operator_f(oracle, *inst.reference_solution));
    double scale = 1.0 + norm_z(operator_f(oracle, inst.default_start()));
    report.checks.push_back({"reference_residual", res <= 1e-10 * scale,
                             "|F(z*)| = " + std::to_string(res)});
  }

  return report;
}

}  // namespace tmvi
