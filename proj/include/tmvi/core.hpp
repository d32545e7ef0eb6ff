#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace tmvi {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Thrown when an inner solve (gamma search, cubic subproblem, reference
/// Newton) cannot reach its tolerance within its probe budget.
class InnerSolveError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Contract violation on a public operation (dimension mismatch, bad input).
inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

/// In-loop invariant check. Failures indicate a bug or a pathological
/// instance, not a user error.
inline void internal_check(bool cond, const std::string& msg) {
  if (!cond) throw std::logic_error(msg);
}

// ---------------------------------------------------------------------------
// PointZ
// ---------------------------------------------------------------------------

/// A paired primal/dual point z = (x, y) in R^n x R^m.
struct PointZ {
  Vector x;
  Vector y;

  PointZ() = default;
  PointZ(Vector x_, Vector y_) : x(std::move(x_)), y(std::move(y_)) {}

  static PointZ zero(Eigen::Index n, Eigen::Index m) {
    return {Vector::Zero(n), Vector::Zero(m)};
  }

  Eigen::Index n() const { return x.size(); }
  Eigen::Index m() const { return y.size(); }
  Eigen::Index dim() const { return x.size() + y.size(); }

  bool same_shape(const PointZ& o) const {
    return x.size() == o.x.size() && y.size() == o.y.size();
  }

  bool is_finite() const { return x.allFinite() && y.allFinite(); }

  /// Stacked (x; y) view used by the linear algebra of the implicit steps.
  Vector stacked() const {
    Vector v(dim());
    v.head(x.size()) = x;
    v.tail(y.size()) = y;
    return v;
  }

  static PointZ from_stacked(const Vector& v, Eigen::Index n, Eigen::Index m) {
    require(v.size() == n + m, "from_stacked: size mismatch");
    return {v.head(n), v.tail(m)};
  }

  PointZ& operator+=(const PointZ& o) {
    require(same_shape(o), "PointZ +=: dimension mismatch");
    x += o.x;
    y += o.y;
    return *this;
  }
  PointZ& operator-=(const PointZ& o) {
    require(same_shape(o), "PointZ -=: dimension mismatch");
    x -= o.x;
    y -= o.y;
    return *this;
  }
  PointZ& operator*=(double s) {
    x *= s;
    y *= s;
    return *this;
  }

  friend PointZ operator+(PointZ a, const PointZ& b) { return a += b; }
  friend PointZ operator-(PointZ a, const PointZ& b) { return a -= b; }
  friend PointZ operator*(double s, PointZ a) { return a *= s; }
  friend PointZ operator*(PointZ a, double s) { return a *= s; }
  friend PointZ operator-(PointZ a) { return a *= -1.0; }
};

inline double dot_z(const PointZ& a, const PointZ& b) {
  require(a.same_shape(b), "dot_z: dimension mismatch");
  return a.x.dot(b.x) + a.y.dot(b.y);
}

/// Euclidean norm of the stacked pair: sqrt(|x|^2 + |y|^2).
inline double norm_z(const PointZ& z) {
  require(z.is_finite(), "norm_z: non-finite input");
  return std::sqrt(z.x.squaredNorm() + z.y.squaredNorm());
}

/// Half squared Euclidean distance D(z1, z2) = 0.5 * |z1 - z2|^2.
inline double bregman(const PointZ& z1, const PointZ& z2) {
  require(z1.same_shape(z2), "bregman: dimension mismatch");
  return 0.5 * ((z1.x - z2.x).squaredNorm() + (z1.y - z2.y).squaredNorm());
}

/// Convex combination sum(w_t z_t) / sum(w_t). Weights must be positive.
inline PointZ weighted_average(const std::vector<PointZ>& points,
                               const std::vector<double>& weights) {
  require(!points.empty(), "weighted_average: empty input");
  require(points.size() == weights.size(),
          "weighted_average: points/weights length mismatch");
  PointZ acc = PointZ::zero(points.front().n(), points.front().m());
  double total = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    require(weights[i] > 0.0 && std::isfinite(weights[i]),
            "weighted_average: nonpositive weight");
    require(points[i].same_shape(points.front()),
            "weighted_average: dimension mismatch");
    acc += weights[i] * points[i];
    total += weights[i];
  }
  acc *= 1.0 / total;
  require(acc.is_finite(), "weighted_average: non-finite result");
  return acc;
}

// ---------------------------------------------------------------------------
// SolverParams
// ---------------------------------------------------------------------------

/// All constants the algorithms consume. Field names follow the config-file
/// schema one to one.
struct SolverParams {
  double mu = 1.0;        // strong-monotonicity modulus
  double l1 = 1.0;        // Lipschitz constant of F
  double l2 = 0.0;        // Lipschitz constant of the Jacobian of F
  double lp = 1e-3;       // operational L_p for the order-p model (p >= 2)
  int p = 2;              // smoothness order of the mirror-prox model
  double r0 = 1.0;        // bound on the initial distance to the solution
  double eps_gap = 1e-8;  // target duality gap
  double eps_grad = 1e-4; // target gradient norm
  double rho = 0.5;       // backtracking shrink factor, in (0,1)
  double alpha = 0.5;     // short-step factor of the CRN phase, in (0,1)
  double gamma_bar = 0.0; // initial cubic regularization weight
  double gamma_max = 1e6; // cap for degenerate gamma brackets
  double inner_tol = 1e-12;

  /// xi = max{1, L1/mu}.
  double xi() const { return std::max(1.0, l1 / mu); }

  /// Lipschitz constant backing the order-p Taylor model: L1 for p = 1,
  /// the (possibly operational) lp for p >= 2.
  double lipschitz_for_order(int order) const {
    return order == 1 ? l1 : lp;
  }

  void validate() const {
    require(mu > 0.0, "params: mu must be positive");
    require(l1 >= 0.0 && l2 >= 0.0 && lp >= 0.0,
            "params: Lipschitz constants must be nonnegative");
    require(p >= 1, "params: p must be >= 1");
    require(r0 > 0.0, "params: r0 must be positive");
    require(eps_gap > 0.0 && eps_grad > 0.0,
            "params: tolerances must be positive");
    require(rho > 0.0 && rho < 1.0, "params: rho must lie in (0,1)");
    require(alpha > 0.0 && alpha < 1.0, "params: alpha must lie in (0,1)");
    require(gamma_bar >= 0.0, "params: gamma_bar must be nonnegative");
    require(gamma_max > 0.0, "params: gamma_max must be positive");
    require(inner_tol > 0.0, "params: inner_tol must be positive");
  }
};

// ---------------------------------------------------------------------------
// Run traces
// ---------------------------------------------------------------------------

enum class Phase { Homp, Crn, TensorStep };

inline const char* to_string(Phase p) {
  switch (p) {
    case Phase::Homp: return "HOMP";
    case Phase::Crn: return "CRN";
    case Phase::TensorStep: return "TENSOR_STEP";
  }
  return "?";
}

enum class RunStatus { Converged, BudgetExceeded, InnerSolveFailed };

inline const char* to_string(RunStatus s) {
  switch (s) {
    case RunStatus::Converged: return "CONVERGED";
    case RunStatus::BudgetExceeded: return "BUDGET_EXCEEDED";
    case RunStatus::InnerSolveFailed: return "INNER_SOLVE_FAILED";
  }
  return "?";
}

/// Cumulative oracle-call counters, keyed by call kind.
struct OracleCallCounts {
  std::int64_t f = 0;        // evaluations of F (one grad call each)
  std::int64_t jf = 0;       // evaluations of the Jacobian of F
  std::int64_t g_value = 0;  // evaluations of g itself

  bool dominates(const OracleCallCounts& earlier) const {
    return f >= earlier.f && jf >= earlier.jf && g_value >= earlier.g_value;
  }
};

struct IterationRecord {
  Phase phase = Phase::Homp;
  int restart_index = 0;
  int iter = 0;
  double gamma = 0.0;
  double f_norm = 0.0;
  std::optional<double> dist_to_ref;
  OracleCallCounts oracle_calls_cumulative;
};

/// Per-run record stream plus final state. Owned by exactly one run.
struct RunTrace {
  std::vector<IterationRecord> records;
  PointZ final_point;
  RunStatus status = RunStatus::Converged;
  OracleCallCounts counts;

  /// Point handed from the mirror-prox phase to the CRN phase, when the
  /// driver has one.
  std::optional<PointZ> handoff_point;

  /// Number of gamma-search probe sequences where a larger gamma produced a
  /// smaller displacement (see homp.hpp); zero on well-behaved instances.
  int gamma_monotonicity_violations = 0;

  void add_record(IterationRecord rec) {
    rec.oracle_calls_cumulative = counts;
    if (!records.empty()) {
      internal_check(rec.oracle_calls_cumulative.dominates(
                         records.back().oracle_calls_cumulative),
                     "trace: oracle call counters decreased");
    }
    records.push_back(std::move(rec));
  }
};

}  // namespace tmvi
