#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

namespace cloudnmpc {

/// min J(z)  s.t.  c(z) = 0,  lower <= z <= upper
class SmoothNlp {
 public:
  virtual ~SmoothNlp() = default;

  virtual int num_variables() const = 0;
  virtual int num_equalities() const = 0;
  virtual const Eigen::VectorXd& lower_bounds() const = 0;
  virtual const Eigen::VectorXd& upper_bounds() const = 0;

  virtual double objective(const Eigen::VectorXd& z) const = 0;
  virtual double objective_and_gradient(const Eigen::VectorXd& z, Eigen::VectorXd& grad) const = 0;

  virtual Eigen::VectorXd equality_residuals(const Eigen::VectorXd& z) const = 0;
  virtual Eigen::SparseMatrix<double> equality_jacobian(const Eigen::VectorXd& z) const = 0;
  /// J(z)^T w. Override when it can be formed without assembling J.
  virtual Eigen::VectorXd jacobian_transpose_times(const Eigen::VectorXd& z, const Eigen::VectorXd& w) const;
  /// Optional positive semidefinite approximation of the objective Hessian. When
  /// provided, the inner loop seeds L-BFGS with its Gauss-Newton augmented
  /// Lagrangian approximation instead of a scalar. Returns false when unavailable.
  virtual bool objective_hessian_approx(const Eigen::VectorXd& z, Eigen::SparseMatrix<double>& H) const;
};

struct SolverConfig {
  double eq_tol = 1e-6;
  double opt_tol = 1e-5;
  int max_outer = 30;
  int max_inner = 200;
  double rho_init = 10.0;
  double rho_growth = 10.0;
  double rho_max = 1e8;
  /// Cap on a penalty inherited from a warm start.
  double rho_warm_max = 1e8;
  int memory = 10;
  double armijo = 1e-4;
  double backtrack = 0.5;
  int max_backtracks = 30;
  // The objective is multiplied by min(1, max_gradient / |grad J(init)|_inf)
  // before solving; opt_tol applies to the scaled problem. 0 disables.
  double max_gradient = 100.0;

  void validate() const;
};

enum class SolveStatus { converged, max_iter, infeasible_bounds };

std::string to_string(SolveStatus s);

struct IterationRecord {
  int outer = 0;
  int inner_iterations = 0;
  double objective = 0.0;
  double merit = 0.0;
  double eq_residual = 0.0;      // inf-norm of c(z)
  double projected_gradient = 0.0;  // inf-norm of the projected Lagrangian gradient
  double step_norm = 0.0;        // inf-norm of the change in z over the outer iteration
  double rho = 0.0;
};

struct OcpSolution {
  Eigen::VectorXd z;
  Eigen::VectorXd multipliers;
  double rho = 0.0;
  double objective = 0.0;
  double objective_scale = 1.0;
  SolveStatus status = SolveStatus::max_iter;
  int inner_iterations = 0;
  std::vector<IterationRecord> diagnostics;

  bool converged() const { return status == SolveStatus::converged; }
};

/// Warm-start payload for the outer loop.
struct DualGuess {
  Eigen::VectorXd multipliers;
  double rho = 0.0;
};

/// Augmented Lagrangian on the equalities, projected L-BFGS with Armijo
/// backtracking on the bound-constrained subproblems. Deterministic.
OcpSolution solve(const SmoothNlp& prob, const SolverConfig& cfg, const Eigen::VectorXd& init,
                  const std::optional<DualGuess>& dual = std::nullopt);

Eigen::VectorXd project_to_bounds(const Eigen::VectorXd& z, const Eigen::VectorXd& lower,
                                  const Eigen::VectorXd& upper);

struct GradientCheck {
  double max_error = 0.0;  // max_i |g_i - fd_i| / max(1, |fd|_inf)
  int worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Central differences of the objective over every coordinate, or over a
/// deterministic subset of `max_coords` coordinates when z is larger.
GradientCheck check_gradient(const SmoothNlp& prob, const Eigen::VectorXd& z, double step,
                             int max_coords = 0);

/// Same comparison for the equality Jacobian.
GradientCheck check_jacobian(const SmoothNlp& prob, const Eigen::VectorXd& z, double step, int max_coords = 0);

}  // namespace cloudnmpc
