#pragma once

#include <memory>
#include <optional>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "cloudnmpc/barrier.hpp"
#include "cloudnmpc/dynamics.hpp"
#include "cloudnmpc/smooth_distance.hpp"
#include "cloudnmpc/solver.hpp"

namespace cloudnmpc {

struct Box {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  int dim() const { return static_cast<int>(lower.size()); }
  bool contains(const Eigen::VectorXd& v) const;
  Eigen::VectorXd clamp(const Eigen::VectorXd& v) const;
  /// Each interval [lo, hi] maps to mid +- factor (hi - lo) / 2; unbounded sides stay unbounded.
  Box shrink(double factor) const;
};

struct NmpcConfig {
  int horizon = 35;
  Eigen::MatrixXd Q;
  Eigen::MatrixXd R;
  Eigen::MatrixXd T;  // offset weight on y_a - y_t
  double lambda = 0.99;
  Box state_bounds;
  Box input_bounds;
  SmoothDistParams smooth;
  BarrierParams barrier;

  /// Throws std::invalid_argument; messages start with the offending field name.
  void validate(int n, int m, int p) const;
};

/// Decision vector z = (x_0..x_N, u_0..u_{N-1}, x_a, u_a).
struct OcpLayout {
  int n = 0, m = 0, horizon = 0;

  int size() const { return n * (horizon + 1) + m * horizon + n + m; }
  int state(int j) const { return n * j; }
  int input(int j) const { return n * (horizon + 1) + m * j; }
  int artificial_state() const { return n * (horizon + 1) + m * horizon; }
  int artificial_input() const { return artificial_state() + n; }

  /// Residual rows: initial (n), defects 0..N-1 (N n), terminal (n), steady state (n).
  int num_equalities() const { return n * (horizon + 3); }
  int initial_row() const { return 0; }
  int defect_row(int j) const { return n * (1 + j); }
  int terminal_row() const { return n * (horizon + 1); }
  int steady_row() const { return n * (horizon + 2); }
};

/// Tracking OCP with artificial equilibrium and barrier penalties, transcribed
/// by multiple shooting:
///   J = sum_{j<N} |x_j - x_a|_Q^2 + |u_j - u_a|_R^2 + |y_a - y_t|_T^2 + penalties
///   x_0 = x, x_{j+1} = f(x_j, u_j), x_N = x_a, x_a = f(x_a, u_a)
///   (x_j, u_j) in X x U,  (x_a, u_a) in lambda (X x U)
class OcpProblem final : public SmoothNlp {
 public:
  OcpProblem(NmpcConfig cfg, std::shared_ptr<const SystemModel> model, Eigen::VectorXd x_meas,
             Eigen::VectorXd target, MetricSet sensed);

  int num_variables() const override { return layout_.size(); }
  int num_equalities() const override { return layout_.num_equalities(); }
  const Eigen::VectorXd& lower_bounds() const override { return lower_; }
  const Eigen::VectorXd& upper_bounds() const override { return upper_; }

  double objective(const Eigen::VectorXd& z) const override;
  double objective_and_gradient(const Eigen::VectorXd& z, Eigen::VectorXd& grad) const override;
  Eigen::VectorXd equality_residuals(const Eigen::VectorXd& z) const override;
  Eigen::SparseMatrix<double> equality_jacobian(const Eigen::VectorXd& z) const override;
  Eigen::VectorXd jacobian_transpose_times(const Eigen::VectorXd& z, const Eigen::VectorXd& w) const override;
  bool objective_hessian_approx(const Eigen::VectorXd& z, Eigen::SparseMatrix<double>& H) const override;

  const OcpLayout& layout() const { return layout_; }
  const NmpcConfig& config() const { return cfg_; }
  const SystemModel& model() const { return *model_; }
  const Eigen::VectorXd& measured_state() const { return x_meas_; }
  const Eigen::VectorXd& target() const { return target_; }
  const MetricSet& sensed() const { return sensed_; }
  bool measurement_clamped() const { return clamped_; }

  const Eigen::VectorXd& initial_guess() const { return guess_; }
  const std::optional<DualGuess>& dual_guess() const { return dual_guess_; }
  void set_initial_guess(Eigen::VectorXd z, std::optional<DualGuess> dual = std::nullopt);

  Eigen::VectorXd stage_state(const Eigen::VectorXd& z, int j) const;
  Eigen::VectorXd stage_input(const Eigen::VectorXd& z, int j) const;
  Eigen::VectorXd artificial_state(const Eigen::VectorXd& z) const;
  Eigen::VectorXd artificial_input(const Eigen::VectorXd& z) const;
  std::vector<Eigen::VectorXd> outputs(const Eigen::VectorXd& z) const;

  /// Initial state, then constant-input rollout; (x_a, u_a) from the model's resting guess.
  Eigen::VectorXd cold_start() const;

 private:
  double evaluate(const Eigen::VectorXd& z, Eigen::VectorXd* grad) const;

  NmpcConfig cfg_;
  std::shared_ptr<const SystemModel> model_;
  Eigen::VectorXd x_meas_;
  Eigen::VectorXd target_;
  MetricSet sensed_;
  OcpLayout layout_;
  Eigen::VectorXd lower_, upper_;
  Eigen::VectorXd guess_;
  std::optional<DualGuess> dual_guess_;
  bool clamped_ = false;
};

/// Shift a previous solution one stage forward: stage j takes stage j+1, the last
/// stage repeats, (x_a, u_a) are kept and x_0 is reset to the new measurement.
/// Defect multipliers shift the same way.
Eigen::VectorXd shift_solution(const OcpLayout& layout, const Eigen::VectorXd& z, const Eigen::VectorXd& x_meas);
Eigen::VectorXd shift_multipliers(const OcpLayout& layout, const Eigen::VectorXd& multipliers);

/// Build the OCP and its initial guess (shifted warm start when `warm` is given,
/// cold rollout otherwise).
OcpProblem build_problem(const NmpcConfig& cfg, std::shared_ptr<const SystemModel> model,
                         const Eigen::VectorXd& x_meas, const Eigen::VectorXd& target, const MetricSet& sensed,
                         const OcpSolution* warm = nullptr);

}  // namespace cloudnmpc
