#pragma once

#include <memory>
#include <string>

#include <Eigen/Dense>

namespace cloudnmpc {

/// Continuous-time plant x' = f_c(x, u), y = h(x), sampled with zero-order hold.
class SystemModel {
 public:
  explicit SystemModel(double sample_time);
  virtual ~SystemModel() = default;

  virtual int state_dim() const = 0;
  virtual int input_dim() const = 0;
  virtual int output_dim() const = 0;
  virtual std::string name() const = 0;

  double sample_time() const { return sample_time_; }

  virtual Eigen::VectorXd vector_field(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const = 0;
  /// df_c/dx (n x n) and df_c/du (n x m).
  virtual void vector_field_jacobian(const Eigen::VectorXd& x, const Eigen::VectorXd& u, Eigen::MatrixXd& A,
                                     Eigen::MatrixXd& B) const = 0;

  virtual Eigen::VectorXd output(const Eigen::VectorXd& x) const = 0;
  virtual Eigen::MatrixXd output_jacobian(const Eigen::VectorXd& x) const = 0;

  /// Input that holds the model at rest (hover thrust, zero acceleration).
  virtual Eigen::VectorXd nominal_input() const = 0;
  /// Nearest resting state: position kept, rates and tilt zeroed.
  virtual Eigen::VectorXd steady_state_guess(const Eigen::VectorXd& x) const = 0;

 private:
  double sample_time_;
};

/// Classical RK4 over one sample period with u held constant.
Eigen::VectorXd rk4_step(const SystemModel& model, const Eigen::VectorXd& x, const Eigen::VectorXd& u);

struct DiscreteStep {
  Eigen::VectorXd next;
  Eigen::MatrixXd A;  // d next / d x
  Eigen::MatrixXd B;  // d next / d u
};

/// RK4 step together with its exact Jacobians (stage derivatives chained).
DiscreteStep rk4_step_with_jacobian(const SystemModel& model, const Eigen::VectorXd& x, const Eigen::VectorXd& u);

/// Default airframe. Inputs are rotor forces, so b and k_tau enter only
/// through the yaw moment arm k_tau / b.
struct QuadrotorParams {
  double mass = 2.24;
  double arm_length = 0.332;
  double gravity = 9.81;
  double thrust_coefficient = 9.5e-6;
  double drag_coefficient = 1.7e-7;
  double inertia_xx = 0.0363;
  double inertia_yy = 0.0363;
  double inertia_zz = 0.0615;

  void validate() const;
  double hover_force() const { return mass * gravity / 4.0; }
};

/// Plus-frame quadrotor, state [x y z phi theta psi vx vy vz dphi dtheta dpsi],
/// ZYX Euler angles, inputs [f1 f2 f3 f4] (N).
///   tau_phi   = l (f2 - f4)
///   tau_theta = l (f3 - f1)
///   tau_psi   = (k_tau / b)(f1 - f2 + f3 - f4)
/// Body rates follow from Euler rates through the ZYX kinematic map, rigid-body
/// dynamics use a diagonal inertia, and Euler accelerations map back through the
/// inverse kinematics (singular at |theta| = pi/2).
class QuadrotorModel final : public SystemModel {
 public:
  static constexpr int kStates = 12;
  static constexpr int kInputs = 4;

  QuadrotorModel(const QuadrotorParams& params, double sample_time);

  int state_dim() const override { return kStates; }
  int input_dim() const override { return kInputs; }
  int output_dim() const override { return 3; }
  std::string name() const override { return "quadrotor"; }

  Eigen::VectorXd vector_field(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const override;
  void vector_field_jacobian(const Eigen::VectorXd& x, const Eigen::VectorXd& u, Eigen::MatrixXd& A,
                             Eigen::MatrixXd& B) const override;
  Eigen::VectorXd output(const Eigen::VectorXd& x) const override;
  Eigen::MatrixXd output_jacobian(const Eigen::VectorXd& x) const override;
  Eigen::VectorXd nominal_input() const override;
  Eigen::VectorXd steady_state_guess(const Eigen::VectorXd& x) const override;

  const QuadrotorParams& params() const { return params_; }

 private:
  QuadrotorParams params_;
};

/// x'' = u per axis; state [positions, velocities].
class DoubleIntegratorModel final : public SystemModel {
 public:
  DoubleIntegratorModel(int dim, double sample_time);

  int state_dim() const override { return 2 * dim_; }
  int input_dim() const override { return dim_; }
  int output_dim() const override { return dim_; }
  std::string name() const override { return "double_integrator"; }

  Eigen::VectorXd vector_field(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const override;
  void vector_field_jacobian(const Eigen::VectorXd& x, const Eigen::VectorXd& u, Eigen::MatrixXd& A,
                             Eigen::MatrixXd& B) const override;
  Eigen::VectorXd output(const Eigen::VectorXd& x) const override;
  Eigen::MatrixXd output_jacobian(const Eigen::VectorXd& x) const override;
  Eigen::VectorXd nominal_input() const override;
  Eigen::VectorXd steady_state_guess(const Eigen::VectorXd& x) const override;

  /// Exact zero-order-hold discretisation.
  Eigen::VectorXd exact_step(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const;

 private:
  int dim_;
};

std::shared_ptr<SystemModel> double_integrator(int dim, double sample_time);

}  // namespace cloudnmpc
