#include "cloudnmpc/dynamics.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include <unsupported/Eigen/AutoDiff>

namespace cloudnmpc {

SystemModel::SystemModel(double sample_time) : sample_time_(sample_time) {
  if (!(sample_time > 0.0)) throw std::invalid_argument("model: sample_time must be > 0");
}

Eigen::VectorXd rk4_step(const SystemModel& model, const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
  const double h = model.sample_time();
  const Eigen::VectorXd k1 = model.vector_field(x, u);
  const Eigen::VectorXd k2 = model.vector_field(x + 0.5 * h * k1, u);
  const Eigen::VectorXd k3 = model.vector_field(x + 0.5 * h * k2, u);
  const Eigen::VectorXd k4 = model.vector_field(x + h * k3, u);
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

DiscreteStep rk4_step_with_jacobian(const SystemModel& model, const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
  const double h = model.sample_time();
  const int n = model.state_dim();
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd A, B;

  const Eigen::VectorXd k1 = model.vector_field(x, u);
  model.vector_field_jacobian(x, u, A, B);
  const Eigen::MatrixXd k1x = A;
  const Eigen::MatrixXd k1u = B;

  const Eigen::VectorXd x2 = x + 0.5 * h * k1;
  const Eigen::VectorXd k2 = model.vector_field(x2, u);
  model.vector_field_jacobian(x2, u, A, B);
  const Eigen::MatrixXd k2x = A * (I + 0.5 * h * k1x);
  const Eigen::MatrixXd k2u = 0.5 * h * A * k1u + B;

  const Eigen::VectorXd x3 = x + 0.5 * h * k2;
  const Eigen::VectorXd k3 = model.vector_field(x3, u);
  model.vector_field_jacobian(x3, u, A, B);
  const Eigen::MatrixXd k3x = A * (I + 0.5 * h * k2x);
  const Eigen::MatrixXd k3u = 0.5 * h * A * k2u + B;

  const Eigen::VectorXd x4 = x + h * k3;
  const Eigen::VectorXd k4 = model.vector_field(x4, u);
  model.vector_field_jacobian(x4, u, A, B);
  const Eigen::MatrixXd k4x = A * (I + h * k3x);
  const Eigen::MatrixXd k4u = h * A * k3u + B;

  DiscreteStep out;
  out.next = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  out.A = I + (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
  out.B = (h / 6.0) * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
  return out;
}

// ---------------------------------------------------------------------------
// Quadrotor

void QuadrotorParams::validate() const {
  if (!(mass > 0 && arm_length > 0 && gravity > 0 && thrust_coefficient > 0 && drag_coefficient > 0 &&
        inertia_xx > 0 && inertia_yy > 0 && inertia_zz > 0))
    throw std::invalid_argument("quadrotor: all parameters must be > 0");
}

namespace {

constexpr double kThetaLimit = std::numbers::pi / 2.0 - 1e-6;

template <typename S>
Eigen::Matrix<S, 12, 1> quad_field(const QuadrotorParams& p, const Eigen::Matrix<S, 12, 1>& x,
                                   const Eigen::Matrix<S, 4, 1>& u) {
  using std::cos;
  using std::sin;
  const S phi = x[3], theta = x[4], psi = x[5];
  const S dphi = x[9], dtheta = x[10], dpsi = x[11];
  const S cphi = cos(phi), sphi = sin(phi);
  const S cth = cos(theta), sth = sin(theta);
  const S cpsi = cos(psi), spsi = sin(psi);

  const S thrust = u[0] + u[1] + u[2] + u[3];
  const S tau_phi = p.arm_length * (u[1] - u[3]);
  const S tau_theta = p.arm_length * (u[2] - u[0]);
  const S tau_psi = (p.drag_coefficient / p.thrust_coefficient) * (u[0] - u[1] + u[2] - u[3]);

  Eigen::Matrix<S, 12, 1> dx;
  dx.template segment<3>(0) = x.template segment<3>(6);
  dx.template segment<3>(3) = x.template segment<3>(9);

  // R = Rz(psi) Ry(theta) Rx(phi) applied to body thrust (0, 0, T)
  const S a = thrust / p.mass;
  dx[6] = a * (cphi * sth * cpsi + sphi * spsi);
  dx[7] = a * (cphi * sth * spsi - sphi * cpsi);
  dx[8] = a * cphi * cth - p.gravity;

  // body rates from Euler rates
  const S wp = dphi - sth * dpsi;
  const S wq = cphi * dtheta + sphi * cth * dpsi;
  const S wr = -sphi * dtheta + cphi * cth * dpsi;

  const S dwp = (tau_phi + (p.inertia_yy - p.inertia_zz) * wq * wr) / p.inertia_xx;
  const S dwq = (tau_theta + (p.inertia_zz - p.inertia_xx) * wp * wr) / p.inertia_yy;
  const S dwr = (tau_psi + (p.inertia_xx - p.inertia_yy) * wp * wq) / p.inertia_zz;

  // d/dt(W) * eta_dot with eta_ddot = 0
  const S cp = -cth * dtheta * dpsi;
  const S cq = -sphi * dphi * dtheta + cphi * cth * dphi * dpsi - sphi * sth * dtheta * dpsi;
  const S cr = -cphi * dphi * dtheta - sphi * cth * dphi * dpsi - cphi * sth * dtheta * dpsi;

  const S rp = dwp - cp, rq = dwq - cq, rr = dwr - cr;
  const S tth = sth / cth;
  dx[9] = rp + sphi * tth * rq + cphi * tth * rr;
  dx[10] = cphi * rq - sphi * rr;
  dx[11] = (sphi * rq + cphi * rr) / cth;
  return dx;
}

void check_attitude(const Eigen::VectorXd& x) {
  if (std::abs(x[4]) >= kThetaLimit)
    throw std::domain_error("quadrotor: pitch at kinematic singularity (|theta| >= pi/2)");
}

}  // namespace

QuadrotorModel::QuadrotorModel(const QuadrotorParams& params, double sample_time)
    : SystemModel(sample_time), params_(params) {
  params_.validate();
}

Eigen::VectorXd QuadrotorModel::vector_field(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const {
  check_attitude(x);
  const Eigen::Matrix<double, 12, 1> xs = x;
  const Eigen::Matrix<double, 4, 1> us = u;
  return quad_field<double>(params_, xs, us);
}

void QuadrotorModel::vector_field_jacobian(const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                                           Eigen::MatrixXd& A, Eigen::MatrixXd& B) const {
  check_attitude(x);
  using Deriv = Eigen::Matrix<double, 16, 1>;
  using Dual = Eigen::AutoDiffScalar<Deriv>;
  Eigen::Matrix<Dual, 12, 1> xd;
  Eigen::Matrix<Dual, 4, 1> ud;
  for (int i = 0; i < 12; ++i) xd[i] = Dual(x[i], 16, i);
  for (int i = 0; i < 4; ++i) ud[i] = Dual(u[i], 16, 12 + i);
  const auto f = quad_field<Dual>(params_, xd, ud);
  A.resize(12, 12);
  B.resize(12, 4);
  for (int r = 0; r < 12; ++r) {
    A.row(r) = f[r].derivatives().head<12>().transpose();
    B.row(r) = f[r].derivatives().tail<4>().transpose();
  }
}

Eigen::VectorXd QuadrotorModel::output(const Eigen::VectorXd& x) const { return x.head<3>(); }

Eigen::MatrixXd QuadrotorModel::output_jacobian(const Eigen::VectorXd&) const {
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(3, 12);
  C.leftCols<3>().setIdentity();
  return C;
}

Eigen::VectorXd QuadrotorModel::nominal_input() const {
  return Eigen::VectorXd::Constant(4, params_.hover_force());
}

Eigen::VectorXd QuadrotorModel::steady_state_guess(const Eigen::VectorXd& x) const {
  Eigen::VectorXd s = Eigen::VectorXd::Zero(12);
  s.head<3>() = x.head<3>();
  s[5] = x[5];
  return s;
}

// ---------------------------------------------------------------------------
// Double integrator

DoubleIntegratorModel::DoubleIntegratorModel(int dim, double sample_time) : SystemModel(sample_time), dim_(dim) {
  if (dim < 1 || dim > 3) throw std::invalid_argument("double integrator: dim must be 1, 2 or 3");
}

Eigen::VectorXd DoubleIntegratorModel::vector_field(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const {
  Eigen::VectorXd dx(2 * dim_);
  dx.head(dim_) = x.tail(dim_);
  dx.tail(dim_) = u;
  return dx;
}

void DoubleIntegratorModel::vector_field_jacobian(const Eigen::VectorXd&, const Eigen::VectorXd&,
                                                  Eigen::MatrixXd& A, Eigen::MatrixXd& B) const {
  A = Eigen::MatrixXd::Zero(2 * dim_, 2 * dim_);
  A.topRightCorner(dim_, dim_).setIdentity();
  B = Eigen::MatrixXd::Zero(2 * dim_, dim_);
  B.bottomRows(dim_).setIdentity();
}

Eigen::VectorXd DoubleIntegratorModel::output(const Eigen::VectorXd& x) const { return x.head(dim_); }

Eigen::MatrixXd DoubleIntegratorModel::output_jacobian(const Eigen::VectorXd&) const {
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(dim_, 2 * dim_);
  C.leftCols(dim_).setIdentity();
  return C;
}

Eigen::VectorXd DoubleIntegratorModel::nominal_input() const { return Eigen::VectorXd::Zero(dim_); }

Eigen::VectorXd DoubleIntegratorModel::steady_state_guess(const Eigen::VectorXd& x) const {
  Eigen::VectorXd s = Eigen::VectorXd::Zero(2 * dim_);
  s.head(dim_) = x.head(dim_);
  return s;
}

Eigen::VectorXd DoubleIntegratorModel::exact_step(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const {
  const double h = sample_time();
  Eigen::VectorXd next(2 * dim_);
  next.head(dim_) = x.head(dim_) + h * x.tail(dim_) + 0.5 * h * h * u;
  next.tail(dim_) = x.tail(dim_) + h * u;
  return next;
}

std::shared_ptr<SystemModel> double_integrator(int dim, double sample_time) {
  return std::make_shared<DoubleIntegratorModel>(dim, sample_time);
}

}  // namespace cloudnmpc
