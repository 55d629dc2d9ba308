#include "cloudnmpc/nmpc.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace cloudnmpc {

bool Box::contains(const Eigen::VectorXd& v) const {
  return (v.array() >= lower.array()).all() && (v.array() <= upper.array()).all();
}

Eigen::VectorXd Box::clamp(const Eigen::VectorXd& v) const { return v.cwiseMax(lower).cwiseMin(upper); }

Box Box::shrink(double factor) const {
  Box out = *this;
  for (Eigen::Index i = 0; i < lower.size(); ++i) {
    if (!std::isfinite(lower[i]) || !std::isfinite(upper[i])) continue;
    const double mid = 0.5 * (lower[i] + upper[i]);
    const double half = 0.5 * factor * (upper[i] - lower[i]);
    out.lower[i] = mid - half;
    out.upper[i] = mid + half;
  }
  return out;
}

namespace {

void check_weight(const Eigen::MatrixXd& W, int dim, const char* name, bool strict) {
  if (W.rows() != dim || W.cols() != dim)
    throw std::invalid_argument(std::string(name) + " must be " + std::to_string(dim) + "x" + std::to_string(dim));
  if (!W.isApprox(W.transpose())) throw std::invalid_argument(std::string(name) + " must be symmetric");
  const double min_eig = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(W).eigenvalues().minCoeff();
  if (strict ? !(min_eig > 0.0) : min_eig < -1e-12)
    throw std::invalid_argument(std::string(name) + (strict ? " must be positive definite" : " must be positive semidefinite"));
}

void check_box(const Box& b, int dim, const char* name) {
  if (b.lower.size() != dim || b.upper.size() != dim)
    throw std::invalid_argument(std::string(name) + " must have dimension " + std::to_string(dim));
  if ((b.lower.array() > b.upper.array()).any())
    throw std::invalid_argument(std::string(name) + " lower bound exceeds upper bound");
}

}  // namespace

void NmpcConfig::validate(int n, int m, int p) const {
  if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
  check_weight(Q, n, "q", false);
  check_weight(R, m, "r", true);
  check_weight(T, p, "t", true);
  if (!(lambda > 0.0 && lambda < 1.0))
    throw std::invalid_argument("lambda must lie in the open interval (0,1), got " + std::to_string(lambda));
  check_box(state_bounds, n, "state bounds");
  check_box(input_bounds, m, "input bounds");
  smooth.validate();
  barrier.validate();
}

OcpProblem::OcpProblem(NmpcConfig cfg, std::shared_ptr<const SystemModel> model, Eigen::VectorXd x_meas,
                       Eigen::VectorXd target, MetricSet sensed)
    : cfg_(std::move(cfg)), model_(std::move(model)), x_meas_(std::move(x_meas)), target_(std::move(target)),
      sensed_(std::move(sensed)) {
  const int n = model_->state_dim(), m = model_->input_dim(), p = model_->output_dim();
  cfg_.validate(n, m, p);
  if (x_meas_.size() != n) throw std::invalid_argument("measured state has wrong dimension");
  if (target_.size() != p) throw std::invalid_argument("target has wrong dimension");
  if (!target_.allFinite()) throw std::invalid_argument("target must be finite");
  if (!cfg_.state_bounds.contains(x_meas_)) {
    x_meas_ = cfg_.state_bounds.clamp(x_meas_);
    clamped_ = true;
  }
  layout_ = OcpLayout{n, m, cfg_.horizon};

  lower_.resize(layout_.size());
  upper_.resize(layout_.size());
  for (int j = 0; j <= layout_.horizon; ++j) {
    lower_.segment(layout_.state(j), n) = cfg_.state_bounds.lower;
    upper_.segment(layout_.state(j), n) = cfg_.state_bounds.upper;
  }
  for (int j = 0; j < layout_.horizon; ++j) {
    lower_.segment(layout_.input(j), m) = cfg_.input_bounds.lower;
    upper_.segment(layout_.input(j), m) = cfg_.input_bounds.upper;
  }
  // x_0 is pinned to the measurement; the initial-condition rows stay in place
  lower_.segment(layout_.state(0), n) = x_meas_;
  upper_.segment(layout_.state(0), n) = x_meas_;
  const Box xs = cfg_.state_bounds.shrink(cfg_.lambda);
  const Box us = cfg_.input_bounds.shrink(cfg_.lambda);
  lower_.segment(layout_.artificial_state(), n) = xs.lower;
  upper_.segment(layout_.artificial_state(), n) = xs.upper;
  lower_.segment(layout_.artificial_input(), m) = us.lower;
  upper_.segment(layout_.artificial_input(), m) = us.upper;

  guess_ = cold_start();
}

Eigen::VectorXd OcpProblem::stage_state(const Eigen::VectorXd& z, int j) const {
  return z.segment(layout_.state(j), layout_.n);
}
Eigen::VectorXd OcpProblem::stage_input(const Eigen::VectorXd& z, int j) const {
  return z.segment(layout_.input(j), layout_.m);
}
Eigen::VectorXd OcpProblem::artificial_state(const Eigen::VectorXd& z) const {
  return z.segment(layout_.artificial_state(), layout_.n);
}
Eigen::VectorXd OcpProblem::artificial_input(const Eigen::VectorXd& z) const {
  return z.segment(layout_.artificial_input(), layout_.m);
}

std::vector<Eigen::VectorXd> OcpProblem::outputs(const Eigen::VectorXd& z) const {
  std::vector<Eigen::VectorXd> ys;
  ys.reserve(layout_.horizon + 1);
  for (int j = 0; j <= layout_.horizon; ++j) ys.push_back(model_->output(stage_state(z, j)));
  return ys;
}

Eigen::VectorXd OcpProblem::cold_start() const {
  Eigen::VectorXd z(layout_.size());
  const Eigen::VectorXd u = cfg_.input_bounds.clamp(model_->nominal_input());
  Eigen::VectorXd x = x_meas_;
  for (int j = 0; j < layout_.horizon; ++j) {
    z.segment(layout_.state(j), layout_.n) = x;
    z.segment(layout_.input(j), layout_.m) = u;
    // clamping keeps a tilted rollout away from the attitude singularity
    const int next = layout_.state(j + 1);
    x = project_to_bounds(rk4_step(*model_, x, u), lower_.segment(next, layout_.n), upper_.segment(next, layout_.n));
  }
  z.segment(layout_.state(layout_.horizon), layout_.n) = x;
  z.segment(layout_.artificial_state(), layout_.n) = model_->steady_state_guess(x);
  z.segment(layout_.artificial_input(), layout_.m) = u;
  return project_to_bounds(z, lower_, upper_);
}

void OcpProblem::set_initial_guess(Eigen::VectorXd z, std::optional<DualGuess> dual) {
  if (z.size() != layout_.size()) throw std::invalid_argument("initial guess has wrong dimension");
  guess_ = project_to_bounds(z, lower_, upper_);
  dual_guess_ = std::move(dual);
}

double OcpProblem::evaluate(const Eigen::VectorXd& z, Eigen::VectorXd* grad) const {
  const int n = layout_.n, m = layout_.m, N = layout_.horizon;
  const Eigen::VectorXd xa = artificial_state(z);
  const Eigen::VectorXd ua = artificial_input(z);
  if (grad) grad->setZero(layout_.size());

  double J = 0.0;
  Eigen::VectorXd dxa = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd dua = Eigen::VectorXd::Zero(m);
  for (int j = 0; j < N; ++j) {
    const Eigen::VectorXd ex = z.segment(layout_.state(j), n) - xa;
    const Eigen::VectorXd eu = z.segment(layout_.input(j), m) - ua;
    const Eigen::VectorXd Qex = cfg_.Q * ex;
    const Eigen::VectorXd Reu = cfg_.R * eu;
    J += ex.dot(Qex) + eu.dot(Reu);
    if (grad) {
      grad->segment(layout_.state(j), n) += 2.0 * Qex;
      grad->segment(layout_.input(j), m) += 2.0 * Reu;
      dxa -= 2.0 * Qex;
      dua -= 2.0 * Reu;
    }
  }

  const Eigen::VectorXd ya = model_->output(xa);
  const Eigen::VectorXd ey = ya - target_;
  const Eigen::VectorXd Tey = cfg_.T * ey;
  J += ey.dot(Tey);
  Eigen::VectorXd dya = 2.0 * Tey;

  if (!sensed_.empty()) {
    const std::vector<Eigen::VectorXd> ys = outputs(z);
    if (grad) {
      std::vector<Eigen::VectorXd> dys;
      Eigen::VectorXd dpa;
      J += horizon_penalty(ys, ya, sensed_, cfg_.barrier, &dys, &dpa);
      for (int j = 0; j <= N; ++j) {
        const Eigen::VectorXd xj = z.segment(layout_.state(j), n);
        grad->segment(layout_.state(j), n) += model_->output_jacobian(xj).transpose() * dys[j];
      }
      dya += dpa;
    } else {
      J += horizon_penalty(ys, ya, sensed_, cfg_.barrier);
    }
  }

  if (grad) {
    dxa += model_->output_jacobian(xa).transpose() * dya;
    grad->segment(layout_.artificial_state(), n) += dxa;
    grad->segment(layout_.artificial_input(), m) += dua;
  }
  return J;
}

double OcpProblem::objective(const Eigen::VectorXd& z) const { return evaluate(z, nullptr); }

double OcpProblem::objective_and_gradient(const Eigen::VectorXd& z, Eigen::VectorXd& grad) const {
  return evaluate(z, &grad);
}

Eigen::VectorXd OcpProblem::equality_residuals(const Eigen::VectorXd& z) const {
  const int n = layout_.n, N = layout_.horizon;
  Eigen::VectorXd c(layout_.num_equalities());
  c.segment(layout_.initial_row(), n) = z.segment(layout_.state(0), n) - x_meas_;
  for (int j = 0; j < N; ++j) {
    c.segment(layout_.defect_row(j), n) =
        z.segment(layout_.state(j + 1), n) - rk4_step(*model_, stage_state(z, j), stage_input(z, j));
  }
  const Eigen::VectorXd xa = artificial_state(z);
  c.segment(layout_.terminal_row(), n) = z.segment(layout_.state(N), n) - xa;
  c.segment(layout_.steady_row(), n) = xa - rk4_step(*model_, xa, artificial_input(z));
  return c;
}

Eigen::SparseMatrix<double> OcpProblem::equality_jacobian(const Eigen::VectorXd& z) const {
  const int n = layout_.n, m = layout_.m, N = layout_.horizon;
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(static_cast<std::size_t>((N + 1) * (n * n + n * m + n) + 3 * n));
  auto identity = [&](int row, int col, double s) {
    for (int i = 0; i < n; ++i) t.emplace_back(row + i, col + i, s);
  };
  auto dense = [&](int row, int col, const Eigen::MatrixXd& M, double s) {
    for (Eigen::Index c = 0; c < M.cols(); ++c)
      for (Eigen::Index r = 0; r < M.rows(); ++r)
        if (M(r, c) != 0.0) t.emplace_back(row + static_cast<int>(r), col + static_cast<int>(c), s * M(r, c));
  };

  identity(layout_.initial_row(), layout_.state(0), 1.0);
  for (int j = 0; j < N; ++j) {
    const DiscreteStep st = rk4_step_with_jacobian(*model_, stage_state(z, j), stage_input(z, j));
    identity(layout_.defect_row(j), layout_.state(j + 1), 1.0);
    dense(layout_.defect_row(j), layout_.state(j), st.A, -1.0);
    dense(layout_.defect_row(j), layout_.input(j), st.B, -1.0);
  }
  identity(layout_.terminal_row(), layout_.state(N), 1.0);
  identity(layout_.terminal_row(), layout_.artificial_state(), -1.0);
  const DiscreteStep sa = rk4_step_with_jacobian(*model_, artificial_state(z), artificial_input(z));
  dense(layout_.steady_row(), layout_.artificial_state(),
        Eigen::MatrixXd::Identity(n, n) - sa.A, 1.0);
  dense(layout_.steady_row(), layout_.artificial_input(), sa.B, -1.0);

  Eigen::SparseMatrix<double> J(layout_.num_equalities(), layout_.size());
  J.setFromTriplets(t.begin(), t.end());
  return J;
}

Eigen::VectorXd OcpProblem::jacobian_transpose_times(const Eigen::VectorXd& z, const Eigen::VectorXd& w) const {
  const int n = layout_.n, m = layout_.m, N = layout_.horizon;
  Eigen::VectorXd out = Eigen::VectorXd::Zero(layout_.size());
  out.segment(layout_.state(0), n) += w.segment(layout_.initial_row(), n);
  for (int j = 0; j < N; ++j) {
    const auto wj = w.segment(layout_.defect_row(j), n);
    const DiscreteStep st = rk4_step_with_jacobian(*model_, stage_state(z, j), stage_input(z, j));
    out.segment(layout_.state(j + 1), n) += wj;
    out.segment(layout_.state(j), n).noalias() -= st.A.transpose() * wj;
    out.segment(layout_.input(j), m).noalias() -= st.B.transpose() * wj;
  }
  const auto wt = w.segment(layout_.terminal_row(), n);
  out.segment(layout_.state(N), n) += wt;
  out.segment(layout_.artificial_state(), n) -= wt;
  const auto ws = w.segment(layout_.steady_row(), n);
  const DiscreteStep sa = rk4_step_with_jacobian(*model_, artificial_state(z), artificial_input(z));
  out.segment(layout_.artificial_state(), n) += ws;
  out.segment(layout_.artificial_state(), n).noalias() -= sa.A.transpose() * ws;
  out.segment(layout_.artificial_input(), m).noalias() -= sa.B.transpose() * ws;
  return out;
}

bool OcpProblem::objective_hessian_approx(const Eigen::VectorXd& z, Eigen::SparseMatrix<double>& H) const {
  const int N = layout_.horizon;
  const int xa = layout_.artificial_state(), ua = layout_.artificial_input();
  std::vector<Eigen::Triplet<double>> t;
  auto block = [&](int row, int col, const Eigen::MatrixXd& M) {
    for (Eigen::Index c = 0; c < M.cols(); ++c)
      for (Eigen::Index r = 0; r < M.rows(); ++r)
        if (M(r, c) != 0.0) t.emplace_back(row + static_cast<int>(r), col + static_cast<int>(c), M(r, c));
  };
  const Eigen::MatrixXd Q2 = 2.0 * cfg_.Q, R2 = 2.0 * cfg_.R;
  for (int j = 0; j < N; ++j) {
    block(layout_.state(j), layout_.state(j), Q2);
    block(layout_.state(j), xa, -Q2);
    block(xa, layout_.state(j), -Q2);
    block(layout_.input(j), layout_.input(j), R2);
    block(layout_.input(j), ua, -R2);
    block(ua, layout_.input(j), -R2);
  }
  block(xa, xa, N * Q2);
  block(ua, ua, N * R2);

  const Eigen::VectorXd x_a = artificial_state(z);
  const Eigen::MatrixXd Ca = model_->output_jacobian(x_a);
  Eigen::MatrixXd Ha = 2.0 * cfg_.T;
  if (!sensed_.empty()) {
    const std::vector<Eigen::VectorXd> ys = outputs(z);
    const PenaltyCurvature pc = horizon_penalty_curvature(ys, model_->output(x_a), sensed_, cfg_.barrier);
    std::vector<Eigen::MatrixXd> C(static_cast<std::size_t>(N + 1));
    for (int j = 0; j <= N; ++j) C[j] = model_->output_jacobian(stage_state(z, j));
    const Eigen::Index p = Ca.rows();
    for (int j = 0; j < N; ++j) {
      const Eigen::MatrixXd& P = pc.pairs[j];
      block(layout_.state(j), layout_.state(j), C[j].transpose() * P.topLeftCorner(p, p) * C[j]);
      block(layout_.state(j + 1), layout_.state(j + 1), C[j + 1].transpose() * P.bottomRightCorner(p, p) * C[j + 1]);
      const Eigen::MatrixXd off = C[j].transpose() * P.topRightCorner(p, p) * C[j + 1];
      block(layout_.state(j), layout_.state(j + 1), off);
      block(layout_.state(j + 1), layout_.state(j), off.transpose());
    }
    Ha += pc.artificial;
  }
  block(xa, xa, Ca.transpose() * Ha * Ca);

  H.resize(layout_.size(), layout_.size());
  H.setFromTriplets(t.begin(), t.end());
  return true;
}

Eigen::VectorXd shift_solution(const OcpLayout& L, const Eigen::VectorXd& z, const Eigen::VectorXd& x_meas) {
  if (z.size() != L.size()) throw std::invalid_argument("shift_solution: wrong dimension");
  Eigen::VectorXd s = z;
  for (int j = 0; j < L.horizon; ++j) s.segment(L.state(j), L.n) = z.segment(L.state(j + 1), L.n);
  for (int j = 0; j + 1 < L.horizon; ++j) s.segment(L.input(j), L.m) = z.segment(L.input(j + 1), L.m);
  s.segment(L.state(0), L.n) = x_meas;
  return s;
}

Eigen::VectorXd shift_multipliers(const OcpLayout& L, const Eigen::VectorXd& mult) {
  if (mult.size() != L.num_equalities()) return Eigen::VectorXd::Zero(L.num_equalities());
  Eigen::VectorXd s = mult;
  for (int j = 0; j + 1 < L.horizon; ++j) s.segment(L.defect_row(j), L.n) = mult.segment(L.defect_row(j + 1), L.n);
  return s;
}

OcpProblem build_problem(const NmpcConfig& cfg, std::shared_ptr<const SystemModel> model,
                         const Eigen::VectorXd& x_meas, const Eigen::VectorXd& target, const MetricSet& sensed,
                         const OcpSolution* warm) {
  OcpProblem prob(cfg, std::move(model), x_meas, target, sensed);
  if (warm && warm->z.size() == prob.layout().size()) {
    DualGuess dual{shift_multipliers(prob.layout(), warm->multipliers), warm->rho};
    prob.set_initial_guess(shift_solution(prob.layout(), warm->z, prob.measured_state()), dual);
  }
  return prob;
}

}  // namespace cloudnmpc
