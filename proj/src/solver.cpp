#include "cloudnmpc/solver.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <stdexcept>

#include <Eigen/SparseCholesky>

namespace cloudnmpc {

bool SmoothNlp::objective_hessian_approx(const Eigen::VectorXd&, Eigen::SparseMatrix<double>&) const {
  return false;
}

Eigen::VectorXd SmoothNlp::jacobian_transpose_times(const Eigen::VectorXd& z, const Eigen::VectorXd& w) const {
  return equality_jacobian(z).transpose() * w;
}

void SolverConfig::validate() const {
  if (!(eq_tol > 0 && opt_tol > 0)) throw std::invalid_argument("solver: tolerances must be > 0");
  if (!(max_gradient >= 0)) throw std::invalid_argument("solver: max_gradient must be >= 0");
  if (!(rho_growth > 1.0)) throw std::invalid_argument("solver: rho_growth must be > 1");
  if (!(rho_init > 0 && rho_max >= rho_init)) throw std::invalid_argument("solver: need 0 < rho_init <= rho_max");
  if (!(rho_warm_max > 0)) throw std::invalid_argument("solver: rho_warm_max must be > 0");
  if (max_outer < 1 || max_inner < 1) throw std::invalid_argument("solver: iteration budgets must be >= 1");
  if (memory < 1) throw std::invalid_argument("solver: memory must be >= 1");
  if (!(armijo > 0 && armijo < 1 && backtrack > 0 && backtrack < 1))
    throw std::invalid_argument("solver: line-search constants must lie in (0,1)");
}

std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::converged: return "converged";
    case SolveStatus::max_iter: return "max_iter";
    case SolveStatus::infeasible_bounds: return "infeasible_bounds";
  }
  return "unknown";
}

Eigen::VectorXd project_to_bounds(const Eigen::VectorXd& z, const Eigen::VectorXd& lower,
                                  const Eigen::VectorXd& upper) {
  return z.cwiseMax(lower).cwiseMin(upper);
}

namespace {

double projected_gradient_norm(const Eigen::VectorXd& z, const Eigen::VectorXd& g, const Eigen::VectorXd& lo,
                               const Eigen::VectorXd& hi) {
  return (z - project_to_bounds(z - g, lo, hi)).lpNorm<Eigen::Infinity>();
}

double inf_norm(const Eigen::VectorXd& v) { return v.size() ? v.lpNorm<Eigen::Infinity>() : 0.0; }

/// L_A(z) = J + lambda^T c + rho/2 |c|^2 for fixed (lambda, rho).
class AugmentedLagrangian {
 public:
  AugmentedLagrangian(const SmoothNlp& prob, double scale, const Eigen::VectorXd& lambda, double rho)
      : prob_(prob), scale_(scale), lambda_(lambda), rho_(rho) {}

  double value(const Eigen::VectorXd& z) const {
    const Eigen::VectorXd c = prob_.equality_residuals(z);
    return scale_ * prob_.objective(z) + lambda_.dot(c) + 0.5 * rho_ * c.squaredNorm();
  }

  double value_and_gradient(const Eigen::VectorXd& z, Eigen::VectorXd& grad) const {
    const double f = scale_ * prob_.objective_and_gradient(z, grad);
    grad *= scale_;
    const Eigen::VectorXd c = prob_.equality_residuals(z);
    if (c.size()) grad += prob_.jacobian_transpose_times(z, lambda_ + rho_ * c);
    return f + lambda_.dot(c) + 0.5 * rho_ * c.squaredNorm();
  }

 private:
  const SmoothNlp& prob_;
  double scale_;
  const Eigen::VectorXd& lambda_;
  double rho_;
};

// Gauss-Newton model of the merit Hessian, s H_J + rho J^T J, used as the
// initial inverse-Hessian of the two-loop recursion.
class Preconditioner {
 public:
  bool build(const SmoothNlp& prob, const Eigen::VectorXd& z, double scale, double rho) {
    Eigen::SparseMatrix<double> H;
    if (!prob.objective_hessian_approx(z, H)) return false;
    const Eigen::SparseMatrix<double> J = prob.equality_jacobian(z);
    P_ = scale * H;
    if (J.rows() > 0) P_ += rho * Eigen::SparseMatrix<double>(J.transpose() * J);
    double dmax = 1.0;
    for (Eigen::Index i = 0; i < P_.rows(); ++i) dmax = std::max(dmax, std::abs(P_.coeff(i, i)));
    Eigen::SparseMatrix<double> I(P_.rows(), P_.cols());
    I.setIdentity();
    P_ += (1e-10 * dmax) * I;
    P_.makeCompressed();
    free_.resize(0);
    return factor(Eigen::VectorXd::Ones(P_.rows()));
  }
  bool ok() const { return ok_; }

  // Inverse of the free-variable block; fixed variables map to zero.
  Eigen::VectorXd apply(const Eigen::VectorXd& q, const Eigen::VectorXd& free) {
    if (free.size() != free_.size() || free != free_) factor(free);
    if (!ok_) return q.cwiseProduct(free);
    return ldlt_.solve(q.cwiseProduct(free)).cwiseProduct(free);
  }

 private:
  bool factor(const Eigen::VectorXd& free) {
    free_ = free;
    Eigen::SparseMatrix<double> M = P_;
    for (int k = 0; k < M.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator it(M, k); it; ++it) {
        if (free[it.row()] == 0.0 || free[it.col()] == 0.0) it.valueRef() = it.row() == it.col() ? 1.0 : 0.0;
      }
    ldlt_.compute(M);
    ok_ = ldlt_.info() == Eigen::Success;
    return ok_;
  }

  Eigen::SparseMatrix<double> P_;
  Eigen::VectorXd free_;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt_;
  bool ok_ = false;
};

struct InnerResult {
  double merit = 0.0;
  Eigen::VectorXd grad;
  int iterations = 0;
};

class ProjectedLbfgs {
 public:
  ProjectedLbfgs(const SolverConfig& cfg, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi)
      : cfg_(cfg), lo_(lo), hi_(hi) {}

  // `rebuild` refreshes the preconditioner at the current iterate every
  // kRefresh iterations, since the constraint Jacobian moves with z.
  InnerResult minimize(const AugmentedLagrangian& fn, Eigen::VectorXd& z, double tol, Preconditioner* pre = nullptr,
                       const std::function<bool(const Eigen::VectorXd&)>& rebuild = {}) {
    pre_ = pre && pre->ok() ? pre : nullptr;
    InnerResult res;
    Eigen::VectorXd g;
    double f = fn.value_and_gradient(z, g);
    memory_.clear();

    for (int it = 0; it < cfg_.max_inner; ++it) {
      if (projected_gradient_norm(z, g, lo_, hi_) <= tol) break;
      if (pre && rebuild && it > 0 && it % kRefresh == 0) pre_ = rebuild(z) ? pre : nullptr;

      const Eigen::VectorXd free = free_mask(z, g);
      Eigen::VectorXd d = direction(g, free);
      double slope = g.dot(d);
      if (!(slope < 0.0)) {
        memory_.clear();
        d = -g.cwiseProduct(free);
        slope = g.dot(d);
        if (!(slope < 0.0)) break;
      }

      Eigen::VectorXd z_new, g_new;
      double f_new = 0.0;
      bool accepted = line_search(fn, z, f, g, d, z_new, f_new, g_new);
      if (!accepted && !memory_.empty()) {
        memory_.clear();
        d = direction(g, free);
        accepted = line_search(fn, z, f, g, d, z_new, f_new, g_new);
      }
      if (!accepted && pre_) {
        Preconditioner* keep = pre_;
        pre_ = nullptr;
        d = -g.cwiseProduct(free);
        accepted = line_search(fn, z, f, g, d, z_new, f_new, g_new);
        pre_ = keep;
      }
      if (!accepted) break;

      const Eigen::VectorXd s = z_new - z;
      const Eigen::VectorXd y = g_new - g;
      const double sy = s.dot(y);
      if (sy > 1e-12 * y.squaredNorm() && sy > 0.0) {
        memory_.push_back({s, y, 1.0 / sy});
        if (static_cast<int>(memory_.size()) > cfg_.memory) memory_.pop_front();
      }
      z = std::move(z_new);
      g = std::move(g_new);
      f = f_new;
      ++res.iterations;
    }
    res.merit = f;
    res.grad = std::move(g);
    return res;
  }

 private:
  static constexpr int kRefresh = 10;

  struct Pair {
    Eigen::VectorXd s, y;
    double rho;
  };

  // 0 for variables held at a bound by the gradient, 1 otherwise.
  Eigen::VectorXd free_mask(const Eigen::VectorXd& z, const Eigen::VectorXd& g) const {
    Eigen::VectorXd m = Eigen::VectorXd::Ones(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      if ((z[i] <= lo_[i] && g[i] > 0.0) || (z[i] >= hi_[i] && g[i] < 0.0)) m[i] = 0.0;
    }
    return m;
  }

  Eigen::VectorXd direction(const Eigen::VectorXd& g, const Eigen::VectorXd& free) const {
    Eigen::VectorXd q = g.cwiseProduct(free);
    if (memory_.empty() && !pre_) return -q;
    std::vector<double> alpha(memory_.size());
    for (std::size_t k = memory_.size(); k-- > 0;) {
      alpha[k] = memory_[k].rho * memory_[k].s.dot(q);
      q -= alpha[k] * memory_[k].y;
    }
    if (pre_) {
      q = pre_->apply(q, free);
    } else {
      const auto& last = memory_.back();
      q *= 1.0 / (last.rho * last.y.squaredNorm());
    }
    for (std::size_t k = 0; k < memory_.size(); ++k) {
      const double b = memory_[k].rho * memory_[k].y.dot(q);
      q += (alpha[k] - b) * memory_[k].s;
    }
    return -q.cwiseProduct(free);
  }

  bool line_search(const AugmentedLagrangian& fn, const Eigen::VectorXd& z, double f, const Eigen::VectorXd& g,
                   const Eigen::VectorXd& d, Eigen::VectorXd& z_new, double& f_new, Eigen::VectorXd& g_new) const {
    double step = 1.0;
    if (memory_.empty() && !pre_) step = 1.0 / std::max(1.0, inf_norm(d));
    for (int k = 0; k <= cfg_.max_backtracks; ++k, step *= cfg_.backtrack) {
      z_new = project_to_bounds(z + step * d, lo_, hi_);
      const double predicted = g.dot(z_new - z);
      if (!(predicted < 0.0)) continue;
      double trial = std::numeric_limits<double>::infinity();
      try {
        trial = fn.value(z_new);
      } catch (const std::domain_error&) {
        continue;  // left the model's admissible region
      }
      if (!std::isfinite(trial)) continue;
      if (trial <= f + cfg_.armijo * predicted) {
        f_new = fn.value_and_gradient(z_new, g_new);
        return true;
      }
      // Near a minimizer the Armijo test drowns in rounding error of f. Accept
      // steps that stay within that noise while the slope has flattened
      // (approximate Wolfe condition).
      if (trial <= f + 1e-12 * std::abs(f)) {
        Eigen::VectorXd g_trial;
        const double f_trial = fn.value_and_gradient(z_new, g_trial);
        if (g_trial.dot(z_new - z) <= 0.8 * std::abs(predicted)) {
          f_new = f_trial;
          g_new = std::move(g_trial);
          return true;
        }
      }
    }
    return false;
  }

  const SolverConfig& cfg_;
  const Eigen::VectorXd& lo_;
  const Eigen::VectorXd& hi_;
  std::deque<Pair> memory_;
  Preconditioner* pre_ = nullptr;
};

}  // namespace

OcpSolution solve(const SmoothNlp& prob, const SolverConfig& cfg, const Eigen::VectorXd& init,
                  const std::optional<DualGuess>& dual) {
  cfg.validate();
  const Eigen::VectorXd& lo = prob.lower_bounds();
  const Eigen::VectorXd& hi = prob.upper_bounds();
  if (init.size() != prob.num_variables()) throw std::invalid_argument("solve: initial guess has wrong size");

  OcpSolution sol;
  if ((lo.array() > hi.array()).any()) {
    sol.status = SolveStatus::infeasible_bounds;
    sol.z = init;
    return sol;
  }

  Eigen::VectorXd z = project_to_bounds(init, lo, hi);
  double scale = 1.0;
  if (cfg.max_gradient > 0.0) {
    Eigen::VectorXd g0;
    prob.objective_and_gradient(z, g0);
    const double gmax = inf_norm(g0);
    if (std::isfinite(gmax) && gmax > cfg.max_gradient) scale = cfg.max_gradient / gmax;
  }
  sol.objective_scale = scale;
  // multipliers are stored for the unscaled problem
  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(prob.num_equalities());
  double rho = cfg.rho_init;
  if (dual && dual->multipliers.size() == lambda.size()) lambda = scale * dual->multipliers;
  if (dual && dual->rho > 0.0) rho = std::min({dual->rho, cfg.rho_warm_max, cfg.rho_max});

  double prev_residual = inf_norm(prob.equality_residuals(z));
  double best_score = std::numeric_limits<double>::infinity();
  ProjectedLbfgs inner(cfg, lo, hi);

  for (int outer = 0; outer < cfg.max_outer; ++outer) {
    const Eigen::VectorXd z_start = z;
    AugmentedLagrangian merit(prob, scale, lambda, rho);
    Preconditioner pre;
    const bool have_pre = pre.build(prob, z, scale, rho);
    InnerResult ir = inner.minimize(merit, z, cfg.opt_tol, have_pre ? &pre : nullptr,
                                    [&](const Eigen::VectorXd& zz) { return pre.build(prob, zz, scale, rho); });
    sol.inner_iterations += ir.iterations;

    const Eigen::VectorXd c = prob.equality_residuals(z);
    const double residual = inf_norm(c);
    // With lambda <- lambda + rho c, the Lagrangian gradient equals the merit gradient at z.
    lambda += rho * c;
    const double pg = projected_gradient_norm(z, ir.grad, lo, hi);

    IterationRecord rec;
    rec.outer = outer;
    rec.inner_iterations = ir.iterations;
    rec.objective = prob.objective(z);
    rec.merit = ir.merit;
    rec.eq_residual = residual;
    rec.projected_gradient = pg;
    rec.step_norm = inf_norm(z - z_start);
    rec.rho = rho;
    sol.diagnostics.push_back(rec);

    const double score = std::max(residual / cfg.eq_tol, pg / cfg.opt_tol);
    if (score < best_score) {
      best_score = score;
      sol.z = z;
      sol.objective = rec.objective;
      sol.multipliers = lambda / scale;
      sol.rho = rho;
    }
    if (residual <= cfg.eq_tol && pg <= cfg.opt_tol) {
      sol.status = SolveStatus::converged;
      break;
    }
    if (residual > 0.25 * prev_residual) rho = std::min(rho * cfg.rho_growth, cfg.rho_max);
    prev_residual = residual;
  }
  return sol;
}

namespace {

template <typename Eval>
GradientCheck compare_columns(int dim, int max_coords, double step, const Eigen::MatrixXd& analytic,
                              const Eigen::VectorXd& z, Eval&& eval) {
  GradientCheck out;
  std::vector<int> coords;
  if (max_coords <= 0 || max_coords >= dim) {
    for (int i = 0; i < dim; ++i) coords.push_back(i);
  } else {
    for (int k = 0; k < max_coords; ++k) coords.push_back(static_cast<int>((static_cast<long long>(k) * dim) / max_coords));
  }
  Eigen::MatrixXd numeric(analytic.rows(), static_cast<Eigen::Index>(coords.size()));
  for (std::size_t k = 0; k < coords.size(); ++k) {
    Eigen::VectorXd zp = z, zm = z;
    zp[coords[k]] += step;
    zm[coords[k]] -= step;
    numeric.col(static_cast<Eigen::Index>(k)) = (eval(zp) - eval(zm)) / (2.0 * step);
  }
  const double scale = std::max(1.0, numeric.size() ? numeric.cwiseAbs().maxCoeff() : 0.0);
  for (std::size_t k = 0; k < coords.size(); ++k) {
    for (Eigen::Index r = 0; r < analytic.rows(); ++r) {
      const double a = analytic(r, coords[k]);
      const double n = numeric(r, static_cast<Eigen::Index>(k));
      const double err = std::abs(a - n) / scale;
      if (err > out.max_error || out.worst_index < 0) {
        out.max_error = err;
        out.worst_index = coords[k];
        out.analytic = a;
        out.numeric = n;
      }
    }
  }
  return out;
}

}  // namespace

GradientCheck check_gradient(const SmoothNlp& prob, const Eigen::VectorXd& z, double step, int max_coords) {
  if (!(step > 0.0)) throw std::invalid_argument("check_gradient: step must be > 0");
  Eigen::VectorXd g;
  prob.objective_and_gradient(z, g);
  const Eigen::MatrixXd analytic = g.transpose();
  return compare_columns(prob.num_variables(), max_coords, step, analytic, z, [&](const Eigen::VectorXd& zz) {
    Eigen::VectorXd v(1);
    v[0] = prob.objective(zz);
    return v;
  });
}

GradientCheck check_jacobian(const SmoothNlp& prob, const Eigen::VectorXd& z, double step, int max_coords) {
  if (!(step > 0.0)) throw std::invalid_argument("check_jacobian: step must be > 0");
  const Eigen::MatrixXd analytic = Eigen::MatrixXd(prob.equality_jacobian(z));
  return compare_columns(prob.num_variables(), max_coords, step, analytic, z,
                         [&](const Eigen::VectorXd& zz) { return prob.equality_residuals(zz); });
}

}  // namespace cloudnmpc
