#include <doctest.h>

#include <cmath>
#include <random>

#include "cloudnmpc/nmpc.hpp"
#include "cloudnmpc/scenario.hpp"
#include "cloudnmpc/solver.hpp"
#include "oracles.hpp"

using namespace cloudnmpc;
using nlohmann::json;

namespace {

class DenseNlp : public SmoothNlp {
 public:
  DenseNlp(Eigen::VectorXd lo, Eigen::VectorXd hi) : lo_(std::move(lo)), hi_(std::move(hi)) {}
  int num_variables() const override { return static_cast<int>(lo_.size()); }
  const Eigen::VectorXd& lower_bounds() const override { return lo_; }
  const Eigen::VectorXd& upper_bounds() const override { return hi_; }
  double objective(const Eigen::VectorXd& z) const override {
    Eigen::VectorXd g;
    return objective_and_gradient(z, g);
  }
  Eigen::SparseMatrix<double> equality_jacobian(const Eigen::VectorXd& z) const override {
    return dense_jacobian(z).sparseView();
  }
  virtual Eigen::MatrixXd dense_jacobian(const Eigen::VectorXd& z) const = 0;

 private:
  Eigen::VectorXd lo_, hi_;
};

// min |z - c|^2  s.t.  sum z = 1,  0 <= z <= 1
class CappedSimplex final : public DenseNlp {
 public:
  explicit CappedSimplex(Eigen::VectorXd c)
      : DenseNlp(Eigen::VectorXd::Zero(c.size()), Eigen::VectorXd::Ones(c.size())), c_(std::move(c)) {}
  int num_equalities() const override { return 1; }
  double objective_and_gradient(const Eigen::VectorXd& z, Eigen::VectorXd& g) const override {
    g = 2.0 * (z - c_);
    return (z - c_).squaredNorm();
  }
  Eigen::VectorXd equality_residuals(const Eigen::VectorXd& z) const override {
    return Eigen::VectorXd::Constant(1, z.sum() - 1.0);
  }
  Eigen::MatrixXd dense_jacobian(const Eigen::VectorXd& z) const override {
    return Eigen::MatrixXd::Ones(1, z.size());
  }

 private:
  Eigen::VectorXd c_;
};

// Projection onto the capped simplex: z_i = clamp(c_i - tau, 0, 1) with tau by bisection.
Eigen::VectorXd capped_simplex_projection(const Eigen::VectorXd& c) {
  double lo = c.minCoeff() - 1.0, hi = c.maxCoeff();
  for (int it = 0; it < 200; ++it) {
    const double tau = 0.5 * (lo + hi);
    const double s = (c.array() - tau).max(0.0).min(1.0).sum();
    (s > 1.0 ? lo : hi) = tau;
  }
  return (c.array() - 0.5 * (lo + hi)).max(0.0).min(1.0).matrix();
}

// min x + y  s.t.  x^2 + y^2 = 1
class CircleLinear final : public DenseNlp {
 public:
  CircleLinear() : DenseNlp(Eigen::Vector2d::Constant(-5), Eigen::Vector2d::Constant(5)) {}
  int num_equalities() const override { return 1; }
  double objective_and_gradient(const Eigen::VectorXd& z, Eigen::VectorXd& g) const override {
    g = Eigen::Vector2d::Ones();
    return z.sum();
  }
  Eigen::VectorXd equality_residuals(const Eigen::VectorXd& z) const override {
    return Eigen::VectorXd::Constant(1, z.squaredNorm() - 1.0);
  }
  Eigen::MatrixXd dense_jacobian(const Eigen::VectorXd& z) const override { return 2.0 * z.transpose(); }
};

// Rosenbrock restricted to x <= 0.5; the optimum sits on the bound at (0.5, 0.25).
class BoundedRosenbrock final : public DenseNlp {
 public:
  BoundedRosenbrock() : DenseNlp(Eigen::Vector2d(-2, -2), Eigen::Vector2d(0.5, 2)) {}
  int num_equalities() const override { return 0; }
  double objective_and_gradient(const Eigen::VectorXd& z, Eigen::VectorXd& g) const override {
    const double x = z[0], y = z[1];
    g.resize(2);
    g << -2 * (1 - x) - 400 * x * (y - x * x), 200 * (y - x * x);
    return (1 - x) * (1 - x) + 100 * (y - x * x) * (y - x * x);
  }
  Eigen::VectorXd equality_residuals(const Eigen::VectorXd&) const override { return Eigen::VectorXd(0); }
  Eigen::MatrixXd dense_jacobian(const Eigen::VectorXd&) const override { return Eigen::MatrixXd(0, 2); }
};

// Deliberately wrong gradient in coordinate 1.
class WrongGradient final : public DenseNlp {
 public:
  WrongGradient() : DenseNlp(Eigen::Vector2d::Constant(-1), Eigen::Vector2d::Constant(1)) {}
  int num_equalities() const override { return 0; }
  double objective_and_gradient(const Eigen::VectorXd& z, Eigen::VectorXd& g) const override {
    g = Eigen::Vector2d(2 * z[0], 0.0);
    return z.squaredNorm();
  }
  Eigen::VectorXd equality_residuals(const Eigen::VectorXd&) const override { return Eigen::VectorXd(0); }
  Eigen::MatrixXd dense_jacobian(const Eigen::VectorXd&) const override { return Eigen::MatrixXd(0, 2); }
};

}  // namespace

TEST_CASE("project_to_bounds clamps coordinatewise") {
  const Eigen::Vector3d z(-2, 0.5, 9), lo(-1, 0, 0), hi(1, 1, 1);
  CHECK((project_to_bounds(z, lo, hi) - Eigen::Vector3d(-1, 0.5, 1)).norm() == 0.0);
}

TEST_CASE("solver configuration validation") {
  SolverConfig c;
  CHECK_NOTHROW(c.validate());
  c.memory = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.max_gradient = -1.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.rho_warm_max = 0.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("an inherited penalty is capped by rho_warm_max") {
  const CircleLinear prob;
  SolverConfig cfg;
  cfg.rho_warm_max = 50.0;
  const OcpSolution sol = solve(prob, cfg, Eigen::Vector2d(0.3, -0.1), DualGuess{Eigen::VectorXd::Zero(1), 1e6});
  REQUIRE_FALSE(sol.diagnostics.empty());
  CHECK(sol.diagnostics.front().rho == 50.0);
  CHECK(sol.converged());
}

TEST_CASE("quadrotor scenarios default to a smaller inherited penalty") {
  const ScenarioConfig q = scenario_from_json(resolve_scenario(json{{"model", {{"type", "quadrotor"}}}}));
  const ScenarioConfig d = scenario_from_json(resolve_scenario(json{{"model", {{"type", "double_integrator"}}}}));
  CHECK(q.solver.rho_warm_max == 1e4);
  CHECK(d.solver.rho_warm_max == SolverConfig{}.rho_warm_max);
}

TEST_CASE("capped simplex projection matches the bisection oracle") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> U(-1, 2);
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::VectorXd c(8);
    for (int i = 0; i < 8; ++i) c[i] = U(rng);
    const CappedSimplex prob(c);
    const OcpSolution sol = solve(prob, SolverConfig{}, Eigen::VectorXd::Constant(8, 0.5));
    REQUIRE(sol.converged());
    CHECK((sol.z - capped_simplex_projection(c)).lpNorm<Eigen::Infinity>() < 1e-5);
    CHECK(std::abs(sol.z.sum() - 1.0) <= 1e-6);
  }
}

TEST_CASE("nonlinear equality with a known minimiser") {
  const CircleLinear prob;
  const OcpSolution sol = solve(prob, SolverConfig{}, Eigen::Vector2d(0.3, -0.1));
  REQUIRE(sol.converged());
  CHECK(sol.z[0] == doctest::Approx(-std::sqrt(0.5)).epsilon(1e-5));
  CHECK(sol.z[1] == doctest::Approx(-std::sqrt(0.5)).epsilon(1e-5));
  CHECK(sol.objective == doctest::Approx(-std::sqrt(2.0)).epsilon(1e-6));
  // multiplier of x + y + lam (x^2 + y^2 - 1): lam = 1 / sqrt(2)
  CHECK(sol.multipliers[0] == doctest::Approx(std::sqrt(0.5)).epsilon(1e-3));
}

TEST_CASE("bound-constrained Rosenbrock stops on the active bound") {
  const BoundedRosenbrock prob;
  SolverConfig cfg;
  cfg.max_inner = 2000;
  const OcpSolution sol = solve(prob, cfg, Eigen::Vector2d(-1.2, 1.0));
  REQUIRE(sol.converged());
  CHECK(sol.z[0] == 0.5);
  CHECK(sol.z[1] == doctest::Approx(0.25).epsilon(1e-5));
}

TEST_CASE("crossed bounds are reported without iterating") {
  class Crossed final : public DenseNlp {
   public:
    Crossed() : DenseNlp(Eigen::Vector2d(0, 1), Eigen::Vector2d(1, 0)) {}
    int num_equalities() const override { return 0; }
    double objective_and_gradient(const Eigen::VectorXd& z, Eigen::VectorXd& g) const override {
      g = 2 * z;
      return z.squaredNorm();
    }
    Eigen::VectorXd equality_residuals(const Eigen::VectorXd&) const override { return Eigen::VectorXd(0); }
    Eigen::MatrixXd dense_jacobian(const Eigen::VectorXd&) const override { return Eigen::MatrixXd(0, 2); }
  };
  const OcpSolution sol = solve(Crossed{}, SolverConfig{}, Eigen::Vector2d::Zero());
  CHECK(sol.status == SolveStatus::infeasible_bounds);
  CHECK(to_string(sol.status) == "infeasible_bounds");
  CHECK(sol.inner_iterations == 0);
}

TEST_CASE("gradient check localises a wrong entry") {
  const WrongGradient prob;
  const GradientCheck gc = check_gradient(prob, Eigen::Vector2d(0.2, 0.4), 1e-6);
  CHECK(gc.worst_index == 1);
  CHECK(gc.max_error == doctest::Approx(0.8).epsilon(1e-6));
  CHECK(gc.numeric == doctest::Approx(0.8).epsilon(1e-6));
  CHECK(gc.analytic == 0.0);
}

TEST_CASE("tracking OCP reaches the brute-force optimum") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> P(-2, 2), V(-1, 1), T(-3, 3);
  for (int trial = 0; trial < 3; ++trial) {
    oracle::ScalarTrackingOcp ref;
    ref.horizon = 3;
    ref.p0 = P(rng);
    ref.v0 = V(rng);
    ref.target = T(rng);
    json doc = {{"model", {{"type", "double_integrator"}, {"integrator_dim", 1}, {"sample_time", ref.ts}}},
                {"nmpc", {{"horizon", ref.horizon}}}};
    const ScenarioConfig sc = scenario_from_json(resolve_scenario(doc));
    const OcpProblem prob(sc.nmpc, sc.make_model(), Eigen::Vector2d(ref.p0, ref.v0),
                          Eigen::VectorXd::Constant(1, ref.target), {});
    const OcpSolution sol = solve(prob, SolverConfig{}, prob.initial_guess());
    REQUIRE(sol.converged());
    CHECK(prob.equality_residuals(sol.z).lpNorm<Eigen::Infinity>() <= 1e-6);
    const double best = ref.brute_force(41, 8);
    CHECK(sol.objective <= best + 1e-3);
    CHECK(sol.objective >= best - 1e-2);
  }
}

TEST_CASE("solve is deterministic and warm starts are honoured") {
  json doc = {{"model", {{"type", "double_integrator"}, {"integrator_dim", 2}, {"sample_time", 0.1}}},
              {"nmpc", {{"horizon", 6}}}};
  const ScenarioConfig sc = scenario_from_json(resolve_scenario(doc));
  const OcpProblem prob(sc.nmpc, sc.make_model(), Eigen::Vector4d(0.5, -0.5, 0.2, 0), Eigen::Vector2d(2, 1), {});
  const SolverConfig cfg;
  const OcpSolution a = solve(prob, cfg, prob.initial_guess());
  const OcpSolution b = solve(prob, cfg, prob.initial_guess());
  REQUIRE(a.converged());
  CHECK(a.z == b.z);
  CHECK(a.multipliers == b.multipliers);
  CHECK(a.inner_iterations == b.inner_iterations);
  REQUIRE_FALSE(a.diagnostics.empty());
  CHECK(a.diagnostics.back().eq_residual <= cfg.eq_tol);

  const OcpSolution w = solve(prob, cfg, a.z, DualGuess{a.multipliers, a.rho});
  REQUIRE(w.converged());
  CHECK(w.inner_iterations <= a.inner_iterations);
  CHECK((w.z - a.z).lpNorm<Eigen::Infinity>() < 1e-4);
}
