#include <doctest.h>

#include <cmath>
#include <random>

#include "cloudnmpc/barrier.hpp"

using namespace cloudnmpc;

namespace {

MetricSet one_metric(const PointCloud& c, const SmoothDistParams& sp = {}) {
  return {std::make_shared<SmoothedMetric>(c, sp)};
}

PointCloud box_cloud() {
  HaltonConfig h;
  h.count = 120;
  h.box_min = Eigen::Vector3d(0, 0, 0);
  h.box_max = Eigen::Vector3d(1, 2, 1);
  return generate_cloud(h, "box");
}

}  // namespace

TEST_CASE("softplus is stable and matches the definition") {
  for (double x : {-40.0, -3.0, -0.1, 0.0, 0.2, 5.0, 29.0}) CHECK(softplus(x) == doctest::Approx(std::log1p(std::exp(x))));
  CHECK(softplus(800.0) == 800.0);
  CHECK(softplus(-800.0) == 0.0);
  CHECK(std::isfinite(softplus(1e6)));
}

TEST_CASE("penalty sits above the hinge by at most ln 2 / kappa") {
  for (double kappa : {1.0, 10.0, 100.0}) {
    BarrierParams bp;
    bp.kappa = kappa;
    for (int i = 0; i <= 2000; ++i) {
      const double g = -5.0 + 10.0 * i / 2000.0;
      const double gap = penalty_gap(g, bp);
      CHECK(gap > 0.0);
      CHECK(gap <= std::log(2.0) / kappa * (1 + 1e-15));
      CHECK(penalty(g, bp) - std::max(0.0, g) == doctest::Approx(gap).epsilon(1e-9).scale(1.0 / kappa));
    }
    CHECK(penalty_gap(0.0, bp) == doctest::Approx(std::log(2.0) / kappa).epsilon(1e-15));
  }
}

TEST_CASE("penalty derivatives match finite differences") {
  for (double eps : {1.0, 1.5, 2.0}) {
    BarrierParams bp;
    bp.epsilon = eps;
    bp.kappa = 4.0;
    for (double g : {-1.0, -0.2, 0.0, 0.3, 1.2}) {
      const double h = 1e-6;
      const double d1 = (penalty(g + h, bp) - penalty(g - h, bp)) / (2 * h);
      const double d2 = (penalty_derivative(g + h, bp) - penalty_derivative(g - h, bp)) / (2 * h);
      CHECK(penalty_derivative(g, bp) == doctest::Approx(d1).epsilon(1e-7));
      CHECK(penalty_second_derivative(g, bp) == doctest::Approx(d2).epsilon(1e-6));
    }
  }
}

TEST_CASE("decay conventions") {
  BarrierParams bp;
  bp.delta = 0.9;
  CHECK(bp.decay_coefficient() == doctest::Approx(0.1));
  CHECK(violation(2.0, 1.0, bp) == doctest::Approx(0.1 * 2.0 - 1.0));
  bp.convention = DecayConvention::definition;
  CHECK(bp.decay_coefficient() == doctest::Approx(0.9));
  CHECK(violation(2.0, 1.0, bp) == doctest::Approx(0.9 * 2.0 - 1.0));
}

TEST_CASE("barrier parameter validation") {
  BarrierParams bp;
  CHECK_NOTHROW(bp.validate());
  bp.mu = 0.0;
  CHECK_NOTHROW(bp.validate());
  bp.delta = 1.0;
  CHECK_THROWS_AS(bp.validate(), std::invalid_argument);
  bp.delta = 0.5;
  bp.kappa = 0.0;
  CHECK_THROWS_AS(bp.validate(), std::invalid_argument);
  bp.kappa = 1.0;
  bp.d_min = -1.0;
  CHECK_THROWS_AS(bp.validate(), std::invalid_argument);
}

TEST_CASE("beta is the smoothed distance shifted by d_min") {
  const PointCloud c = box_cloud();
  const SmoothDistParams sp;
  const WeightedCloud wc = precompute(c, sp);
  BarrierParams bp;
  const Eigen::Vector3d y(2, 1, 0.5);
  CHECK(beta(y, wc, bp, sp) == doctest::Approx(smooth_distance(wc, y, sp) - bp.d_min));
}

TEST_CASE("horizon penalty assembles stage pairs and the artificial term") {
  const PointCloud c = box_cloud();
  const SmoothDistParams sp;
  const MetricSet ms = one_metric(c, sp);
  BarrierParams bp;
  bp.mu = 3.0;
  std::vector<Eigen::VectorXd> ys{Eigen::Vector3d(2, 1, 0.5), Eigen::Vector3d(1.6, 1, 0.5), Eigen::Vector3d(1.3, 1, 0.5)};
  const Eigen::VectorXd ya = Eigen::Vector3d(-1, 0, 0);

  const double cc = bp.decay_coefficient();
  double expected = 0.0;
  auto b = [&](const Eigen::VectorXd& y) { return ms[0]->distance(y) - bp.d_min; };
  for (std::size_t j = 0; j + 1 < ys.size(); ++j) expected += penalty(cc * b(ys[j]) - b(ys[j + 1]), bp);
  expected += penalty((cc - 1.0) * b(ya), bp);
  CHECK(horizon_penalty(ys, ya, ms, bp) == doctest::Approx(bp.mu * expected).epsilon(1e-14));

  CHECK(horizon_penalty(ys, ya, MetricSet{}, bp) == 0.0);
  bp.mu = 0.0;
  std::vector<Eigen::VectorXd> grads;
  Eigen::VectorXd ga;
  CHECK(horizon_penalty(ys, ya, ms, bp, &grads, &ga) == 0.0);
  for (const auto& g : grads) CHECK(g.isZero());
  CHECK(ga.isZero());
}

TEST_CASE("horizon penalty gradient matches finite differences") {
  const PointCloud c = box_cloud();
  const MetricSet ms = one_metric(c);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> U(-1.0, 3.0);
  for (auto conv : {DecayConvention::as_printed, DecayConvention::definition}) {
    BarrierParams bp;
    bp.convention = conv;
    for (int trial = 0; trial < 5; ++trial) {
      std::vector<Eigen::VectorXd> ys;
      for (int j = 0; j < 6; ++j) ys.push_back(Eigen::Vector3d(U(rng), U(rng), U(rng)));
      Eigen::VectorXd ya = Eigen::Vector3d(U(rng), U(rng), U(rng));
      std::vector<Eigen::VectorXd> grads;
      Eigen::VectorXd ga;
      horizon_penalty(ys, ya, ms, bp, &grads, &ga);
      const double h = 1e-6;
      double scale = 1.0, worst = 0.0;
      for (std::size_t j = 0; j <= ys.size(); ++j) {
        for (int d = 0; d < 3; ++d) {
          auto yp = ys, ym = ys;
          Eigen::VectorXd ap = ya, am = ya;
          Eigen::VectorXd& vp = j < ys.size() ? yp[j] : ap;
          Eigen::VectorXd& vm = j < ys.size() ? ym[j] : am;
          vp[d] += h;
          vm[d] -= h;
          const double fd = (horizon_penalty(yp, ap, ms, bp) - horizon_penalty(ym, am, ms, bp)) / (2 * h);
          const double an = j < ys.size() ? grads[j][d] : ga[d];
          scale = std::max(scale, std::abs(fd));
          worst = std::max(worst, std::abs(fd - an));
        }
      }
      CHECK(worst / scale < 1e-6);
    }
  }
}

TEST_CASE("penalty curvature blocks are symmetric positive semidefinite") {
  const PointCloud c = box_cloud();
  const MetricSet ms = one_metric(c);
  BarrierParams bp;
  std::vector<Eigen::VectorXd> ys{Eigen::Vector3d(1.3, 1, 0.5), Eigen::Vector3d(1.2, 1, 0.5), Eigen::Vector3d(1.1, 1, 0.5)};
  const PenaltyCurvature pc = horizon_penalty_curvature(ys, Eigen::Vector3d(1.2, 1, 0.5), ms, bp);
  REQUIRE(pc.pairs.size() == 2);
  for (const auto& P : pc.pairs) {
    CHECK((P - P.transpose()).norm() <= 1e-14 * P.norm());
    CHECK(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(P).eigenvalues().minCoeff() >= -1e-9 * (1 + P.norm()));
  }
  CHECK(pc.pairs[0].norm() > 0.0);
}
