#pragma once

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cloudnmpc/smooth_distance.hpp"

namespace cloudnmpc {

/// as_printed: g = (1 - delta) b_j - b_{j+1}.  definition: g = delta b_j - b_{j+1},
/// i.e. the stricter decay b_{j+1} >= delta b_j.
enum class DecayConvention { as_printed, definition };

struct BarrierParams {
  double delta = 0.95;
  double d_min = 0.5;
  double kappa = 10.0;
  double epsilon = 1.0;
  double mu = 5e4;
  DecayConvention convention = DecayConvention::as_printed;

  void validate() const;
  /// Coefficient multiplying b_j in the violation measure.
  double decay_coefficient() const { return convention == DecayConvention::as_printed ? 1.0 - delta : delta; }
};

/// Distance-like field around one obstacle: value D(y) and its gradient.
class ObstacleMetric {
 public:
  virtual ~ObstacleMetric() = default;
  virtual double distance(const Eigen::VectorXd& y) const = 0;
  virtual double distance_and_gradient(const Eigen::VectorXd& y, Eigen::VectorXd& grad) const = 0;
  virtual const std::string& id() const = 0;
  virtual int sensed_points() const = 0;
};

class SmoothedMetric final : public ObstacleMetric {
 public:
  SmoothedMetric(const PointCloud& cloud, const SmoothDistParams& params);

  double distance(const Eigen::VectorXd& y) const override;
  double distance_and_gradient(const Eigen::VectorXd& y, Eigen::VectorXd& grad) const override;
  const std::string& id() const override { return wc_.cloud.id; }
  int sensed_points() const override { return wc_.cloud.size(); }
  const WeightedCloud& weighted_cloud() const { return wc_; }

 private:
  WeightedCloud wc_;
  SmoothDistParams params_;
};

using MetricSet = std::vector<std::shared_ptr<const ObstacleMetric>>;

/// b(y) = D(y) - d_min
double beta(const Eigen::VectorXd& y, const WeightedCloud& wc, const BarrierParams& bp,
            const SmoothDistParams& sp);

double violation(double beta_j, double beta_j1, const BarrierParams& bp);

/// softplus(x) = ln(1 + e^x), stable for large |x|.
double softplus(double x);

/// F(g) = softplus(kappa g)^epsilon / kappa
double penalty(double g, const BarrierParams& bp);
double penalty_derivative(double g, const BarrierParams& bp);
/// F(g) - max(0, g) without cancellation (closed form for epsilon = 1).
double penalty_gap(double g, const BarrierParams& bp);
double penalty_second_derivative(double g, const BarrierParams& bp);

/// Sum over obstacles of mu F(g_a) for the artificial output plus mu F(g_j) over
/// consecutive output pairs (y_j, y_{j+1}), j = 0..N-1. The artificial term uses the
/// stationary violation g_a = (c - 1) b(y_a), c the decay coefficient.
/// When gradients are requested they are filled with dP/dy_j and dP/dy_a.
double horizon_penalty(const std::vector<Eigen::VectorXd>& outputs, const Eigen::VectorXd& y_a,
                       const MetricSet& sensed, const BarrierParams& bp,
                       std::vector<Eigen::VectorXd>* output_grads = nullptr,
                       Eigen::VectorXd* artificial_grad = nullptr);

/// Gauss-Newton curvature of horizon_penalty (mu F''(g) dg dg^T, distance
/// Hessians dropped). Only used to precondition the solver.
struct PenaltyCurvature {
  std::vector<Eigen::MatrixXd> pairs;  // 2p x 2p over (y_j, y_{j+1}), j = 0..N-1
  Eigen::MatrixXd artificial;          // p x p
};
PenaltyCurvature horizon_penalty_curvature(const std::vector<Eigen::VectorXd>& outputs, const Eigen::VectorXd& y_a,
                                           const MetricSet& sensed, const BarrierParams& bp);

/// Convenience overload over precomputed weighted clouds.
double horizon_penalty(const std::vector<Eigen::VectorXd>& outputs, const Eigen::VectorXd& y_a,
                       const std::vector<WeightedCloud>& sensed, const BarrierParams& bp,
                       const SmoothDistParams& sp);

}  // namespace cloudnmpc
