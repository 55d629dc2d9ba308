#pragma once

#include <Eigen/Dense>

#include "cloudnmpc/cloud.hpp"

namespace cloudnmpc {

struct SmoothDistParams {
  double eta = 0.3;    // smoothing length (m)
  double sigma = 0.8;  // regularization scale of the centroid weights (m)
  // Skip points whose logit trails the maximum by more than 40 (exp(-40) is
  // below double resolution relative to the leading term).
  bool prune = false;

  void validate() const;
};

/// Cloud with its centroid, log-weights ln W(a_j) and log weighted volume ln V.
/// Depends on (cloud, sigma) only, so it is built once per sensed frame and
/// reused across horizon stages and solver iterations.
struct WeightedCloud {
  PointCloud cloud;
  Eigen::VectorXd centroid;
  Eigen::VectorXd log_weights;
  double log_volume = 0.0;
};

WeightedCloud precompute(const PointCloud& cloud, const SmoothDistParams& params);

/// -eta^2 * ln( (1/V) * sum_j W(a_j) exp(-|y - a_j|^2 / (2 eta^2)) ), in the log domain.
double smooth_distance(const WeightedCloud& wc, const Eigen::VectorXd& y, const SmoothDistParams& params);

/// Softmax-weighted mean of the cloud points (always inside the convex hull).
Eigen::VectorXd smooth_projection(const WeightedCloud& wc, const Eigen::VectorXd& y,
                                  const SmoothDistParams& params);

/// grad D = y - projection.
Eigen::VectorXd smooth_gradient(const WeightedCloud& wc, const Eigen::VectorXd& y,
                                const SmoothDistParams& params);

struct SmoothDistanceEval {
  double value = 0.0;
  Eigen::VectorXd projection;
  Eigen::VectorXd gradient;
};

/// Value, projection and gradient from a single pass over the cloud.
SmoothDistanceEval evaluate_smooth_distance(const WeightedCloud& wc, const Eigen::VectorXd& y,
                                            const SmoothDistParams& params);

/// Per-point softmax weights used by the projection (sum to one).
Eigen::VectorXd projection_weights(const WeightedCloud& wc, const Eigen::VectorXd& y,
                                   const SmoothDistParams& params);

}  // namespace cloudnmpc
