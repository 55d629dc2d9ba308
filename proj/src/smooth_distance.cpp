#include "cloudnmpc/smooth_distance.hpp"

#include <cmath>
#include <stdexcept>

namespace cloudnmpc {

namespace {

constexpr double kPruneGap = 40.0;

void check_query(const WeightedCloud& wc, const Eigen::VectorXd& y) {
  if (y.size() != wc.cloud.dim())
    throw std::invalid_argument("smooth distance: query dimension does not match cloud");
}

// logit_j = ln W(a_j) - |y - a_j|^2 / (2 eta^2)
Eigen::VectorXd logits(const WeightedCloud& wc, const Eigen::VectorXd& y, double eta) {
  const double scale = 1.0 / (2.0 * eta * eta);
  const auto& pts = wc.cloud.points;
  return wc.log_weights - scale * (pts.colwise() - y).colwise().squaredNorm().transpose();
}

}  // namespace

void SmoothDistParams::validate() const {
  if (!(eta > 0.0) || !std::isfinite(eta)) throw std::invalid_argument("smooth: eta must be finite and > 0");
  if (!(sigma > 0.0) || !std::isfinite(sigma))
    throw std::invalid_argument("smooth: sigma must be finite and > 0");
}

WeightedCloud precompute(const PointCloud& cloud, const SmoothDistParams& params) {
  if (cloud.empty()) throw std::invalid_argument("smooth distance: empty cloud '" + cloud.id + "'");
  params.validate();
  WeightedCloud wc;
  wc.cloud = cloud;
  wc.centroid = cloud.points.rowwise().mean();
  const double scale = 1.0 / (2.0 * params.sigma * params.sigma);
  wc.log_weights = -scale * (cloud.points.colwise() - wc.centroid).colwise().squaredNorm().transpose();
  const double top = wc.log_weights.maxCoeff();
  wc.log_volume = top + std::log((wc.log_weights.array() - top).exp().sum());
  return wc;
}

Eigen::VectorXd projection_weights(const WeightedCloud& wc, const Eigen::VectorXd& y,
                                   const SmoothDistParams& params) {
  check_query(wc, y);
  Eigen::VectorXd l = logits(wc, y, params.eta);
  const double top = l.maxCoeff();
  Eigen::VectorXd w = (l.array() - top).exp();
  if (params.prune) w = ((l.array() - top) < -kPruneGap).select(0.0, w);
  return w / w.sum();
}

SmoothDistanceEval evaluate_smooth_distance(const WeightedCloud& wc, const Eigen::VectorXd& y,
                                            const SmoothDistParams& params) {
  check_query(wc, y);
  const Eigen::VectorXd l = logits(wc, y, params.eta);
  const double top = l.maxCoeff();
  const auto& pts = wc.cloud.points;

  double sum = 0.0;
  Eigen::VectorXd weighted = Eigen::VectorXd::Zero(y.size());
  for (Eigen::Index j = 0; j < l.size(); ++j) {
    const double shifted = l[j] - top;
    if (params.prune && shifted < -kPruneGap) continue;
    const double e = std::exp(shifted);
    sum += e;
    weighted.noalias() += e * pts.col(j);
  }

  SmoothDistanceEval out;
  const double lse = top + std::log(sum);
  // Clamp: roundoff can leave tiny negative values at y on a lone sample.
  out.value = std::max(0.0, -params.eta * params.eta * (lse - wc.log_volume));
  out.projection = weighted / sum;
  out.gradient = y - out.projection;
  return out;
}

double smooth_distance(const WeightedCloud& wc, const Eigen::VectorXd& y, const SmoothDistParams& params) {
  return evaluate_smooth_distance(wc, y, params).value;
}

Eigen::VectorXd smooth_projection(const WeightedCloud& wc, const Eigen::VectorXd& y,
                                  const SmoothDistParams& params) {
  return evaluate_smooth_distance(wc, y, params).projection;
}

Eigen::VectorXd smooth_gradient(const WeightedCloud& wc, const Eigen::VectorXd& y,
                                const SmoothDistParams& params) {
  return evaluate_smooth_distance(wc, y, params).gradient;
}

}  // namespace cloudnmpc
