#include "cloudnmpc/barrier.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cloudnmpc {

void BarrierParams::validate() const {
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("barrier: delta must lie in (0,1)");
  if (!(d_min > 0.0)) throw std::invalid_argument("barrier: d_min must be > 0");
  if (!(kappa > 0.0)) throw std::invalid_argument("barrier: kappa must be > 0");
  if (!(epsilon > 0.0)) throw std::invalid_argument("barrier: epsilon must be > 0");
  if (!(mu >= 0.0)) throw std::invalid_argument("barrier: mu must be >= 0");
}

SmoothedMetric::SmoothedMetric(const PointCloud& cloud, const SmoothDistParams& params)
    : wc_(precompute(cloud, params)), params_(params) {}

double SmoothedMetric::distance(const Eigen::VectorXd& y) const { return smooth_distance(wc_, y, params_); }

double SmoothedMetric::distance_and_gradient(const Eigen::VectorXd& y, Eigen::VectorXd& grad) const {
  auto e = evaluate_smooth_distance(wc_, y, params_);
  grad = std::move(e.gradient);
  return e.value;
}

double beta(const Eigen::VectorXd& y, const WeightedCloud& wc, const BarrierParams& bp,
            const SmoothDistParams& sp) {
  return smooth_distance(wc, y, sp) - bp.d_min;
}

double violation(double beta_j, double beta_j1, const BarrierParams& bp) {
  return bp.decay_coefficient() * beta_j - beta_j1;
}

double softplus(double x) {
  if (x > 30.0) return x + std::exp(-x);
  return std::log1p(std::exp(x));
}

namespace {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

double penalty(double g, const BarrierParams& bp) {
  const double s = softplus(bp.kappa * g);
  if (bp.epsilon == 1.0) return s / bp.kappa;
  return std::pow(s, bp.epsilon) / bp.kappa;
}

double penalty_derivative(double g, const BarrierParams& bp) {
  const double sig = sigmoid(bp.kappa * g);
  if (bp.epsilon == 1.0) return sig;
  const double s = softplus(bp.kappa * g);
  if (s == 0.0) return 0.0;
  return bp.epsilon * std::pow(s, bp.epsilon - 1.0) * sig;
}

double penalty_gap(double g, const BarrierParams& bp) {
  // softplus(x) - max(0, x) = log1p(exp(-|x|))
  if (bp.epsilon == 1.0) return std::log1p(std::exp(-bp.kappa * std::abs(g))) / bp.kappa;
  return penalty(g, bp) - std::max(0.0, g);
}

double penalty_second_derivative(double g, const BarrierParams& bp) {
  const double sig = sigmoid(bp.kappa * g);
  const double dsig = bp.kappa * sig * (1.0 - sig);
  if (bp.epsilon == 1.0) return dsig;
  const double s = softplus(bp.kappa * g);
  if (s == 0.0) return 0.0;
  const double e = bp.epsilon;
  return e * (e - 1.0) * std::pow(s, e - 2.0) * bp.kappa * sig * sig + e * std::pow(s, e - 1.0) * dsig;
}

double horizon_penalty(const std::vector<Eigen::VectorXd>& outputs, const Eigen::VectorXd& y_a,
                       const MetricSet& sensed, const BarrierParams& bp,
                       std::vector<Eigen::VectorXd>* output_grads, Eigen::VectorXd* artificial_grad) {
  const bool want_grad = output_grads != nullptr;
  const std::size_t stages = outputs.size();
  if (want_grad) {
    output_grads->assign(stages, Eigen::VectorXd::Zero(y_a.size()));
    if (artificial_grad) *artificial_grad = Eigen::VectorXd::Zero(y_a.size());
  }
  if (sensed.empty() || bp.mu == 0.0) return 0.0;

  const double c = bp.decay_coefficient();
  std::vector<double> b(stages);
  std::vector<Eigen::VectorXd> db(want_grad ? stages : 0);
  Eigen::VectorXd grad;

  double total = 0.0;
  for (const auto& metric : sensed) {
    double obstacle_sum = 0.0;
    for (std::size_t j = 0; j < stages; ++j) {
      if (want_grad) {
        b[j] = metric->distance_and_gradient(outputs[j], db[j]) - bp.d_min;
      } else {
        b[j] = metric->distance(outputs[j]) - bp.d_min;
      }
    }
    for (std::size_t j = 0; j + 1 < stages; ++j) {
      const double g = c * b[j] - b[j + 1];
      obstacle_sum += penalty(g, bp);
      if (want_grad) {
        const double dF = bp.mu * penalty_derivative(g, bp);
        (*output_grads)[j] += (dF * c) * db[j];
        (*output_grads)[j + 1] -= dF * db[j + 1];
      }
    }

    const double b_a = want_grad ? metric->distance_and_gradient(y_a, grad) - bp.d_min
                                 : metric->distance(y_a) - bp.d_min;
    const double g_a = (c - 1.0) * b_a;
    obstacle_sum += penalty(g_a, bp);
    if (want_grad && artificial_grad) {
      *artificial_grad += (bp.mu * penalty_derivative(g_a, bp) * (c - 1.0)) * grad;
    }
    total += bp.mu * obstacle_sum;
  }
  return total;
}

PenaltyCurvature horizon_penalty_curvature(const std::vector<Eigen::VectorXd>& outputs, const Eigen::VectorXd& y_a,
                                           const MetricSet& sensed, const BarrierParams& bp) {
  const Eigen::Index p = y_a.size();
  PenaltyCurvature out;
  out.pairs.assign(outputs.size() > 0 ? outputs.size() - 1 : 0, Eigen::MatrixXd::Zero(2 * p, 2 * p));
  out.artificial = Eigen::MatrixXd::Zero(p, p);
  if (sensed.empty() || bp.mu == 0.0) return out;

  const double c = bp.decay_coefficient();
  std::vector<double> b(outputs.size());
  std::vector<Eigen::VectorXd> db(outputs.size());
  Eigen::VectorXd v(2 * p), grad;
  for (const auto& metric : sensed) {
    for (std::size_t j = 0; j < outputs.size(); ++j) b[j] = metric->distance_and_gradient(outputs[j], db[j]) - bp.d_min;
    for (std::size_t j = 0; j + 1 < outputs.size(); ++j) {
      const double w = bp.mu * std::max(0.0, penalty_second_derivative(c * b[j] - b[j + 1], bp));
      if (w == 0.0) continue;
      v << c * db[j], -db[j + 1];
      out.pairs[j].noalias() += w * v * v.transpose();
    }
    const double g_a = (c - 1.0) * (metric->distance_and_gradient(y_a, grad) - bp.d_min);
    const double w = bp.mu * std::max(0.0, penalty_second_derivative(g_a, bp)) * (c - 1.0) * (c - 1.0);
    out.artificial.noalias() += w * grad * grad.transpose();
  }
  return out;
}

double horizon_penalty(const std::vector<Eigen::VectorXd>& outputs, const Eigen::VectorXd& y_a,
                       const std::vector<WeightedCloud>& sensed, const BarrierParams& bp,
                       const SmoothDistParams& sp) {
  MetricSet metrics;
  for (const auto& wc : sensed) metrics.push_back(std::make_shared<SmoothedMetric>(wc.cloud, sp));
  return horizon_penalty(outputs, y_a, metrics, bp);
}

}  // namespace cloudnmpc
