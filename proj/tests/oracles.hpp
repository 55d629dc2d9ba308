#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

/// Scalar double-integrator tracking OCP with an artificial equilibrium. At rest
/// the equilibrium input is zero and its state is (p_N, 0), so the problem
/// reduces to the stage inputs with v_N = 0 fixing the last one.
struct ScalarTrackingOcp {
  double ts = 0.5;
  int horizon = 4;
  double q_pos = 1.0, q_vel = 1.0, r = 3.0, t = 1000.0;
  double p0 = 0.0, v0 = 0.0, target = 0.0;
  double p_max = 10.0, v_max = 3.0, u_max = 5.0, lambda = 0.99;

  /// Cost of a full input sequence, +inf when a bound is violated.
  double cost(const std::vector<double>& u) const {
    double p = p0, v = v0, J = 0.0;
    std::vector<double> ps, vs;
    for (int j = 0; j < horizon; ++j) {
      if (std::abs(u[j]) > u_max || std::abs(p) > p_max || std::abs(v) > v_max)
        return std::numeric_limits<double>::infinity();
      ps.push_back(p);
      vs.push_back(v);
      p += ts * v + 0.5 * ts * ts * u[j];
      v += ts * u[j];
    }
    if (std::abs(p) > lambda * p_max) return std::numeric_limits<double>::infinity();
    for (int j = 0; j < horizon; ++j) {
      J += q_pos * (ps[j] - p) * (ps[j] - p) + q_vel * (vs[j] - 0.0) * (vs[j] - 0.0) + r * u[j] * u[j];
    }
    return J + t * (p - target) * (p - target);
  }

  /// Free inputs u_0..u_{N-2}; the last input brings the velocity to zero.
  double cost_free(const std::vector<double>& free) const {
    std::vector<double> u = free;
    double sum = 0.0;
    for (double x : free) sum += x;
    u.push_back(-v0 / ts - sum);
    return cost(u);
  }

  /// Tensor grid over the free inputs, re-centred and narrowed around the best
  /// node `levels` times.
  double brute_force(int points = 31, int levels = 8) const {
    const int dims = horizon - 1;
    std::vector<double> center(static_cast<std::size_t>(dims), 0.0);
    double half = u_max, best = std::numeric_limits<double>::infinity();
    std::vector<double> trial(static_cast<std::size_t>(dims));
    for (int level = 0; level < levels; ++level) {
      std::vector<double> best_at = center;
      std::vector<int> idx(static_cast<std::size_t>(dims), 0);
      while (true) {
        for (int d = 0; d < dims; ++d)
          trial[d] = std::clamp(center[d] - half + 2.0 * half * idx[d] / (points - 1), -u_max, u_max);
        const double c = cost_free(trial);
        if (c < best) {
          best = c;
          best_at = trial;
        }
        int d = 0;
        while (d < dims && ++idx[d] == points) idx[d++] = 0;
        if (d == dims) break;
      }
      center = best_at;
      half *= 4.0 / (points - 1);
    }
    return best;
  }
};

}  // namespace oracle
