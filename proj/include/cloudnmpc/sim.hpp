#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cloudnmpc/barrier.hpp"
#include "cloudnmpc/cloud.hpp"
#include "cloudnmpc/dynamics.hpp"
#include "cloudnmpc/nmpc.hpp"
#include "cloudnmpc/solver.hpp"

namespace cloudnmpc {

enum class ModelKind { quadrotor, double_integrator };
enum class MetricKind { smoothed, euclidean };
/// squared: D = d^2 / 2 (same units as the smoothed metric); raw: D = d.
enum class EuclideanScaling { squared, raw };

struct ObstacleSpec {
  std::string id;
  HaltonConfig halton;
  std::filesystem::path file;  // when set, the cloud is loaded instead of generated
};

struct ScenarioConfig {
  ModelKind model = ModelKind::quadrotor;
  int integrator_dim = 3;
  double sample_time = 0.01;
  QuadrotorParams quadrotor;

  NmpcConfig nmpc;
  SolverConfig solver;
  std::vector<ObstacleSpec> obstacles;
  LidarConfig lidar;

  Eigen::VectorXd initial_state;
  std::vector<Eigen::VectorXd> waypoints;
  double stop_radius = 0.3;
  double max_sim_time = 600.0;
  MetricKind metric = MetricKind::smoothed;
  EuclideanScaling euclidean_scaling = EuclideanScaling::squared;
  int control_every = 1;
  int max_consecutive_failures = 10;

  std::shared_ptr<SystemModel> make_model() const;
  std::vector<PointCloud> make_clouds() const;
};

struct NearestPoint {
  double distance = std::numeric_limits<double>::infinity();
  Eigen::VectorXd point;
  int index = -1;
};

/// Exact min_j |y - a_j|; ties resolve to the lowest index.
NearestPoint euclidean_baseline_distance(const PointCloud& cloud, const Eigen::VectorXd& y);

/// Nearest-point metric used by the baseline controller. Its gradient jumps
/// wherever the nearest sample changes.
class EuclideanMetric final : public ObstacleMetric {
 public:
  EuclideanMetric(PointCloud cloud, EuclideanScaling scaling);

  double distance(const Eigen::VectorXd& y) const override;
  double distance_and_gradient(const Eigen::VectorXd& y, Eigen::VectorXd& grad) const override;
  const std::string& id() const override { return cloud_.id; }
  int sensed_points() const override { return cloud_.size(); }

 private:
  PointCloud cloud_;
  EuclideanScaling scaling_;
};

struct LogRow {
  double time = 0.0;
  int target_index = 0;
  Eigen::VectorXd state;
  Eigen::VectorXd input;
  Eigen::VectorXd target;
  std::vector<int> sensed_points;         // per obstacle, 0 when out of range
  std::vector<double> clearance;          // true Euclidean distance to the full cloud
  std::vector<double> smoothed_distance;  // smoothed metric on the sensed cloud, NaN when not sensed
  std::string solver_status;              // converged | max_iter | hold | complete
  int solver_iterations = 0;
  double objective = std::numeric_limits<double>::quiet_NaN();
};

enum class RunOutcome { completed, timeout, aborted };
std::string to_string(RunOutcome o);

struct TrajectoryLog {
  int state_dim = 0, input_dim = 0, output_dim = 0;
  double sample_time = 0.0;
  std::vector<std::string> obstacle_ids;
  std::vector<LogRow> rows;
  RunOutcome outcome = RunOutcome::timeout;
  std::string message;
  int waypoint_count = 0;
  int nonconverged_solves = 0;
  int solves = 0;
};

using StepObserver = std::function<void(const LogRow&)>;

/// Closed loop: measure, scan, build + solve, apply first input, integrate.
TrajectoryLog run_scenario(const ScenarioConfig& cfg, const StepObserver& observer = {});

struct WaypointSummary {
  bool reached = false;
  double time_reached = std::numeric_limits<double>::quiet_NaN();
  double final_error = std::numeric_limits<double>::quiet_NaN();
};

struct RunSummary {
  std::size_t steps = 0;
  double final_time = 0.0;
  double min_clearance = std::numeric_limits<double>::infinity();
  double input_total_variation = 0.0;
  int solves = 0;
  int nonconverged_solves = 0;
  std::vector<WaypointSummary> waypoints;
  std::string outcome;
};

RunSummary metrics(const TrajectoryLog& log);

/// Columns: time, target_index, x0.., u0.., target0.., sensed_<id>.., clearance_<id>..,
/// smooth_distance_<id>.., solver_status, solver_iterations, objective.
std::vector<std::string> csv_header(const TrajectoryLog& log);
void write_csv(const TrajectoryLog& log, std::ostream& out);
void write_csv(const TrajectoryLog& log, const std::filesystem::path& path);
TrajectoryLog read_csv(const std::filesystem::path& path);

}  // namespace cloudnmpc
