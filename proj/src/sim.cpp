#include "cloudnmpc/sim.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace cloudnmpc {

std::shared_ptr<SystemModel> ScenarioConfig::make_model() const {
  if (model == ModelKind::quadrotor) return std::make_shared<QuadrotorModel>(quadrotor, sample_time);
  return std::make_shared<DoubleIntegratorModel>(integrator_dim, sample_time);
}

std::vector<PointCloud> ScenarioConfig::make_clouds() const {
  std::vector<PointCloud> clouds;
  for (const auto& o : obstacles) {
    PointCloud c = o.file.empty() ? generate_cloud(o.halton, o.id) : load_cloud(o.file);
    c.id = o.id;
    clouds.push_back(std::move(c));
  }
  return clouds;
}

NearestPoint euclidean_baseline_distance(const PointCloud& cloud, const Eigen::VectorXd& y) {
  if (cloud.empty()) throw std::invalid_argument("euclidean distance: empty cloud");
  NearestPoint out;
  double best = std::numeric_limits<double>::infinity();
  for (int j = 0; j < cloud.size(); ++j) {
    const double d2 = (cloud.point(j) - y).squaredNorm();
    if (d2 < best) {
      best = d2;
      out.index = j;
    }
  }
  out.distance = std::sqrt(best);
  out.point = cloud.point(out.index);
  return out;
}

EuclideanMetric::EuclideanMetric(PointCloud cloud, EuclideanScaling scaling)
    : cloud_(std::move(cloud)), scaling_(scaling) {
  if (cloud_.empty()) throw std::invalid_argument("euclidean metric: empty cloud");
}

double EuclideanMetric::distance(const Eigen::VectorXd& y) const {
  const double d = euclidean_baseline_distance(cloud_, y).distance;
  return scaling_ == EuclideanScaling::squared ? 0.5 * d * d : d;
}

double EuclideanMetric::distance_and_gradient(const Eigen::VectorXd& y, Eigen::VectorXd& grad) const {
  const NearestPoint np = euclidean_baseline_distance(cloud_, y);
  if (scaling_ == EuclideanScaling::squared) {
    grad = y - np.point;
    return 0.5 * np.distance * np.distance;
  }
  grad = np.distance > 0.0 ? Eigen::VectorXd((y - np.point) / np.distance) : Eigen::VectorXd::Zero(y.size());
  return np.distance;
}

std::string to_string(RunOutcome o) {
  switch (o) {
    case RunOutcome::completed: return "completed";
    case RunOutcome::timeout: return "timeout";
    case RunOutcome::aborted: return "aborted";
  }
  return "unknown";
}

namespace {

void validate_scenario(const ScenarioConfig& cfg, const SystemModel& model) {
  if (cfg.waypoints.empty()) throw std::invalid_argument("waypoints must be non-empty");
  for (const auto& w : cfg.waypoints)
    if (w.size() != model.output_dim()) throw std::invalid_argument("waypoint dimension must match the output");
  if (!(cfg.stop_radius > 0.0)) throw std::invalid_argument("stop_radius must be > 0");
  if (cfg.initial_state.size() != model.state_dim())
    throw std::invalid_argument("initial_state has wrong dimension");
  if (!cfg.nmpc.state_bounds.contains(cfg.initial_state))
    throw std::invalid_argument("initial_state must lie within the state bounds");
  if (cfg.control_every < 1) throw std::invalid_argument("control_every must be >= 1");
  cfg.lidar.validate();
  cfg.solver.validate();
}

}  // namespace

TrajectoryLog run_scenario(const ScenarioConfig& cfg, const StepObserver& observer) {
  const std::shared_ptr<SystemModel> model = cfg.make_model();
  validate_scenario(cfg, *model);
  cfg.nmpc.validate(model->state_dim(), model->input_dim(), model->output_dim());
  const std::vector<PointCloud> clouds = cfg.make_clouds();
  for (const auto& c : clouds)
    if (c.dim() != model->output_dim()) throw std::invalid_argument("obstacle '" + c.id + "' dimension mismatch");

  TrajectoryLog log;
  log.state_dim = model->state_dim();
  log.input_dim = model->input_dim();
  log.output_dim = model->output_dim();
  log.sample_time = cfg.sample_time;
  log.waypoint_count = static_cast<int>(cfg.waypoints.size());
  for (const auto& c : clouds) log.obstacle_ids.push_back(c.id);

  const std::size_t n_obs = clouds.size();
  const auto max_steps = static_cast<long long>(std::floor(cfg.max_sim_time / cfg.sample_time + 1e-9));

  Eigen::VectorXd x = cfg.initial_state;
  Eigen::VectorXd u = cfg.nmpc.input_bounds.clamp(model->nominal_input());
  std::size_t target = 0;
  std::optional<OcpSolution> warm;
  int consecutive_failures = 0;

  for (long long k = 0;; ++k) {
    LogRow row;
    row.time = static_cast<double>(k) * cfg.sample_time;
    row.state = x;
    const Eigen::VectorXd y = model->output(x);

    while (target < cfg.waypoints.size() && (y - cfg.waypoints[target]).norm() < cfg.stop_radius) ++target;
    const bool done = target == cfg.waypoints.size();
    row.target_index = static_cast<int>(target);
    row.target = cfg.waypoints[std::min(target, cfg.waypoints.size() - 1)];

    const std::vector<PointCloud> sensed = lidar_scan(clouds, y, cfg.lidar);
    row.sensed_points.assign(n_obs, 0);
    row.clearance.assign(n_obs, std::numeric_limits<double>::infinity());
    row.smoothed_distance.assign(n_obs, std::numeric_limits<double>::quiet_NaN());
    MetricSet metrics;
    for (std::size_t i = 0; i < n_obs; ++i) row.clearance[i] = euclidean_baseline_distance(clouds[i], y).distance;
    for (const auto& s : sensed) {
      std::size_t i = 0;
      while (clouds[i].id != s.id) ++i;
      row.sensed_points[i] = s.size();
      auto smooth = std::make_shared<SmoothedMetric>(s, cfg.nmpc.smooth);
      row.smoothed_distance[i] = smooth->distance(y);
      if (cfg.metric == MetricKind::smoothed) {
        metrics.push_back(std::move(smooth));
      } else {
        metrics.push_back(std::make_shared<EuclideanMetric>(s, cfg.euclidean_scaling));
      }
    }

    if (done) {
      row.input = u;
      row.solver_status = "complete";
      log.rows.push_back(row);
      if (observer) observer(log.rows.back());
      log.outcome = RunOutcome::completed;
      break;
    }
    if (k >= max_steps) {
      log.outcome = RunOutcome::timeout;
      log.message = "max_sim_time reached";
      break;
    }

    if (k % cfg.control_every == 0) {
      std::optional<OcpProblem> prob;
      OcpSolution sol;
      try {
        prob.emplace(build_problem(cfg.nmpc, model, x, cfg.waypoints[target], metrics, warm ? &*warm : nullptr));
        sol = solve(*prob, cfg.solver, prob->initial_guess(), prob->dual_guess());
      } catch (const std::domain_error& e) {
        log.outcome = RunOutcome::aborted;
        log.message = "solver failed at t=" + std::to_string(row.time) + ": " + e.what();
        break;
      }
      ++log.solves;
      if (sol.status == SolveStatus::infeasible_bounds) {
        log.outcome = RunOutcome::aborted;
        log.message = "solver reported infeasible bounds at t=" + std::to_string(row.time);
        break;
      }
      if (sol.converged()) {
        consecutive_failures = 0;
      } else {
        ++log.nonconverged_solves;
        ++consecutive_failures;
      }
      u = prob->stage_input(sol.z, 0);
      row.solver_status = to_string(sol.status);
      row.solver_iterations = sol.inner_iterations;
      row.objective = sol.objective;
      warm = std::move(sol);
    } else {
      row.solver_status = "hold";
    }
    row.input = u;
    log.rows.push_back(row);
    if (observer) observer(log.rows.back());

    if (consecutive_failures > cfg.max_consecutive_failures) {
      log.outcome = RunOutcome::aborted;
      log.message = "solver failed to converge on " + std::to_string(consecutive_failures) + " consecutive steps";
      break;
    }
    try {
      x = rk4_step(*model, x, u);
    } catch (const std::exception& e) {
      log.outcome = RunOutcome::aborted;
      log.message = std::string("plant integration failed: ") + e.what();
      break;
    }
  }
  return log;
}

RunSummary metrics(const TrajectoryLog& log) {
  if (log.rows.empty()) throw std::invalid_argument("metrics: empty log");
  RunSummary s;
  s.steps = log.rows.size();
  s.final_time = log.rows.back().time;
  s.outcome = to_string(log.outcome);

  int waypoints = log.waypoint_count;
  for (const auto& r : log.rows) waypoints = std::max(waypoints, r.target_index + (r.solver_status == "complete" ? 0 : 1));
  s.waypoints.resize(static_cast<std::size_t>(waypoints));

  for (std::size_t k = 0; k < log.rows.size(); ++k) {
    const LogRow& r = log.rows[k];
    for (double c : r.clearance) s.min_clearance = std::min(s.min_clearance, c);
    if (k + 1 < log.rows.size()) s.input_total_variation += (log.rows[k + 1].input - r.input).lpNorm<1>();
    if (r.solver_status == "converged" || r.solver_status == "max_iter") {
      ++s.solves;
      if (r.solver_status != "converged") ++s.nonconverged_solves;
    }
    for (int w = 0; w < r.target_index && w < waypoints; ++w) {
      auto& ws = s.waypoints[static_cast<std::size_t>(w)];
      if (!ws.reached) {
        ws.reached = true;
        ws.time_reached = r.time;
      }
    }
    if (r.target_index < waypoints) {
      // error to the active waypoint, overwritten until the segment ends
      const int p = static_cast<int>(r.target.size());
      s.waypoints[static_cast<std::size_t>(r.target_index)].final_error = (r.state.head(p) - r.target).norm();
    }
  }
  // final error for reached waypoints is taken at the detection row
  for (std::size_t k = 1; k < log.rows.size(); ++k) {
    const LogRow& prev = log.rows[k - 1];
    const LogRow& r = log.rows[k];
    if (r.target_index > prev.target_index) {
      const int p = static_cast<int>(prev.target.size());
      s.waypoints[static_cast<std::size_t>(prev.target_index)].final_error = (r.state.head(p) - prev.target).norm();
    }
  }
  return s;
}

std::vector<std::string> csv_header(const TrajectoryLog& log) {
  std::vector<std::string> h{"time", "target_index"};
  for (int i = 0; i < log.state_dim; ++i) h.push_back("x" + std::to_string(i));
  for (int i = 0; i < log.input_dim; ++i) h.push_back("u" + std::to_string(i));
  for (int i = 0; i < log.output_dim; ++i) h.push_back("target" + std::to_string(i));
  for (const auto& id : log.obstacle_ids) h.push_back("sensed_" + id);
  for (const auto& id : log.obstacle_ids) h.push_back("clearance_" + id);
  for (const auto& id : log.obstacle_ids) h.push_back("smooth_distance_" + id);
  h.insert(h.end(), {"solver_status", "solver_iterations", "objective"});
  return h;
}

namespace {

std::string fmt_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  return std::stod(s);
}

}  // namespace

void write_csv(const TrajectoryLog& log, std::ostream& out) {
  const auto header = csv_header(log);
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  for (const auto& r : log.rows) {
    out << fmt_double(r.time) << ',' << r.target_index;
    for (Eigen::Index i = 0; i < r.state.size(); ++i) out << ',' << fmt_double(r.state[i]);
    for (Eigen::Index i = 0; i < r.input.size(); ++i) out << ',' << fmt_double(r.input[i]);
    for (Eigen::Index i = 0; i < r.target.size(); ++i) out << ',' << fmt_double(r.target[i]);
    for (int c : r.sensed_points) out << ',' << c;
    for (double c : r.clearance) out << ',' << fmt_double(c);
    for (double c : r.smoothed_distance) out << ',' << fmt_double(c);
    out << ',' << r.solver_status << ',' << r.solver_iterations << ',' << fmt_double(r.objective) << '\n';
  }
}

void write_csv(const TrajectoryLog& log, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_csv(log, out);
}

TrajectoryLog read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": empty trajectory file");

  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
  };
  const auto header = split(line);
  TrajectoryLog log;
  for (const auto& h : header) {
    if (h.size() > 1 && h[0] == 'x' && std::isdigit(static_cast<unsigned char>(h[1]))) ++log.state_dim;
    else if (h.size() > 1 && h[0] == 'u' && std::isdigit(static_cast<unsigned char>(h[1]))) ++log.input_dim;
    else if (h.rfind("target", 0) == 0 && h != "target_index") ++log.output_dim;
    else if (h.rfind("sensed_", 0) == 0) log.obstacle_ids.push_back(h.substr(7));
  }
  if (header != csv_header(log)) throw std::runtime_error(path.string() + ": unexpected trajectory header");

  const std::size_t n_obs = log.obstacle_ids.size();
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != header.size())
      throw std::runtime_error(path.string() + ": line " + std::to_string(lineno) + " has wrong column count");
    std::size_t c = 0;
    LogRow r;
    r.time = parse_double(cells[c++]);
    r.target_index = std::stoi(cells[c++]);
    r.state.resize(log.state_dim);
    for (int i = 0; i < log.state_dim; ++i) r.state[i] = parse_double(cells[c++]);
    r.input.resize(log.input_dim);
    for (int i = 0; i < log.input_dim; ++i) r.input[i] = parse_double(cells[c++]);
    r.target.resize(log.output_dim);
    for (int i = 0; i < log.output_dim; ++i) r.target[i] = parse_double(cells[c++]);
    for (std::size_t i = 0; i < n_obs; ++i) r.sensed_points.push_back(std::stoi(cells[c++]));
    for (std::size_t i = 0; i < n_obs; ++i) r.clearance.push_back(parse_double(cells[c++]));
    for (std::size_t i = 0; i < n_obs; ++i) r.smoothed_distance.push_back(parse_double(cells[c++]));
    r.solver_status = cells[c++];
    r.solver_iterations = std::stoi(cells[c++]);
    r.objective = parse_double(cells[c++]);
    log.rows.push_back(std::move(r));
  }
  if (!log.rows.empty()) {
    log.sample_time = log.rows.size() > 1 ? log.rows[1].time - log.rows[0].time : 0.0;
    log.outcome = log.rows.back().solver_status == "complete" ? RunOutcome::completed : RunOutcome::timeout;
  }
  return log;
}

}  // namespace cloudnmpc
