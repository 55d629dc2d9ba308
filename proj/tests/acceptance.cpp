#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cloudnmpc/barrier.hpp"
#include "cloudnmpc/cli.hpp"
#include "cloudnmpc/dynamics.hpp"
#include "cloudnmpc/nmpc.hpp"
#include "cloudnmpc/scenario.hpp"
#include "cloudnmpc/sim.hpp"
#include "cloudnmpc/smooth_distance.hpp"
#include "oracles.hpp"

using namespace cloudnmpc;
namespace fs = std::filesystem;

namespace {

const fs::path kScenarios = CLOUDNMPC_SCENARIO_DIR;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Sample {
  PointCloud cloud;
  Eigen::Vector3d y;
};

// 1000 random clouds of up to 500 points with queries around them.
std::vector<Sample> make_samples(int count, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> size(1, 500);
  std::uniform_real_distribution<double> U(-1.0, 1.0), scale(0.2, 3.0), offset(-5.0, 5.0);
  std::vector<Sample> out;
  for (int s = 0; s < count; ++s) {
    const int n = size(rng);
    const Eigen::Vector3d ext(scale(rng), scale(rng), scale(rng));
    const Eigen::Vector3d mid(offset(rng), offset(rng), offset(rng));
    Eigen::MatrixXd pts(3, n);
    for (int j = 0; j < n; ++j)
      for (int d = 0; d < 3; ++d) pts(d, j) = mid[d] + ext[d] * U(rng);
    Eigen::Vector3d y;
    for (int d = 0; d < 3; ++d) y[d] = mid[d] + 2.0 * ext[d] * U(rng);
    out.push_back({PointCloud(pts, "s" + std::to_string(s)), y});
  }
  return out;
}

double brute_min_distance(const PointCloud& c, const Eigen::Vector3d& y, int& arg) {
  double best = INFINITY;
  for (int j = 0; j < c.size(); ++j) {
    const double d = (c.point(j) - y).norm();
    if (d < best) best = d, arg = j;
  }
  return best;
}

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(4) << v;
  return s.str();
}

Outcome gradient_identity(const std::vector<Sample>& samples) {
  SmoothDistParams sp;  // eta 0.3, sigma 0.8
  const double h = 1e-5;
  double worst = 0.0;
  for (const auto& s : samples) {
    const WeightedCloud wc = precompute(s.cloud, sp);
    const auto e = evaluate_smooth_distance(wc, s.y, sp);
    Eigen::Vector3d fd;
    for (int d = 0; d < 3; ++d) {
      Eigen::Vector3d yp = s.y, ym = s.y;
      yp[d] += h;
      ym[d] -= h;
      fd[d] = (smooth_distance(wc, yp, sp) - smooth_distance(wc, ym, sp)) / (2 * h);
    }
    const double identity = (e.gradient - (s.y - e.projection)).lpNorm<Eigen::Infinity>();
    const double rel = (e.gradient - fd).lpNorm<Eigen::Infinity>() / std::max(1.0, fd.lpNorm<Eigen::Infinity>());
    worst = std::max({worst, rel, identity});
  }
  return {worst <= 1e-6, "max relative error " + fmt(worst) + " over " + std::to_string(samples.size()) + " samples"};
}

Outcome sandwich(const std::vector<Sample>& samples) {
  SmoothDistParams sp;
  int violations = 0;
  double worst_lower = INFINITY, worst_upper = INFINITY;
  for (const auto& s : samples) {
    const WeightedCloud wc = precompute(s.cloud, sp);
    int j = 0;
    const double d = brute_min_distance(s.cloud, s.y, j);
    const double D = smooth_distance(wc, s.y, sp);
    const double lower = 0.5 * d * d;
    const double upper = lower + sp.eta * sp.eta * (wc.log_volume - wc.log_weights[j]);
    violations += !(lower <= D && D <= upper);
    worst_lower = std::min(worst_lower, D - lower);
    worst_upper = std::min(worst_upper, upper - D);
  }
  return {violations == 0, std::to_string(violations) + " violations; min D-lower " + fmt(worst_lower) +
                               ", min upper-D " + fmt(worst_upper)};
}

Outcome eta_limit(const std::vector<Sample>& samples) {
  bool ok = true;
  int over_gap = 0;
  double prev = INFINITY, max_excess = -INFINITY;
  std::string detail = "max|D-d^2/2|:";
  for (double eta : {0.5, 0.2, 0.1, 0.05}) {
    SmoothDistParams sp;
    sp.eta = eta;
    double worst = 0.0;
    for (std::size_t i = 0; i < 100; ++i) {
      const auto& s = samples[i];
      const WeightedCloud wc = precompute(s.cloud, sp);
      int j = 0;
      const double d = brute_min_distance(s.cloud, s.y, j);
      const double D = smooth_distance(wc, s.y, sp), lower = 0.5 * d * d;
      const double err = std::abs(D - lower);
      // at small eta the nearest point dominates and D meets the bound to within rounding
      const double upper = lower + eta * eta * (wc.log_volume - wc.log_weights[j]);
      const double slack = 4.0 * std::numeric_limits<double>::epsilon() * upper;
      over_gap += !(lower <= D && D <= upper + slack);
      max_excess = std::max(max_excess, (D - upper) / (std::numeric_limits<double>::epsilon() * upper));
      worst = std::max(worst, err);
    }
    ok &= worst < prev;
    prev = worst;
    detail += " eta=" + fmt(eta) + "->" + fmt(worst);
  }
  ok &= over_gap == 0;
  return {ok, detail + "; " + std::to_string(over_gap) + " samples above the gap, max excess " + fmt(max_excess) + " ulp"};
}

Outcome softplus_gap() {
  bool ok = true;
  double worst_ratio = 0.0, worst_mismatch = 0.0;
  for (double kappa : {1.0, 10.0, 100.0}) {
    BarrierParams bp;
    bp.kappa = kappa;
    bp.epsilon = 1.0;
    const double bound = std::log(2.0) / kappa;
    for (int i = 0; i < 10000; ++i) {
      const double g = -5.0 + 10.0 * i / 9999.0;
      const double gap = penalty_gap(g, bp);
      ok &= gap > 0.0 && gap <= bound;
      worst_ratio = std::max(worst_ratio, gap / bound);
      // the stable gap agrees with the direct difference wherever the latter is resolvable
      const double direct = penalty(g, bp) - std::max(0.0, g);
      const double ulp = std::nextafter(std::abs(penalty(g, bp)), INFINITY) - std::abs(penalty(g, bp));
      const double mismatch = std::abs(direct - gap) / ulp;
      ok &= mismatch <= 4.0;
      worst_mismatch = std::max(worst_mismatch, mismatch);
    }
  }
  return {ok, "max gap/(ln2/kappa) " + fmt(worst_ratio) + ", max |direct-gap| " + fmt(worst_mismatch) + " ulp"};
}

Outcome solver_oracle() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> P(-3, 3), V(-1.5, 1.5), T(-6, 6);
  std::uniform_int_distribution<int> H(2, 5);
  double worst_gap = -INFINITY, worst_res = 0.0;
  int failures = 0;
  for (int inst = 0; inst < 20; ++inst) {
    oracle::ScalarTrackingOcp ref;
    ref.horizon = H(rng);
    ref.p0 = P(rng);
    ref.v0 = V(rng);
    ref.target = T(rng);
    nlohmann::json doc = {{"model", {{"type", "double_integrator"}, {"integrator_dim", 1}, {"sample_time", ref.ts}}},
                          {"nmpc", {{"horizon", ref.horizon}}}};
    const ScenarioConfig sc = scenario_from_json(resolve_scenario(doc));
    const OcpProblem prob(sc.nmpc, sc.make_model(), Eigen::Vector2d(ref.p0, ref.v0),
                          Eigen::VectorXd::Constant(1, ref.target), {});
    const OcpSolution sol = solve(prob, SolverConfig{}, prob.initial_guess());
    const double best = ref.brute_force(ref.horizon <= 4 ? 41 : 21, 10);
    const double res = prob.equality_residuals(sol.z).lpNorm<Eigen::Infinity>();
    worst_gap = std::max(worst_gap, sol.objective - best);
    worst_res = std::max(worst_res, res);
    failures += !(sol.objective <= best + 1e-3 && res <= 1e-6);
  }
  return {failures == 0, "max (solver - grid) " + fmt(worst_gap) + ", max residual " + fmt(worst_res) + ", " +
                             std::to_string(failures) + "/20 failing"};
}

Outcome hover() {
  const QuadrotorParams p;
  const QuadrotorModel m(p, 0.01);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(12);
  x.head<3>() << 3.0, -4.0, 5.0;
  const Eigen::VectorXd x0 = x;
  const Eigen::VectorXd u = Eigen::VectorXd::Constant(4, p.hover_force());
  for (int k = 0; k < 100; ++k) x = rk4_step(m, x, u);
  const double drift = (x.head<3>() - x0.head<3>()).norm();
  const bool force_ok = std::abs(p.hover_force() - 5.4936) < 1e-12;
  return {drift < 1e-6 && force_ok, "f=" + fmt(p.hover_force()) + " N, drift " + fmt(drift) + " m over 1 s"};
}

struct MissionCheck {
  bool pass = false;
  std::string detail;
  RunSummary summary;
};

MissionCheck check_mission(const ScenarioConfig& cfg, const TrajectoryLog& log, double seconds, double budget) {
  MissionCheck mc;
  mc.summary = metrics(log);
  double worst = INFINITY;
  for (const auto& r : log.rows)
    for (double c : r.clearance) worst = std::min(worst, 0.5 * c * c / cfg.nmpc.barrier.d_min);
  bool reached = log.outcome == RunOutcome::completed && mc.summary.waypoints.size() == cfg.waypoints.size();
  for (const auto& w : mc.summary.waypoints) reached &= w.reached && w.final_error < cfg.stop_radius;
  const bool safe = worst >= 0.95;
  mc.pass = safe && reached && seconds < budget;
  mc.detail = "min clearance^2/(2 d_min) " + fmt(worst) + ", outcome " + mc.summary.outcome + ", final time " +
              fmt(mc.summary.final_time) + " s, wall " + fmt(seconds) + " s";
  return mc;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

int main() {
  const fs::path work = fs::temp_directory_path() / "cloudnmpc_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);

  int failed = 0;
  auto report = [&](int id, const std::string& name, const std::function<Outcome()>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double s = seconds_since(t0);
    failed += !o.pass;
    std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << "  " << name << "  (" << o.detail
              << "; " << fmt(s) << " s)" << std::endl;
  };

  const std::vector<Sample> samples = make_samples(1000, 77);
  report(1, "smoothed-distance gradient identity", [&] { return gradient_identity(samples); });
  report(2, "distance sandwich", [&] { return sandwich(samples); });
  report(3, "eta limit", [&] { return eta_limit(samples); });
  report(4, "softplus penalty gap", softplus_gap);
  report(5, "solver vs brute-force grid", solver_oracle);
  report(6, "hover invariant", hover);

  // Closed loop: the double-integrator run goes through the CLI so its resolved
  // snapshot can be replayed for the determinism check.
  const fs::path di_scenario = kScenarios / "desk_double_integrator.json";
  const fs::path di_out = work / "di_smoothed";
  TrajectoryLog di_log;
  ScenarioConfig di_cfg;
  report(7, "closed-loop safety and tracking", [&] {
    di_cfg = load_scenario(di_scenario);
    auto t0 = std::chrono::steady_clock::now();
    std::ostringstream sink;
    run_cli({"run", di_scenario.string(), "-o", di_out.string()}, sink, sink);
    di_log = read_csv(di_out / "trajectory.csv");
    const MissionCheck di = check_mission(di_cfg, di_log, seconds_since(t0), 120.0);

    const ScenarioConfig quad_cfg = load_scenario(kScenarios / "desk_quadrotor.json");
    t0 = std::chrono::steady_clock::now();
    const TrajectoryLog quad_log = run_scenario(quad_cfg);
    const MissionCheck quad = check_mission(quad_cfg, quad_log, seconds_since(t0), 900.0);
    return Outcome{di.pass && quad.pass, "double integrator: " + di.detail + " | quadrotor: " + quad.detail};
  });

  report(8, "smoothed vs euclidean", [&] {
    if (di_log.rows.empty()) return Outcome{false, "smoothed run unavailable"};
    ScenarioConfig cfg = di_cfg;
    cfg.metric = MetricKind::euclidean;
    const TrajectoryLog eu = run_scenario(cfg);
    const RunSummary s = metrics(di_log), e = metrics(eu);
    const bool pass = s.input_total_variation < e.input_total_variation && s.nonconverged_solves < e.nonconverged_solves;
    return Outcome{pass, "TV smoothed " + fmt(s.input_total_variation) + " vs euclidean " +
                             fmt(e.input_total_variation) + "; non-converged " + std::to_string(s.nonconverged_solves) +
                             " vs " + std::to_string(e.nonconverged_solves) + "; euclidean outcome " + e.outcome +
                             ", min clearance " + fmt(e.min_clearance)};
  });

  report(9, "determinism from the resolved snapshot", [&] {
    const fs::path replay = work / "di_replay";
    std::ostringstream sink;
    const int code = run_cli({"run", (di_out / "resolved_scenario.json").string(), "-o", replay.string()}, sink, sink);
    const std::string a = slurp(di_out / "trajectory.csv"), b = slurp(replay / "trajectory.csv");
    const bool same = !a.empty() && a == b;
    return Outcome{same, std::string(same ? "identical" : "different") + " trajectory.csv (" +
                             std::to_string(a.size()) + " bytes), exit " + std::to_string(code)};
  });

  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? 0 : 1;
}
