#include "cloudnmpc/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "cloudnmpc/scenario.hpp"

namespace cloudnmpc {

using nlohmann::json;

namespace {

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::filesystem::path default_out_dir() {
  if (const char* env = std::getenv(kOutDirEnv); env && *env) return env;
  return "out";
}

void write_json(const std::filesystem::path& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// gradient suites

struct Sampler {
  std::mt19937_64 rng{20240611ULL};
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
  Eigen::VectorXd in_box(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
    Eigen::VectorXd v(lo.size());
    for (Eigen::Index i = 0; i < lo.size(); ++i) v[i] = uniform(lo[i], hi[i]);
    return v;
  }
};

std::string describe(const std::string& what, Eigen::Index index, double analytic, double numeric) {
  std::ostringstream s;
  s << std::setprecision(10) << what << "[" << index << "] analytic=" << analytic << " numeric=" << numeric;
  return s.str();
}

void track(GradientSuiteResult& r, double err, const std::string& where) {
  if (err > r.max_error || r.worst.empty()) {
    r.max_error = err;
    r.worst = where;
  }
}

std::vector<PointCloud> suite_clouds(const ScenarioConfig& cfg, const SystemModel& model) {
  std::vector<PointCloud> clouds = cfg.make_clouds();
  if (clouds.empty()) {
    const int p = model.output_dim();
    HaltonConfig h;
    h.bases = std::vector<int>{2, 3, 5};
    h.bases.resize(static_cast<std::size_t>(p));
    h.count = 60;
    const Eigen::VectorXd y0 = model.output(cfg.initial_state);
    h.box_min = y0 + Eigen::VectorXd::Constant(p, 0.5);
    h.box_max = y0 + Eigen::VectorXd::Constant(p, 1.5);
    clouds.push_back(generate_cloud(h, "probe"));
  }
  return clouds;
}

}  // namespace

std::vector<GradientSuiteResult> run_gradient_suites(const ScenarioConfig& cfg) {
  const auto model = cfg.make_model();
  const std::vector<PointCloud> clouds = suite_clouds(cfg, *model);
  const int p = model->output_dim();
  Sampler rng;
  std::vector<GradientSuiteResult> results;

  auto around = [&](const PointCloud& c, double pad) {
    const Eigen::VectorXd lo = c.points.rowwise().minCoeff().array() - pad;
    const Eigen::VectorXd hi = c.points.rowwise().maxCoeff().array() + pad;
    return rng.in_box(lo, hi);
  };

  // smoothed distance: grad D = y - projection vs central differences
  {
    GradientSuiteResult r{"smoothdist", 0.0, 1e-6, ""};
    const double h = 1e-5;
    for (const auto& c : clouds) {
      const WeightedCloud wc = precompute(c, cfg.nmpc.smooth);
      for (int s = 0; s < 50; ++s) {
        const Eigen::VectorXd y = around(c, 1.0);
        const Eigen::VectorXd g = smooth_gradient(wc, y, cfg.nmpc.smooth);
        Eigen::VectorXd fd(p);
        for (int d = 0; d < p; ++d) {
          Eigen::VectorXd yp = y, ym = y;
          yp[d] += h;
          ym[d] -= h;
          fd[d] = (smooth_distance(wc, yp, cfg.nmpc.smooth) - smooth_distance(wc, ym, cfg.nmpc.smooth)) / (2 * h);
        }
        const double scale = std::max(1.0, fd.lpNorm<Eigen::Infinity>());
        Eigen::Index worst = 0;
        const double err = (g - fd).cwiseAbs().maxCoeff(&worst) / scale;
        track(r, err, describe("cloud " + c.id + " dD/dy", worst, g[worst], fd[worst]));
      }
    }
    results.push_back(r);
  }

  // horizon penalty: gradients through beta, g and F
  {
    GradientSuiteResult r{"barrier", 0.0, 1e-5, ""};
    const double h = 1e-6;
    MetricSet metrics;
    for (const auto& c : clouds) metrics.push_back(std::make_shared<SmoothedMetric>(c, cfg.nmpc.smooth));
    for (int trial = 0; trial < 5; ++trial) {
      std::vector<Eigen::VectorXd> ys;
      for (int j = 0; j <= std::min(cfg.nmpc.horizon, 10); ++j) ys.push_back(around(clouds[0], 1.5));
      const Eigen::VectorXd ya = around(clouds[0], 1.5);
      std::vector<Eigen::VectorXd> dys;
      Eigen::VectorXd dya;
      horizon_penalty(ys, ya, metrics, cfg.nmpc.barrier, &dys, &dya);
      std::vector<Eigen::VectorXd> fds(ys.size(), Eigen::VectorXd(p));
      Eigen::VectorXd fda(p);
      for (std::size_t j = 0; j <= ys.size(); ++j) {
        for (int d = 0; d < p; ++d) {
          auto yp = ys, ym = ys;
          Eigen::VectorXd yap = ya, yam = ya;
          if (j < ys.size()) {
            yp[j][d] += h;
            ym[j][d] -= h;
          } else {
            yap[d] += h;
            yam[d] -= h;
          }
          const double fd = (horizon_penalty(yp, yap, metrics, cfg.nmpc.barrier) -
                             horizon_penalty(ym, yam, metrics, cfg.nmpc.barrier)) / (2 * h);
          (j < ys.size() ? fds[j][d] : fda[d]) = fd;
        }
      }
      double scale = std::max(1.0, fda.lpNorm<Eigen::Infinity>());
      for (const auto& f : fds) scale = std::max(scale, f.lpNorm<Eigen::Infinity>());
      for (std::size_t j = 0; j <= ys.size(); ++j) {
        const Eigen::VectorXd& a = j < ys.size() ? dys[j] : dya;
        const Eigen::VectorXd& n = j < ys.size() ? fds[j] : fda;
        Eigen::Index worst = 0;
        const double err = (a - n).cwiseAbs().maxCoeff(&worst) / scale;
        const std::string what = j < ys.size() ? "dP/dy_" + std::to_string(j) : std::string("dP/dy_a");
        track(r, err, describe(what, worst, a[worst], n[worst]));
      }
    }
    results.push_back(r);
  }

  // discrete dynamics Jacobians
  {
    GradientSuiteResult r{"dynamics", 0.0, 1e-5, ""};
    const double h = 1e-6;
    const Box xb = cfg.nmpc.state_bounds.shrink(0.9);
    for (int trial = 0; trial < 20; ++trial) {
      const Eigen::VectorXd x = rng.in_box(xb.lower.cwiseMax(-50.0), xb.upper.cwiseMin(50.0));
      const Eigen::VectorXd u = rng.in_box(cfg.nmpc.input_bounds.lower, cfg.nmpc.input_bounds.upper);
      const DiscreteStep st = rk4_step_with_jacobian(*model, x, u);
      Eigen::MatrixXd J(x.size(), x.size() + u.size());
      J << st.A, st.B;
      Eigen::MatrixXd fd(J.rows(), J.cols());
      for (Eigen::Index c = 0; c < J.cols(); ++c) {
        Eigen::VectorXd xp = x, xm = x, up = u, um = u;
        if (c < x.size()) {
          xp[c] += h;
          xm[c] -= h;
        } else {
          up[c - x.size()] += h;
          um[c - x.size()] -= h;
        }
        fd.col(c) = (rk4_step(*model, xp, up) - rk4_step(*model, xm, um)) / (2 * h);
      }
      const double scale = std::max(1.0, fd.cwiseAbs().maxCoeff());
      Eigen::Index wr = 0, wc = 0;
      const double err = (J - fd).cwiseAbs().maxCoeff(&wr, &wc) / scale;
      track(r, err, describe("d x_next / d(x,u) row " + std::to_string(wr) + " col", wc, J(wr, wc), fd(wr, wc)));
    }
    results.push_back(r);
  }

  // OCP objective gradient and equality Jacobian
  {
    GradientSuiteResult obj{"nmpc objective", 0.0, 1e-5, ""};
    GradientSuiteResult jac{"nmpc constraints", 0.0, 1e-5, ""};
    MetricSet metrics;
    for (const auto& c : clouds) metrics.push_back(std::make_shared<SmoothedMetric>(c, cfg.nmpc.smooth));
    const OcpProblem prob(cfg.nmpc, model, cfg.initial_state, cfg.waypoints.front(), metrics);
    const OcpLayout& L = prob.layout();
    const Box xb = cfg.nmpc.state_bounds.shrink(0.9);
    for (int trial = 0; trial < 3; ++trial) {
      Eigen::VectorXd z = prob.cold_start();
      for (int j = 0; j <= L.horizon + 1; ++j) {
        const int off = j <= L.horizon ? L.state(j) : L.artificial_state();
        Eigen::VectorXd x = rng.in_box(xb.lower.cwiseMax(-50.0), xb.upper.cwiseMin(50.0));
        x.head(p) = around(clouds[0], 1.5);
        z.segment(off, L.n) = x;
      }
      for (int j = 0; j <= L.horizon; ++j) {
        const int off = j < L.horizon ? L.input(j) : L.artificial_input();
        z.segment(off, L.m) = rng.in_box(cfg.nmpc.input_bounds.lower, cfg.nmpc.input_bounds.upper);
      }
      const GradientCheck g = check_gradient(prob, z, 1e-6, 200);
      track(obj, g.max_error, describe("dJ/dz", g.worst_index, g.analytic, g.numeric));
      const GradientCheck c = check_jacobian(prob, z, 1e-6, 200);
      track(jac, c.max_error, describe("dc/dz column", c.worst_index, c.analytic, c.numeric));
    }
    results.push_back(obj);
    results.push_back(jac);
  }
  return results;
}

json summary_to_json(const RunSummary& s, const std::string& message) {
  json wps = json::array();
  for (std::size_t i = 0; i < s.waypoints.size(); ++i) {
    const auto& w = s.waypoints[i];
    wps.push_back({{"index", i},
                   {"reached", w.reached},
                   {"time_reached", number_or_null(w.time_reached)},
                   {"final_error", number_or_null(w.final_error)}});
  }
  return {{"outcome", s.outcome},
          {"message", message},
          {"steps", s.steps},
          {"final_time", s.final_time},
          {"min_clearance", number_or_null(s.min_clearance)},
          {"input_total_variation", s.input_total_variation},
          {"solves", s.solves},
          {"nonconverged_solves", s.nonconverged_solves},
          {"waypoints", wps}};
}

void write_run_outputs(const std::filesystem::path& dir, const TrajectoryLog& log, const json& resolved) {
  std::filesystem::create_directories(dir);
  write_csv(log, dir / "trajectory.csv");
  write_json(dir / "summary.json", summary_to_json(metrics(log), log.message));
  write_json(dir / "resolved_scenario.json", resolved);
}

namespace {

struct Options {
  std::string scenario;
  std::string out_dir;
  std::vector<std::string> overrides;
  int verbosity = 0;
};

ScenarioConfig load(const Options& o, json& resolved) { return load_scenario(o.scenario, o.overrides, &resolved); }

StepObserver progress(std::ostream& out, int verbosity) {
  if (verbosity <= 0) return {};
  return [&out, verbosity](const LogRow& r) {
    const long long step = std::llround(r.time * 100.0);
    if (verbosity >= 2 || step % 100 == 0) {
      out << "t=" << std::fixed << std::setprecision(2) << r.time << " target=" << r.target_index
          << " status=" << r.solver_status << " iters=" << r.solver_iterations << '\n';
      out.unsetf(std::ios::floatfield);
    }
  };
}

int cmd_run(const Options& o, std::ostream& out) {
  json resolved;
  const ScenarioConfig cfg = load(o, resolved);
  const TrajectoryLog log = run_scenario(cfg, progress(out, o.verbosity));
  write_run_outputs(o.out_dir, log, resolved);
  out << "outcome: " << to_string(log.outcome) << (log.message.empty() ? "" : " (" + log.message + ")") << '\n';
  out << "wrote " << (std::filesystem::path(o.out_dir) / "trajectory.csv").string() << '\n';
  return log.outcome == RunOutcome::completed ? kExitOk : kExitAborted;
}

json time_to_targets(const RunSummary& s) {
  json t = json::array();
  for (const auto& w : s.waypoints) t.push_back(number_or_null(w.time_reached));
  return t;
}

int cmd_compare(const Options& o, std::ostream& out) {
  json resolved;
  ScenarioConfig cfg = load(o, resolved);
  json report;
  RunSummary summaries[2];
  int exit_code = kExitOk;
  const std::pair<MetricKind, const char*> runs[] = {{MetricKind::smoothed, "smoothed"},
                                                     {MetricKind::euclidean, "euclidean"}};
  for (int i = 0; i < 2; ++i) {
    cfg.metric = runs[i].first;
    const json snapshot = scenario_to_json(cfg);
    const TrajectoryLog log = run_scenario(cfg, progress(out, o.verbosity));
    write_run_outputs(std::filesystem::path(o.out_dir) / runs[i].second, log, snapshot);
    summaries[i] = metrics(log);
    report[runs[i].second] = {{"outcome", summaries[i].outcome},
                              {"input_total_variation", summaries[i].input_total_variation},
                              {"min_clearance", number_or_null(summaries[i].min_clearance)},
                              {"nonconverged_solves", summaries[i].nonconverged_solves},
                              {"solves", summaries[i].solves},
                              {"time_to_target", time_to_targets(summaries[i])}};
    if (i == 0 && log.outcome != RunOutcome::completed) exit_code = kExitAborted;
  }
  report["delta"] = {
      {"input_total_variation", summaries[1].input_total_variation - summaries[0].input_total_variation},
      {"min_clearance", number_or_null(summaries[1].min_clearance - summaries[0].min_clearance)},
      {"nonconverged_solves", summaries[1].nonconverged_solves - summaries[0].nonconverged_solves}};
  report["smoothed_tv_lower"] = summaries[0].input_total_variation < summaries[1].input_total_variation;
  write_json(std::filesystem::path(o.out_dir) / "comparison.json", report);
  out << report.dump(2) << '\n';
  return exit_code;
}

int cmd_check_gradients(const Options& o, std::ostream& out) {
  json resolved;
  const ScenarioConfig cfg = load(o, resolved);
  int code = kExitOk;
  std::string worst;
  double worst_ratio = 0.0;
  for (const auto& r : run_gradient_suites(cfg)) {
    out << std::left << std::setw(18) << r.suite << " max_rel_error=" << std::scientific << std::setprecision(3)
        << r.max_error << " tol=" << r.tolerance << (r.passed() ? "  PASS" : "  FAIL") << '\n';
    out.unsetf(std::ios::floatfield);
    if (!r.passed()) {
      code = kExitGradient;
      const double ratio = r.max_error / r.tolerance;
      if (!(ratio <= worst_ratio)) {
        worst_ratio = ratio;
        worst = r.suite + ": " + r.worst;
      }
    }
  }
  if (code != kExitOk) out << "worst offending entry: " << worst << '\n';
  return code;
}

struct GenCloudOptions {
  std::vector<int> bases{2, 3, 5};
  int count = 400;
  int skip = 20;
  std::vector<double> box_min, box_max;
  std::string shape = "box";
  std::string output;
};

int cmd_gen_cloud(const Options& o, const GenCloudOptions& g, std::ostream& out) {
  if (!o.scenario.empty()) {
    json resolved;
    const ScenarioConfig cfg = load(o, resolved);
    std::filesystem::create_directories(o.out_dir);
    for (const auto& c : cfg.make_clouds()) {
      const auto path = std::filesystem::path(o.out_dir) / (c.id + ".txt");
      save_cloud(c, path);
      out << "wrote " << path.string() << " (" << c.size() << " points)\n";
    }
    return kExitOk;
  }
  HaltonConfig h;
  h.bases = g.bases;
  h.count = g.count;
  h.skip = g.skip;
  h.box_min = Eigen::Map<const Eigen::VectorXd>(g.box_min.data(), static_cast<Eigen::Index>(g.box_min.size()));
  h.box_max = Eigen::Map<const Eigen::VectorXd>(g.box_max.data(), static_cast<Eigen::Index>(g.box_max.size()));
  if (g.shape != "box" && g.shape != "sphere") throw ConfigError("shape", "must be 'box' or 'sphere'");
  h.shape = g.shape == "box" ? CloudShape::box : CloudShape::sphere;
  try {
    h.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("halton", e.what());
  }
  const std::filesystem::path path = g.output.empty() ? std::filesystem::path(o.out_dir) / "cloud.txt" : std::filesystem::path(g.output);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  save_cloud(generate_cloud(h, path.stem().string()), path);
  out << "wrote " << path.string() << '\n';
  return kExitOk;
}

int cmd_metrics(const std::string& csv, const std::string& output, std::ostream& out) {
  const TrajectoryLog log = read_csv(csv);
  if (log.rows.empty()) throw ConfigError("", csv + ": trajectory has no rows");
  const json s = summary_to_json(metrics(log));
  if (!output.empty()) write_json(output, s);
  out << s.dump(2) << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Tracking NMPC with smoothed point-cloud barrier penalties"};
  app.require_subcommand(1);
  Options o;
  o.out_dir = default_out_dir().string();

  auto add_common = [&](CLI::App* sub, bool needs_scenario) {
    auto* opt = sub->add_option("scenario", o.scenario, "Scenario file (JSON)");
    if (needs_scenario) opt->required()->check(CLI::ExistingFile);
    sub->add_option("-o,--out", o.out_dir, std::string("Output directory (default $") + kOutDirEnv + " or ./out)");
    sub->add_option("-s,--set", o.overrides, "Override a scenario key: dotted.key=value")->take_all();
    sub->add_flag("-v,--verbose", "Print progress (repeat for every step)");
  };

  auto* run = app.add_subcommand("run", "Run a closed-loop scenario");
  add_common(run, true);
  auto* compare = app.add_subcommand("compare", "Run smoothed and Euclidean metrics on the same scenario");
  add_common(compare, true);
  auto* grad = app.add_subcommand("check-gradients", "Finite-difference checks at the scenario's parameters");
  add_common(grad, true);

  GenCloudOptions g;
  auto* gen = app.add_subcommand("gen-cloud", "Write Halton obstacle clouds (from a scenario or flags)");
  add_common(gen, false);
  gen->add_option("--bases", g.bases, "Prime bases, one per dimension");
  gen->add_option("--count", g.count, "Number of points");
  gen->add_option("--skip", g.skip, "Leading sequence elements to drop");
  gen->add_option("--box-min", g.box_min, "Lower box corner");
  gen->add_option("--box-max", g.box_max, "Upper box corner");
  gen->add_option("--shape", g.shape, "box or sphere");
  gen->add_option("--output", g.output, "Cloud file to write");

  std::string csv, metrics_out;
  auto* met = app.add_subcommand("metrics", "Summarise a trajectory CSV");
  met->add_option("trajectory", csv, "trajectory.csv")->required()->check(CLI::ExistingFile);
  met->add_option("-o,--output", metrics_out, "Write the summary JSON here as well");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  for (auto* sub : {run, compare, grad, gen})
    if (sub->parsed()) o.verbosity = static_cast<int>(sub->count("-v"));

  try {
    if (run->parsed()) return cmd_run(o, out);
    if (compare->parsed()) return cmd_compare(o, out);
    if (grad->parsed()) return cmd_check_gradients(o, out);
    if (gen->parsed()) return cmd_gen_cloud(o, g, out);
    if (met->parsed()) return cmd_metrics(csv, metrics_out, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const CloudParseError& e) {
    err << "cloud error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    err << "invalid configuration: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitAborted;
  }
  return kExitConfig;
}

}  // namespace cloudnmpc
