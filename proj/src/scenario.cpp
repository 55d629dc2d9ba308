#include "cloudnmpc/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

namespace cloudnmpc {

using nlohmann::json;

namespace {

constexpr double kPi = std::numbers::pi;

json vec(std::initializer_list<double> v) { return json(std::vector<double>(v)); }

json repeat(double v, int n) { return json(std::vector<double>(static_cast<std::size_t>(n), v)); }

json nmpc_block(int horizon, json q, json r, json t, json xl, json xu, json ul, json uu) {
  return {{"horizon", horizon},
          {"q", std::move(q)},
          {"r", std::move(r)},
          {"t", std::move(t)},
          {"lambda", 0.99},
          {"state_lower", std::move(xl)},
          {"state_upper", std::move(xu)},
          {"input_lower", std::move(ul)},
          {"input_upper", std::move(uu)},
          {"smooth", {{"eta", 0.3}, {"sigma", 0.8}, {"prune", false}}},
          {"barrier",
           {{"delta", 0.95},
            {"d_min", 0.5},
            {"kappa", 10.0},
            {"epsilon", 1.0},
            {"mu", 5e4},
            {"decay_convention", "as_printed"}}}};
}

json solver_block() {
  const SolverConfig s;
  return {{"eq_tol", s.eq_tol},       {"opt_tol", s.opt_tol},     {"max_outer", 5},
          {"max_inner", s.max_inner}, {"rho_init", s.rho_init},   {"rho_growth", s.rho_growth},
          {"rho_max", s.rho_max},     {"rho_warm_max", s.rho_warm_max},     {"memory", s.memory},       {"armijo", s.armijo},
          {"backtrack", s.backtrack}, {"max_backtracks", s.max_backtracks}, {"max_gradient", s.max_gradient}};
}

json obstacle_defaults(int dim) {
  static const std::vector<int> primes{2, 3, 5, 7, 11, 13};
  return {{"shape", "box"},
          {"bases", std::vector<int>(primes.begin(), primes.begin() + dim)},
          {"count", 400},
          {"skip", 20}};
}

// ---- typed readers with key-path errors ----

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

const json& require(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object() || !obj.contains(key)) throw ConfigError(join(path, key), "missing required key");
  return obj.at(key);
}

void reject_unknown(const json& obj, const std::vector<std::string>& allowed, const std::string& path) {
  if (!obj.is_object()) throw ConfigError(path, "expected an object");
  for (const auto& [k, v] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end()) {
      std::vector<std::string> full;
      for (const auto& a : allowed) full.push_back(join(path, a));
      std::string msg = "unknown key; nearest valid keys:";
      for (const auto& s : nearest_keys(join(path, k), full)) msg += " " + s;
      throw ConfigError(join(path, k), msg);
    }
  }
}

double get_double(const json& obj, const std::string& key, const std::string& path) {
  const json& v = require(obj, key, path);
  if (!v.is_number()) throw ConfigError(join(path, key), "expected a number");
  return v.get<double>();
}

int get_int(const json& obj, const std::string& key, const std::string& path) {
  const json& v = require(obj, key, path);
  if (!v.is_number_integer()) throw ConfigError(join(path, key), "expected an integer");
  return v.get<int>();
}

bool get_bool(const json& obj, const std::string& key, const std::string& path) {
  const json& v = require(obj, key, path);
  if (!v.is_boolean()) throw ConfigError(join(path, key), "expected true or false");
  return v.get<bool>();
}

std::string get_string(const json& obj, const std::string& key, const std::string& path) {
  const json& v = require(obj, key, path);
  if (!v.is_string()) throw ConfigError(join(path, key), "expected a string");
  return v.get<std::string>();
}

Eigen::VectorXd to_vector(const json& v, const std::string& path, int expected = -1) {
  if (!v.is_array()) throw ConfigError(path, "expected an array of numbers");
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number()) throw ConfigError(path, "element " + std::to_string(i) + " is not a number");
    out[static_cast<Eigen::Index>(i)] = v[i].get<double>();
  }
  if (expected >= 0 && out.size() != expected)
    throw ConfigError(path, "expected " + std::to_string(expected) + " entries, got " + std::to_string(out.size()));
  return out;
}

Eigen::VectorXd get_vector(const json& obj, const std::string& key, const std::string& path, int expected = -1) {
  return to_vector(require(obj, key, path), join(path, key), expected);
}

// diagonal list or full nested matrix
Eigen::MatrixXd get_weight(const json& obj, const std::string& key, const std::string& path, int dim) {
  const json& v = require(obj, key, path);
  const std::string p = join(path, key);
  if (v.is_array() && !v.empty() && v[0].is_array()) {
    if (static_cast<int>(v.size()) != dim) throw ConfigError(p, "expected " + std::to_string(dim) + " rows");
    Eigen::MatrixXd M(dim, dim);
    for (int r = 0; r < dim; ++r) M.row(r) = to_vector(v[static_cast<std::size_t>(r)], p, dim).transpose();
    return M;
  }
  return to_vector(v, p, dim).asDiagonal();
}

json weight_to_json(const Eigen::MatrixXd& M) {
  if (M.isDiagonal()) {
    const Eigen::VectorXd d = M.diagonal();
    return std::vector<double>(d.data(), d.data() + d.size());
  }
  json rows = json::array();
  for (Eigen::Index r = 0; r < M.rows(); ++r) {
    const Eigen::VectorXd row = M.row(r).transpose();
    rows.push_back(std::vector<double>(row.data(), row.data() + row.size()));
  }
  return rows;
}

json vector_to_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

void check(bool ok, const std::string& key, const std::string& msg) {
  if (!ok) throw ConfigError(key, msg);
}

std::string format_value(double v) {
  json j = v;
  return j.dump();
}

std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

void flatten_into(const json& doc, const std::string& prefix, std::vector<std::string>& out) {
  if (doc.is_object()) {
    for (const auto& [k, v] : doc.items()) flatten_into(v, join(prefix, k), out);
    return;
  }
  const bool object_array = doc.is_array() && !doc.empty() &&
                            std::all_of(doc.begin(), doc.end(), [](const json& e) { return e.is_object(); });
  if (object_array) {
    out.push_back(prefix);
    for (std::size_t i = 0; i < doc.size(); ++i) flatten_into(doc[i], join(prefix, std::to_string(i)), out);
    return;
  }
  out.push_back(prefix);
}

json::json_pointer pointer_for(const std::string& dotted) {
  std::string ptr;
  std::size_t start = 0;
  while (start <= dotted.size()) {
    const std::size_t dot = dotted.find('.', start);
    const std::string part = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    ptr += "/" + part;
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  return json::json_pointer(ptr);
}

}  // namespace

json default_scenario_json(const std::string& model_type, int integrator_dim) {
  json doc;
  if (model_type == "quadrotor") {
    const QuadrotorParams qp;
    doc["model"] = {{"type", "quadrotor"},
                    {"sample_time", 0.01},
                    {"quadrotor",
                     {{"mass", qp.mass},
                      {"arm_length", qp.arm_length},
                      {"gravity", qp.gravity},
                      {"thrust_coefficient", qp.thrust_coefficient},
                      {"drag_coefficient", qp.drag_coefficient},
                      {"inertia", vec({qp.inertia_xx, qp.inertia_yy, qp.inertia_zz})}}}};
    doc["nmpc"] = nmpc_block(35, vec({1, 1, 1, 0.1, 0.1, 1, 1, 1, 1, 10, 10, 1}), repeat(3.0, 4),
                             repeat(1000.0, 3),
                             vec({-25, -25, 0, -kPi / 6, -kPi / 6, -kPi, -5, -5, -3, -kPi / 2, -kPi / 2, -kPi / 2}),
                             vec({25, 25, 25, kPi / 6, kPi / 6, kPi, 5, 5, 3, kPi / 2, kPi / 2, kPi / 2}),
                             repeat(0.0, 4), repeat(12.0, 4));
    doc["initial_state"] = vec({22, -22, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0});
    doc["waypoints"] = json::array({vec({-12, 18, 11}), vec({-21, 18, 0})});
  } else if (model_type == "double_integrator") {
    if (integrator_dim < 1 || integrator_dim > 3)
      throw ConfigError("model.integrator_dim", "must be 1, 2 or 3");
    const int d = integrator_dim;
    doc["model"] = {{"type", "double_integrator"}, {"sample_time", 0.01}, {"integrator_dim", d}};
    json q = repeat(1.0, 2 * d);
    json xl = json::array(), xu = json::array();
    for (int i = 0; i < d; ++i) xl.push_back(-10.0), xu.push_back(10.0);
    for (int i = 0; i < d; ++i) xl.push_back(-3.0), xu.push_back(3.0);
    doc["nmpc"] = nmpc_block(35, q, repeat(3.0, d), repeat(1000.0, d), xl, xu, repeat(-5.0, d), repeat(5.0, d));
    doc["initial_state"] = repeat(0.0, 2 * d);
    json wp = repeat(0.0, d);
    wp[0] = 1.0;
    doc["waypoints"] = json::array({wp});
  } else {
    throw ConfigError("model.type", "must be 'quadrotor' or 'double_integrator', got '" + model_type + "'");
  }
  doc["solver"] = solver_block();
  // attitude coupling makes a large inherited penalty stall the inner loop
  if (model_type == "quadrotor") doc["solver"]["rho_warm_max"] = 1e4;
  doc["obstacles"] = json::array();
  doc["lidar"] = {{"radius", 3.0}};
  doc["stop_radius"] = 0.3;
  doc["max_sim_time"] = 600.0;
  doc["metric"] = "smoothed";
  doc["euclidean_scaling"] = "squared";
  doc["control_every"] = 1;
  doc["max_consecutive_failures"] = 10;
  return doc;
}

std::vector<std::string> flatten_keys(const json& doc) {
  std::vector<std::string> out;
  flatten_into(doc, "", out);
  return out;
}

std::vector<std::string> nearest_keys(const std::string& key, const std::vector<std::string>& keys,
                                      std::size_t count) {
  std::vector<std::pair<std::size_t, std::string>> scored;
  for (const auto& k : keys) scored.emplace_back(edit_distance(key, k), k);
  std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < scored.size() && i < count; ++i) out.push_back(scored[i].second);
  return out;
}

namespace {

json merge_defaults(const json& user) {
  if (!user.is_object()) throw ConfigError("", "scenario document must be a JSON object");
  std::string type = "quadrotor";
  int dim = 3;
  if (user.contains("model") && user["model"].is_object()) {
    if (user["model"].contains("type")) {
      if (!user["model"]["type"].is_string()) throw ConfigError("model.type", "expected a string");
      type = user["model"]["type"].get<std::string>();
    }
    if (user["model"].contains("integrator_dim")) {
      if (!user["model"]["integrator_dim"].is_number_integer())
        throw ConfigError("model.integrator_dim", "expected an integer");
      dim = user["model"]["integrator_dim"].get<int>();
    }
  }
  json doc = default_scenario_json(type, dim);
  // waypoints/obstacles are replaced wholesale; objects merge key by key
  doc.merge_patch(user);
  if (doc["obstacles"].is_array()) {
    const int odim = static_cast<int>(doc["waypoints"].is_array() && !doc["waypoints"].empty()
                                          ? doc["waypoints"][0].size()
                                          : 3);
    for (auto& o : doc["obstacles"]) {
      if (!o.is_object() || o.contains("file")) continue;
      json filled = obstacle_defaults(std::clamp(odim, 1, 6));
      filled.merge_patch(o);
      o = std::move(filled);
    }
  }
  return doc;
}

}  // namespace

json resolve_scenario(const json& user, const std::vector<std::string>& overrides) {
  json doc = merge_defaults(user);
  if (overrides.empty()) return doc;

  const std::vector<std::string> keys = flatten_keys(doc);
  json patched = user;
  for (const auto& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError(ov, "override must have the form key=value");
    const std::string key = ov.substr(0, eq);
    const std::string text = ov.substr(eq + 1);
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      std::string msg = "unknown override key; nearest valid keys:";
      for (const auto& k : nearest_keys(key, keys)) msg += " " + k;
      throw ConfigError(key, msg);
    }
    json value;
    try {
      value = json::parse(text);
    } catch (const json::parse_error&) {
      value = text;
    }
    // write into the merged view so partially specified parents stay complete
    json base = merge_defaults(patched);
    base[pointer_for(key)] = value;
    patched = std::move(base);
  }
  return merge_defaults(patched);
}

ScenarioConfig scenario_from_json(const json& doc) {
  reject_unknown(doc,
                 {"model", "nmpc", "solver", "obstacles", "lidar", "initial_state", "waypoints", "stop_radius",
                  "max_sim_time", "metric", "euclidean_scaling", "control_every", "max_consecutive_failures"},
                 "");
  ScenarioConfig cfg;

  // model
  const json& model = require(doc, "model", "");
  const std::string type = get_string(model, "type", "model");
  cfg.sample_time = get_double(model, "sample_time", "model");
  check(cfg.sample_time > 0.0, "model.sample_time", "must be > 0");
  int n = 0, m = 0, p = 0;
  if (type == "quadrotor") {
    reject_unknown(model, {"type", "sample_time", "quadrotor"}, "model");
    cfg.model = ModelKind::quadrotor;
    const json& q = require(model, "quadrotor", "model");
    const std::string qp = "model.quadrotor";
    reject_unknown(q, {"mass", "arm_length", "gravity", "thrust_coefficient", "drag_coefficient", "inertia"}, qp);
    cfg.quadrotor.mass = get_double(q, "mass", qp);
    cfg.quadrotor.arm_length = get_double(q, "arm_length", qp);
    cfg.quadrotor.gravity = get_double(q, "gravity", qp);
    cfg.quadrotor.thrust_coefficient = get_double(q, "thrust_coefficient", qp);
    cfg.quadrotor.drag_coefficient = get_double(q, "drag_coefficient", qp);
    const Eigen::VectorXd inertia = get_vector(q, "inertia", qp, 3);
    cfg.quadrotor.inertia_xx = inertia[0];
    cfg.quadrotor.inertia_yy = inertia[1];
    cfg.quadrotor.inertia_zz = inertia[2];
    try {
      cfg.quadrotor.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(qp, e.what());
    }
    n = 12, m = 4, p = 3;
  } else if (type == "double_integrator") {
    reject_unknown(model, {"type", "sample_time", "integrator_dim"}, "model");
    cfg.model = ModelKind::double_integrator;
    cfg.integrator_dim = get_int(model, "integrator_dim", "model");
    check(cfg.integrator_dim >= 1 && cfg.integrator_dim <= 3, "model.integrator_dim", "must be 1, 2 or 3");
    n = 2 * cfg.integrator_dim, m = cfg.integrator_dim, p = cfg.integrator_dim;
  } else {
    throw ConfigError("model.type", "must be 'quadrotor' or 'double_integrator'");
  }

  // nmpc
  const json& nm = require(doc, "nmpc", "");
  reject_unknown(nm,
                 {"horizon", "q", "r", "t", "lambda", "state_lower", "state_upper", "input_lower", "input_upper",
                  "smooth", "barrier"},
                 "nmpc");
  NmpcConfig& nc = cfg.nmpc;
  nc.horizon = get_int(nm, "horizon", "nmpc");
  check(nc.horizon >= 1, "nmpc.horizon", "must be >= 1");
  nc.Q = get_weight(nm, "q", "nmpc", n);
  nc.R = get_weight(nm, "r", "nmpc", m);
  nc.T = get_weight(nm, "t", "nmpc", p);
  nc.lambda = get_double(nm, "lambda", "nmpc");
  check(nc.lambda > 0.0 && nc.lambda < 1.0, "nmpc.lambda",
        "must lie in the open interval (0,1), got " + format_value(nc.lambda));
  nc.state_bounds = {get_vector(nm, "state_lower", "nmpc", n), get_vector(nm, "state_upper", "nmpc", n)};
  nc.input_bounds = {get_vector(nm, "input_lower", "nmpc", m), get_vector(nm, "input_upper", "nmpc", m)};
  check(!(nc.state_bounds.lower.array() > nc.state_bounds.upper.array()).any(), "nmpc.state_lower",
        "exceeds nmpc.state_upper");
  check(!(nc.input_bounds.lower.array() > nc.input_bounds.upper.array()).any(), "nmpc.input_lower",
        "exceeds nmpc.input_upper");

  const json& sm = require(nm, "smooth", "nmpc");
  reject_unknown(sm, {"eta", "sigma", "prune"}, "nmpc.smooth");
  nc.smooth.eta = get_double(sm, "eta", "nmpc.smooth");
  nc.smooth.sigma = get_double(sm, "sigma", "nmpc.smooth");
  nc.smooth.prune = get_bool(sm, "prune", "nmpc.smooth");
  check(nc.smooth.eta > 0.0, "nmpc.smooth.eta", "must be > 0");
  check(nc.smooth.sigma > 0.0, "nmpc.smooth.sigma", "must be > 0");

  const json& br = require(nm, "barrier", "nmpc");
  const std::string bp = "nmpc.barrier";
  reject_unknown(br, {"delta", "d_min", "kappa", "epsilon", "mu", "decay_convention"}, bp);
  nc.barrier.delta = get_double(br, "delta", bp);
  nc.barrier.d_min = get_double(br, "d_min", bp);
  nc.barrier.kappa = get_double(br, "kappa", bp);
  nc.barrier.epsilon = get_double(br, "epsilon", bp);
  nc.barrier.mu = get_double(br, "mu", bp);
  check(nc.barrier.delta > 0.0 && nc.barrier.delta < 1.0, bp + ".delta", "must lie in the open interval (0,1)");
  check(nc.barrier.d_min > 0.0, bp + ".d_min", "must be > 0");
  check(nc.barrier.kappa > 0.0, bp + ".kappa", "must be > 0");
  check(nc.barrier.epsilon > 0.0, bp + ".epsilon", "must be > 0");
  check(nc.barrier.mu >= 0.0, bp + ".mu", "must be >= 0");
  const std::string conv = get_string(br, "decay_convention", bp);
  check(conv == "as_printed" || conv == "definition", bp + ".decay_convention",
        "must be 'as_printed' or 'definition'");
  nc.barrier.convention = conv == "as_printed" ? DecayConvention::as_printed : DecayConvention::definition;
  try {
    nc.validate(n, m, p);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("nmpc", e.what());
  }

  // solver
  const json& so = require(doc, "solver", "");
  reject_unknown(so,
                 {"eq_tol", "opt_tol", "max_outer", "max_inner", "rho_init", "rho_growth", "rho_max", "rho_warm_max", "memory",
                  "armijo", "backtrack", "max_backtracks", "max_gradient"},
                 "solver");
  SolverConfig& sc = cfg.solver;
  sc.eq_tol = get_double(so, "eq_tol", "solver");
  sc.opt_tol = get_double(so, "opt_tol", "solver");
  sc.max_outer = get_int(so, "max_outer", "solver");
  sc.max_inner = get_int(so, "max_inner", "solver");
  sc.rho_init = get_double(so, "rho_init", "solver");
  sc.rho_growth = get_double(so, "rho_growth", "solver");
  sc.rho_max = get_double(so, "rho_max", "solver");
  sc.rho_warm_max = get_double(so, "rho_warm_max", "solver");
  sc.memory = get_int(so, "memory", "solver");
  sc.armijo = get_double(so, "armijo", "solver");
  sc.backtrack = get_double(so, "backtrack", "solver");
  sc.max_backtracks = get_int(so, "max_backtracks", "solver");
  sc.max_gradient = get_double(so, "max_gradient", "solver");
  check(sc.eq_tol > 0.0, "solver.eq_tol", "must be > 0");
  check(sc.opt_tol > 0.0, "solver.opt_tol", "must be > 0");
  check(sc.rho_growth > 1.0, "solver.rho_growth", "must be > 1");
  try {
    sc.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("solver", e.what());
  }

  // obstacles
  const json& obs = require(doc, "obstacles", "");
  if (!obs.is_array()) throw ConfigError("obstacles", "expected an array");
  std::set<std::string> ids;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const std::string op = "obstacles." + std::to_string(i);
    const json& o = obs[i];
    ObstacleSpec spec;
    spec.id = get_string(o, "id", op);
    check(!spec.id.empty() && spec.id.find_first_of(", \t\n") == std::string::npos, op + ".id",
          "must be non-empty without commas or whitespace");
    check(ids.insert(spec.id).second, op + ".id", "duplicate obstacle id '" + spec.id + "'");
    if (o.contains("file")) {
      reject_unknown(o, {"id", "file"}, op);
      spec.file = get_string(o, "file", op);
    } else {
      reject_unknown(o, {"id", "shape", "bases", "count", "skip", "box_min", "box_max"}, op);
      const std::string shape = get_string(o, "shape", op);
      check(shape == "box" || shape == "sphere", op + ".shape", "must be 'box' or 'sphere'");
      spec.halton.shape = shape == "box" ? CloudShape::box : CloudShape::sphere;
      const json& bases = require(o, "bases", op);
      if (!bases.is_array()) throw ConfigError(op + ".bases", "expected an array of primes");
      spec.halton.bases = bases.get<std::vector<int>>();
      spec.halton.count = get_int(o, "count", op);
      spec.halton.skip = get_int(o, "skip", op);
      spec.halton.box_min = get_vector(o, "box_min", op, p);
      spec.halton.box_max = get_vector(o, "box_max", op, p);
      check(static_cast<int>(spec.halton.bases.size()) == p, op + ".bases",
            "needs one prime per output dimension (" + std::to_string(p) + ")");
      try {
        spec.halton.validate();
      } catch (const std::invalid_argument& e) {
        throw ConfigError(op, e.what());
      }
    }
    cfg.obstacles.push_back(std::move(spec));
  }

  const json& lidar = require(doc, "lidar", "");
  reject_unknown(lidar, {"radius"}, "lidar");
  cfg.lidar.radius = get_double(lidar, "radius", "lidar");
  check(cfg.lidar.radius > 0.0, "lidar.radius", "must be > 0");

  cfg.initial_state = get_vector(doc, "initial_state", "", n);
  check(nc.state_bounds.contains(cfg.initial_state), "initial_state", "must lie within the state bounds");
  const json& wps = require(doc, "waypoints", "");
  if (!wps.is_array() || wps.empty()) throw ConfigError("waypoints", "must be a non-empty array");
  for (std::size_t i = 0; i < wps.size(); ++i)
    cfg.waypoints.push_back(to_vector(wps[i], "waypoints." + std::to_string(i), p));

  cfg.stop_radius = get_double(doc, "stop_radius", "");
  check(cfg.stop_radius > 0.0, "stop_radius", "must be > 0");
  cfg.max_sim_time = get_double(doc, "max_sim_time", "");
  check(cfg.max_sim_time > 0.0, "max_sim_time", "must be > 0");
  const std::string metric = get_string(doc, "metric", "");
  check(metric == "smoothed" || metric == "euclidean", "metric", "must be 'smoothed' or 'euclidean'");
  cfg.metric = metric == "smoothed" ? MetricKind::smoothed : MetricKind::euclidean;
  const std::string scaling = get_string(doc, "euclidean_scaling", "");
  check(scaling == "squared" || scaling == "raw", "euclidean_scaling", "must be 'squared' or 'raw'");
  cfg.euclidean_scaling = scaling == "squared" ? EuclideanScaling::squared : EuclideanScaling::raw;
  cfg.control_every = get_int(doc, "control_every", "");
  check(cfg.control_every >= 1, "control_every", "must be >= 1");
  cfg.max_consecutive_failures = get_int(doc, "max_consecutive_failures", "");
  check(cfg.max_consecutive_failures >= 0, "max_consecutive_failures", "must be >= 0");
  return cfg;
}

json scenario_to_json(const ScenarioConfig& cfg) {
  json doc;
  if (cfg.model == ModelKind::quadrotor) {
    const auto& q = cfg.quadrotor;
    doc["model"] = {{"type", "quadrotor"},
                    {"sample_time", cfg.sample_time},
                    {"quadrotor",
                     {{"mass", q.mass},
                      {"arm_length", q.arm_length},
                      {"gravity", q.gravity},
                      {"thrust_coefficient", q.thrust_coefficient},
                      {"drag_coefficient", q.drag_coefficient},
                      {"inertia", vec({q.inertia_xx, q.inertia_yy, q.inertia_zz})}}}};
  } else {
    doc["model"] = {
        {"type", "double_integrator"}, {"sample_time", cfg.sample_time}, {"integrator_dim", cfg.integrator_dim}};
  }
  const NmpcConfig& nc = cfg.nmpc;
  doc["nmpc"] = {{"horizon", nc.horizon},
                 {"q", weight_to_json(nc.Q)},
                 {"r", weight_to_json(nc.R)},
                 {"t", weight_to_json(nc.T)},
                 {"lambda", nc.lambda},
                 {"state_lower", vector_to_json(nc.state_bounds.lower)},
                 {"state_upper", vector_to_json(nc.state_bounds.upper)},
                 {"input_lower", vector_to_json(nc.input_bounds.lower)},
                 {"input_upper", vector_to_json(nc.input_bounds.upper)},
                 {"smooth", {{"eta", nc.smooth.eta}, {"sigma", nc.smooth.sigma}, {"prune", nc.smooth.prune}}},
                 {"barrier",
                  {{"delta", nc.barrier.delta},
                   {"d_min", nc.barrier.d_min},
                   {"kappa", nc.barrier.kappa},
                   {"epsilon", nc.barrier.epsilon},
                   {"mu", nc.barrier.mu},
                   {"decay_convention",
                    nc.barrier.convention == DecayConvention::as_printed ? "as_printed" : "definition"}}}};
  const SolverConfig& s = cfg.solver;
  doc["solver"] = {{"eq_tol", s.eq_tol},       {"opt_tol", s.opt_tol},     {"max_outer", s.max_outer},
                   {"max_inner", s.max_inner}, {"rho_init", s.rho_init},   {"rho_growth", s.rho_growth},
                   {"rho_max", s.rho_max},     {"rho_warm_max", s.rho_warm_max},     {"memory", s.memory},       {"armijo", s.armijo},
                   {"backtrack", s.backtrack}, {"max_backtracks", s.max_backtracks}, {"max_gradient", s.max_gradient}};
  doc["obstacles"] = json::array();
  for (const auto& o : cfg.obstacles) {
    if (!o.file.empty()) {
      doc["obstacles"].push_back({{"id", o.id}, {"file", o.file.string()}});
      continue;
    }
    doc["obstacles"].push_back({{"id", o.id},
                                {"shape", o.halton.shape == CloudShape::box ? "box" : "sphere"},
                                {"bases", o.halton.bases},
                                {"count", o.halton.count},
                                {"skip", o.halton.skip},
                                {"box_min", vector_to_json(o.halton.box_min)},
                                {"box_max", vector_to_json(o.halton.box_max)}});
  }
  doc["lidar"] = {{"radius", cfg.lidar.radius}};
  doc["initial_state"] = vector_to_json(cfg.initial_state);
  doc["waypoints"] = json::array();
  for (const auto& w : cfg.waypoints) doc["waypoints"].push_back(vector_to_json(w));
  doc["stop_radius"] = cfg.stop_radius;
  doc["max_sim_time"] = cfg.max_sim_time;
  doc["metric"] = cfg.metric == MetricKind::smoothed ? "smoothed" : "euclidean";
  doc["euclidean_scaling"] = cfg.euclidean_scaling == EuclideanScaling::squared ? "squared" : "raw";
  doc["control_every"] = cfg.control_every;
  doc["max_consecutive_failures"] = cfg.max_consecutive_failures;
  return doc;
}

json load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open scenario file " + path.string());
  try {
    return json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError("", path.string() + ": " + e.what());
  }
}

ScenarioConfig load_scenario(const std::filesystem::path& path, const std::vector<std::string>& overrides,
                             json* resolved) {
  const json doc = resolve_scenario(load_json(path), overrides);
  ScenarioConfig cfg = scenario_from_json(doc);
  for (auto& o : cfg.obstacles) {
    if (!o.file.empty() && o.file.is_relative()) o.file = std::filesystem::absolute(path.parent_path() / o.file).lexically_normal();
  }
  if (resolved) *resolved = scenario_to_json(cfg);
  return cfg;
}

}  // namespace cloudnmpc
