#include "flockline/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

namespace flockline {

using nlohmann::json;

namespace {

const std::vector<std::pair<std::string, Experiment>> kExperiments = {
    {"simulate", Experiment::Simulate},
    {"fluid_limit", Experiment::FluidLimit},
    {"stationary", Experiment::Stationary},
    {"speed", Experiment::Speed},
    {"chaos", Experiment::Chaos},
    {"couple", Experiment::Couple},
    {"verify_fixed_point", Experiment::VerifyFixedPoint},
    {"verify_pde", Experiment::VerifyPde},
    {"drift_check", Experiment::DriftCheck},
    {"overshoot", Experiment::Overshoot},
};

const std::set<std::string> kTopKeys = {
    "experiment", "seed",       "model",       "n",           "n_list",       "T",
    "replicas",   "output_dir", "init",        "snapshot_times", "record_events", "a",
    "A",          "burn_in_T",  "thin_T",      "num_samples", "x_grid",       "a_grid",
    "l_grid",     "theta",      "h",           "points",      "test_fn",      "pairs",
    "max_cycles", "draws",      "states",      "one_step_replicas", "recenter_every", "truncation_R",
    "event_budget", "selection",
};

void only_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw ConfigError(where + ": unknown key '" + k + "'");
}

const json& need(const json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError(where + ": missing required key '" + key + "'");
  return j.at(key);
}

double number(const json& j, const std::string& what) {
  if (!j.is_number()) throw ConfigError(what + ": expected a number");
  double v = j.get<double>();
  if (!std::isfinite(v)) throw ConfigError(what + ": must be finite");
  return v;
}

double positive(const json& j, const std::string& what) {
  double v = number(j, what);
  if (!(v > 0.0)) throw ConfigError(what + ": must be positive");
  return v;
}

double nonneg(const json& j, const std::string& what) {
  double v = number(j, what);
  if (!(v >= 0.0)) throw ConfigError(what + ": must be >= 0");
  return v;
}

std::uint64_t count(const json& j, const std::string& what, std::uint64_t min = 1) {
  if (!j.is_number_integer()) throw ConfigError(what + ": expected an integer");
  if (j.is_number_unsigned()) {
    auto v = j.get<std::uint64_t>();
    if (v < min) throw ConfigError(what + ": must be >= " + std::to_string(min));
    return v;
  }
  auto v = j.get<std::int64_t>();
  if (v < static_cast<std::int64_t>(min)) throw ConfigError(what + ": must be >= " + std::to_string(min));
  return static_cast<std::uint64_t>(v);
}

std::vector<double> numbers(const json& j, const std::string& what) {
  if (!j.is_array()) throw ConfigError(what + ": expected an array of numbers");
  std::vector<double> out;
  for (const auto& v : j) out.push_back(number(v, what));
  return out;
}

std::vector<double> sorted_numbers(const json& j, const std::string& what) {
  auto v = numbers(j, what);
  if (!std::is_sorted(v.begin(), v.end())) throw ConfigError(what + ": must be sorted ascending");
  return v;
}

bool flag(const json& j, const std::string& what) {
  if (!j.is_boolean()) throw ConfigError(what + ": expected true or false");
  return j.get<bool>();
}

std::string kind_of(const json& j, const std::string& where) {
  const json& k = need(j, "kind", where);
  if (!k.is_string()) throw ConfigError(where + ".kind: expected a string");
  return k.get<std::string>();
}

}  // namespace

std::string experiment_name(Experiment e) {
  for (const auto& [name, v] : kExperiments)
    if (v == e) return name;
  return "unknown";
}

Model parse_model(const json& j) {
  only_keys(j, {"rate", "jump"}, "model");
  const json& r = need(j, "rate", "model");
  const json& z = need(j, "jump", "model");
  std::string rk = kind_of(r, "model.rate");
  std::optional<RateSpec> rate;
  try {
    if (rk == "exp") {
      only_keys(r, {"kind", "beta"}, "model.rate");
      rate = RateSpec::exponential(positive(need(r, "beta", "model.rate"), "model.rate.beta"));
    } else if (rk == "tabulated") {
      only_keys(r, {"kind", "knots"}, "model.rate");
      const json& ks = need(r, "knots", "model.rate");
      if (!ks.is_array() || ks.empty()) throw ConfigError("model.rate.knots: expected a nonempty array of [x, w] pairs");
      std::vector<RateSpec::Knot> knots;
      for (const auto& k : ks) {
        if (!k.is_array() || k.size() != 2) throw ConfigError("model.rate.knots: each knot is [x, w]");
        knots.push_back({number(k[0], "model.rate.knots"), number(k[1], "model.rate.knots")});
      }
      rate = RateSpec::tabulated(std::move(knots));
    } else {
      throw ConfigError("model.rate.kind: expected 'exp' or 'tabulated', got '" + rk + "'");
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("model.rate: ") + e.what());
  }

  std::string zk = kind_of(z, "model.jump");
  std::optional<JumpSpec> jump;
  if (zk == "exponential") {
    only_keys(z, {"kind", "gamma"}, "model.jump");
    jump = JumpSpec::exponential(positive(need(z, "gamma", "model.jump"), "model.jump.gamma"));
  } else if (zk == "deterministic") {
    only_keys(z, {"kind", "z"}, "model.jump");
    jump = JumpSpec::deterministic(positive(need(z, "z", "model.jump"), "model.jump.z"));
  } else if (zk == "uniform") {
    only_keys(z, {"kind", "b"}, "model.jump");
    jump = JumpSpec::uniform(positive(need(z, "b", "model.jump"), "model.jump.b"));
  } else {
    throw ConfigError("model.jump.kind: expected 'exponential', 'deterministic' or 'uniform', got '" + zk + "'");
  }
  return Model{*rate, *jump};
}

InitSpec parse_init(const json& j) {
  std::string k = kind_of(j, "init");
  if (k == "nu_star") {
    only_keys(j, {"kind", "beta", "gamma"}, "init");
    return InitSpec::nu_star(positive(need(j, "beta", "init"), "init.beta"), positive(need(j, "gamma", "init"), "init.gamma"));
  }
  if (k == "point_mass") {
    only_keys(j, {"kind", "x0"}, "init");
    return InitSpec::point_mass(j.contains("x0") ? number(j["x0"], "init.x0") : 0.0);
  }
  if (k == "uniform_grid") {
    only_keys(j, {"kind", "lo", "hi"}, "init");
    double lo = number(need(j, "lo", "init"), "init.lo"), hi = number(need(j, "hi", "init"), "init.hi");
    if (!(hi > lo)) throw ConfigError("init: hi must exceed lo");
    return InitSpec::uniform_grid(lo, hi);
  }
  if (k == "vector") {
    only_keys(j, {"kind", "values"}, "init");
    auto v = numbers(need(j, "values", "init"), "init.values");
    if (v.empty()) throw ConfigError("init.values: must be nonempty");
    return InitSpec::vector(std::move(v));
  }
  throw ConfigError("init.kind: unknown sampler '" + k + "'");
}

LipschitzTestFn parse_test_fn(const json& j) {
  if (j.is_string()) {
    if (j.get<std::string>() == "identity") return LipschitzTestFn::identity();
    throw ConfigError("test_fn: unknown name '" + j.get<std::string>() + "'");
  }
  std::string k = kind_of(j, "test_fn");
  try {
    if (k == "identity") {
      only_keys(j, {"kind"}, "test_fn");
      return LipschitzTestFn::identity();
    }
    if (k == "soft_clip") {
      only_keys(j, {"kind", "scale"}, "test_fn");
      return LipschitzTestFn::soft_clip(positive(need(j, "scale", "test_fn"), "test_fn.scale"));
    }
    if (k == "piecewise_linear") {
      only_keys(j, {"kind", "xs", "fs"}, "test_fn");
      return LipschitzTestFn::piecewise_linear(numbers(need(j, "xs", "test_fn"), "test_fn.xs"),
                                               numbers(need(j, "fs", "test_fn"), "test_fn.fs"));
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("test_fn: ") + e.what());
  }
  throw ConfigError("test_fn.kind: unknown kind '" + k + "'");
}

SimConfig ExperimentConfig::sim_config(double horizon, std::uint64_t replica_seed) const {
  SimConfig c;
  c.horizon = horizon;
  c.seed = replica_seed;
  c.recenter_every = recenter_every;
  c.truncation_R = truncation_R;
  c.event_budget = event_budget;
  c.selection = selection;
  c.record_events = record_events;
  return c;
}

ExperimentConfig parse_config(const json& doc) {
  only_keys(doc, kTopKeys, "config");
  ExperimentConfig c;
  c.raw = doc;

  const json& e = need(doc, "experiment", "config");
  if (!e.is_string()) throw ConfigError("experiment: expected a string");
  auto it = std::find_if(kExperiments.begin(), kExperiments.end(), [&](const auto& p) { return p.first == e.get<std::string>(); });
  if (it == kExperiments.end()) throw ConfigError("experiment: unknown experiment '" + e.get<std::string>() + "'");
  c.experiment = it->second;

  c.seed = count(need(doc, "seed", "config"), "seed", 0);
  c.model = parse_model(need(doc, "model", "config"));

  if (doc.contains("n") && doc.contains("n_list")) throw ConfigError("config: give either n or n_list, not both");
  if (doc.contains("n")) c.n_list = {static_cast<std::size_t>(count(doc["n"], "n"))};
  if (doc.contains("n_list")) {
    if (!doc["n_list"].is_array() || doc["n_list"].empty()) throw ConfigError("n_list: expected a nonempty array");
    for (const auto& v : doc["n_list"]) c.n_list.push_back(static_cast<std::size_t>(count(v, "n_list")));
  }
  if (doc.contains("T")) c.T = nonneg(doc["T"], "T");
  if (doc.contains("replicas")) c.replicas = count(doc["replicas"], "replicas");
  if (doc.contains("output_dir")) {
    if (!doc["output_dir"].is_string()) throw ConfigError("output_dir: expected a string");
    c.output_dir = doc["output_dir"].get<std::string>();
  }
  if (doc.contains("init")) {
    c.init = parse_init(doc["init"]);
    c.init_given = true;
  }
  if (doc.contains("snapshot_times")) {
    c.snapshot_times = sorted_numbers(doc["snapshot_times"], "snapshot_times");
    for (double s : c.snapshot_times)
      if (s < 0.0 || s > c.T) throw ConfigError("snapshot_times: must lie in [0, T]");
  }
  if (doc.contains("record_events")) c.record_events = flag(doc["record_events"], "record_events");
  if (doc.contains("a")) c.a = positive(doc["a"], "a");
  if (doc.contains("A")) {
    const json& A = doc["A"];
    c.A_list = A.is_array() ? numbers(A, "A") : std::vector<double>{number(A, "A")};
    for (double v : c.A_list)
      if (!(v > 0.0)) throw ConfigError("A: must be positive");
  }
  if (doc.contains("burn_in_T")) c.burn_in_T = nonneg(doc["burn_in_T"], "burn_in_T");
  if (doc.contains("thin_T")) c.thin_T = positive(doc["thin_T"], "thin_T");
  if (doc.contains("num_samples")) c.num_samples = count(doc["num_samples"], "num_samples");
  if (doc.contains("x_grid")) c.x_grid = sorted_numbers(doc["x_grid"], "x_grid");
  if (doc.contains("a_grid")) {
    c.a_grid = sorted_numbers(doc["a_grid"], "a_grid");
    for (double v : c.a_grid)
      if (v < 0.0) throw ConfigError("a_grid: entries must be >= 0");
  }
  if (doc.contains("l_grid")) {
    c.l_grid = sorted_numbers(doc["l_grid"], "l_grid");
    for (double v : c.l_grid)
      if (v < 0.0) throw ConfigError("l_grid: levels must be >= 0");
  }
  if (doc.contains("theta")) {
    const json& th = doc["theta"];
    if (th.is_number()) {
      c.theta_values = {nonneg(th, "theta")};
    } else {
      only_keys(th, {"starts", "values"}, "theta");
      c.theta_starts = sorted_numbers(need(th, "starts", "theta"), "theta.starts");
      c.theta_values = numbers(need(th, "values", "theta"), "theta.values");
      if (c.theta_starts.empty() || c.theta_starts.front() != 0.0 || c.theta_starts.size() != c.theta_values.size())
        throw ConfigError("theta: starts must begin at 0 and match values in length");
      for (double v : c.theta_values)
        if (v < 0.0) throw ConfigError("theta: values must be >= 0");
    }
  }
  if (doc.contains("h")) c.h = positive(doc["h"], "h");
  if (doc.contains("points")) {
    const json& p = doc["points"];
    if (!p.is_array()) throw ConfigError("points: expected an array of [t, x] pairs");
    for (const auto& q : p) {
      if (!q.is_array() || q.size() != 2) throw ConfigError("points: each point is [t, x]");
      c.points.emplace_back(nonneg(q[0], "points.t"), number(q[1], "points.x"));
    }
  }
  if (doc.contains("test_fn")) {
    const json& f = doc["test_fn"];
    if (f.is_array()) {
      for (const auto& v : f) c.test_fns.push_back(parse_test_fn(v));
    } else {
      c.test_fns.push_back(parse_test_fn(f));
    }
  }
  if (doc.contains("pairs")) c.pairs = count(doc["pairs"], "pairs");
  if (doc.contains("max_cycles")) c.max_cycles = static_cast<int>(count(doc["max_cycles"], "max_cycles"));
  if (doc.contains("draws")) c.draws = count(doc["draws"], "draws");
  if (doc.contains("states")) c.states = count(doc["states"], "states");
  if (doc.contains("one_step_replicas")) c.one_step_replicas = count(doc["one_step_replicas"], "one_step_replicas");
  if (doc.contains("recenter_every")) c.recenter_every = count(doc["recenter_every"], "recenter_every");
  if (doc.contains("truncation_R")) c.truncation_R = number(doc["truncation_R"], "truncation_R");
  if (doc.contains("event_budget")) c.event_budget = count(doc["event_budget"], "event_budget");
  if (doc.contains("selection")) {
    const json& s = doc["selection"];
    std::string v = s.is_string() ? s.get<std::string>() : "";
    if (v == "auto") c.selection = SelectionPath::Auto;
    else if (v == "linear") c.selection = SelectionPath::Linear;
    else if (v == "fenwick") c.selection = SelectionPath::Fenwick;
    else throw ConfigError("selection: expected 'auto', 'linear' or 'fenwick'");
  }

  switch (c.experiment) {
    case Experiment::Simulate:
    case Experiment::FluidLimit:
    case Experiment::Speed:
      if (c.n_list.empty()) throw ConfigError("config: experiment needs n or n_list");
      if (!doc.contains("T")) throw ConfigError("config: experiment needs T");
      break;
    case Experiment::Stationary:
    case Experiment::Chaos:
    case Experiment::DriftCheck:
      if (c.n_list.empty()) throw ConfigError("config: experiment needs n or n_list");
      break;
    default:
      break;
  }
  switch (c.experiment) {
    case Experiment::FluidLimit:
    case Experiment::VerifyFixedPoint:
    case Experiment::VerifyPde:
    case Experiment::Couple:
      if (!c.model.exp_exp()) throw ConfigError("config: experiment needs an exp rate with exponential jumps");
      break;
    default:
      break;
  }
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(doc);
}

}  // namespace flockline
