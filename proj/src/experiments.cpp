#include "flockline/experiments.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>

#include "flockline/coupling.hpp"
#include "flockline/diagnostics.hpp"
#include "flockline/meanfield.hpp"
#include "flockline/special.hpp"
#include "flockline/stats.hpp"
#include "flockline/version.hpp"

namespace flockline {

using nlohmann::json;

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void Table::write_csv(std::ostream& os) const {
  for (std::size_t k = 0; k < columns.size(); ++k) os << (k ? "," : "") << columns[k];
  os << '\n';
  for (const auto& row : rows) {
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (k) os << ',';
      std::visit(
          [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, double>) os << format_double(v);
            else if constexpr (std::is_same_v<T, bool>) os << (v ? 1 : 0);
            else os << v;
          },
          row[k]);
    }
    os << '\n';
  }
}

std::uint64_t replica_seed(std::uint64_t base, std::size_t n, std::size_t r) {
  return derive_seed(derive_seed(base, n), r);
}

namespace {

const std::vector<std::string> kProvenance = {"experiment", "n", "replica", "seed"};

std::vector<std::string> columns(std::initializer_list<std::string> extra) {
  std::vector<std::string> c = kProvenance;
  c.insert(c.end(), extra);
  return c;
}

std::vector<Cell> row(const ExperimentConfig& cfg, std::size_t n, std::size_t r, std::uint64_t seed,
                      std::initializer_list<Cell> extra) {
  std::vector<Cell> v{experiment_name(cfg.experiment), static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(r), seed};
  v.insert(v.end(), extra);
  return v;
}

// Exceptions thrown inside a replica are rethrown on the calling thread.
template <class F>
void parallel_for(std::int64_t count, F&& body) {
  std::exception_ptr err;
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t k = 0; k < count; ++k) {
    try {
      body(k);
    } catch (...) {
#pragma omp critical(flockline_parallel_error)
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
}

double median_of(std::vector<double> v) { return v.empty() ? std::nan("") : median(v); }

bool fixed_point_available(const Model& m) { return m.exp_exp() && m.rate.beta() <= m.jump.parameter(); }

GumbelFixedPoint fixed_point(const Model& m) { return GumbelFixedPoint(m.rate.beta(), m.jump.parameter()); }

InitSpec default_init(const ExperimentConfig& cfg) {
  if (cfg.init_given) return cfg.init;
  if (fixed_point_available(cfg.model)) return InitSpec::nu_star(cfg.model.rate.beta(), cfg.model.jump.parameter());
  return InitSpec::point_mass(0.0);
}

ThetaPath theta_path(const ExperimentConfig& cfg) {
  if (!cfg.theta_values.empty()) return ThetaPath(cfg.theta_starts, cfg.theta_values);
  return ThetaPath::constant(fixed_point(cfg.model).w_integral());
}

LipschitzTestFn first_test_fn(const ExperimentConfig& cfg) {
  return cfg.test_fns.empty() ? LipschitzTestFn::soft_clip(5.0) : cfg.test_fns.front();
}

struct ReplicaRun {
  RunResult run;
  std::uint64_t seed = 0;
};

// Runs replicas of size n in parallel; results indexed by replica.
std::vector<ReplicaRun> run_replicas(const ExperimentConfig& cfg, std::size_t n, const InitSpec& init, double T,
                                     bool with_snapshots) {
  std::vector<ReplicaRun> out(cfg.replicas);
  const std::int64_t R = static_cast<std::int64_t>(cfg.replicas);
  parallel_for(R, [&](std::int64_t r) {
    const std::uint64_t seed = replica_seed(cfg.seed, n, static_cast<std::size_t>(r));
    SimConfig sc = cfg.sim_config(T, seed);
    if (with_snapshots) sc.snapshot_times = cfg.snapshot_times;
    out[r].seed = seed;
    out[r].run = simulate(cfg.model, init_state(n, init, seed), sc);
  });
  return out;
}

void count_taint(ExperimentOutput& out, const RunResult& run) {
  out.overflow_runs += run.overflow;
  out.budget_runs += run.budget_exceeded;
}

ExperimentOutput exp_simulate(const ExperimentConfig& cfg) {
  ExperimentOutput out;
  out.results.columns = columns({"T", "m_T", "velocity", "events", "hat_m", "overflow", "budget_exceeded"});
  Table snaps{columns({"snapshot_time", "particle", "y"}), {}};
  Table events{columns({"time", "particle", "jump_size", "total_rate_before"}), {}};
  json per_n = json::array();
  if (cfg.T == 0.0) {
    out.summary["replicas_run"] = 0;
    out.summary["note"] = "T = 0: nothing to simulate";
    return out;
  }
  const InitSpec init = default_init(cfg);
  for (std::size_t n : cfg.n_list) {
    auto runs = run_replicas(cfg, n, init, cfg.T, true);
    std::vector<double> vel;
    for (std::size_t r = 0; r < runs.size(); ++r) {
      const auto& res = runs[r].run;
      const std::uint64_t seed = runs[r].seed;
      count_taint(out, res);
      const double m0 = std::accumulate(res.initial_raw.begin(), res.initial_raw.end(), 0.0) / static_cast<double>(n);
      const double v = (res.final_state.m - m0) / cfg.T;
      vel.push_back(v);
      out.results.rows.push_back(row(cfg, n, r, seed,
                                     {cfg.T, res.final_state.m, v, res.event_count, hat_m(res.final_state), res.overflow,
                                      res.budget_exceeded}));
      for (const auto& s : res.snapshots) {
        snaps.rows.push_back(row(cfg, n, r, seed, {s.t, std::int64_t(-1), s.m}));
        for (std::size_t i = 0; i < s.y.size(); ++i)
          snaps.rows.push_back(row(cfg, n, r, seed, {s.t, static_cast<std::int64_t>(i), s.y[i]}));
      }
      for (const auto& e : res.events)
        events.rows.push_back(row(cfg, n, r, seed, {e.time, static_cast<std::uint64_t>(e.particle), e.jump_size, e.total_rate_before}));
    }
    per_n.push_back({{"n", n}, {"mean_velocity", mean(vel)}, {"velocity_stderr", vel.size() > 1 ? std_error(vel) : 0.0}});
  }
  out.summary["per_n"] = per_n;
  out.summary["replicas_run"] = cfg.replicas * cfg.n_list.size();
  if (!snaps.rows.empty()) out.extra_files.emplace_back("snapshots.csv", std::move(snaps));
  if (cfg.record_events) out.extra_files.emplace_back("events.csv", std::move(events));
  return out;
}

ExperimentOutput exp_fluid_limit(const ExperimentConfig& cfg) {
  if (!fixed_point_available(cfg.model)) throw ConfigError("fluid_limit: needs beta <= gamma so that nu* exists");
  const GumbelFixedPoint nu = fixed_point(cfg.model);
  const InitSpec init = InitSpec::nu_star(cfg.model.rate.beta(), cfg.model.jump.parameter());
  if (cfg.init_given && cfg.init.kind != InitSpec::Kind::NuStar)
    throw ConfigError("fluid_limit: the limit law is known in closed form only for nu* initial data");
  ExperimentOutput out;
  out.results.columns = columns({"T", "w1_to_limit", "m_T", "limit_mean"});
  const double shift = nu.speed() * cfg.T;
  const ContinuousLaw law = law_of(nu, shift);
  json per_n = json::array();
  std::vector<double> medians;
  for (std::size_t n : cfg.n_list) {
    auto runs = run_replicas(cfg, n, init, cfg.T, false);
    std::vector<double> w(runs.size());
    const std::int64_t R = static_cast<std::int64_t>(runs.size());
    parallel_for(R, [&](std::int64_t r) { w[r] = wasserstein1(EmpiricalMeasure(runs[r].run.final_state.raw()), law); });
    for (std::size_t r = 0; r < runs.size(); ++r) {
      count_taint(out, runs[r].run);
      out.results.rows.push_back(row(cfg, n, r, runs[r].seed, {cfg.T, w[r], runs[r].run.final_state.m, shift}));
    }
    medians.push_back(median_of(w));
    per_n.push_back({{"n", n}, {"median_w1", medians.back()}});
  }
  json ratios = json::array();
  bool decreasing = true;
  for (std::size_t k = 1; k < medians.size(); ++k) {
    ratios.push_back(medians[k - 1] / medians[k]);
    decreasing = decreasing && medians[k] < medians[k - 1];
  }
  out.summary["per_n"] = per_n;
  out.summary["successive_ratios"] = ratios;
  out.summary["strictly_decreasing"] = decreasing;
  out.summary["limit_speed"] = nu.speed();
  return out;
}

ExperimentOutput exp_stationary(const ExperimentConfig& cfg) {
  ExperimentOutput out;
  out.results.columns = columns({"half_w1", "w1_to_nu_star", "baseline_w1", "sup_cdf", "formula_velocity"});
  Table snaps{columns({"snapshot_time", "particle", "y"}), {}};
  const bool have_nu = fixed_point_available(cfg.model);
  const InitSpec init = default_init(cfg);
  json per_n = json::array();
  for (std::size_t n : cfg.n_list) {
    struct Rep {
      StationaryResult st;
      double w1 = std::nan(""), base = std::nan(""), sup = std::nan(""), vel = 0.0;
      std::uint64_t seed = 0;
    };
    std::vector<Rep> reps(cfg.replicas);
    const std::int64_t R = static_cast<std::int64_t>(cfg.replicas);
    parallel_for(R, [&](std::int64_t r) {
      Rep& rep = reps[r];
      rep.seed = replica_seed(cfg.seed, n, static_cast<std::size_t>(r));
      StationaryConfig sc;
      sc.burn_in_T = cfg.burn_in_T;
      sc.thin_T = cfg.thin_T;
      sc.num_samples = cfg.num_samples;
      sc.seed = rep.seed;
      sc.init = init;
      rep.st = stationary_sample(cfg.model, n, sc);
      double wsum = 0.0;
      for (const auto& s : rep.st.samples) wsum += s.integrate([&](double y) { return cfg.model.rate(y); });
      rep.vel = cfg.model.jump.mean() * wsum / static_cast<double>(rep.st.samples.size());
      if (have_nu) {
        const GumbelFixedPoint nu = fixed_point(cfg.model);
        const ContinuousLaw law = law_of(nu);
        const EmpiricalMeasure& last = rep.st.samples.back();
        rep.w1 = wasserstein1(last, law);
        rep.sup = cdf_sup_distance(last, [&](double x) { return nu.cdf(x); });
        Rng aux(stream_seed(rep.seed, Stream::Auxiliary));
        rep.base = wasserstein1(EmpiricalMeasure(nu.sample(n, aux)), law);
      }
    });
    std::vector<double> w, b, h, v;
    for (std::size_t r = 0; r < reps.size(); ++r) {
      const Rep& rep = reps[r];
      count_taint(out, rep.st.run);
      out.results.rows.push_back(row(cfg, n, r, rep.seed, {rep.st.half_w1, rep.w1, rep.base, rep.sup, rep.vel}));
      w.push_back(rep.w1);
      b.push_back(rep.base);
      h.push_back(rep.st.half_w1);
      v.push_back(rep.vel);
      for (std::size_t k = 0; k < rep.st.samples.size(); ++k) {
        const auto& snap = rep.st.run.snapshots[k];
        snaps.rows.push_back(row(cfg, n, r, rep.seed, {snap.t, std::int64_t(-1), snap.m}));
        for (std::size_t i = 0; i < snap.y.size(); ++i)
          snaps.rows.push_back(row(cfg, n, r, rep.seed, {snap.t, static_cast<std::int64_t>(i), snap.y[i]}));
      }
    }
    json entry = {{"n", n}, {"median_half_w1", median_of(h)}, {"mean_formula_velocity", mean(v)}};
    if (have_nu) {
      entry["median_w1_to_nu_star"] = median_of(w);
      entry["median_baseline_w1"] = median_of(b);
      entry["ratio_to_baseline"] = median_of(w) / median_of(b);
    }
    per_n.push_back(entry);
  }
  out.summary["per_n"] = per_n;
  if (have_nu) out.summary["target_velocity"] = fixed_point(cfg.model).speed();
  if (cfg.record_events || !cfg.snapshot_times.empty()) out.extra_files.emplace_back("snapshots.csv", std::move(snaps));
  return out;
}

ExperimentOutput exp_speed(const ExperimentConfig& cfg) {
  if (!(cfg.T > 0.0)) throw ConfigError("speed: T must be positive");
  ExperimentOutput out;
  out.results.columns = columns({"T", "m_T", "velocity", "events"});
  const InitSpec init = default_init(cfg);
  json per_n = json::array();
  for (std::size_t n : cfg.n_list) {
    auto runs = run_replicas(cfg, n, init, cfg.T, false);
    std::vector<double> vel;
    for (std::size_t r = 0; r < runs.size(); ++r) {
      const auto& res = runs[r].run;
      count_taint(out, res);
      const double m0 = std::accumulate(res.initial_raw.begin(), res.initial_raw.end(), 0.0) / static_cast<double>(n);
      vel.push_back((res.final_state.m - m0) / cfg.T);
      out.results.rows.push_back(row(cfg, n, r, runs[r].seed, {cfg.T, res.final_state.m, vel.back(), res.event_count}));
    }
    json entry = {{"n", n}, {"mean_velocity", mean(vel)}, {"velocity_stderr", vel.size() > 1 ? std_error(vel) : 0.0}};
    if (fixed_point_available(cfg.model)) {
      const double target = fixed_point(cfg.model).speed();
      entry["relative_error"] = mean(vel) / target - 1.0;
    }
    per_n.push_back(entry);
  }
  out.summary["per_n"] = per_n;
  if (fixed_point_available(cfg.model)) out.summary["target_velocity"] = fixed_point(cfg.model).speed();
  return out;
}

ExperimentOutput exp_chaos(const ExperimentConfig& cfg) {
  if (cfg.replicas < 100) throw ConfigError("chaos: needs replicas >= 100");
  const LipschitzTestFn f = first_test_fn(cfg);
  ExperimentOutput out;
  out.results.columns = columns({"f_y1", "f_y2", "mean_f"});
  const InitSpec init = default_init(cfg);
  json per_n = json::array();
  for (std::size_t n : cfg.n_list) {
    if (n < 2) throw ConfigError("chaos: n must be >= 2");
    auto runs = run_replicas(cfg, n, init, cfg.burn_in_T, false);
    std::vector<std::vector<double>> states;
    for (std::size_t r = 0; r < runs.size(); ++r) {
      const auto& y = runs[r].run.final_state.y;
      count_taint(out, runs[r].run);
      double s = 0.0;
      for (double v : y) s += f(v);
      out.results.rows.push_back(row(cfg, n, r, runs[r].seed, {f(y[0]), f(y[1]), s / static_cast<double>(n)}));
      states.push_back(y);
    }
    auto c1 = chaos_estimate(states, f, ChaosMode::FirstTwo);
    auto c2 = chaos_estimate(states, f, ChaosMode::AllPairs);
    json entry = {{"n", n},
                  {"covariance_first_two", c1.covariance},
                  {"stderr_first_two", c1.standard_error},
                  {"covariance_all_pairs", c2.covariance},
                  {"stderr_all_pairs", c2.standard_error},
                  {"variance", c2.variance}};
    if (fixed_point_available(cfg.model)) {
      const GumbelFixedPoint nu = fixed_point(cfg.model);
      const double m1 = nu.integrate([&](double x) { return f(x); });
      const double m2 = nu.integrate([&](double x) { return f(x) * f(x); });
      entry["variance_nu_star"] = m2 - m1 * m1;
    }
    per_n.push_back(entry);
  }
  out.summary["per_n"] = per_n;
  out.summary["burn_in_T"] = cfg.burn_in_T;
  return out;
}

ExperimentOutput exp_couple(const ExperimentConfig& cfg) {
  const double beta = cfg.model.rate.beta(), gamma = cfg.model.jump.parameter();
  const ThetaPath theta = theta_path(cfg);
  const double horizon = cfg.T > 0.0 ? cfg.T : std::numeric_limits<double>::infinity();
  const bool have_nu = beta <= gamma;
  ExperimentOutput out;
  out.results.columns = columns({"pair_id", "tau", "cycles_used", "coalesced_by_horizon", "z1_0", "z2_0"});
  struct Pair {
    CoalescenceRun run;
    double z1, z2;
    std::uint64_t seed;
  };
  std::vector<Pair> pairs(cfg.pairs);
  const std::int64_t P = static_cast<std::int64_t>(cfg.pairs);
  parallel_for(P, [&](std::int64_t p) {
    Pair& pr = pairs[p];
    pr.seed = replica_seed(cfg.seed, 2, static_cast<std::size_t>(p));
    Rng init(stream_seed(pr.seed, Stream::Initial));
    if (have_nu) {
      GumbelFixedPoint nu(beta, gamma);
      pr.z1 = nu.sample(init);
      pr.z2 = nu.sample(init);
    } else {
      pr.z1 = 0.0;
      pr.z2 = 1.0;
    }
    Rng rng(pr.seed);
    pr.run = run_coalescence(pr.z1, pr.z2, theta, beta, gamma, cfg.a, cfg.max_cycles, horizon, rng);
  });
  long cycles = 0, wins = 0;
  std::vector<double> taus;
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const Pair& pr = pairs[p];
    out.results.rows.push_back(row(cfg, 2, p, pr.seed,
                                   {static_cast<std::uint64_t>(p), pr.run.coalesced ? pr.run.tau : std::nan(""),
                                    static_cast<std::int64_t>(pr.run.cycles_used), pr.run.coalesced, pr.z1, pr.z2}));
    cycles += pr.run.cycles_used;
    wins += pr.run.coalesced;
    if (pr.run.coalesced) taus.push_back(pr.run.tau);
  }
  const double freq = cycles > 0 ? double(wins) / double(cycles) : std::nan("");
  out.summary["pairs"] = cfg.pairs;
  out.summary["cycles"] = cycles;
  out.summary["per_cycle_success"] = freq;
  out.summary["per_cycle_stderr"] = cycles > 0 ? std::sqrt(freq * (1 - freq) / double(cycles)) : std::nan("");
  out.summary["lower_bound_p"] = coalescence_lower_bound(cfg.a, beta, gamma);
  out.summary["coalesced_fraction"] = double(wins) / double(std::max<std::size_t>(cfg.pairs, 1));
  out.summary["geometric_bound"] = 1.0 - std::pow(1.0 - coalescence_lower_bound(cfg.a, beta, gamma), cfg.max_cycles);
  out.summary["median_tau"] = median_of(taus);
  return out;
}

ExperimentOutput exp_verify_fixed_point(const ExperimentConfig& cfg) {
  const double beta = cfg.model.rate.beta(), gamma = cfg.model.jump.parameter();
  const GumbelFixedPoint nu(beta, gamma);
  ExperimentOutput out;
  out.results.columns = columns({"x", "density", "cdf"});
  std::vector<double> xs = cfg.x_grid;
  if (xs.empty())
    for (int k = 0; k <= 80; ++k) xs.push_back(-4.0 + 0.125 * k);
  for (double x : xs) out.results.rows.push_back(row(cfg, 0, 0, cfg.seed, {x, nu.density(x), nu.cdf(x)}));
  const double mass = nu.integrate([](double) { return 1.0; });
  const double m = nu.integrate([](double x) { return x; });
  const double wq = nu.integrate([&](double x) { return std::exp(-beta * x); });
  out.summary["beta"] = beta;
  out.summary["gamma"] = gamma;
  out.summary["normalization_error"] = std::fabs(mass - 1.0);
  out.summary["mean_error"] = std::fabs(m);
  out.summary["w_integral"] = nu.w_integral();
  out.summary["w_integral_quadrature"] = wq;
  out.summary["cdf_at_0"] = nu.cdf(0.0);
  out.summary["location"] = nu.location();
  out.summary["mode"] = nu.mode();
  out.summary["speed"] = nu.speed();
  out.summary["speed_digamma"] = std::exp(-digamma(gamma / beta)) / beta;
  return out;
}

ExperimentOutput exp_verify_pde(const ExperimentConfig& cfg) {
  const double beta = cfg.model.rate.beta(), gamma = cfg.model.jump.parameter();
  std::vector<ThetaPath> thetas;
  std::vector<std::string> labels;
  if (!cfg.theta_values.empty()) {
    thetas.push_back(theta_path(cfg));
    labels.push_back("configured");
  } else {
    thetas.push_back(ThetaPath::constant(0.0));
    labels.push_back("zero");
    if (beta <= gamma) {
      thetas.push_back(ThetaPath::constant(GumbelFixedPoint(beta, gamma).w_integral()));
      labels.push_back("fixed_point");
    }
  }
  std::vector<std::pair<double, double>> pts = cfg.points;
  if (pts.empty())
    for (double t : {0.5, 1.0, 2.0, 3.0})
      for (double x : {-1.0, 0.0, 1.0, 2.0, 3.0}) pts.emplace_back(t, x);
  ExperimentOutput out;
  out.results.columns = columns({"theta", "t", "x", "residual_h", "residual_h2", "ratio", "near_breakpoint"});
  json per_theta = json::array();
  for (std::size_t k = 0; k < thetas.size(); ++k) {
    AuxSolution aux(thetas[k], beta, gamma);
    double worst = 0.0, worst2 = 0.0;
    double rmin = std::numeric_limits<double>::infinity(), rmax = 0.0;
    for (std::size_t p = 0; p < pts.size(); ++p) {
      auto r1 = pde_residual(aux, pts[p].first, pts[p].second, cfg.h);
      auto r2 = pde_residual(aux, pts[p].first, pts[p].second, cfg.h / 2.0);
      const double ratio = std::fabs(r1.value) / std::fabs(r2.value);
      worst = std::max(worst, std::fabs(r1.value));
      worst2 = std::max(worst2, std::fabs(r2.value));
      rmin = std::min(rmin, ratio);
      rmax = std::max(rmax, ratio);
      out.results.rows.push_back(row(cfg, 0, p, cfg.seed,
                                     {labels[k], pts[p].first, pts[p].second, r1.value, r2.value, ratio,
                                      r1.near_breakpoint || r2.near_breakpoint}));
    }
    per_theta.push_back({{"theta", labels[k]},
                         {"max_residual", worst},
                         {"max_norm_ratio", worst / worst2},
                         {"min_pointwise_ratio", rmin},
                         {"max_pointwise_ratio", rmax}});
  }
  out.summary["h"] = cfg.h;
  out.summary["per_theta"] = per_theta;
  return out;
}

ExperimentOutput exp_drift_check(const ExperimentConfig& cfg) {
  ExperimentOutput out;
  out.results.columns = columns({"A", "V", "LV_closed_form", "LV_monte_carlo", "LV_stderr", "z_score", "in_compact_K",
                                 "VA_generator", "VA_bound", "VA_ok"});
  json per_n = json::array();
  for (std::size_t n : cfg.n_list) {
    if (n < 2) throw ConfigError("drift_check: n must be >= 2");
    Rng rng(replica_seed(cfg.seed, n, std::numeric_limits<std::size_t>::max()));
    const RadiusReport rr = locate_negativity_radius(cfg.model, n, 200, rng);
    struct S {
      DriftReport d;
      std::vector<VaReport> va;
      std::uint64_t seed;
    };
    std::vector<S> st(cfg.states);
    const std::int64_t K = static_cast<std::int64_t>(cfg.states);
    parallel_for(K, [&](std::int64_t k) {
      S& s = st[k];
      s.seed = replica_seed(cfg.seed, n, static_cast<std::size_t>(k));
      Rng local(stream_seed(s.seed, Stream::Initial));
      auto dir = random_direction(n, local);
      const double scale = 3.0 * std::max(rr.radius, 1.0) * local.uniform();
      SystemState state;
      state.y = dir;
      for (auto& v : state.y) v *= scale;
      DriftOptions opt;
      opt.mc_replicas = cfg.one_step_replicas;
      opt.seed = s.seed;
      opt.radius = rr.radius;
      s.d = lyapunov_drift(state, cfg.model, opt);
      for (double A : cfg.A_list) s.va.push_back(lyapunov_drift_VA(state, cfg.model, A));
    });
    double max_z = 0.0;
    bool va_ok = true;
    for (std::size_t k = 0; k < st.size(); ++k) {
      const S& s = st[k];
      const double z = s.d.LV_monte_carlo_stderr > 0.0
                           ? (s.d.LV_monte_carlo - s.d.LV_closed_form) / s.d.LV_monte_carlo_stderr
                           : std::nan("");
      if (std::isfinite(z)) max_z = std::max(max_z, std::fabs(z));
      for (std::size_t a = 0; a < cfg.A_list.size(); ++a) {
        const bool ok = s.va[a].generator <= s.va[a].bound;
        va_ok = va_ok && ok;
        out.results.rows.push_back(row(cfg, n, k, s.seed,
                                       {cfg.A_list[a], s.d.V_value, s.d.LV_closed_form, s.d.LV_monte_carlo,
                                        s.d.LV_monte_carlo_stderr, z, s.d.in_compact_K, s.va[a].generator, s.va[a].bound, ok}));
      }
    }
    json eps = json::array();
    for (double A : cfg.A_list) {
      bool grid = false;
      double e = epsilon_A(cfg.model, A, &grid);
      eps.push_back({{"A", A}, {"epsilon_A", e}, {"grid_estimate", grid}});
    }
    per_n.push_back({{"n", n},
                     {"radius", rr.radius},
                     {"C1_estimate", rr.C1_estimate},
                     {"max_abs_z", max_z},
                     {"va_bound_holds", va_ok},
                     {"epsilon", eps}});
  }
  out.summary["per_n"] = per_n;
  return out;
}

ExperimentOutput exp_overshoot(const ExperimentConfig& cfg) {
  const JumpSpec& jump = cfg.model.jump;
  std::vector<double> levels = cfg.l_grid;
  if (levels.empty())
    for (int l = 0; l <= 50; ++l) levels.push_back(l);
  ExperimentOutput out;
  out.results.columns = columns({"level", "mean_overshoot", "stderr", "ks_statistic", "max_exact_error"});
  struct L {
    double mean, se, ks = std::nan(""), err = std::nan("");
    std::uint64_t seed;
  };
  std::vector<L> res(levels.size());
  const std::int64_t K = static_cast<std::int64_t>(levels.size());
  parallel_for(K, [&](std::int64_t k) {
    L& r = res[k];
    r.seed = replica_seed(cfg.seed, 0, static_cast<std::size_t>(k));
    Rng rng(r.seed);
    std::vector<double> o(cfg.draws);
    for (auto& v : o) v = overshoot_sample(jump, levels[k], rng).overshoot;
    r.mean = mean(o);
    r.se = o.size() > 1 ? std_error(o) : 0.0;
    if (jump.kind() == JumpKind::Exponential) {
      const double g = jump.parameter();
      r.ks = ks_one_sample(o, [g](double x) { return x <= 0.0 ? 0.0 : -std::expm1(-g * x); }).statistic;
    } else if (jump.kind() == JumpKind::Deterministic) {
      const double z = jump.parameter();
      const double exact = z * (std::floor(levels[k] / z) + 1.0) - levels[k];
      r.err = 0.0;
      for (double v : o) r.err = std::max(r.err, std::fabs(v - exact));
    }
  });
  double max_ks = 0.0, sup_mean = 0.0, max_err = 0.0;
  for (std::size_t k = 0; k < levels.size(); ++k) {
    out.results.rows.push_back(row(cfg, 0, k, res[k].seed, {levels[k], res[k].mean, res[k].se, res[k].ks, res[k].err}));
    if (std::isfinite(res[k].ks)) max_ks = std::max(max_ks, res[k].ks);
    if (std::isfinite(res[k].err)) max_err = std::max(max_err, res[k].err);
    sup_mean = std::max(sup_mean, res[k].mean);
  }
  out.summary["levels"] = levels.size();
  out.summary["draws_per_level"] = cfg.draws;
  out.summary["sup_mean_overshoot"] = sup_mean;
  if (jump.kind() == JumpKind::Exponential) {
    out.summary["max_ks_statistic"] = max_ks;
    out.summary["memoryless_mean"] = 1.0 / jump.parameter();
  }
  if (jump.kind() == JumpKind::Deterministic) out.summary["max_exact_error"] = max_err;
  return out;
}

std::string timestamp() {
  std::time_t now = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return buf;
}

}  // namespace

ExperimentOutput execute(const ExperimentConfig& cfg, int jobs) {
  if (jobs > 0) omp_set_num_threads(jobs);
  switch (cfg.experiment) {
    case Experiment::Simulate: return exp_simulate(cfg);
    case Experiment::FluidLimit: return exp_fluid_limit(cfg);
    case Experiment::Stationary: return exp_stationary(cfg);
    case Experiment::Speed: return exp_speed(cfg);
    case Experiment::Chaos: return exp_chaos(cfg);
    case Experiment::Couple: return exp_couple(cfg);
    case Experiment::VerifyFixedPoint: return exp_verify_fixed_point(cfg);
    case Experiment::VerifyPde: return exp_verify_pde(cfg);
    case Experiment::DriftCheck: return exp_drift_check(cfg);
    case Experiment::Overshoot: return exp_overshoot(cfg);
  }
  throw ConfigError("unknown experiment");
}

int run_experiment(const ExperimentConfig& cfg, const RunOptions& opt, std::ostream& log) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::string started = timestamp();
  const AssumptionReport rep = check_assumptions(cfg.model, cfg.a_grid.empty() ? default_a_grid() : cfg.a_grid);
  if (!rep.a21_holds && !opt.allow_unchecked) {
    log << "error: " << rep.failure_message() << "\n";
    return kExitAssumption;
  }

  ExperimentOutput out;
  try {
    out = execute(cfg, opt.jobs);
  } catch (const ConfigError& e) {
    log << "error: " << e.what() << "\n";
    return kExitSchema;
  } catch (const std::invalid_argument& e) {
    log << "error: " << e.what() << "\n";
    return kExitSchema;
  } catch (const std::runtime_error& e) {
    // stationary sampling rejects tainted runs outright
    log << "error: " << e.what() << "\n";
    return kExitTainted;
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  namespace fs = std::filesystem;
  const fs::path dir = opt.out_dir.empty() ? fs::path(cfg.output_dir) : fs::path(opt.out_dir);
  try {
    fs::create_directories(dir);
    auto write = [&](const fs::path& p, const auto& fn) {
      std::ofstream os(p, std::ios::binary);
      if (!os) throw std::runtime_error("cannot write " + p.string());
      fn(os);
      os.flush();
      if (!os) throw std::runtime_error("write failed for " + p.string());
    };
    write(dir / "results.csv", [&](std::ostream& os) { out.results.write_csv(os); });
    for (const auto& [name, table] : out.extra_files) write(dir / name, [&](std::ostream& os) { table.write_csv(os); });

    json summary = out.summary;
    summary["experiment"] = experiment_name(cfg.experiment);
    summary["tainted"] = out.tainted();
    write(dir / "summary.json", [&](std::ostream& os) { os << summary.dump(2) << "\n"; });

    json assumptions = {{"c_w", rep.c_w},
                        {"c_w_grid_estimate", rep.c_w_grid_estimate},
                        {"a21_holds", rep.a21_holds},
                        {"a210_holds", rep.a210_holds},
                        {"a211_holds", rep.a211_holds},
                        {"a213_holds", rep.a213_holds}};
    json files = json::array({"results.csv", "summary.json"});
    for (const auto& f : out.extra_files) files.push_back(f.first);
    json manifest = {{"config", cfg.raw},
                     {"library", "flockline"},
                     {"version", kVersion},
                     {"started_at", started},
                     {"wall_time_seconds", wall},
                     {"jobs", opt.jobs},
                     {"allow_unchecked", opt.allow_unchecked},
                     {"assumptions", assumptions},
                     {"taint", {{"tainted", out.tainted()}, {"overflow_runs", out.overflow_runs}, {"budget_runs", out.budget_runs}}},
                     {"files", files}};
    write(dir / "manifest.json", [&](std::ostream& os) { os << manifest.dump(2) << "\n"; });
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    return kExitSchema;
  }
  if (out.tainted()) {
    log << "warning: " << out.overflow_runs << " run(s) hit the rate cap, " << out.budget_runs
        << " run(s) hit the event budget\n";
    return kExitTainted;
  }
  return kExitOk;
}

}  // namespace flockline
