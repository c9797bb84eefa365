#include "flockline/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "flockline/stats.hpp"

namespace flockline {

namespace {

double V_of(const std::vector<double>& y) {
  double s = 0.0;
  for (double v : y) s += v * v;
  return s / static_cast<double>(y.size());
}

double mean_abs(const std::vector<double>& y) {
  double s = 0.0;
  for (double v : y) s += std::fabs(v);
  return s / static_cast<double>(y.size());
}

}  // namespace

double lv_closed_form(const std::vector<double>& y, const Model& model) {
  const double n = static_cast<double>(y.size());
  double sw = 0.0, syw = 0.0;
  for (double v : y) {
    double w = model.rate(v);
    sw += w;
    syw += v * w;
  }
  return (n - 1.0) / (n * n) * model.jump.second_moment() * sw + 2.0 / n * model.jump.mean() * syw;
}

std::vector<double> random_direction(std::size_t n, Rng& rng) {
  std::normal_distribution<double> normal;
  std::vector<double> d(n);
  for (auto& v : d) v = normal(rng.engine());
  double mu = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(n);
  for (auto& v : d) v -= mu;
  double s = mean_abs(d);
  if (s == 0.0) return d;
  for (auto& v : d) v /= s;
  return d;
}

RadiusReport locate_negativity_radius(const Model& model, std::size_t n, std::size_t directions, Rng& rng,
                                      double r_max) {
  if (n < 2) throw std::invalid_argument("negativity radius needs n >= 2");
  RadiusReport rep{0.0, std::numeric_limits<double>::infinity(), directions};
  std::vector<std::vector<double>> dirs;
  auto lv_at = [&](const std::vector<double>& d, double r) {
    std::vector<double> y(d);
    for (auto& v : y) v *= r;
    return lv_closed_form(y, model);
  };
  for (std::size_t k = 0; k < directions; ++k) {
    auto d = random_direction(n, rng);
    // Outermost sign change of LV along the ray, scanned then bisected.
    const int steps = 600;
    double last_nonneg = 0.0;
    for (int s = 1; s <= steps; ++s) {
      double r = r_max * s / steps;
      if (lv_at(d, r) >= 0.0) last_nonneg = r;
    }
    double lo = last_nonneg, hi = std::min(r_max, last_nonneg + r_max / steps);
    if (lo > 0.0 && lo < r_max) {
      for (int it = 0; it < 60; ++it) {
        double mid = 0.5 * (lo + hi);
        if (lv_at(d, mid) >= 0.0) lo = mid; else hi = mid;
      }
    }
    rep.radius = std::max(rep.radius, hi);
    dirs.push_back(std::move(d));
  }
  for (const auto& d : dirs) rep.C1_estimate = std::min(rep.C1_estimate, -lv_at(d, 2.0 * rep.radius));
  return rep;
}

DriftReport lyapunov_drift(const SystemState& state, const Model& model, const DriftOptions& opt) {
  const auto& y = state.y;
  if (y.empty()) throw std::invalid_argument("lyapunov_drift: empty state");
  DriftReport rep;
  rep.state = y;
  rep.V_value = V_of(y);
  rep.LV_closed_form = lv_closed_form(y, model);
  if (!std::isnan(opt.radius)) {
    rep.in_compact_K = mean_abs(y) <= opt.radius;
    rep.C1_estimate = rep.in_compact_K ? 0.0 : -rep.LV_closed_form;
  }
  if (opt.mc_replicas > 0) {
    // LV = lambda E[V(after) - V(before) | one jump]; each replica draws one jump from the engine.
    SystemState s0;
    s0.y = y;
    double lambda = 0.0;
    for (double v : y) lambda += model.rate(v);
    SimConfig cfg;
    cfg.horizon = std::numeric_limits<double>::infinity();
    cfg.selection = SelectionPath::Linear;
    std::vector<double> vals(opt.mc_replicas);
    for (std::size_t r = 0; r < opt.mc_replicas; ++r) {
      cfg.seed = derive_seed(opt.seed, r);
      ParticleSystem sys(model, s0, cfg);
      Rng rng(cfg.seed);
      sys.step(rng, cfg.horizon);
      vals[r] = lambda * (V_of(sys.state().y) - rep.V_value);
    }
    rep.LV_monte_carlo = mean(vals);
    rep.LV_monte_carlo_stderr = std_error(vals);
  }
  return rep;
}

double epsilon_A(const Model& model, double A, bool* grid_estimate) {
  if (model.exp_exp() && model.rate.beta() <= model.jump.parameter()) {
    const double beta = model.rate.beta(), gamma = model.jump.parameter();
    if (grid_estimate) *grid_estimate = false;
    return 4.0 * std::exp(-beta * A) / (gamma * gamma);
  }
  if (grid_estimate) *grid_estimate = true;
  double sup = 0.0;
  for (double x : default_a_grid()) sup = std::max(sup, model.rate(A - x) * model.jump.partial_plus_sq(x));
  return sup + model.rate(A) * model.jump.second_moment();
}

VaReport lyapunov_drift_VA(const SystemState& state, const Model& model, double A) {
  if (!(A > 0.0)) throw std::invalid_argument("lyapunov_drift_VA: A must be positive");
  const auto& y = state.y;
  const double n = static_cast<double>(y.size());
  const JumpSpec& jump = model.jump;
  double first = 0.0, second = 0.0, alpha = 0.0, excess = 0.0;
  for (double v : y) {
    const double c = v - A;
    const double w = model.rate(v);
    alpha += w;
    const double down = expect_pos_sq(jump, c, -1.0 / n);
    first += w * (expect_pos_sq(jump, c, (n - 1.0) / n) - down);
    const double cp = std::max(c, 0.0);
    second += down - cp * cp;
    excess += cp;
  }
  alpha /= n;
  VaReport rep;
  rep.generator = first / n + alpha * second;
  bool grid = false;
  rep.epsilon_A = epsilon_A(model, A, &grid);
  rep.epsilon_grid_estimate = grid;
  const double sig = jump.mean(), vt = jump.second_moment();
  rep.bound = rep.epsilon_A + 2.0 * model.rate(A) * sig / n * excess + alpha * (3.0 * vt / n - 2.0 * sig / n * excess);
  return rep;
}

OvershootSample overshoot_sample(const JumpSpec& jump, double l, Rng& rng) {
  if (!(l >= 0.0)) throw std::invalid_argument("overshoot_sample: level must be >= 0");
  double s = 0.0;
  while (s <= l) s += jump.sample(rng);
  return {l, s - l, jump.kind()};
}

double hat_m(const SystemState& state) {
  if (state.y.empty()) return 0.0;
  double s = 0.0;
  for (double v : state.y) s += std::max(v, 0.0);
  return s / static_cast<double>(state.y.size());
}

StationaryResult stationary_sample(const Model& model, std::size_t n, const StationaryConfig& cfg) {
  if (!(cfg.thin_T > 0.0)) throw std::invalid_argument("stationary_sample: thin_T must be positive");
  if (!(cfg.burn_in_T >= 0.0)) throw std::invalid_argument("stationary_sample: burn_in_T must be >= 0");
  if (cfg.num_samples == 0) throw std::invalid_argument("stationary_sample: num_samples must be positive");
  if (!model.rate.is_exponential() && model.rate.knots().front().w == model.rate.knots().back().w)
    throw std::invalid_argument("stationary_sample: constant w has no stationary centered law");
  AssumptionReport rep = check_assumptions(model, default_a_grid());
  if (!rep.a21_holds) throw std::invalid_argument(rep.failure_message());

  SimConfig sc;
  sc.seed = cfg.seed;
  sc.record_events = cfg.record_events;
  for (std::size_t k = 1; k <= cfg.num_samples; ++k) sc.snapshot_times.push_back(cfg.burn_in_T + cfg.thin_T * k);
  sc.horizon = sc.snapshot_times.back();
  StationaryResult out;
  out.run = simulate(model, init_state(n, cfg.init, cfg.seed), sc);
  if (out.run.tainted()) throw std::runtime_error("stationary_sample: run tainted (overflow or event budget)");
  std::vector<double> first, second;
  const std::size_t half = cfg.num_samples / 2;
  for (std::size_t k = 0; k < out.run.snapshots.size(); ++k) {
    const auto& s = out.run.snapshots[k];
    out.samples.emplace_back(s.y);
    auto& dst = k < half ? first : second;
    dst.insert(dst.end(), s.y.begin(), s.y.end());
  }
  if (!first.empty() && !second.empty())
    out.half_w1 = wasserstein1(EmpiricalMeasure(first), EmpiricalMeasure(second));
  return out;
}

VelocityEstimate velocity_estimate(const RunResult& run, double T, const std::vector<EmpiricalMeasure>& stationary,
                                   const Model& model) {
  if (!(T > 0.0)) throw std::invalid_argument("velocity_estimate: T must be positive");
  if (run.events.empty()) throw std::invalid_argument("velocity_estimate: empty event log");
  if (stationary.empty()) throw std::invalid_argument("velocity_estimate: no stationary samples");
  const double n = static_cast<double>(run.initial_raw.size());
  double jumps = 0.0;
  for (const auto& ev : run.events) jumps += ev.jump_size;
  VelocityEstimate v;
  v.path_velocity = jumps / (n * T);
  double m0 = std::accumulate(run.initial_raw.begin(), run.initial_raw.end(), 0.0) / n;
  v.mean_increment_velocity = (run.final_state.m - m0) / T;
  double acc = 0.0;
  for (const auto& s : stationary) acc += s.integrate([&](double y) { return model.rate(y); });
  v.formula_velocity = model.jump.mean() * acc / static_cast<double>(stationary.size());
  return v;
}

ChaosEstimate chaos_estimate(const std::vector<std::vector<double>>& states, const LipschitzTestFn& f,
                             ChaosMode mode) {
  const std::size_t R = states.size();
  if (R < 100) throw std::invalid_argument("chaos_estimate: need at least 100 replicas");
  // Per-replica sufficient statistics: a = f-mean, b = pair-product mean, q = mean of f^2.
  std::vector<double> a(R), b(R), q(R);
  for (std::size_t r = 0; r < R; ++r) {
    const auto& y = states[r];
    if (y.size() < 2) throw std::invalid_argument("chaos_estimate: states need n >= 2");
    if (mode == ChaosMode::FirstTwo) {
      double f1 = f(y[0]), f2 = f(y[1]);
      a[r] = 0.5 * (f1 + f2);
      b[r] = f1 * f2;
      q[r] = 0.5 * (f1 * f1 + f2 * f2);
    } else {
      double s = 0.0, s2 = 0.0;
      for (double v : y) {
        double fv = f(v);
        s += fv;
        s2 += fv * fv;
      }
      const double n = static_cast<double>(y.size());
      a[r] = s / n;
      b[r] = (s * s - s2) / (n * (n - 1.0));
      q[r] = s2 / n;
    }
  }
  const double SA = std::accumulate(a.begin(), a.end(), 0.0), SB = std::accumulate(b.begin(), b.end(), 0.0),
               SQ = std::accumulate(q.begin(), q.end(), 0.0);
  auto estimate = [&](std::size_t skip) {
    double sa = SA, sb = SB, sq = SQ, cnt = static_cast<double>(R);
    if (skip < R) {
      sa -= a[skip];
      sb -= b[skip];
      sq -= q[skip];
      cnt -= 1.0;
    }
    double ma = sa / cnt;
    return std::pair<double, double>{sb / cnt - ma * ma, sq / cnt - ma * ma};
  };
  auto full = estimate(R);
  std::vector<double> loo(R);
  for (std::size_t r = 0; r < R; ++r) loo[r] = estimate(r).first;
  const double lbar = std::accumulate(loo.begin(), loo.end(), 0.0) / static_cast<double>(R);
  double ss = 0.0;
  for (double v : loo) ss += (v - lbar) * (v - lbar);
  ChaosEstimate out;
  out.covariance = full.first;
  out.standard_error = std::sqrt(ss * static_cast<double>(R - 1) / static_cast<double>(R));
  out.variance = full.second;
  return out;
}

}  // namespace flockline
