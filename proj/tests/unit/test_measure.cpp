#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "flockline/meanfield.hpp"
#include "flockline/measure.hpp"
#include "flockline/stats.hpp"

using namespace flockline;

namespace {

std::vector<double> random_atoms(Rng& rng, int n, double scale = 3.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = scale * (2.0 * rng.uniform() - 1.0);
  return v;
}

// min over all permutations of the mean |a_i - b_pi(i)|
double brute_force_w1(std::vector<double> a, std::vector<double> b) {
  std::sort(b.begin(), b.end());
  double best = 1e300;
  do {
    double c = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) c += std::fabs(a[i] - b[i]);
    best = std::min(best, c / a.size());
  } while (std::next_permutation(b.begin(), b.end()));
  return best;
}

Model exp_exp() { return {RateSpec::exponential(1.0), JumpSpec::exponential(1.0)}; }

}  // namespace

TEST_CASE("W1 examples") {
  EmpiricalMeasure a({0.0, 2.0}), b({1.0, 3.0});
  CHECK(wasserstein1(a, a) == 0.0);
  CHECK(wasserstein1(EmpiricalMeasure({0.0}), EmpiricalMeasure({1.0})) == 1.0);
  CHECK(wasserstein1(a, b) == doctest::Approx(1.0));
  CHECK_THROWS(wasserstein1(EmpiricalMeasure(), a));
  CHECK_THROWS(EmpiricalMeasure({0.0, NAN}));
}

TEST_CASE("W1 with unequal counts integrates the CDF gap") {
  EmpiricalMeasure a({0.0}), b({-1.0, 1.0, 2.0});
  // |F_a - F_b| = 1/3 on [-1,0), 2/3 on [0,1), 1/3 on [1,2)
  CHECK(wasserstein1(a, b) == doctest::Approx(4.0 / 3.0));
  CHECK(wasserstein1(b, a) == doctest::Approx(4.0 / 3.0));
}

TEST_CASE("W1 sorted matching agrees with brute-force assignment") {
  Rng rng(3);
  for (int n = 1; n <= 6; ++n)
    for (int rep = 0; rep < 20; ++rep) {
      auto a = random_atoms(rng, n), b = random_atoms(rng, n);
      CHECK(wasserstein1(EmpiricalMeasure(a), EmpiricalMeasure(b)) == doctest::Approx(brute_force_w1(a, b)).epsilon(1e-12));
    }
}

TEST_CASE("W1 metric properties on random triples") {
  Rng rng(4);
  for (int rep = 0; rep < 200; ++rep) {
    EmpiricalMeasure a(random_atoms(rng, 7)), b(random_atoms(rng, 7)), c(random_atoms(rng, 7));
    double ab = wasserstein1(a, b), ba = wasserstein1(b, a), bc = wasserstein1(b, c), ac = wasserstein1(a, c);
    CHECK(ab == doctest::Approx(ba).epsilon(1e-14));
    CHECK(ab > 0.0);
    CHECK(ac <= ab + bc + 1e-12);
  }
}

TEST_CASE("W1 dual form: random Lip1 functions bound it and the potential attains it") {
  Rng rng(5);
  for (int rep = 0; rep < 10; ++rep) {
    EmpiricalMeasure a(random_atoms(rng, 20)), b(random_atoms(rng, 20));
    const double w = wasserstein1(a, b);
    for (int k = 0; k < 50; ++k) {
      std::vector<double> xs(50), fs(50);
      for (int j = 0; j < 50; ++j) xs[j] = -4.0 + 8.0 * j / 49.0;
      fs[0] = 0.0;
      for (int j = 1; j < 50; ++j) fs[j] = fs[j - 1] + (2.0 * rng.uniform() - 1.0) * (xs[j] - xs[j - 1]);
      auto f = LipschitzTestFn::piecewise_linear(xs, fs);
      CHECK(a.integrate(f) - b.integrate(f) <= w + 1e-12);
    }
    auto pot = optimal_potential(a, b);
    for (std::size_t k = 0; k + 1 < pot.xs().size(); ++k) CHECK(std::fabs(pot.slope(k)) <= 1.0 + 1e-12);
    CHECK(std::fabs(a.integrate(pot) - b.integrate(pot) - w) < 1e-6);
  }
}

TEST_CASE("W1 against a continuous law") {
  GumbelFixedPoint nu(1.0, 1.0);
  auto law = law_of(nu);
  const int n = 1000;
  std::vector<double> q(n);
  for (int i = 0; i < n; ++i) q[i] = nu.quantile((i + 0.5) / n);
  EmpiricalMeasure mu(q);
  CHECK(wasserstein1(mu, law) < 0.01);
  // shift by c moves W1 by exactly c for a translation family
  CHECK(wasserstein1(EmpiricalMeasure({10.0}), law) == doctest::Approx(nu.integrate([](double x) { return std::fabs(10.0 - x); })).epsilon(1e-8));
  auto far = mu.shifted(3.0);
  CHECK(wasserstein1(far, law_of(nu, 3.0)) == doctest::Approx(wasserstein1(mu, law)).epsilon(1e-8));
}

TEST_CASE("sup distance examples") {
  GumbelFixedPoint nu(1.0, 1.0);
  auto F = [&](double x) { return nu.cdf(x); };
  const int n = 50;
  std::vector<double> q(n);
  for (int i = 0; i < n; ++i) q[i] = nu.quantile((i + 0.5) / n);
  CHECK(cdf_sup_distance(EmpiricalMeasure(q), F) == doctest::Approx(0.5 / n).epsilon(1e-9));
  CHECK(cdf_sup_distance(EmpiricalMeasure({nu.quantile(0.5)}), F) == doctest::Approx(0.5).epsilon(1e-12));
  Rng rng(6);
  CHECK(cdf_sup_distance(EmpiricalMeasure(nu.sample(100000, rng)), F) < 0.01);
}

TEST_CASE("tail functional") {
  EmpiricalMeasure a({-3.0, 1.0});
  CHECK(tail_functional(a, 0.0) == 2.0);
  CHECK(tail_functional(a, 2.0) == 1.5);
  CHECK(tail_functional(a, 5.0) == 0.0);
  CHECK_THROWS(tail_functional(a, -1.0));
}

TEST_CASE("test functions are Lip1") {
  CHECK_THROWS(LipschitzTestFn::piecewise_linear({0.0, 1.0}, {0.0, 2.0}));
  CHECK_THROWS(LipschitzTestFn::piecewise_linear({1.0, 0.0}, {0.0, 0.5}));
  CHECK_THROWS(LipschitzTestFn::soft_clip(0.0));
  auto f = LipschitzTestFn::piecewise_linear({0.0, 1.0, 3.0}, {0.0, 1.0, 0.0});
  CHECK(f(-5.0) == 0.0);
  CHECK(f(0.5) == 0.5);
  CHECK(f(2.0) == 0.5);
  CHECK(f(9.0) == 0.0);
  auto s = LipschitzTestFn::soft_clip(5.0);
  CHECK(s(1.0) == doctest::Approx(5.0 * std::tanh(0.2)));
  for (double x = -30; x <= 30; x += 0.1) CHECK(std::fabs(s.derivative(x)) <= 1.0);
  CHECK_THROWS(f.derivative(0.5));
}

TEST_CASE("drift function against Monte Carlo and closed forms") {
  Rng rng(7);
  auto s = LipschitzTestFn::soft_clip(2.0);
  auto pl = LipschitzTestFn::piecewise_linear({-1.0, 0.0, 2.0}, {0.0, 1.0, 0.5});
  for (auto j : {JumpSpec::exponential(1.5), JumpSpec::deterministic(0.7), JumpSpec::uniform(2.0)}) {
    for (const auto& f : {s, pl, LipschitzTestFn::identity()}) {
      DriftFunction g(f, j);
      for (double x : {-3.0, -0.5, 0.0, 1.2, 4.0}) {
        const int N = 200000;
        std::vector<double> v(N);
        for (int k = 0; k < N; ++k) v[k] = f(x + j.sample(rng)) - f(x);
        CHECK(std::fabs(mean(v) - g(x)) <= 4.0 * std_error(v) + 1e-10);
        CHECK(g(x) == doctest::Approx(g.direct(x)).epsilon(1e-10));
      }
    }
  }
}

TEST_CASE("tabulated SoftClip x Exponential drift is accurate") {
  DriftFunction g(LipschitzTestFn::soft_clip(5.0), JumpSpec::exponential(1.0));
  double worst = 0.0;
  for (double x = -60.0; x <= 60.0; x += 0.0137) worst = std::max(worst, std::fabs(g(x) - g.direct(x)));
  CHECK(worst < 1e-10);
}

TEST_CASE("identity residual with deterministic jumps") {
  Model m{RateSpec::exponential(1.0), JumpSpec::deterministic(0.5)};
  SimConfig cfg;
  cfg.horizon = 3.0;
  cfg.seed = 9;
  cfg.record_events = true;
  auto st = init_state(40, InitSpec::nu_star(1.0, 1.0), 2);
  auto run = simulate(m, st, cfg);
  auto r = mv_residual(run, LipschitzTestFn::identity(), m, 3.0);
  double integral = 0.0;
  replay(run, 3.0,
         [&](double dt, const std::vector<double>& x, double mm) {
           double acc = 0.0;
           for (double v : x) acc += std::exp(-(v - mm));
           integral += dt * acc / x.size();
         },
         {});
  CHECK(r.exact);
  CHECK(r.value == doctest::Approx(run.final_state.m - st.m - 0.5 * integral).epsilon(1e-10));
  CHECK(mv_residual(run, LipschitzTestFn::identity(), m, 0.0).value == 0.0);
  CHECK_THROWS(mv_residual(run, LipschitzTestFn::identity(), m, 4.0));
}

TEST_CASE("mv residual uses the log, not the snapshots") {
  SimConfig cfg;
  cfg.horizon = 2.0;
  cfg.seed = 10;
  cfg.record_events = true;
  auto st = init_state(30, InitSpec::nu_star(1.0, 1.0), 1);
  auto a = simulate(exp_exp(), st, cfg);
  for (int k = 0; k <= 200; ++k) cfg.snapshot_times.push_back(k * 0.01);
  auto b = simulate(exp_exp(), st, cfg);
  auto f = LipschitzTestFn::soft_clip(3.0);
  CHECK(mv_residual(a, f, exp_exp(), 2.0).value == mv_residual(b, f, exp_exp(), 2.0).value);
}

TEST_CASE("snapshot fallback reports a discretization bound") {
  SimConfig cfg;
  cfg.horizon = 2.0;
  cfg.seed = 10;
  cfg.record_events = true;
  for (int k = 0; k <= 2000; ++k) cfg.snapshot_times.push_back(k * 0.001);
  auto st = init_state(30, InitSpec::nu_star(1.0, 1.0), 1);
  auto exact = simulate(exp_exp(), st, cfg);
  auto coarse = exact;
  coarse.events.clear();
  auto f = LipschitzTestFn::identity();
  auto re = mv_residual(exact, f, exp_exp(), 2.0);
  auto rc = mv_residual(coarse, f, exp_exp(), 2.0);
  CHECK_FALSE(rc.exact);
  CHECK(std::fabs(rc.value - re.value) <= rc.discretization_error + 1e-12);
}

TEST_CASE("mv residual is a mean-zero martingale") {
  const int R = 100;
  std::vector<double> vals(R);
  auto f = LipschitzTestFn::soft_clip(5.0);
  for (int r = 0; r < R; ++r) {
    SimConfig cfg;
    cfg.horizon = 5.0;
    cfg.seed = derive_seed(42, r);
    cfg.record_events = true;
    auto run = simulate(exp_exp(), init_state(200, InitSpec::nu_star(1.0, 1.0), derive_seed(43, r)), cfg);
    vals[r] = mv_residual(run, f, exp_exp(), 5.0).value;
  }
  CHECK(std::fabs(mean(vals)) <= 4.0 * std_error(vals));
}

TEST_CASE("residual on a run that starts after burn-in") {
  SimConfig burn;
  burn.horizon = 5.0;
  burn.seed = 1;
  auto st = simulate(exp_exp(), init_state(50, InitSpec::point_mass(0.0), 1), burn).final_state;
  SimConfig cfg;
  cfg.horizon = 7.0;
  cfg.seed = 2;
  cfg.record_events = true;
  auto run = simulate(exp_exp(), st, cfg);
  CHECK(run.initial_t == 5.0);
  CHECK(centered_residual(run, LipschitzTestFn::identity(), exp_exp(), 5.0).value == 0.0);
  auto r = centered_residual(run, LipschitzTestFn::identity(), exp_exp(), 7.0);
  // identity: <y, nu> = 0 always and the two drift terms cancel exactly
  CHECK(std::fabs(r.value) < 1e-9);
}

TEST_CASE("nu* is a fixed point of the centered equation") {
  GumbelFixedPoint nu(1.0, 1.0);
  auto f = LipschitzTestFn::soft_clip(5.0);
  DriftFunction g(f, JumpSpec::exponential(1.0));
  double gw = nu.integrate([&](double x) { return g(x) * std::exp(-x); }, 1e-12);
  double w = nu.w_integral();
  double fp = nu.integrate([&](double x) { return f.derivative(x); }, 1e-12);
  CHECK(std::fabs(gw - 1.0 * w * fp) < 1e-6);
}

TEST_CASE("centered residual rejects piecewise-linear f") {
  SimConfig cfg;
  cfg.horizon = 1.0;
  cfg.record_events = true;
  auto run = simulate(exp_exp(), state_from_raw({0.0, 1.0}), cfg);
  CHECK_THROWS(centered_residual(run, LipschitzTestFn::piecewise_linear({0.0, 1.0}, {0.0, 1.0}), exp_exp(), 1.0));
}
