#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "flockline/coupling.hpp"
#include "flockline/engine.hpp"
#include "flockline/meanfield.hpp"
#include "flockline/special.hpp"
#include "flockline/stats.hpp"

using namespace flockline;

namespace {

double p_of_a(double a) { return 4.0 / 3.0 * std::exp(-3.0 * a) - std::exp(-4.0 * a); }

}  // namespace

TEST_CASE("optimal coupling at equal locations always meets") {
  Rng rng(1);
  for (int k = 0; k < 1000; ++k) {
    auto d = optimal_exp_coupling(0.3, 0.3, 2.0, rng);
    CHECK(d.met);
    CHECK(d.e1 == d.e2);
  }
  CHECK_THROWS(optimal_exp_coupling(0.0, 1.0, 0.0, rng));
}

TEST_CASE("optimal coupling meeting probability and marginals") {
  Rng rng(2);
  const int N = 100000;
  const double u = 0.0, v = std::log(2.0);
  int met = 0;
  std::vector<double> p1(N), p2(N);
  for (int k = 0; k < N; ++k) {
    auto d = optimal_exp_coupling(u, v, 1.0, rng);
    met += d.met;
    p1[k] = d.p1;
    p2[k] = d.p2;
    if (d.met) CHECK(d.p1 == d.p2);
  }
  double f = double(met) / N;
  CHECK(f >= 0.494);
  CHECK(f <= 0.506);
  auto F = [](double shift) { return [shift](double x) { return x <= shift ? 0.0 : -std::expm1(-(x - shift)); }; };
  CHECK(ks_one_sample(p1, F(u)).statistic < 0.01);
  CHECK(ks_one_sample(p2, F(v)).statistic < 0.01);
}

TEST_CASE("optimal coupling with the upper point first") {
  Rng rng(3);
  const int N = 50000;
  std::vector<double> p1(N);
  int met = 0;
  for (int k = 0; k < N; ++k) {
    auto d = optimal_exp_coupling(1.0, 0.2, 2.0, rng);
    p1[k] = d.p1;
    met += d.met;
    CHECK(d.e1 > 0.0);
    CHECK(d.e2 > 0.0);
  }
  double p = std::exp(-2.0 * 0.8);
  CHECK(std::fabs(double(met) / N - p) < 4.0 * std::sqrt(p * (1 - p) / N));
  CHECK(ks_one_sample(p1, [](double x) { return x <= 1.0 ? 0.0 : -std::expm1(-2.0 * (x - 1.0)); }).p_value > 0.001);
}

TEST_CASE("coalescence lower bound") {
  for (double a : {0.1, 0.5, 2.0}) CHECK(coalescence_lower_bound(a, 1.0, 1.0) == doctest::Approx(p_of_a(a)).epsilon(1e-14));
  // Monte Carlo oracle at beta != gamma
  Rng rng(30);
  const int N = 400000;
  std::vector<double> v(N);
  for (auto& x : v) {
    double e = rng.exponential(2.0);
    x = std::exp(-(0.5 + 2.0) * (0.3 + std::fabs(e - 0.3)));
  }
  CHECK(std::fabs(mean(v) - coalescence_lower_bound(0.3, 0.5, 2.0)) < 4.0 * std_error(v));
  CHECK_THROWS(coalescence_lower_bound(0.0, 1.0, 1.0));
}

TEST_CASE("coalescing pair starting together") {
  auto r = [] {
    Rng rng(4);
    return run_coalescence(0.7, 0.7, ThetaPath::constant(1.0), 1.0, 1.0, 0.5, 40, 100.0, rng);
  }();
  CHECK(r.coalesced);
  CHECK(r.tau == 0.0);
  CHECK(r.cycles_used == 0);
}

TEST_CASE("per-cycle success rate dominates p(a)") {
  const double theta = std::exp(kEulerGamma), a = 0.5;
  CHECK(p_of_a(a) == doctest::Approx(0.16217).epsilon(1e-4));
  Rng rng(5);
  long cycles = 0, wins = 0;
  while (cycles < 10000) {
    auto r = run_coalescence(-1.0 + 4.0 * rng.uniform(), -1.0 + 4.0 * rng.uniform(), ThetaPath::constant(theta), 1.0, 1.0,
                             a, 1000, 1e9, rng);
    cycles += r.cycles_used;
    wins += r.coalesced;
  }
  double ph = double(wins) / cycles;
  double se = std::sqrt(ph * (1 - ph) / cycles);
  CHECK(ph >= p_of_a(a) - 3.0 * se);
}

TEST_CASE("geometric domination of coalescence") {
  const double theta = std::exp(kEulerGamma);
  Rng rng(6);
  int ok = 0;
  const int P = 500;
  for (int k = 0; k < P; ++k) {
    auto r = run_coalescence(0.0, 3.0 * rng.uniform(), ThetaPath::constant(theta), 1.0, 1.0, 0.5, 40, 1e9, rng);
    ok += r.coalesced;
  }
  CHECK(double(ok) / P >= 1.0 - std::pow(0.84, 40) - 0.02);
}

TEST_CASE("coalescence is absorbing and sigmas increase") {
  Rng rng(7);
  for (int k = 0; k < 200; ++k) {
    CoalescingPair pair(0.0, 2.0, ThetaPath({0.0, 1.0}, {0.5, 2.0}), 1.0, 1.5, 0.5);
    bool seen = false;
    for (int s = 0; s < 500; ++s) {
      if (!pair.step(rng, 50.0)) break;
      const auto& st = pair.state();
      if (seen) CHECK(st.z1 == st.z2);
      seen = seen || st.coalesced;
    }
    const auto& sl = pair.state().sigma_log;
    for (std::size_t j = 1; j < sl.size(); ++j) CHECK(sl[j] >= sl[j - 1]);
    for (std::size_t j = 2; j < sl.size(); j += 2) CHECK(sl[j] > sl[j - 1]);
  }
}

TEST_CASE("coalescing legs have the tagged-particle marginal") {
  const double beta = 1.0, gamma = 1.0, T = 3.0;
  ThetaPath theta({0.0, 1.5}, {2.0, 0.5});
  Model m{RateSpec::exponential(beta), JumpSpec::exponential(gamma)};
  const int R = 1000;
  std::vector<double> c1(R), c2(R), o1(R), o2(R);
  Rng rng(8);
  auto D = [&](double t) { return theta.cumulative(t) / gamma; };
  for (int r = 0; r < R; ++r) {
    CoalescingPair pair(0.0, 1.0, theta, beta, gamma, 0.5);
    pair.run_until(rng, T);
    c1[r] = pair.state().z1;
    c2[r] = pair.state().z2;
    o1[r] = tagged_particle(D, 0.0, m, T, rng).final_position - D(T);
    o2[r] = tagged_particle(D, 1.0, m, T, rng).final_position - D(T);
  }
  CHECK(ks_two_sample(c1, o1).p_value > 0.001);
  CHECK(ks_two_sample(c2, o2).p_value > 0.001);
}

TEST_CASE("exact time change under constant drift") {
  // Single coalesced leg: number of jumps by T has mean \int_0^T E[w(z_s)] ds; check first jump time law.
  const double beta = 1.0, gamma = 1.0, th = 2.0, z0 = 0.5;
  Rng rng(9);
  const int R = 20000;
  std::vector<double> first(R);
  for (int r = 0; r < R; ++r) {
    CoupledPairState s;
    s.z1 = s.z2 = z0;
    s.coalesced = true;
    auto next = coalescing_step(s, ThetaPath::constant(th), beta, gamma, rng);
    first[r] = next.t;
  }
  // survival exp(-e^{-beta z0} (e^{b t} - 1) / b), b = beta th / gamma
  const double b = beta * th / gamma, w0 = std::exp(-beta * z0);
  auto F = [&](double t) { return t <= 0 ? 0.0 : -std::expm1(-w0 * std::expm1(b * t) / b); };
  CHECK(ks_one_sample(first, F).p_value > 0.001);
}

TEST_CASE("paired systems: identical states stay identical") {
  Model m{RateSpec::exponential(1.0), JumpSpec::exponential(1.0)};
  auto x = sample_initial(20, InitSpec::nu_star(1.0, 1.0), 3);
  PairedSystems p(m, x, x);
  Rng rng(10);
  for (int k = 0; k < 5000; ++k) {
    auto ev = p.step(rng, 1e9);
    REQUIRE(ev);
    CHECK(ev->moves1);
    CHECK(ev->moves2);
  }
  CHECK(p.x1() == p.x2());
  CHECK(p.m1() == p.m2());
}

TEST_CASE("paired systems total rate is the sum of maxima") {
  Model m{RateSpec::exponential(1.0), JumpSpec::exponential(1.0)};
  std::vector<double> a{0.0, 1.0, -2.0}, b{0.5, 0.0, 1.0};
  PairedSystems p(m, a, b);
  double ma = (0.0 + 1.0 - 2.0) / 3.0, mb = 0.5;
  double expect = 0.0;
  for (int i = 0; i < 3; ++i) expect += std::max(std::exp(-(a[i] - ma)), std::exp(-(b[i] - mb)));
  CHECK(p.total_rate() == doctest::Approx(expect).epsilon(1e-14));
  CHECK_THROWS(PairedSystems(m, a, {0.0}));
}

TEST_CASE("paired systems preserve each marginal") {
  Model m{RateSpec::exponential(1.0), JumpSpec::exponential(1.0)};
  std::vector<double> a{-1.0, 0.0, 0.5, 2.0}, b{0.0, 0.0, 0.0, 0.0};
  const int R = 1000;
  const double T = 2.0;
  std::vector<double> pa(R), pb(R), sa(R), sb(R), ta(R), tsa(R);
  for (int r = 0; r < R; ++r) {
    PairedSystems p(m, a, b);
    Rng rng(derive_seed(20, r));
    double first1 = -1.0;
    while (auto ev = p.step(rng, T))
      if (ev->moves1 && first1 < 0.0) first1 = ev->time;
    pa[r] = p.m1();
    pb[r] = p.m2();
    ta[r] = first1 < 0.0 ? T : first1;
    SimConfig cfg;
    cfg.horizon = T;
    cfg.seed = derive_seed(21, r);
    cfg.record_events = true;
    auto ra = simulate(m, state_from_raw(a), cfg);
    sa[r] = ra.final_state.m;
    tsa[r] = ra.events.empty() ? T : ra.events.front().time;
    cfg.seed = derive_seed(22, r);
    sb[r] = simulate(m, state_from_raw(b), cfg).final_state.m;
  }
  CHECK(ks_two_sample(pa, sa).p_value > 0.001);
  CHECK(ks_two_sample(pb, sb).p_value > 0.001);
  CHECK(ks_two_sample(ta, tsa).p_value > 0.001);
}
