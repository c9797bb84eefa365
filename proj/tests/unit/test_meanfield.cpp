#include <boost/math/special_functions/digamma.hpp>
#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "flockline/measure.hpp"
#include "flockline/meanfield.hpp"
#include "flockline/special.hpp"
#include "flockline/stats.hpp"

using namespace flockline;

TEST_CASE("digamma reference values") {
  CHECK(std::fabs(digamma(1.0) + 0.5772156649015329) < 1e-14);
  CHECK(std::fabs(digamma(2.0) - 0.42278433509846713) < 1e-14);
  CHECK(std::fabs(digamma(0.5) + kEulerGamma + 2.0 * std::log(2.0)) < 1e-13);
  CHECK_THROWS(digamma(0.0));
  CHECK_THROWS(digamma(-1.0));
}

TEST_CASE("digamma recurrence and independent oracle") {
  for (int k = 1; k <= 100; ++k) {
    double a = 0.1 * k;
    CHECK(std::fabs(digamma(a + 1.0) - digamma(a) - 1.0 / a) < 1e-12);
    CHECK(std::fabs(digamma(a) - boost::math::digamma(a)) < 1e-12 * (1.0 + std::fabs(digamma(a))));
  }
}

TEST_CASE("fixed point normalization, mean and constants") {
  for (auto [b, g] : std::vector<std::pair<double, double>>{{1, 1}, {0.5, 1}, {1, 3}}) {
    GumbelFixedPoint nu(b, g);
    double mass = nu.integrate([](double) { return 1.0; });
    double m = nu.integrate([](double x) { return x; });
    CHECK(std::fabs(mass - 1.0) < 1e-8);
    CHECK(std::fabs(m) < 1e-6);
    double wint = nu.integrate([b = b](double x) { return std::exp(-b * x); });
    CHECK(wint == doctest::Approx(nu.w_integral()).epsilon(1e-9));
  }
  GumbelFixedPoint nu(1.0, 1.0);
  CHECK(nu.location() == doctest::Approx(-kEulerGamma).epsilon(1e-14));
  CHECK(std::fabs(nu.cdf(0.0) - std::exp(-std::exp(-kEulerGamma))) < 1e-14);
  CHECK(std::fabs(nu.cdf(0.0) - 0.5703) < 1e-4);
  CHECK(std::fabs(nu.w_integral() - 1.781072) < 1e-5);
  CHECK(std::fabs(nu.density(0.3) - std::exp(-(0.3 + kEulerGamma) - std::exp(-(0.3 + kEulerGamma)))) < 1e-15);
  CHECK_THROWS(GumbelFixedPoint(2.0, 1.0));
}

TEST_CASE("cdf quantile round trip") {
  for (auto [b, g] : std::vector<std::pair<double, double>>{{1, 1}, {0.5, 1}, {1, 3}}) {
    GumbelFixedPoint nu(b, g);
    for (int k = 0; k <= 200; ++k) {
      double x = -5.0 + 20.0 * k / 200.0;
      double p = nu.cdf(x);
      if (p <= 0.0 || 1.0 - p < 1e-6) continue;
      CHECK(std::fabs(nu.quantile(p) - x) <= 1e-9);
    }
  }
}

TEST_CASE("quantile inverts cdf in probability space") {
  GumbelFixedPoint nu(1.0, 3.0);
  for (double p : {1e-300, 1e-100, 1e-10, 0.3, 0.5, 0.9, 1.0 - 1e-12}) {
    double x = nu.quantile(p);
    if (p < 0.5) CHECK(std::log(nu.cdf(x)) == doctest::Approx(std::log(p)).epsilon(1e-12));
    else CHECK(nu.survival(x) == doctest::Approx(1.0 - p).epsilon(1e-9));
  }
  CHECK(nu.quantile(0.0) == -std::numeric_limits<double>::infinity());
  CHECK_THROWS(nu.quantile(1.5));
}

TEST_CASE("cdf matches quadrature of the density") {
  GumbelFixedPoint nu(0.5, 1.0);
  for (double x : {-2.0, 0.0, 1.5, 4.0}) {
    double q = nu.integrate([x](double y) { return y <= x ? 1.0 : 0.0; });
    CHECK(q == doctest::Approx(nu.cdf(x)).epsilon(1e-6));
  }
}

TEST_CASE("sampler passes KS against the cdf") {
  GumbelFixedPoint nu(0.5, 1.0);
  Rng rng(17);
  auto xs = nu.sample(20000, rng);
  auto r = ks_one_sample(xs, [&](double x) { return nu.cdf(x); });
  CHECK(r.p_value > 0.001);
}

TEST_CASE("traveling wave") {
  TravelingWave tw(GumbelFixedPoint(1.0, 1.0));
  CHECK(traveling_wave_eval(tw, 0.0, 0.7) == doctest::Approx(tw.fixed_point().density(0.7)));
  CHECK(tw.mean(1.0) == doctest::Approx(std::exp(kEulerGamma)).epsilon(1e-14));
  // The density peaks at mbar(1) = e^{gamma_EM} - gamma_EM.
  CHECK(tw.mode(1.0) == doctest::Approx(std::exp(kEulerGamma) - kEulerGamma).epsilon(1e-13));
  CHECK(std::fabs(tw.mode(1.0) - 1.203857) < 1e-6);
  CHECK(tw.offset(1.0) == doctest::Approx(tw.mode(1.0)));
  for (double t : {0.0, 1.0, 10.0}) {
    double m = tw.fixed_point().integrate([&](double x) { return x + tw.mean(t); });
    CHECK(std::fabs(m - tw.mean(t)) < 1e-6);
  }
}

TEST_CASE("theta path integrals") {
  ThetaPath p({0.0, 1.0, 3.0}, {2.0, 0.0, 1.0});
  CHECK(p.cumulative(0.5) == doctest::Approx(1.0));
  CHECK(p.cumulative(2.0) == doctest::Approx(2.0));
  CHECK(p.cumulative(4.0) == doctest::Approx(3.0));
  CHECK(p.theta(1.0) == 0.0);
  // log(1 + int_0^t e^{c Theta}) against brute force trapezoid
  double c = 0.7, t = 4.0;
  const int N = 400000;
  double I = 0.0;
  for (int k = 0; k < N; ++k) {
    double s0 = t * k / N, s1 = t * (k + 1) / N;
    I += 0.5 * (std::exp(c * p.cumulative(s0)) + std::exp(c * p.cumulative(s1))) * (s1 - s0);
  }
  CHECK(p.log1p_exp_integral(t, c) == doctest::Approx(std::log1p(I)).epsilon(1e-9));
  CHECK_THROWS(ThetaPath({0.0}, {-1.0}));
}

TEST_CASE("aux solution closed forms") {
  AuxSolution zero(ThetaPath::constant(0.0), 1.0, 1.0);
  for (double t : {0.0, 0.5, 3.0}) CHECK(zero.alpha(t) == doctest::Approx(-std::log1p(t)).epsilon(1e-14));
  CHECK(zero.cdf(0.0, 0.4) == doctest::Approx(zero.base_cdf(0.4)));
  CHECK(zero.zeta(0.2, 0.0) == 0.2);

  GumbelFixedPoint nu(1.0, 1.0);
  AuxSolution st(ThetaPath::constant(nu.w_integral()), 1.0, 1.0);
  CHECK(st.stationary_alpha() == doctest::Approx(kEulerGamma).epsilon(1e-13));
  CHECK(std::fabs(st.alpha(200.0) - st.stationary_alpha()) < 1e-12);
  for (double x : {-1.0, 0.0, 2.0}) CHECK(std::fabs(st.cdf(200.0, x) - nu.cdf(x)) < 1e-12);
  // sup-CDF change per unit time below 1e-8 for t > 50
  double worst = 0.0;
  for (double x = -4.0; x <= 8.0; x += 0.25) worst = std::max(worst, std::fabs(st.cdf(51.0, x) - st.cdf(50.0, x)));
  CHECK(worst < 1e-8);
  for (double t : {0.3, 2.0, 9.0}) CHECK(st.cdf(t, 0.5) == doctest::Approx(st.base_cdf(st.zeta(0.5, t))));
}

TEST_CASE("aux solution general beta gamma reduces to nu*") {
  GumbelFixedPoint nu(0.5, 1.0);
  AuxSolution st(ThetaPath::constant(nu.w_integral()), 0.5, 1.0);
  CHECK(st.stationary_alpha() == doctest::Approx(-nu.location()).epsilon(1e-12));
  CHECK(std::fabs(st.cdf(400.0, 1.0) - nu.cdf(1.0)) < 1e-10);
}

TEST_CASE("pde residual small and second order") {
  GumbelFixedPoint nu(1.0, 1.0);
  for (double th : {0.0, nu.w_integral()}) {
    AuxSolution aux(ThetaPath::constant(th), 1.0, 1.0);
    double r1 = std::fabs(pde_residual(aux, 1.0, 0.0, 1e-4).value);
    CHECK(r1 < 1e-5);
    double big = std::fabs(pde_residual(aux, 1.0, 0.0, 1e-2).value);
    double half = std::fabs(pde_residual(aux, 1.0, 0.0, 5e-3).value);
    CHECK(big / half > 3.0);
    CHECK(big / half < 5.0);
  }
  AuxSolution aux(ThetaPath({0.0, 1.0}, {0.0, 1.0}), 1.0, 1.0);
  CHECK(pde_residual(aux, 1.0, 0.0, 1e-4).near_breakpoint);
  CHECK_FALSE(pde_residual(aux, 2.0, 0.0, 1e-4).near_breakpoint);
  CHECK(std::fabs(pde_residual(aux, 1.0 + 5e-5, 0.0, 1e-4).value) < 1e-5);
}

TEST_CASE("inner integral matches closed form") {
  AuxSolution aux(ThetaPath::constant(0.7), 1.0, 2.0);
  GumbelFixedPoint nu(1.0, 2.0);
  for (double x : {-1.0, 0.0, 1.0}) {
    double t = 1.3, a = aux.alpha(t);
    // \int_{-inf}^{v} e^{-beta u - e^{-beta u}} du = e^{-e^{-beta v}} / beta
    double expect = std::exp(-2.0 * x) * nu.normalizer() * std::exp((1.0 - 2.0) * a) * std::exp(-std::exp(-(x + a)));
    CHECK(aux.inner_integral(t, x) == doctest::Approx(expect).epsilon(1e-11));
  }
}

TEST_CASE("tagged particle: Poisson count with flat rate") {
  Model m{RateSpec::constant(2.0), JumpSpec::deterministic(1.0)};
  const int R = 10000;
  const double T = 3.0;
  std::vector<double> counts(R);
  Rng rng(21);
  for (int r = 0; r < R; ++r) {
    auto p = tagged_particle([](double) { return 0.0; }, 0.0, m, T, rng);
    counts[r] = p.final_position;
  }
  CHECK(std::fabs(mean(counts) - 2.0 * T) <= 4.0 * std::sqrt(2.0 * T * R) / R);
}

TEST_CASE("tagged particle stays on nu* in the wave frame") {
  GumbelFixedPoint nu(1.0, 1.0);
  Model m{RateSpec::exponential(1.0), JumpSpec::exponential(1.0)};
  const double v = nu.speed();
  const int R = 10000;
  std::vector<double> end(R);
  Rng rng(33);
  for (int r = 0; r < R; ++r) {
    double y0 = nu.sample(rng);
    auto p = tagged_particle([v](double t) { return v * t; }, y0, m, 5.0, rng);
    end[r] = p.final_position - v * 5.0;
  }
  auto ks = ks_one_sample(end, [&](double x) { return nu.cdf(x); });
  CHECK(ks.statistic < 0.02);
}

TEST_CASE("tagged particle acceptance ratio stays in (0,1]") {
  Model m{RateSpec::exponential(2.0), JumpSpec::exponential(2.0)};
  Rng rng(8);
  auto p = tagged_particle([](double t) { return 3.0 * t; }, 0.0, m, 4.0, rng, {true, 100000000ULL});
  CHECK(p.jump_times.size() + 1 == p.positions.size());
  for (std::size_t k = 1; k < p.positions.size(); ++k) CHECK(p.positions[k] > p.positions[k - 1]);
  CHECK(p.candidates >= p.jump_times.size());
  CHECK_FALSE(p.overflow);
}
