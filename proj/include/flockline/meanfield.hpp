#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "flockline/model.hpp"
#include "flockline/random.hpp"

namespace flockline {

// Gumbel-type fixed point of the centered equation, exponential rate and jumps.
class GumbelFixedPoint {
 public:
  GumbelFixedPoint(double beta, double gamma);

  double beta() const { return beta_; }
  double gamma() const { return gamma_; }
  double location() const { return s_; }  // s = Psi(gamma/beta)/beta
  double normalizer() const { return std::exp(logK_); }

  double density(double x) const;
  double log_density(double x) const;
  double cdf(double x) const;
  double survival(double x) const;
  double quantile(double p) const;
  double sample(Rng& rng) const { return quantile(rng.open_uniform()); }
  std::vector<double> sample(std::size_t n, Rng& rng) const;

  double mean() const { return 0.0; }
  double mode() const;
  // <w, nu*> = (gamma/beta) exp(-Psi(gamma/beta)).
  double w_integral() const;
  // beta^{-1} exp(-Psi(gamma/beta)).
  double speed() const;

  // Integral of f against the density by adaptive quadrature.
  double integrate(const std::function<double(double)>& f, double tol = 1e-12) const;

 private:
  double beta_, gamma_, shape_, psi_, s_, logK_;
};

GumbelFixedPoint nu_star(double beta, double gamma);

class TravelingWave {
 public:
  explicit TravelingWave(GumbelFixedPoint nu) : nu_(nu) {}
  const GumbelFixedPoint& fixed_point() const { return nu_; }
  double mean(double t) const { return nu_.speed() * t; }
  double offset(double t) const { return mean(t) + nu_.location(); }
  double density(double t, double x) const { return nu_.density(x - mean(t)); }
  double cdf(double t, double x) const { return nu_.cdf(x - mean(t)); }
  double mode(double t) const { return nu_.mode() + mean(t); }

 private:
  GumbelFixedPoint nu_;
};

double traveling_wave_eval(const TravelingWave& tw, double t, double x);

// Piecewise-constant nonnegative input theta(s); the last value extends to infinity.
class ThetaPath {
 public:
  ThetaPath() : ThetaPath(std::vector<double>{0.0}, std::vector<double>{0.0}) {}
  ThetaPath(std::vector<double> starts, std::vector<double> values);
  static ThetaPath constant(double theta) { return ThetaPath({0.0}, {theta}); }

  double theta(double t) const;
  double cumulative(double t) const;  // Theta(t)
  // log(1 + \int_0^t exp(c Theta(s)) ds), exact per segment.
  double log1p_exp_integral(double t, double c) const;
  // Distance from t to the nearest breakpoint other than 0.
  double distance_to_breakpoint(double t) const;
  const std::vector<double>& starts() const { return starts_; }
  const std::vector<double>& values() const { return values_; }

 private:
  std::size_t segment(double t) const;
  std::vector<double> starts_, values_, cum_;
};

class AuxSolution {
 public:
  AuxSolution(ThetaPath theta, double beta, double gamma);

  double alpha(double t) const;
  double zeta(double x, double t) const { return x + alpha(t); }
  // Psi_cdf(z) = K \int_{-inf}^z exp(-gamma y - e^{-beta y}) dy.
  double base_cdf(double z) const { return nu_.cdf(z + nu_.location()); }
  double base_density(double z) const { return nu_.density(z + nu_.location()); }
  double cdf(double t, double x) const { return base_cdf(zeta(x, t)); }
  double density(double t, double x) const { return base_density(zeta(x, t)); }
  double stationary_alpha() const;
  // e^{-gamma x} \int_{-inf}^x e^{gamma y} w(y) F*(t, dy) by quadrature.
  double inner_integral(double t, double x) const;

  const ThetaPath& theta() const { return theta_; }
  double beta() const { return beta_; }
  double gamma() const { return gamma_; }

 private:
  ThetaPath theta_;
  double beta_, gamma_;
  GumbelFixedPoint nu_;
};

AuxSolution aux_solution(const ThetaPath& theta, double beta, double gamma);

struct PdeResidual {
  double value;
  bool near_breakpoint;
};

PdeResidual pde_residual(const AuxSolution& aux, double t, double x, double h);

struct TaggedPath {
  std::vector<double> jump_times;
  std::vector<double> positions;  // positions[0] is the start, then after each jump
  double final_position = 0.0;
  std::uint64_t candidates = 0;
  bool overflow = false;
};

struct TaggedOptions {
  bool record_path = false;
  std::uint64_t candidate_budget = 100000000ULL;
};

// Jump process with rate w(Y(t) - m(t)) for a continuous non-decreasing m.
TaggedPath tagged_particle(const std::function<double(double)>& m_path, double y0, const Model& model, double T,
                           Rng& rng, const TaggedOptions& opt = {});

}  // namespace flockline
