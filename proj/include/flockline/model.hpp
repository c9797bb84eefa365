#pragma once

#include <string>
#include <utility>
#include <vector>

#include "flockline/random.hpp"

namespace flockline {

// Exponent cap (natural-log units) applied to exp(-beta*x) rate evaluations.
inline constexpr double kDefaultExpCap = 700.0;

struct RateEval {
  double value;
  bool overflow;
};

// Non-increasing positive jump-rate function w.
class RateSpec {
 public:
  struct Knot {
    double x;
    double w;
  };

  static RateSpec exponential(double beta);
  // Linear interpolation between knots, constant extrapolation outside.
  static RateSpec tabulated(std::vector<Knot> knots);
  static RateSpec constant(double c) { return tabulated({{0.0, c}}); }

  bool is_exponential() const { return exponential_; }
  double beta() const { return beta_; }
  const std::vector<Knot>& knots() const { return knots_; }

  RateEval eval(double x, double cap = kDefaultExpCap) const;
  double operator()(double x) const { return eval(x).value; }

  // L(x) with |w(u) - w(v)| <= L(x) |u - v| for u, v >= x.
  double lipschitz_bound(double x) const;

  std::string describe() const;

 private:
  bool exponential_ = true;
  double beta_ = 1.0;
  std::vector<Knot> knots_;
};

enum class JumpKind { Exponential, Deterministic, Uniform };

// Jump-size law theta on (0, inf).
class JumpSpec {
 public:
  static JumpSpec exponential(double gamma);
  static JumpSpec deterministic(double z);
  static JumpSpec uniform(double b);  // Uniform(0, b)

  JumpKind kind() const { return kind_; }
  // gamma, z or b depending on the kind.
  double parameter() const { return param_; }

  double mean() const { return moments_[0]; }
  double second_moment() const { return moments_[1]; }
  double third_moment() const { return moments_[2]; }

  // E[(Z - a)^+] and E[((Z - a)^+)^2]; defined for every real a.
  double partial_plus(double a) const;
  double partial_plus_sq(double a) const;
  // E[((b - Z)^+)^2].
  double lower_partial_sq(double b) const;

  double survival(double z) const;
  double cdf(double z) const { return 1.0 - survival(z); }
  // \int_lo^hi P(Z > z) dz, for 0 <= lo <= hi (hi may be +inf).
  double survival_integral(double lo, double hi) const;
  // Right end of the support (inf for exponential).
  double support_max() const;

  double sample(Rng& rng) const;

  std::string describe() const;

 private:
  JumpKind kind_ = JumpKind::Exponential;
  double param_ = 1.0;
  double moments_[3] = {1.0, 2.0, 6.0};
};

struct Model {
  RateSpec rate;
  JumpSpec jump;

  bool exp_exp() const { return rate.is_exponential() && jump.kind() == JumpKind::Exponential; }
};

// E[((c + k Z)^+)^2] for real c and k != 0.
double expect_pos_sq(const JumpSpec& jump, double c, double k);

struct AssumptionReport {
  double c_w = 0.0;
  bool c_w_grid_estimate = false;
  bool a21_holds = false;   // overshoot balance: c_w < inf and E Z^3 < inf
  bool a210_holds = false;  // sup_{x>=0} w(A - x) E[(Z - x)^{+2}] -> 0
  bool a211_holds = false;  // w(inf) = 0 and w(-inf) = inf
  bool a213_holds = false;  // limsup_{x -> -inf} w(x - c) / w(x) < inf
  double a210_limit_estimate = 0.0;
  double a213_ratio_bound = 0.0;
  bool overflow = false;

  std::string failure_message() const;
};

AssumptionReport check_assumptions(const RateSpec& rate, const JumpSpec& jump, const std::vector<double>& a_grid);
inline AssumptionReport check_assumptions(const Model& m, const std::vector<double>& a_grid) {
  return check_assumptions(m.rate, m.jump, a_grid);
}

// Default a-grid used when callers have no preference: 0, 0.05, ..., 40.
std::vector<double> default_a_grid();

}  // namespace flockline
