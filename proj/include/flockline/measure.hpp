#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "flockline/engine.hpp"
#include "flockline/model.hpp"

namespace flockline {

class GumbelFixedPoint;

class EmpiricalMeasure {
 public:
  EmpiricalMeasure() = default;
  explicit EmpiricalMeasure(std::vector<double> atoms);

  const std::vector<double>& atoms() const { return atoms_; }
  std::size_t size() const { return atoms_.size(); }
  bool empty() const { return atoms_.empty(); }
  double cdf(double x) const;  // right-continuous
  double mean() const;
  double integrate(const std::function<double(double)>& f) const;
  EmpiricalMeasure shifted(double c) const;

 private:
  std::vector<double> atoms_;
};

// Continuous law given by its CDF and quantile; mass outside [lo, hi] is negligible.
struct ContinuousLaw {
  std::function<double(double)> cdf;
  std::function<double(double)> quantile;
  double lo;
  double hi;
};

ContinuousLaw law_of(const GumbelFixedPoint& nu, double shift = 0.0);

double wasserstein1(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu);
double wasserstein1(const EmpiricalMeasure& mu, const ContinuousLaw& law);
double cdf_sup_distance(const EmpiricalMeasure& mu, const std::function<double(double)>& F);
double tail_functional(const EmpiricalMeasure& mu, double B);

class LipschitzTestFn {
 public:
  enum class Kind { Identity, SoftClip, PiecewiseLinear };

  static LipschitzTestFn identity();
  static LipschitzTestFn soft_clip(double scale);
  // Knots (x_k, f_k), x increasing, |slopes| <= 1; constant outside the knot range.
  static LipschitzTestFn piecewise_linear(std::vector<double> xs, std::vector<double> fs);

  Kind kind() const { return kind_; }
  double scale() const { return scale_; }
  const std::vector<double>& xs() const { return xs_; }
  const std::vector<double>& fs() const { return fs_; }

  double operator()(double x) const;
  bool differentiable() const { return kind_ != Kind::PiecewiseLinear; }
  double derivative(double x) const;
  double slope(std::size_t segment) const;

 private:
  Kind kind_ = Kind::Identity;
  double scale_ = 1.0;
  std::vector<double> xs_, fs_;
};

// Optimal transport potential: a Lip_1 piecewise-linear f with <f, mu - nu> = W1(mu, nu).
LipschitzTestFn optimal_potential(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu);

// g_f(x) = E f(x + Z) - f(x).
class DriftFunction {
 public:
  DriftFunction(const LipschitzTestFn& f, const JumpSpec& jump);
  double operator()(double x) const;
  double direct(double x) const;  // no tabulation

  struct Table;

 private:
  LipschitzTestFn f_;
  JumpSpec jump_;
  std::shared_ptr<const Table> table_;
};

struct ResidualResult {
  double value;
  double discretization_error;  // 0 when computed from the event log
  bool exact;
};

// A_{t,f} for the uncentered empirical measure path; t is absolute time, integrals start at run.initial_t.
ResidualResult mv_residual(const RunResult& run, const LipschitzTestFn& f, const Model& model, double t);
// Residual of the centered equation for nu_n.
ResidualResult centered_residual(const RunResult& run, const LipschitzTestFn& f, const Model& model, double t);

// Walks the event log up to t: on_interval for each constant stretch, on_jump after each jump.
void replay(const RunResult& run, double t,
            const std::function<void(double dt, const std::vector<double>& x, double m)>& on_interval,
            const std::function<void(std::size_t i, double old_x, const std::vector<double>& x, double m)>& on_jump);

}  // namespace flockline
