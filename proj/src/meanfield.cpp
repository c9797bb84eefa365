#include "flockline/meanfield.hpp"

#include <algorithm>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <iterator>
#include <limits>
#include <stdexcept>

#include "flockline/special.hpp"

namespace flockline {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

using GK = boost::math::quadrature::gauss_kronrod<double, 61>;

double gk(const std::function<double(double)>& f, double a, double b, double tol) {
  if (!(b > a)) return 0.0;
  return GK::integrate(f, a, b, 20, tol);
}

// log((e^x - 1)/x) for x >= 0.
double log_expm1_ratio(double x) {
  if (x < 1e-8) return 0.5 * x;
  if (x > 30.0) return x - std::log(x) + std::log1p(-std::exp(-x));
  return std::log(std::expm1(x) / x);
}

}  // namespace

GumbelFixedPoint::GumbelFixedPoint(double beta, double gamma) : beta_(beta), gamma_(gamma) {
  if (!(beta > 0.0) || !(gamma > 0.0)) throw std::invalid_argument("nu_star: beta and gamma must be positive");
  if (beta > gamma) throw std::invalid_argument("nu_star: beta > gamma has no fixed point");
  shape_ = gamma / beta;
  psi_ = digamma(shape_);
  s_ = psi_ / beta;
  logK_ = std::log(gamma) - std::lgamma(1.0 + shape_);
}

GumbelFixedPoint nu_star(double beta, double gamma) { return GumbelFixedPoint(beta, gamma); }

double GumbelFixedPoint::log_density(double x) const {
  double u = -beta_ * (x - s_);
  if (u > 700.0) return -kInf;
  return logK_ - gamma_ * (x - s_) - std::exp(u);
}

double GumbelFixedPoint::density(double x) const { return std::exp(log_density(x)); }

double GumbelFixedPoint::cdf(double x) const {
  double u = -beta_ * (x - s_);
  if (u > 700.0) return 0.0;
  return gamma_q(shape_, std::exp(u));
}

double GumbelFixedPoint::survival(double x) const {
  double u = -beta_ * (x - s_);
  if (u > 700.0) return 1.0;
  return gamma_p(shape_, std::exp(u));
}

double GumbelFixedPoint::mode() const { return s_ - std::log(shape_) / beta_; }

double GumbelFixedPoint::w_integral() const { return shape_ * std::exp(-psi_); }

double GumbelFixedPoint::speed() const { return std::exp(-psi_) / beta_; }

double GumbelFixedPoint::quantile(double p) const {
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return -kInf;
    if (p == 1.0) return kInf;
    throw std::domain_error("quantile: p must lie in [0, 1]");
  }
  if (shape_ == 1.0) return s_ - std::log(-std::log(p)) / beta_;

  // Newton on the log of the tail probability on the better-resolved side.
  const bool upper = p > 0.5;
  const double log_target = upper ? std::log1p(-p) : std::log(p);
  auto tail = [&](double x) { return upper ? survival(x) : cdf(x); };
  auto resid = [&](double x) {
    double q = tail(x);
    double r = q > 0.0 ? std::log(q) - log_target : -kInf;
    return upper ? -r : r;
  };

  double lo = mode() - 1.0, hi = mode() + 1.0;
  for (double step = 1.0; resid(lo) > 0.0; step *= 2.0) lo -= step;
  for (double step = 1.0; resid(hi) < 0.0; step *= 2.0) hi += step;

  double x = 0.5 * (lo + hi);
  for (int it = 0; it < 300; ++it) {
    double r = resid(x);
    if (r == 0.0) return x;
    if (r < 0.0) lo = x; else hi = x;
    double q = tail(x);
    double slope = q > 0.0 ? density(x) / q : 0.0;
    double nx = slope > 0.0 && std::isfinite(r) ? x - r / slope : 0.5 * (lo + hi);
    if (!(nx > lo && nx < hi)) nx = 0.5 * (lo + hi);
    if (std::fabs(r) <= 1e-15 || hi - lo <= 1e-15 * (1.0 + std::fabs(x))) return nx;
    x = nx;
  }
  return x;
}

std::vector<double> GumbelFixedPoint::sample(std::size_t n, Rng& rng) const {
  std::vector<double> out(n);
  for (auto& v : out) v = sample(rng);
  return out;
}

double GumbelFixedPoint::integrate(const std::function<double(double)>& f, double tol) const {
  auto g = [&](double x) {
    double ld = log_density(x);
    if (ld == -kInf) return 0.0;
    return f(x) * std::exp(ld);
  };
  const double m = mode();
  const double L = s_ - std::log(745.0) / beta_;
  const double R = s_ + (760.0 + logK_) / gamma_;
  const double cuts[] = {L, m - 4.0 / beta_, m - 1.0 / beta_, m, m + 2.0 / gamma_, m + 8.0 / gamma_, m + 40.0 / gamma_, R};
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < std::size(cuts); ++i) total += gk(g, std::max(cuts[i], L), cuts[i + 1], tol);
  return total;
}

double traveling_wave_eval(const TravelingWave& tw, double t, double x) { return tw.density(t, x); }

ThetaPath::ThetaPath(std::vector<double> starts, std::vector<double> values)
    : starts_(std::move(starts)), values_(std::move(values)) {
  if (starts_.empty() || starts_.size() != values_.size()) throw std::invalid_argument("theta path: mismatched segments");
  if (starts_[0] != 0.0) throw std::invalid_argument("theta path must start at t = 0");
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!(values_[i] >= 0.0) || !std::isfinite(values_[i])) throw std::invalid_argument("theta path: negative theta sample");
    if (i > 0 && !(starts_[i] > starts_[i - 1])) throw std::invalid_argument("theta path: breakpoints must increase");
  }
  cum_.assign(starts_.size(), 0.0);
  for (std::size_t i = 1; i < starts_.size(); ++i) cum_[i] = cum_[i - 1] + values_[i - 1] * (starts_[i] - starts_[i - 1]);
}

std::size_t ThetaPath::segment(double t) const {
  auto it = std::upper_bound(starts_.begin(), starts_.end(), t);
  return it == starts_.begin() ? 0 : static_cast<std::size_t>(it - starts_.begin()) - 1;
}

double ThetaPath::theta(double t) const { return values_[segment(t)]; }

double ThetaPath::cumulative(double t) const {
  if (t <= 0.0) return 0.0;
  std::size_t k = segment(t);
  return cum_[k] + values_[k] * (t - starts_[k]);
}

double ThetaPath::log1p_exp_integral(double t, double c) const {
  if (t <= 0.0) return 0.0;
  double logI = -kInf;
  for (std::size_t k = 0; k < starts_.size() && starts_[k] < t; ++k) {
    double end = k + 1 < starts_.size() ? std::min(starts_[k + 1], t) : t;
    double tau = end - starts_[k];
    if (tau <= 0.0) continue;
    double piece = c * cum_[k] + std::log(tau) + log_expm1_ratio(c * values_[k] * tau);
    logI = log_add_exp(logI, piece);
  }
  return log1p_exp(logI);
}

double ThetaPath::distance_to_breakpoint(double t) const {
  double d = kInf;
  for (std::size_t k = 1; k < starts_.size(); ++k) d = std::min(d, std::fabs(t - starts_[k]));
  return d;
}

AuxSolution::AuxSolution(ThetaPath theta, double beta, double gamma)
    : theta_(std::move(theta)), beta_(beta), gamma_(gamma), nu_(beta, gamma) {}

AuxSolution aux_solution(const ThetaPath& theta, double beta, double gamma) { return AuxSolution(theta, beta, gamma); }

double AuxSolution::alpha(double t) const {
  return theta_.cumulative(t) / gamma_ - theta_.log1p_exp_integral(t, beta_ / gamma_) / beta_;
}

double AuxSolution::stationary_alpha() const {
  double th = theta_.values().back();
  if (!(th > 0.0)) return -kInf;
  return std::log(beta_ * th / gamma_) / beta_;
}

double AuxSolution::inner_integral(double t, double x) const {
  const double a = alpha(t);
  const double vlo = -std::log(800.0) / beta_;
  const double vhi = x + a;
  if (vhi <= vlo) return 0.0;
  auto g = [&](double v) { return std::exp(-beta_ * v - std::exp(-beta_ * v)); };
  double I = 0.0;
  const double peak = 0.0;
  if (vhi <= peak) {
    I = gk(g, vlo, vhi, 1e-14);
  } else {
    I = gk(g, vlo, peak, 1e-14) + gk(g, peak, vhi, 1e-14);
  }
  double logK = std::log(nu_.normalizer());
  return std::exp(-gamma_ * x + logK + (beta_ - gamma_) * a + std::log(I));
}

PdeResidual pde_residual(const AuxSolution& aux, double t, double x, double h) {
  if (!(h > 0.0) || !(t > h)) throw std::invalid_argument("pde_residual requires t > h > 0");
  PdeResidual out{0.0, false};
  double dt;
  const ThetaPath& th = aux.theta();
  // Breakpoints inside the stencil force a one-sided second-order difference.
  bool below = false, above = false;
  for (std::size_t k = 1; k < th.starts().size(); ++k) {
    double b = th.starts()[k];
    if (b > t - h && b <= t) below = true;
    if (b > t && b < t + 2.0 * h) above = true;
  }
  if (!below && !above) {
    dt = (aux.cdf(t + h, x) - aux.cdf(t - h, x)) / (2.0 * h);
  } else if (below && !above) {
    out.near_breakpoint = true;
    dt = (-3.0 * aux.cdf(t, x) + 4.0 * aux.cdf(t + h, x) - aux.cdf(t + 2.0 * h, x)) / (2.0 * h);
  } else {
    out.near_breakpoint = true;
    dt = (3.0 * aux.cdf(t, x) - 4.0 * aux.cdf(t - h, x) + aux.cdf(t - 2.0 * h, x)) / (2.0 * h);
  }
  double dx = (aux.cdf(t, x + h) - aux.cdf(t, x - h)) / (2.0 * h);
  out.value = dt + aux.inner_integral(t, x) - th.theta(t) / aux.gamma() * dx;
  return out;
}

TaggedPath tagged_particle(const std::function<double(double)>& m_path, double y0, const Model& model, double T,
                           Rng& rng, const TaggedOptions& opt) {
  TaggedPath path;
  double t = 0.0, x = y0;
  if (opt.record_path) path.positions.push_back(x);
  double delta = T;
  auto rate = [&](double at, double pos) {
    RateEval e = model.rate.eval(pos - m_path(at));
    if (e.overflow) path.overflow = true;
    return e.value;
  };
  while (t < T && path.candidates < opt.candidate_budget) {
    delta = std::min(std::max(delta, 1e-9), T);
    double e = std::min(T, t + delta);
    double cur = rate(t, x);
    double bound = rate(e, x);
    while (bound > 2.0 * cur && e - t > 1e-12 * (1.0 + t)) {
      delta *= 0.5;
      e = std::min(T, t + delta);
      bound = rate(e, x);
    }
    ++path.candidates;
    double tau = t + rng.exponential(bound);
    if (tau >= e) {
      t = e;
      delta *= 2.0;
      continue;
    }
    double acc = rate(tau, x) / bound;
    if (rng.uniform() < acc) {
      x += model.jump.sample(rng);
      if (opt.record_path) {
        path.jump_times.push_back(tau);
        path.positions.push_back(x);
      }
    }
    t = tau;
  }
  path.final_position = x;
  return path;
}

}  // namespace flockline
