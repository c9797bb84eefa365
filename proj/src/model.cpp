#include "flockline/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace flockline {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double require_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument(std::string(what) + " must be positive and finite");
  return v;
}

// 1 - u + u^2/2 - e^{-u}, accurate for small u.
double exp_remainder3(double u) {
  if (u < 1.0) {
    double term = u * u * u / 6.0, sum = 0.0;
    for (int k = 3; k < 40 && std::fabs(term) > 1e-18 * std::fabs(sum); ++k) {
      sum += term;
      term *= -u / (k + 1);
    }
    return sum;
  }
  return 1.0 - u + 0.5 * u * u - std::exp(-u);
}

}  // namespace

RateSpec RateSpec::exponential(double beta) {
  RateSpec r;
  r.exponential_ = true;
  r.beta_ = require_positive(beta, "beta");
  return r;
}

RateSpec RateSpec::tabulated(std::vector<Knot> knots) {
  if (knots.empty()) throw std::invalid_argument("tabulated rate needs at least one knot");
  for (std::size_t i = 0; i < knots.size(); ++i) {
    if (!std::isfinite(knots[i].x)) throw std::invalid_argument("tabulated rate knot x must be finite");
    require_positive(knots[i].w, "tabulated rate value");
    if (i > 0) {
      if (!(knots[i].x > knots[i - 1].x)) throw std::invalid_argument("tabulated rate knots must have increasing x");
      if (knots[i].w > knots[i - 1].w) throw std::invalid_argument("tabulated rate must be non-increasing");
    }
  }
  RateSpec r;
  r.exponential_ = false;
  r.beta_ = 0.0;
  r.knots_ = std::move(knots);
  return r;
}

RateEval RateSpec::eval(double x, double cap) const {
  if (exponential_) {
    double e = -beta_ * x;
    if (e > cap) return {std::exp(cap), true};
    return {std::exp(e), false};
  }
  if (x <= knots_.front().x) return {knots_.front().w, false};
  if (x >= knots_.back().x) return {knots_.back().w, false};
  auto it = std::upper_bound(knots_.begin(), knots_.end(), x, [](double v, const Knot& k) { return v < k.x; });
  const Knot& b = *it;
  const Knot& a = *(it - 1);
  double t = (x - a.x) / (b.x - a.x);
  return {a.w + t * (b.w - a.w), false};
}

double RateSpec::lipschitz_bound(double x) const {
  if (exponential_) return beta_ * std::exp(std::min(-beta_ * x, kDefaultExpCap));
  double L = 0.0;
  for (std::size_t i = 1; i < knots_.size(); ++i) {
    if (knots_[i].x <= x) continue;
    L = std::max(L, (knots_[i - 1].w - knots_[i].w) / (knots_[i].x - knots_[i - 1].x));
  }
  return L;
}

std::string RateSpec::describe() const {
  std::ostringstream os;
  if (exponential_) {
    os << "exp(beta=" << beta_ << ")";
  } else {
    os << "tabulated(" << knots_.size() << " knots)";
  }
  return os.str();
}

JumpSpec JumpSpec::exponential(double gamma) {
  JumpSpec j;
  j.kind_ = JumpKind::Exponential;
  j.param_ = require_positive(gamma, "gamma");
  j.moments_[0] = 1.0 / gamma;
  j.moments_[1] = 2.0 / (gamma * gamma);
  j.moments_[2] = 6.0 / (gamma * gamma * gamma);
  return j;
}

JumpSpec JumpSpec::deterministic(double z) {
  JumpSpec j;
  j.kind_ = JumpKind::Deterministic;
  j.param_ = require_positive(z, "z");
  j.moments_[0] = z;
  j.moments_[1] = z * z;
  j.moments_[2] = z * z * z;
  return j;
}

JumpSpec JumpSpec::uniform(double b) {
  JumpSpec j;
  j.kind_ = JumpKind::Uniform;
  j.param_ = require_positive(b, "b");
  j.moments_[0] = b / 2.0;
  j.moments_[1] = b * b / 3.0;
  j.moments_[2] = b * b * b / 4.0;
  return j;
}

double JumpSpec::partial_plus(double a) const {
  if (a <= 0.0) return mean() - a;
  switch (kind_) {
    case JumpKind::Exponential: return std::exp(-param_ * a) / param_;
    case JumpKind::Deterministic: return std::max(param_ - a, 0.0);
    case JumpKind::Uniform: {
      double r = std::max(param_ - a, 0.0);
      return r * r / (2.0 * param_);
    }
  }
  return 0.0;
}

double JumpSpec::partial_plus_sq(double a) const {
  if (a <= 0.0) return second_moment() - 2.0 * a * mean() + a * a;
  switch (kind_) {
    case JumpKind::Exponential: return 2.0 * std::exp(-param_ * a) / (param_ * param_);
    case JumpKind::Deterministic: {
      double r = std::max(param_ - a, 0.0);
      return r * r;
    }
    case JumpKind::Uniform: {
      double r = std::max(param_ - a, 0.0);
      return r * r * r / (3.0 * param_);
    }
  }
  return 0.0;
}

double JumpSpec::lower_partial_sq(double b) const {
  if (b <= 0.0) return 0.0;
  switch (kind_) {
    case JumpKind::Exponential: return 2.0 / (param_ * param_) * exp_remainder3(param_ * b);
    case JumpKind::Deterministic: {
      double r = std::max(b - param_, 0.0);
      return r * r;
    }
    case JumpKind::Uniform: {
      double top = std::min(b, param_);
      double rest = b - top;
      return (b * b * b - rest * rest * rest) / (3.0 * param_);
    }
  }
  return 0.0;
}

double JumpSpec::survival(double z) const {
  if (z < 0.0) return 1.0;
  switch (kind_) {
    case JumpKind::Exponential: return std::exp(-param_ * z);
    case JumpKind::Deterministic: return z < param_ ? 1.0 : 0.0;
    case JumpKind::Uniform: return z < param_ ? 1.0 - z / param_ : 0.0;
  }
  return 0.0;
}

double JumpSpec::survival_integral(double lo, double hi) const {
  if (lo < 0.0 || hi < lo) throw std::invalid_argument("survival_integral needs 0 <= lo <= hi");
  switch (kind_) {
    case JumpKind::Exponential:
      return (std::exp(-param_ * lo) - (std::isinf(hi) ? 0.0 : std::exp(-param_ * hi))) / param_;
    case JumpKind::Deterministic: return std::max(0.0, std::min(hi, param_) - lo);
    case JumpKind::Uniform: {
      double h = std::min(hi, param_);
      if (h <= lo) return 0.0;
      return (h - lo) - (h * h - lo * lo) / (2.0 * param_);
    }
  }
  return 0.0;
}

double JumpSpec::support_max() const {
  return kind_ == JumpKind::Exponential ? kInf : param_;
}

double JumpSpec::sample(Rng& rng) const {
  switch (kind_) {
    case JumpKind::Exponential: return rng.exponential(param_);
    case JumpKind::Deterministic: return param_;
    case JumpKind::Uniform: return param_ * rng.open_uniform();
  }
  return 0.0;
}

std::string JumpSpec::describe() const {
  std::ostringstream os;
  switch (kind_) {
    case JumpKind::Exponential: os << "exponential(gamma=" << param_ << ")"; break;
    case JumpKind::Deterministic: os << "deterministic(z=" << param_ << ")"; break;
    case JumpKind::Uniform: os << "uniform(b=" << param_ << ")"; break;
  }
  return os.str();
}

double expect_pos_sq(const JumpSpec& jump, double c, double k) {
  if (k > 0.0) return k * k * jump.partial_plus_sq(-c / k);
  if (k < 0.0) return k * k * jump.lower_partial_sq(c / -k);
  double p = std::max(c, 0.0);
  return p * p;
}

std::vector<double> default_a_grid() {
  std::vector<double> g;
  for (int i = 0; i <= 800; ++i) g.push_back(0.05 * i);
  return g;
}

AssumptionReport check_assumptions(const RateSpec& rate, const JumpSpec& jump, const std::vector<double>& a_grid) {
  if (a_grid.empty()) throw std::invalid_argument("a_grid must be nonempty");
  for (double a : a_grid)
    if (!(a >= 0.0) || !std::isfinite(a)) throw std::invalid_argument("a_grid entries must be finite and >= 0");

  AssumptionReport r;
  const double A = *std::max_element(a_grid.begin(), a_grid.end());
  const bool exp_jump = jump.kind() == JumpKind::Exponential;

  if (rate.is_exponential() && exp_jump) {
    const double beta = rate.beta(), gamma = jump.parameter();
    if (beta <= gamma) {
      r.c_w = std::max(1.0 / gamma, 2.0 / (gamma * gamma));
      r.a210_holds = true;
      r.a210_limit_estimate = 2.0 * std::exp(-beta * A) / (gamma * gamma);
    } else {
      r.c_w = kInf;
      r.a210_holds = false;
      r.a210_limit_estimate = kInf;
    }
  } else {
    r.c_w_grid_estimate = true;
    double best = 0.0, lim = 0.0;
    for (double a : a_grid) {
      double v = std::max(jump.partial_plus(a), jump.partial_plus_sq(a));
      if (v > 0.0) {
        double w;
        if (rate.is_exponential()) {
          double lg = rate.beta() * a + std::log(v);
          if (lg > kDefaultExpCap) r.overflow = true;
          w = std::exp(std::min(lg, kDefaultExpCap));
        } else {
          w = rate(-a) * v;
        }
        best = std::max(best, w);
      }
      double q = jump.partial_plus_sq(a);
      if (q > 0.0) lim = std::max(lim, rate(A - a) * q);
    }
    r.c_w = best;
    r.a210_limit_estimate = lim;
    // Bounded support with a decaying rate, or a positive rate floor.
    r.a210_holds = rate.is_exponential();
  }
  r.a21_holds = std::isfinite(r.c_w) && std::isfinite(jump.third_moment());

  if (rate.is_exponential()) {
    r.a211_holds = true;
    r.a213_holds = true;
    r.a213_ratio_bound = std::exp(rate.beta());
  } else {
    r.a211_holds = false;
    r.a213_holds = true;
    r.a213_ratio_bound = rate.knots().front().w / rate.knots().back().w;
  }
  return r;
}

std::string AssumptionReport::failure_message() const {
  if (!a21_holds) {
    std::ostringstream os;
    os << "Assumption 2.1 fails: c_w = " << c_w << " (sup over a >= 0 of w(-a) E[(Z-a)^+ v (Z-a)^+2] must be finite)";
    return os.str();
  }
  return "";
}

}  // namespace flockline
