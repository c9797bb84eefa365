#include "flockline/special.hpp"

#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>

namespace flockline {

double digamma(double a) {
  if (!(a > 0.0) || !std::isfinite(a)) throw std::domain_error("digamma requires a > 0");
  double acc = 0.0;
  while (a < 8.0) {
    acc -= 1.0 / a;
    a += 1.0;
  }
  const double r = 1.0 / (a * a);
  // Bernoulli tail: B_{2k} / (2k a^{2k})
  double series = r * (-1.0 / 12.0 +
                  r * (1.0 / 120.0 +
                  r * (-1.0 / 252.0 +
                  r * (1.0 / 240.0 +
                  r * (-1.0 / 132.0 +
                  r * (691.0 / 32760.0 +
                  r * (-1.0 / 12.0)))))));
  return acc + std::log(a) - 0.5 / a + series;
}

double gamma_q(double a, double x) {
  if (x <= 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  return boost::math::gamma_q(a, x);
}

double gamma_p(double a, double x) {
  if (x <= 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  return boost::math::gamma_p(a, x);
}

double log1p_exp(double x) {
  if (x > 36.0) return x + std::exp(-x);
  return std::log1p(std::exp(x));
}

double log_add_exp(double a, double b) {
  if (a < b) std::swap(a, b);
  if (b == -std::numeric_limits<double>::infinity()) return a;
  return a + std::log1p(std::exp(b - a));
}

}  // namespace flockline
