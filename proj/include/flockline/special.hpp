#pragma once

namespace flockline {

inline constexpr double kEulerGamma = 0.57721566490153286061;

// Psi(a) = Gamma'(a)/Gamma(a) for a > 0.
double digamma(double a);

// Regularized upper and lower incomplete gamma functions.
double gamma_q(double a, double x);
double gamma_p(double a, double x);

// log(1 + e^x) without overflow.
double log1p_exp(double x);
// log(e^a + e^b).
double log_add_exp(double a, double b);

}  // namespace flockline
