#pragma once

#include "drnas/rng.hpp"

namespace drnas::special {

// ln Gamma(x) for x > 0. Lanczos approximation (g=7, 9 terms), one
// recurrence step below x = 0.5. Relative accuracy ~1e-13 over
// [1e-3, 1e6]. Throws std::domain_error for x <= 0 or non-finite x.
double log_gamma(double x);

// Digamma psi(x) for x > 0: upward recurrence to x >= 10, then the
// Bernoulli asymptotic series. Throws std::domain_error off-domain.
double digamma(double x);

// Trigamma psi'(x) for x > 0, same recurrence/asymptotic scheme.
// Internal helper for the closed-form KL gradient.
double trigamma(double x);

// Regularized incomplete beta I_x(a, b) via modified Lentz continued
// fraction, switching to 1 - I_{1-x}(b, a) when x > (a+1)/(a+b+2).
// Absolute accuracy ~1e-13. Throws std::domain_error on invalid input,
// std::runtime_error if the fraction fails to converge in 300 iterations.
double reg_inc_beta(double x, double a, double b);

// log of the Beta(a, b) density at x in (0, 1), computed in log space.
double beta_log_pdf(double x, double a, double b);

// dI_x(a, b)/da by central finite difference with step
// h = 1e-4 * max(1, a), holding b fixed. The step shrinks to a/2 when
// a is small enough that a - h would leave the domain.
double d_reg_inc_beta_da(double x, double a, double b);

// One draw from Gamma(shape, 1). Marsaglia-Tsang squeeze for
// shape >= 1; for shape < 1 uses G(a) = G(a+1) * U^(1/a).
double gamma_sample(double shape, Rng& rng);

}  // namespace drnas::special
