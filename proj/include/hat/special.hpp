#pragma once

namespace hat {

/// Regularized lower incomplete gamma P(a, x), a > 0, x >= 0.
double gamma_p(double a, double x);
/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x), computed directly.
double gamma_q(double a, double x);

/// CDF of the chi-square distribution with `df` degrees of freedom.
/// Throws std::domain_error for x < 0 or df < 1.
double chi2_cdf(double x, int df);
/// Upper tail 1 - chi2_cdf(x, df) without cancellation.
double chi2_sf(double x, int df);

/// Standard normal CDF.
double normal_cdf(double x);

}  // namespace hat
