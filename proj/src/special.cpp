#include "hat/special.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace hat {

namespace {

constexpr double kEps = 1e-16;
constexpr double kTiny = 1e-300;
constexpr int kMaxIter = 10000;

// exp(-x + a log x - lgamma(a)), the common prefactor.
double gamma_prefactor(double a, double x) {
    return std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// P(a, x) by its power series; converges quickly for x < a + 1.
double gamma_p_series(double a, double x) {
    double ap = a;
    double term = 1.0 / a;
    double sum = term;
    for (int n = 0; n < kMaxIter; ++n) {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if (std::fabs(term) < std::fabs(sum) * kEps) break;
    }
    return sum * gamma_prefactor(a, x);
}

// Q(a, x) by modified Lentz continued fraction; for x >= a + 1.
double gamma_q_fraction(double a, double x) {
    double b = x + 1.0 - a;
    double c = 1.0 / kTiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < kMaxIter; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = b + an / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) break;
    }
    return gamma_prefactor(a, x) * h;
}

void check_domain(double a, double x) {
    if (!(a > 0.0)) throw std::domain_error("incomplete gamma needs a > 0");
    if (!(x >= 0.0)) throw std::domain_error("incomplete gamma needs x >= 0");
}

}  // namespace

double gamma_p(double a, double x) {
    check_domain(a, x);
    if (x == 0.0) return 0.0;
    if (std::isinf(x)) return 1.0;
    return x < a + 1.0 ? gamma_p_series(a, x) : 1.0 - gamma_q_fraction(a, x);
}

double gamma_q(double a, double x) {
    check_domain(a, x);
    if (x == 0.0) return 1.0;
    if (std::isinf(x)) return 0.0;
    return x < a + 1.0 ? 1.0 - gamma_p_series(a, x) : gamma_q_fraction(a, x);
}

double chi2_cdf(double x, int df) {
    if (df < 1) throw std::domain_error("chi-square needs df >= 1");
    if (!(x >= 0.0)) throw std::domain_error("chi-square CDF needs x >= 0");
    return gamma_p(0.5 * df, 0.5 * x);
}

double chi2_sf(double x, int df) {
    if (df < 1) throw std::domain_error("chi-square needs df >= 1");
    if (!(x >= 0.0)) throw std::domain_error("chi-square CDF needs x >= 0");
    return gamma_q(0.5 * df, 0.5 * x);
}

double normal_cdf(double x) {
    return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

}  // namespace hat
