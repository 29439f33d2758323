#pragma once

#include <cmath>
#include <limits>

#include "circadia/core.hpp"

namespace circadia {

inline constexpr double pi = 3.14159265358979323846;

/// Wrap an angle to [-pi, pi).
inline double wrap_angle(double x) {
    double w = std::atan2(std::sin(x), std::cos(x));
    if (w >= pi) w = -pi;
    return w;
}

namespace math {

inline double normal_pdf(double z) {
    return std::exp(-0.5 * z * z) / std::sqrt(2.0 * pi);
}

/// Standard normal CDF via erfc; accurate deep into the lower tail.
inline double normal_cdf(double z) {
    return 0.5 * std::erfc(-z / std::sqrt(2.0));
}

/// Standard normal quantile. Safeguarded Newton on the erfc-based CDF;
/// converges to full double precision for p in (0, 1).
inline double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw invalid_input("normal_quantile: p must be in (0,1)");
    // Bracket, then Newton with bisection fallback.
    double lo = -40.0, hi = 40.0;
    double x = 0.0;
    for (int it = 0; it < 200; ++it) {
        double f = normal_cdf(x) - p;
        if (f > 0.0) hi = x; else lo = x;
        double d = normal_pdf(x);
        double step = (d > 0.0) ? f / d : 0.0;
        double xn = x - step;
        if (!(xn > lo && xn < hi)) xn = 0.5 * (lo + hi);
        if (std::abs(xn - x) <= 1e-16 * (1.0 + std::abs(xn))) { x = xn; break; }
        x = xn;
    }
    return x;
}

namespace detail {

// Regularized lower incomplete gamma by series expansion (x < a + 1).
inline double gamma_p_series(double a, double x) {
    double ap = a;
    double sum = 1.0 / a;
    double del = sum;
    for (int it = 0; it < 1000; ++it) {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if (std::abs(del) < std::abs(sum) * 1e-16) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Regularized upper incomplete gamma by Lentz continued fraction (x >= a + 1).
inline double gamma_q_cf(double a, double x) {
    const double tiny = std::numeric_limits<double>::min() / 1e-30;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= 1000; ++i) {
        double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < 1e-16) break;
    }
    return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

} // namespace detail

/// Regularized upper incomplete gamma Q(a, x).
inline double gamma_q(double a, double x) {
    if (a <= 0.0 || x < 0.0) throw invalid_input("gamma_q: requires a > 0, x >= 0");
    if (x == 0.0) return 1.0;
    if (x < a + 1.0) return 1.0 - detail::gamma_p_series(a, x);
    return detail::gamma_q_cf(a, x);
}

} // namespace math
} // namespace circadia
