#include "rangerisk/special.hpp"

#include <cmath>
#include <limits>

#include "rangerisk/errors.hpp"
#include "rangerisk/quadrature.hpp"

namespace rangerisk::special {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kInvSqrt2Pi = 0.3989422804014326779399461;
constexpr double kSqrt2 = 1.4142135623730950488016887;

// Rational approximation for the normal quantile (Acklam), polished below.
double norm_quantile_approx(double p) {
    static const double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                -2.759285104469687e+02, 1.383577518672690e+02,
                                -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                -1.556989798598866e+02, 6.680131188771972e+01,
                                -1.328068155288572e+01};
    static const double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                -2.400758277161838e+00, -2.549732539343734e+00,
                                4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                                2.445134137142996e+00, 3.754408661907416e+00};
    const double p_low = 0.02425;

    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    if (p <= 1.0 - p_low) {
        const double q = p - 0.5;
        const double r = q * q;
        return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
               (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    }
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
}

// Continued fraction for the incomplete beta (modified Lentz).
double betacf(double a, double b, double x) {
    constexpr double kFpMin = 1e-300;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kFpMin) d = kFpMin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 500; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::abs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::abs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) <= 3e-16) break;
    }
    return h;
}

double student_t_pdf(double x, double nu) {
    const double lognorm = std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) -
                           0.5 * std::log(nu * M_PI);
    return std::exp(lognorm - 0.5 * (nu + 1.0) * std::log1p(x * x / nu));
}

}  // namespace

double norm_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

double norm_cdf(double x) { return 0.5 * std::erfc(-x / kSqrt2); }

double norm_quantile(double p) {
    if (p < 0.0 || p > 1.0) throw DomainError("probability-range", "probability outside [0,1]");
    if (p == 0.0) return -kInf;
    if (p == 1.0) return kInf;
    double x = norm_quantile_approx(p);
    // One Halley step against the erfc-based CDF reaches ~1e-15.
    for (int i = 0; i < 2; ++i) {
        const double e = norm_cdf(x) - p;
        const double u = e / norm_pdf(x);
        x -= u / (1.0 + 0.5 * x * u);
    }
    return x;
}

double lbeta(double a, double b) {
    return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

double inc_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double lbt = a * std::log(x) + b * std::log1p(-x) - lbeta(a, b);
    const double bt = std::exp(lbt);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return bt * betacf(a, b, x) / a;
    }
    return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

double student_t_cdf(double x, double nu) {
    if (std::isinf(x)) return x > 0 ? 1.0 : 0.0;
    const double z = nu / (nu + x * x);
    const double half_tail = 0.5 * inc_beta(0.5 * nu, 0.5, z);
    return x > 0 ? 1.0 - half_tail : half_tail;
}

double student_t_quantile(double p, double nu) {
    if (p < 0.0 || p > 1.0) throw DomainError("probability-range", "probability outside [0,1]");
    if (p == 0.0) return -kInf;
    if (p == 1.0) return kInf;
    if (p == 0.5) return 0.0;
    if (p < 0.5) return -student_t_quantile(1.0 - p, nu);

    // Bracket above the median, then safeguarded Newton.
    double lo = 0.0, hi = 1.0;
    while (student_t_cdf(hi, nu) < p) {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e300) return kInf;
    }
    double x = norm_quantile(p);
    if (x < lo || x > hi) x = 0.5 * (lo + hi);
    for (int it = 0; it < 100; ++it) {
        const double err = student_t_cdf(x, nu) - p;
        if (err > 0)
            hi = x;
        else
            lo = x;
        const double step = err / student_t_pdf(x, nu);
        double next = x - step;
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - x) <= 1e-14 * (1.0 + std::abs(x)) && std::abs(err) < 1e-13) {
            return next;
        }
        x = next;
    }
    return x;
}

double hurwitz_lerch_psi(double kappa, double z, double s, double a) {
    if (!(kappa > 0.0)) throw DomainError("hurwitz-lerch-domain", "kappa must be positive");
    if (!(a > 0.0)) throw DomainError("hurwitz-lerch-domain", "a must be positive");
    if (std::abs(z) > 1.0) throw DomainError("hurwitz-lerch-domain", "|z| must be <= 1");
    if (z == 1.0 ? !(s > 1.0) : !(s > 0.0)) {
        throw DomainError("hurwitz-lerch-domain", "s outside convergence region");
    }

    if (std::abs(z) <= 0.5) {
        // term_n = Gamma(kappa+n)/n! z^n/(n+a)^s, ratio geometric in z.
        double term = std::pow(a, -s);
        double sum = term;
        double gamma_ratio = 1.0;  // Gamma(kappa+n)/(Gamma(kappa) n!)
        double zn = 1.0;
        for (int n = 1; n < 300; ++n) {
            gamma_ratio *= (kappa + n - 1.0) / n;
            zn *= z;
            term = gamma_ratio * zn * std::pow(n + a, -s);
            sum += term;
            if (std::abs(term) < 1e-16 * std::abs(sum)) break;
        }
        return sum;
    }

    // Integral representation: (1/Gamma(s)) int_0^inf t^{s-1} e^{-at} (1-z e^{-t})^{-kappa} dt.
    auto h = [&](double t) {
        return std::exp(-a * t) * std::pow(1.0 - z * std::exp(-t), -kappa);
    };
    // Head [0,1]: substitute t = u^{1/s} to absorb the t^{s-1} endpoint power.
    auto head = [&](double u) {
        const double t = std::pow(u, 1.0 / s);
        return h(t) / s;
    };
    // Tail [1,inf): exponential decay, mapped to (0,1].
    auto tail = [&](double y) {
        const double om = 1.0 - y;
        const double t = 1.0 + y / om;
        return std::pow(t, s - 1.0) * h(t) / (om * om);
    };
    const double i_head = quad::integrate_or_throw(head, 0.0, 1.0, 1e-15, 1e-12);
    const double i_tail = quad::integrate_or_throw(tail, 0.0, 1.0, 1e-15, 1e-12);
    return (i_head + i_tail) / std::tgamma(s);
}

}  // namespace rangerisk::special
