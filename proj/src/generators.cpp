#include "rangerisk/generators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rangerisk/quadrature.hpp"
#include "rangerisk/special.hpp"

namespace rangerisk {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLog2Pi = 1.8378770664093454835606594728112;

double pow_2pi(double e) { return std::exp(e * kLog2Pi); }

// Hurwitz-Lerch with the s == 0 closure Psi*_kappa(z, 0, a) = (1-z)^{-kappa}
// needed by the logistic weights at n = 1.
double psi_star(double kappa, double z, double s) {
    if (s == 0.0) return std::pow(1.0 - z, -kappa);
    return special::hurwitz_lerch_psi(kappa, z, s, 1.0);
}

void check_family(const GeneratorFamily& f) {
    if (f.tag == Family::StudentT && !(f.dof_m > 0.0)) {
        throw DomainError("moment-condition", "StudentT requires m > 0");
    }
    if (f.tag == Family::PearsonVII && !(f.shape_t > 0.0)) {
        throw DomainError("moment-condition", "PearsonVII requires t > 0");
    }
}

// Laplace iterated generators are P_j(W) e^{-W} with W = sqrt(2u); the
// polynomials follow from int_W^inf w^i e^{-w} dw = i! sum_{r<=i} W^r/r! e^{-W}.
std::vector<double> laplace_level_poly(int level) {
    std::vector<double> p = {1.0};
    for (int step = 0; step < level; ++step) {
        std::vector<double> q(p.size() + 1, 0.0);
        for (size_t i = 0; i < p.size(); ++i) q[i + 1] = p[i];
        std::vector<double> r(q.size(), 0.0);
        std::vector<double> fact(q.size(), 1.0);
        for (size_t i = 1; i < q.size(); ++i) fact[i] = fact[i - 1] * static_cast<double>(i);
        for (size_t i = 0; i < q.size(); ++i) {
            if (q[i] == 0.0) continue;
            for (size_t rr = 0; rr <= i; ++rr) r[rr] += q[i] * fact[i] / fact[rr];
        }
        p = std::move(r);
    }
    return p;
}

double laplace_level(int level, double u) {
    static thread_local std::vector<std::vector<double>> cache;
    if (static_cast<int>(cache.size()) <= level) {
        for (int j = static_cast<int>(cache.size()); j <= level; ++j) {
            cache.push_back(laplace_level_poly(j));
        }
    }
    const double w = std::sqrt(2.0 * u);
    const std::vector<double>& p = cache[level];
    double h = 0.0;
    for (size_t i = p.size(); i-- > 0;) h = h * w + p[i];
    return h * std::exp(-w);
}

double logistic_level(int level, double u) {
    const double x = std::exp(-u);
    switch (level) {
        case 0:
            return x / ((1.0 + x) * (1.0 + x));
        case 1:
            return x / (1.0 + x);
        case 2:
            return std::log1p(x);
        default: {
            // Tail integral of the previous level; rare (ambient n >= 7 marginals).
            auto f = [&](double v) { return logistic_level(level - 1, u + v); };
            return quad::integrate_zero_inf_or_throw(f, 1e-15, 1e-12);
        }
    }
}

}  // namespace

GeneratorFamily GeneratorFamily::student_t(double m) {
    GeneratorFamily f{Family::StudentT, m, 0.0};
    check_family(f);
    return f;
}

GeneratorFamily GeneratorFamily::pearson_vii(double t) {
    GeneratorFamily f{Family::PearsonVII, 0.0, t};
    check_family(f);
    return f;
}

std::string family_name(Family f) {
    switch (f) {
        case Family::Normal: return "normal";
        case Family::StudentT: return "student_t";
        case Family::Logistic: return "logistic";
        case Family::Laplace: return "laplace";
        case Family::PearsonVII: return "pearson_vii";
    }
    return "?";
}

GeneratorFamily family_from_name(const std::string& name, double param) {
    if (name == "normal") return GeneratorFamily::normal();
    if (name == "student_t") return GeneratorFamily::student_t(param);
    if (name == "logistic") return GeneratorFamily::logistic();
    if (name == "laplace") return GeneratorFamily::laplace();
    if (name == "pearson_vii") return GeneratorFamily::pearson_vii(param);
    throw DomainError("unknown-family", "unknown generator family: " + name);
}

double generator_level(const GeneratorFamily& f, int ambient_n, int level, double u) {
    check_family(f);
    if (std::isinf(u)) return 0.0;
    if (u < 0.0) throw DomainError("negative-argument", "generator argument must be >= 0");
    switch (f.tag) {
        case Family::Normal:
            return std::exp(-u);
        case Family::StudentT: {
            const double m = f.dof_m;
            if (!(m + ambient_n - 2 * level > 0.0)) {
                throw DomainError("moment-condition",
                                  "StudentT generator level not integrable: m + n - 2*level <= 0");
            }
            double pref = 1.0;
            for (int i = 1; i <= level; ++i) pref *= m / (m + ambient_n - 2 * i);
            return pref * std::pow(1.0 + 2.0 * u / m, -0.5 * (m + ambient_n - 2 * level));
        }
        case Family::Logistic:
            return logistic_level(level, u);
        case Family::Laplace:
            return laplace_level(level, u);
        case Family::PearsonVII: {
            const double t = f.shape_t;
            if (!(t > level)) {
                throw DomainError("moment-condition", "PearsonVII requires t > level");
            }
            double pref = 1.0;
            for (int i = 1; i <= level; ++i) pref /= 2.0 * (t - i);
            return pref * std::pow(1.0 + 2.0 * u, -(t - level));
        }
    }
    return 0.0;
}

double kernel_eval(const GeneratorKernel& k, double u) {
    if (std::isinf(k.shift)) return 0.0;
    return generator_level(k.family, k.ambient_n, static_cast<int>(k.level), u + k.shift);
}

NormConstant norm_constant(const GeneratorFamily& f, int n, ConstLevel level) {
    check_family(f);
    if (n < 1) throw DomainError("dimension", "n must be >= 1");
    const double nd = n;
    NormConstant out;
    out.method = NormConstant::Method::closed_form;
    switch (f.tag) {
        case Family::Normal:
            out.value = pow_2pi(-0.5 * nd);
            return out;
        case Family::StudentT: {
            const double m = f.dof_m;
            if (level == ConstLevel::c) {
                out.value = std::exp(std::lgamma(0.5 * (m + nd)) - std::lgamma(0.5 * m) -
                                     0.5 * nd * std::log(m * M_PI));
                return out;
            }
            if (level == ConstLevel::c_star) {
                if (!(m > 2.0)) throw DomainError("moment-condition", "c* requires m > 2");
                out.value = (m + nd - 2.0) * std::exp(std::lgamma(0.5 * nd) -
                                                      0.5 * nd * std::log(m * M_PI) - std::log(m) -
                                                      special::lbeta(0.5 * nd, 0.5 * (m - 2.0)));
                return out;
            }
            if (!(m > 4.0)) throw DomainError("moment-condition", "c** requires m > 4");
            out.value = (m + nd - 2.0) * (m + nd - 4.0) *
                        std::exp(std::lgamma(0.5 * nd) - 0.5 * nd * std::log(m * M_PI) -
                                 2.0 * std::log(m) - special::lbeta(0.5 * nd, 0.5 * (m - 4.0)));
            return out;
        }
        case Family::Logistic: {
            if (level == ConstLevel::c) {
                out.value = pow_2pi(-0.5 * nd) / psi_star(2.0, -1.0, 0.5 * nd);
            } else if (level == ConstLevel::c_star) {
                out.value = pow_2pi(-0.5 * nd) / psi_star(1.0, -1.0, 0.5 * nd);
            } else {
                out.value = pow_2pi(-0.5 * nd) / psi_star(1.0, -1.0, 0.5 * nd + 1.0);
            }
            out.abs_error = 1e-12 * out.value;
            return out;
        }
        case Family::Laplace: {
            const double base = std::exp(std::lgamma(0.5 * nd) - 0.5 * nd * std::log(M_PI)) / 2.0;
            if (level == ConstLevel::c) {
                out.value = base / std::tgamma(nd);
            } else if (level == ConstLevel::c_star) {
                out.value = base * nd / std::tgamma(nd + 2.0);
            } else {
                out.value = base * nd * (nd + 2.0) / std::tgamma(nd + 4.0);
            }
            return out;
        }
        case Family::PearsonVII: {
            const double t = f.shape_t;
            if (level == ConstLevel::c) {
                if (!(t > 0.5 * nd)) throw DomainError("moment-condition", "c requires t > n/2");
                out.value = std::exp(std::lgamma(t) - std::lgamma(t - 0.5 * nd) -
                                     0.5 * nd * std::log(M_PI));
                return out;
            }
            if (level == ConstLevel::c_star) {
                if (!(t > 1.0 + 0.5 * nd)) {
                    throw DomainError("moment-condition", "c* requires t > 1 + n/2");
                }
                out.value = 2.0 * (t - 1.0) *
                            std::exp(std::lgamma(0.5 * nd) - 0.5 * nd * std::log(M_PI) -
                                     special::lbeta(0.5 * nd, t - 1.0 - 0.5 * nd));
                return out;
            }
            if (!(t > 2.0 + 0.5 * nd)) {
                throw DomainError("moment-condition", "c** requires t > 2 + n/2");
            }
            out.value = 4.0 * (t - 1.0) * (t - 2.0) *
                        std::exp(std::lgamma(0.5 * nd) - 0.5 * nd * std::log(M_PI) -
                                 special::lbeta(0.5 * nd, t - 2.0 - 0.5 * nd));
            return out;
        }
    }
    throw DomainError("unknown-family", "unhandled family");
}

NormConstant law_norm_constant(const GeneratorKernel& k, int dim) {
    check_family(k.family);
    if (dim < 1) throw DomainError("dimension", "law dimension must be >= 1");
    const int lev = static_cast<int>(k.level);
    const double a = 0.5 * dim;
    NormConstant out;
    out.method = NormConstant::Method::closed_form;

    switch (k.family.tag) {
        case Family::Normal:
            out.value = pow_2pi(-a) * std::exp(k.shift);
            return out;
        case Family::StudentT: {
            const double m = k.family.dof_m;
            const double expo = 0.5 * (m + k.ambient_n - 2 * lev);
            if (!(expo > a)) {
                throw DomainError("moment-condition", "StudentT shifted constant not integrable");
            }
            const double A = 1.0 + 2.0 * k.shift / m;
            double pref = 1.0;
            for (int i = 1; i <= lev; ++i) pref *= m / (m + k.ambient_n - 2 * i);
            // int s^{a-1} kernel = pref * (m A / 2)^a B(a, expo - a) A^{-expo}
            const double log_int = std::log(pref) + a * std::log(0.5 * m * A) +
                                   special::lbeta(a, expo - a) - expo * std::log(A);
            out.value = std::exp(std::lgamma(a) - a * kLog2Pi - log_int);
            return out;
        }
        case Family::PearsonVII: {
            const double t = k.family.shape_t;
            const double expo = t - lev;
            if (!(expo > a)) {
                throw DomainError("moment-condition", "PearsonVII shifted constant not integrable");
            }
            const double A = 1.0 + 2.0 * k.shift;
            double pref = 1.0;
            for (int i = 1; i <= lev; ++i) pref /= 2.0 * (t - i);
            const double log_int = std::log(pref) + a * std::log(0.5 * A) +
                                   special::lbeta(a, expo - a) - expo * std::log(A);
            out.value = std::exp(std::lgamma(a) - a * kLog2Pi - log_int);
            return out;
        }
        case Family::Logistic: {
            const double z = std::exp(-k.shift);
            double integral;  // int s^{a-1} kernel(s) ds / Gamma(a)
            if (lev == 0) {
                integral = z * psi_star(2.0, -z, a);
            } else if (lev == 1) {
                integral = z * psi_star(1.0, -z, a);
            } else if (lev == 2) {
                integral = z * psi_star(1.0, -z, a + 1.0);
            } else {
                integral = -1.0;
            }
            if (integral > 0.0) {
                out.value = pow_2pi(-a) / integral;
                out.abs_error = 1e-12 * out.value;
                return out;
            }
            break;  // levels > 2 fall through to quadrature
        }
        case Family::Laplace:
            break;
    }

    // Generic quadrature of the defining radial integral.
    quad::Result r = radial_integral(k, dim, 1e-11);
    if (!r.converged) {
        throw IntegrationError("normalizing-constant quadrature failed", r.value, r.abs_error);
    }
    out.method = NormConstant::Method::quadrature;
    out.value = std::exp(std::lgamma(a) - a * kLog2Pi) / r.value;
    out.abs_error = out.value * (r.abs_error / r.value);
    return out;
}

quad::Result radial_integral(const GeneratorKernel& k, int dim, double rel_tol) {
    const double a = 0.5 * dim;
    // Head [0,1] with the power substituted away: s = w^2 gives the smooth
    // integrand 2 w^{2a-1} kernel(w^2); the Laplace sqrt cusp becomes linear.
    auto head_f = [&](double w) {
        return 2.0 * std::pow(w, 2.0 * a - 1.0) * kernel_eval(k, w * w);
    };
    quad::Result head = quad::integrate(head_f, 0.0, 1.0, 1e-300, 0.5 * rel_tol);
    auto tail_f = [&](double s) { return std::pow(s, a - 1.0) * kernel_eval(k, s); };
    quad::Result tail = quad::integrate_exp_sinh(tail_f, 1.0, 0.5 * rel_tol);

    quad::Result out;
    out.value = head.value + tail.value;
    out.abs_error = head.abs_error + tail.abs_error;
    out.n_evals = head.n_evals + tail.n_evals;
    out.converged = out.abs_error <= rel_tol * std::abs(out.value);
    return out;
}

NormConstant shifted_constant(const GeneratorFamily& f, int n_reduced,
                              const std::vector<double>& shifts, ConstLevel level) {
    const int n_shifts = static_cast<int>(shifts.size());
    const int want = level == ConstLevel::c_star ? 1 : 2;
    if (level == ConstLevel::c) {
        throw DomainError("bad-level", "shifted_constant expects c_star or c_star_star");
    }
    if (n_shifts != want) {
        throw DomainError("bad-level", "shift count must match the constant level");
    }
    double total = 0.0;
    for (double s : shifts) {
        if (s < 0.0) throw DomainError("negative-argument", "shifts must be >= 0");
        total += s;
    }
    GeneratorKernel k{f, n_reduced + n_shifts, static_cast<Level>(want), total};
    return law_norm_constant(k, n_reduced);
}

double marginal_generator(const GeneratorFamily& f, int n, int k, double u) {
    check_family(f);
    if (k > n || k < 1) throw DomainError("dimension", "need 1 <= k <= n");
    if (k == n) return generator_level(f, n, 0, u);
    const int gap = n - k;

    if (f.tag == Family::Normal) return std::tgamma(0.5 * gap) * std::exp(-u);
    if (f.tag == Family::StudentT) {
        const double m = f.dof_m;
        const double a = 0.5 * gap;
        const double expo = 0.5 * (m + n);
        return std::exp(a * std::log(0.5 * m) + special::lbeta(a, expo - a)) *
               std::pow(1.0 + 2.0 * u / m, -(expo - a));
    }
    if (f.tag == Family::PearsonVII) {
        const double t = f.shape_t;
        const double a = 0.5 * gap;
        if (!(t > a)) throw DomainError("moment-condition", "PearsonVII marginal needs t > (n-k)/2");
        return std::exp(a * std::log(0.5) + special::lbeta(a, t - a)) *
               std::pow(1.0 + 2.0 * u, -(t - a));
    }
    if (gap % 2 == 0) {
        const int j = gap / 2;
        return std::tgamma(static_cast<double>(j)) * generator_level(f, n, j, u);
    }
    auto integrand = [&](double s) {
        return std::pow(s, 0.5 * gap - 1.0) * generator_level(f, n, 0, s + u);
    };
    return quad::integrate_zero_inf_or_throw(integrand, 1e-300, 1e-11);
}

ReducedLaw reduce_once(const GeneratorFamily& f, int n, double eta) {
    check_family(f);
    if (n < 1) throw DomainError("dimension", "n must be >= 1");
    ReducedLaw out;
    out.dim = n - 1;
    if (std::isinf(eta)) {
        out.vanishes = true;
        return out;
    }
    const double half_eta2 = 0.5 * eta * eta;
    const double cn = norm_constant(f, n, ConstLevel::c).value;

    if (out.dim == 0) {
        out.weight = cn * generator_level(f, n, 1, half_eta2);
        return out;
    }

    switch (f.tag) {
        case Family::Normal:
            out.weight = special::norm_pdf(eta);
            out.kernel = {f, out.dim, Level::g, 0.0};
            return out;
        case Family::StudentT: {
            const double m = f.dof_m;
            if (!(m > 1.0)) throw DomainError("moment-condition", "MRVaR needs m > 1");
            const double A = 1.0 + eta * eta / m;
            out.weight = std::exp(std::lgamma(0.5 * (m - 1.0)) - std::lgamma(0.5 * m) +
                                  0.5 * std::log(m / M_PI) - std::log(2.0) -
                                  0.5 * (m - 1.0) * std::log(A));
            out.kernel = {GeneratorFamily::student_t(m - 1.0), out.dim, Level::g, 0.0};
            out.coord_scale = std::sqrt(m * A / (m - 1.0));
            return out;
        }
        case Family::PearsonVII: {
            const double t = f.shape_t;
            const double b = t - 0.5 * (n + 1);
            if (!(b > 0.0)) throw DomainError("moment-condition", "MRVaR needs t > (n+1)/2");
            const double A = 1.0 + eta * eta;
            out.weight = std::exp(std::lgamma(b) - std::lgamma(t - 0.5 * n) -
                                  0.5 * std::log(M_PI) - std::log(2.0) - b * std::log(A));
            out.kernel = {GeneratorFamily::pearson_vii(t - 1.0), out.dim, Level::g, 0.0};
            out.coord_scale = std::sqrt(A);
            return out;
        }
        case Family::Logistic: {
            const double z = std::exp(-half_eta2);
            out.weight = psi_star(1.0, -z, 0.5 * (n - 1)) * special::norm_pdf(eta) /
                         psi_star(2.0, -1.0, 0.5 * n);
            out.kernel = {f, n, Level::Gbar, half_eta2};
            return out;
        }
        case Family::Laplace: {
            out.kernel = {f, n, Level::Gbar, half_eta2};
            out.weight = cn / law_norm_constant(out.kernel, out.dim).value;
            return out;
        }
    }
    throw DomainError("unknown-family", "unhandled family");
}

ReducedLaw reduce_twice(const GeneratorFamily& f, int n, double eta_a, double eta_b) {
    check_family(f);
    if (n < 2) throw DomainError("dimension", "n must be >= 2");
    ReducedLaw out;
    out.dim = n - 2;
    if (std::isinf(eta_a) || std::isinf(eta_b)) {
        out.vanishes = true;
        return out;
    }
    const double s2 = eta_a * eta_a + eta_b * eta_b;
    const double cn = norm_constant(f, n, ConstLevel::c).value;

    if (out.dim == 0) {
        out.weight = cn * generator_level(f, n, 2, 0.5 * s2);
        return out;
    }

    switch (f.tag) {
        case Family::Normal:
            out.weight = special::norm_pdf(eta_a) * special::norm_pdf(eta_b);
            out.kernel = {f, out.dim, Level::g, 0.0};
            return out;
        case Family::StudentT: {
            const double m = f.dof_m;
            if (!(m > 2.0)) throw DomainError("moment-condition", "MRCov needs m > 2");
            const double A = 1.0 + s2 / m;
            out.weight = m / (2.0 * M_PI * (m - 2.0)) * std::pow(A, -0.5 * (m - 2.0));
            out.kernel = {GeneratorFamily::student_t(m - 2.0), out.dim, Level::g, 0.0};
            out.coord_scale = std::sqrt((m + s2) / (m - 2.0));
            return out;
        }
        case Family::PearsonVII: {
            const double t = f.shape_t;
            const double b = t - 1.0 - 0.5 * n;
            if (!(b > 0.0)) throw DomainError("moment-condition", "MRCov needs t > 1 + n/2");
            const double A = 1.0 + s2;
            out.weight = std::exp(std::lgamma(b) - std::lgamma(t - 0.5 * n)) / (4.0 * M_PI) *
                         std::pow(A, -b);
            out.kernel = {GeneratorFamily::pearson_vii(t - 2.0), out.dim, Level::g, 0.0};
            out.coord_scale = std::sqrt(A);
            return out;
        }
        case Family::Logistic: {
            const double z = std::exp(-0.5 * s2);
            out.weight = z * psi_star(1.0, -z, 0.5 * n) /
                         (2.0 * M_PI * psi_star(2.0, -1.0, 0.5 * n));
            out.kernel = {f, n, Level::GGbar, 0.5 * s2};
            return out;
        }
        case Family::Laplace: {
            out.kernel = {f, n, Level::GGbar, 0.5 * s2};
            out.weight = cn / law_norm_constant(out.kernel, out.dim).value;
            return out;
        }
    }
    throw DomainError("unknown-family", "unhandled family");
}

ReducedLaw associated_star_law(const GeneratorFamily& f, int n) {
    check_family(f);
    ReducedLaw out;
    out.dim = n;
    switch (f.tag) {
        case Family::Normal:
            out.weight = 1.0;
            out.kernel = {f, n, Level::g, 0.0};
            return out;
        case Family::StudentT: {
            const double m = f.dof_m;
            if (!(m > 2.0)) throw DomainError("moment-condition", "Y* law needs m > 2");
            out.weight = m / (m - 2.0);
            out.kernel = {GeneratorFamily::student_t(m - 2.0), n, Level::g, 0.0};
            out.coord_scale = std::sqrt(m / (m - 2.0));
            return out;
        }
        case Family::PearsonVII: {
            const double t = f.shape_t;
            if (!(t > 1.0 + 0.5 * n)) {
                throw DomainError("moment-condition", "Y* law needs t > 1 + n/2");
            }
            out.weight = 1.0 / (2.0 * t - n - 2.0);
            out.kernel = {GeneratorFamily::pearson_vii(t - 1.0), n, Level::g, 0.0};
            return out;
        }
        case Family::Logistic:
            out.weight = psi_star(1.0, -1.0, 0.5 * n) / psi_star(2.0, -1.0, 0.5 * n);
            out.kernel = {f, n, Level::Gbar, 0.0};
            return out;
        case Family::Laplace:
            out.weight = n + 1.0;
            out.kernel = {f, n, Level::Gbar, 0.0};
            return out;
    }
    throw DomainError("unknown-family", "unhandled family");
}

}  // namespace rangerisk
