#include "rangerisk/marginal1d.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rangerisk/quadrature.hpp"
#include "rangerisk/special.hpp"

namespace rangerisk {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Fritsch-Carlson monotone cubic slopes for strictly increasing data.
std::vector<double> pchip_slopes(const std::vector<double>& x, const std::vector<double>& y) {
    const size_t n = x.size();
    std::vector<double> d(n, 0.0), delta(n - 1, 0.0);
    for (size_t i = 0; i + 1 < n; ++i) delta[i] = (y[i + 1] - y[i]) / (x[i + 1] - x[i]);
    d[0] = delta[0];
    d[n - 1] = delta[n - 2];
    for (size_t i = 1; i + 1 < n; ++i) {
        if (delta[i - 1] * delta[i] <= 0.0) {
            d[i] = 0.0;
        } else {
            const double w1 = 2.0 * (x[i + 1] - x[i]) + (x[i] - x[i - 1]);
            const double w2 = (x[i + 1] - x[i]) + 2.0 * (x[i] - x[i - 1]);
            d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
        }
    }
    return d;
}

struct SplineEval {
    double value;
    double derivative;
};

SplineEval pchip_eval(const std::vector<double>& x, const std::vector<double>& y,
                      const std::vector<double>& d, double xq) {
    const size_t n = x.size();
    size_t i = std::upper_bound(x.begin(), x.end(), xq) - x.begin();
    if (i == 0) i = 1;
    if (i >= n) i = n - 1;
    --i;
    const double h = x[i + 1] - x[i];
    const double t = (xq - x[i]) / h;
    const double t2 = t * t, t3 = t2 * t;
    const double h00 = 2 * t3 - 3 * t2 + 1, h10 = t3 - 2 * t2 + t;
    const double h01 = -2 * t3 + 3 * t2, h11 = t3 - t2;
    SplineEval out;
    out.value = h00 * y[i] + h * h10 * d[i] + h01 * y[i + 1] + h * h11 * d[i + 1];
    const double g00 = (6 * t2 - 6 * t) / h, g10 = 3 * t2 - 4 * t + 1;
    const double g01 = (-6 * t2 + 6 * t) / h, g11 = 3 * t2 - 2 * t;
    out.derivative = g00 * y[i] + g10 * d[i] + g01 * y[i + 1] + g11 * d[i + 1];
    return out;
}

}  // namespace

// Tabulated positive-half density with cumulative integrals on a stretched grid.
struct Marginal1D::Table {
    std::function<double(double)> h;  // unnormalized even density
    double norm = 1.0;                // total integral of h over R
    double y_max = 0.0;
    std::vector<double> ys;      // increasing, ys[0] = 0
    std::vector<double> fs;      // normalized cdf at ys (fs[0] = 0.5)
    std::vector<double> d_yf;    // slopes for y -> F
    std::vector<double> d_fy;    // slopes for F -> y
};

Marginal1D Marginal1D::student(double dof, double scale) {
    Marginal1D m;
    m.kind_ = Kind::StudentClosed;
    m.dof_ = dof;
    m.scale_ = scale;
    return m;
}

Marginal1D Marginal1D::tabulated(std::function<double(double)> h) {
    auto table = std::make_shared<Table>();
    table->h = std::move(h);
    const auto& hf = table->h;

    const double h0 = hf(0.0);
    if (!(h0 > 0.0) || !std::isfinite(h0)) {
        throw DomainError("degenerate-density", "marginal density not positive at 0");
    }
    // Half-height point sets the grid stretch scale.
    double c = 1.0;
    while (hf(c) > 0.5 * h0 && c < 1e8) c *= 2.0;

    const double half_mass = quad::integrate_zero_inf_or_throw(
        [&](double y) { return hf(y); }, 1e-300, 1e-12);
    table->norm = 2.0 * half_mass;

    double y_max = 2.0 * c;
    for (int it = 0; it < 200; ++it) {
        const double tail = quad::integrate_zero_inf(
                                [&](double s) { return hf(y_max + s); }, 1e-300, 1e-6)
                                .value;
        if (tail <= 1e-15 * half_mass) break;
        y_max *= 2.0;
    }
    table->y_max = y_max;

    const int n_nodes = 400;
    const double w_max = y_max / (c + y_max);
    table->ys.resize(n_nodes);
    table->fs.resize(n_nodes);
    table->ys[0] = 0.0;
    table->fs[0] = 0.5;
    double acc = 0.0;
    for (int i = 1; i < n_nodes; ++i) {
        const double w = w_max * static_cast<double>(i) / (n_nodes - 1);
        table->ys[i] = (i == n_nodes - 1) ? y_max : c * w / (1.0 - w);
        acc += quad::integrate_or_throw([&](double y) { return hf(y); }, table->ys[i - 1],
                                        table->ys[i], half_mass * 1e-14, 1e-12);
        table->fs[i] = 0.5 + acc / table->norm;
    }
    // Guard against round-off breaking strict monotonicity at the far tail.
    for (int i = 1; i < n_nodes; ++i) {
        if (table->fs[i] <= table->fs[i - 1]) {
            table->fs[i] = std::nextafter(table->fs[i - 1], 1.0);
        }
    }
    table->d_yf = pchip_slopes(table->ys, table->fs);
    table->d_fy = pchip_slopes(table->fs, table->ys);

    Marginal1D m;
    m.kind_ = Kind::Tabulated;
    m.table_ = std::move(table);
    return m;
}

Marginal1D Marginal1D::for_family(const GeneratorFamily& f, int ambient_n) {
    switch (f.tag) {
        case Family::Normal: {
            Marginal1D m;
            m.kind_ = Kind::NormalClosed;
            return m;
        }
        case Family::StudentT:
            return student(f.dof_m, 1.0);
        default: {
            const auto fam = f;
            const int n = ambient_n;
            return tabulated([fam, n](double y) {
                return marginal_generator(fam, n, 1, 0.5 * y * y);
            });
        }
    }
}

Marginal1D Marginal1D::for_kernel(const GeneratorKernel& k, int dim) {
    if (k.family.tag == Family::Normal) {
        Marginal1D m;
        m.kind_ = Kind::NormalClosed;
        return m;
    }
    if (k.family.tag == Family::StudentT) {
        // Shifted/iterated StudentT kernels stay in the power family:
        // kernel ~ (1 + 2u/(mA))^{-E}, a scaled Student law.
        const double m = k.family.dof_m;
        const double expo = 0.5 * (m + k.ambient_n - 2 * static_cast<int>(k.level));
        const double nu = 2.0 * expo - dim;
        if (nu > 0.0) {
            const double a = 1.0 + 2.0 * k.shift / m;
            return student(nu, std::sqrt(m * a / nu));
        }
    }
    if (k.family.tag == Family::PearsonVII) {
        // kernel ~ (1 + 2u/A)^{-(t-level)}: scaled Student with nu = 2(t-l)-dim.
        const double t = k.family.shape_t;
        const double expo = t - static_cast<int>(k.level);
        const double nu = 2.0 * expo - dim;
        if (nu > 0.0) {
            const double a = 1.0 + 2.0 * k.shift;
            return student(nu, std::sqrt(a / nu));
        }
    }
    const GeneratorKernel kk = k;
    const int d = dim;
    if (d == 1) {
        return tabulated([kk](double y) { return kernel_eval(kk, 0.5 * y * y); });
    }
    // k=1 marginal generator of the kernel law, lifting through generator
    // levels when the gap is even.
    const int gap = d - 1;
    if (gap % 2 == 0) {
        const int j = gap / 2;
        const double pref = std::tgamma(static_cast<double>(j));
        const GeneratorKernel lifted{kk.family, kk.ambient_n,
                                     static_cast<Level>(static_cast<int>(kk.level) + j),
                                     kk.shift};
        return tabulated(
            [lifted, pref](double y) { return pref * kernel_eval(lifted, 0.5 * y * y); });
    }
    return tabulated([kk, gap](double y) {
        auto integrand = [&](double s) {
            return std::pow(s, 0.5 * gap - 1.0) * kernel_eval(kk, s + 0.5 * y * y);
        };
        return quad::integrate_zero_inf_or_throw(integrand, 1e-300, 1e-11);
    });
}

double Marginal1D::pdf(double y) const {
    switch (kind_) {
        case Kind::NormalClosed:
            return special::norm_pdf(y);
        case Kind::StudentClosed: {
            const double x = y / scale_;
            const double lognorm = std::lgamma(0.5 * (dof_ + 1.0)) - std::lgamma(0.5 * dof_) -
                                   0.5 * std::log(dof_ * M_PI);
            return std::exp(lognorm - 0.5 * (dof_ + 1.0) * std::log1p(x * x / dof_)) / scale_;
        }
        case Kind::Tabulated:
            return table_->h(std::abs(y)) / table_->norm;
    }
    return 0.0;
}

double Marginal1D::cdf(double y) const {
    switch (kind_) {
        case Kind::NormalClosed:
            return special::norm_cdf(y);
        case Kind::StudentClosed:
            return special::student_t_cdf(y / scale_, dof_);
        case Kind::Tabulated: {
            const double ay = std::abs(y);
            const auto& t = *table_;
            double half;
            if (ay >= t.y_max) {
                half = 0.5;
            } else {
                // Nearest node below, then a short exact integral.
                size_t i = std::upper_bound(t.ys.begin(), t.ys.end(), ay) - t.ys.begin();
                if (i > 0) --i;
                const double base = t.fs[i] - 0.5;
                const double inc = quad::integrate([&](double v) { return t.h(v); }, t.ys[i], ay,
                                                   1e-300, 1e-11)
                                       .value /
                                   t.norm;
                half = base + inc;
            }
            return y >= 0.0 ? 0.5 + half : 0.5 - half;
        }
    }
    return 0.0;
}

double Marginal1D::quantile(double p) const {
    if (p < 0.0 || p > 1.0) throw DomainError("probability-range", "probability outside [0,1]");
    if (p == 0.0) return -kInf;
    if (p == 1.0) return kInf;
    switch (kind_) {
        case Kind::NormalClosed:
            return special::norm_quantile(p);
        case Kind::StudentClosed:
            return scale_ * special::student_t_quantile(p, dof_);
        case Kind::Tabulated: {
            if (p == 0.5) return 0.0;
            const bool upper = p > 0.5;
            const double pp = upper ? p : 1.0 - p;
            const auto& t = *table_;
            double lo = 0.0, hi = t.y_max;
            double y = std::clamp(pchip_eval(t.fs, t.ys, t.d_fy, std::min(pp, t.fs.back())).value,
                                  lo, hi);
            for (int it = 0; it < 60; ++it) {
                const double err = cdf(y) - pp;
                if (std::abs(err) <= 1e-11) break;
                if (err > 0)
                    hi = y;
                else
                    lo = y;
                const double dens = pdf(y);
                double next = dens > 0 ? y - err / dens : 0.5 * (lo + hi);
                if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
                y = next;
            }
            return upper ? y : -y;
        }
    }
    return 0.0;
}

double Marginal1D::map(double v) const {
    switch (kind_) {
        case Kind::NormalClosed:
            return special::norm_quantile(v);
        case Kind::StudentClosed:
            return scale_ * special::student_t_quantile(v, dof_);
        case Kind::Tabulated: {
            const auto& t = *table_;
            const bool upper = v >= 0.5;
            const double pp = std::min(upper ? v : 1.0 - v, t.fs.back());
            const double y = pchip_eval(t.fs, t.ys, t.d_fy, pp).value;
            return upper ? y : -y;
        }
    }
    return 0.0;
}

double Marginal1D::map_derivative(double v) const {
    switch (kind_) {
        case Kind::NormalClosed:
            return 1.0 / special::norm_pdf(special::norm_quantile(v));
        case Kind::StudentClosed: {
            const double y = special::student_t_quantile(v, dof_);
            const double lognorm = std::lgamma(0.5 * (dof_ + 1.0)) - std::lgamma(0.5 * dof_) -
                                   0.5 * std::log(dof_ * M_PI);
            const double dens = std::exp(lognorm - 0.5 * (dof_ + 1.0) * std::log1p(y * y / dof_));
            return scale_ / dens;
        }
        case Kind::Tabulated: {
            const auto& t = *table_;
            const bool upper = v >= 0.5;
            const double pp = std::min(upper ? v : 1.0 - v, t.fs.back());
            return pchip_eval(t.fs, t.ys, t.d_fy, pp).derivative;
        }
    }
    return 0.0;
}

double Marginal1D::map_inverse(double y) const {
    switch (kind_) {
        case Kind::NormalClosed:
            return special::norm_cdf(y);
        case Kind::StudentClosed:
            return special::student_t_cdf(y / scale_, dof_);
        case Kind::Tabulated: {
            const auto& t = *table_;
            const bool upper = y >= 0.0;
            const double ay = std::abs(y);
            if (ay >= t.y_max) return upper ? t.fs.back() : 1.0 - t.fs.back();
            // Newton on the quantile spline, seeded by the forward spline.
            double v = std::clamp(pchip_eval(t.ys, t.fs, t.d_yf, ay).value, t.fs.front(),
                                  t.fs.back());
            double lo = t.fs.front(), hi = t.fs.back();
            for (int it = 0; it < 80; ++it) {
                const auto e = pchip_eval(t.fs, t.ys, t.d_fy, v);
                const double err = e.value - ay;
                if (std::abs(err) <= 1e-13 * (1.0 + ay)) break;
                if (err > 0)
                    hi = v;
                else
                    lo = v;
                double next = e.derivative > 0 ? v - err / e.derivative : 0.5 * (lo + hi);
                if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
                v = next;
            }
            return upper ? v : 1.0 - v;
        }
    }
    return 0.0;
}

double Marginal1D::support_bound() const {
    return kind_ == Kind::Tabulated ? table_->y_max : kInf;
}

}  // namespace rangerisk
