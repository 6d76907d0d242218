#include "rangerisk/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "rangerisk/qmc.hpp"
#include "rangerisk/quadrature.hpp"
#include "rangerisk/special.hpp"

namespace rangerisk {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Fritsch-Carlson slopes (same scheme as marginal1d; local copy keeps the
// modules decoupled).
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

struct CubicEval {
    double value;
    double derivative;
};

CubicEval pchip_eval(const std::vector<double>& x, const std::vector<double>& y,
                     const std::vector<double>& d, double xq) {
    const size_t n = x.size();
    size_t i = std::upper_bound(x.begin(), x.end(), xq) - x.begin();
    if (i == 0) i = 1;
    if (i >= n) i = n - 1;
    --i;
    const double h = x[i + 1] - x[i];
    const double t = (xq - x[i]) / h;
    const double t2 = t * t, t3 = t2 * t;
    CubicEval out;
    out.value = (2 * t3 - 3 * t2 + 1) * y[i] + h * (t3 - 2 * t2 + t) * d[i] +
                (-2 * t3 + 3 * t2) * y[i + 1] + h * (t3 - t2) * d[i + 1];
    out.derivative = ((6 * t2 - 6 * t) * y[i] / h + (3 * t2 - 4 * t + 1) * d[i] +
                      (-6 * t2 + 6 * t) * y[i + 1] / h + (3 * t2 - 2 * t) * d[i + 1]);
    return out;
}

// Monotone C1 map (0,1) -> R built from a marginal's quantile sampled on a
// logit grid. Box integrals transported through it are exact as long as the
// derivative used in the weights is the map's own.
class TransportMap {
public:
    explicit TransportMap(const Marginal1D& marg) {
        constexpr int kNodes = 601;
        constexpr double kXmax = 30.0;
        xs_.resize(kNodes);
        ys_.resize(kNodes);
        for (int i = 0; i < kNodes; ++i) {
            xs_[i] = -kXmax + 2.0 * kXmax * i / (kNodes - 1);
            const double v = 1.0 / (1.0 + std::exp(-xs_[i]));
            ys_[i] = marg.quantile(v);
        }
        for (size_t i = 1; i < ys_.size(); ++i) {
            if (ys_[i] <= ys_[i - 1]) ys_[i] = std::nextafter(ys_[i - 1], kInf);
        }
        d_ = pchip_slopes(xs_, ys_);
    }

    double logit(double v) const {
        const double x = std::log(v / (1.0 - v));
        return std::clamp(x, xs_.front(), xs_.back());
    }

    // dy/dv = spline'(x) / (v (1 - v))
    double map_with_derivative(double v, double* deriv) const {
        const double x = logit(v);
        const CubicEval e = pchip_eval(xs_, ys_, d_, x);
        *deriv = e.derivative / (v * (1.0 - v));
        return e.value;
    }

    // Preimage of y, clamped to the map's range; +-inf map to the range ends.
    double inverse(double y) const {
        if (y <= ys_.front()) return 1.0 / (1.0 + std::exp(xs_.back()));
        if (y >= ys_.back()) return 1.0 / (1.0 + std::exp(-xs_.back()));
        size_t i = std::upper_bound(ys_.begin(), ys_.end(), y) - ys_.begin();
        if (i == 0) i = 1;
        --i;
        double lo = xs_[i], hi = xs_[i + 1];
        double x = 0.5 * (lo + hi);
        for (int it = 0; it < 80; ++it) {
            const CubicEval e = pchip_eval(xs_, ys_, d_, x);
            const double err = e.value - y;
            if (std::abs(err) <= 1e-14 * (1.0 + std::abs(y))) break;
            if (err > 0)
                hi = x;
            else
                lo = x;
            double next = e.derivative > 0 ? x - err / e.derivative : 0.5 * (lo + hi);
            if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
            x = next;
        }
        return 1.0 / (1.0 + std::exp(-x));
    }

private:
    std::vector<double> xs_, ys_, d_;
};

bool family_has_exponential_moments(Family f) {
    return f == Family::Normal || f == Family::Logistic;
}

// Divergence rule for tilted integrals on unbounded boxes.
void check_tilt(const RectangleRequest& req) {
    if (!req.tilt) return;
    const Eigen::VectorXd& t = *req.tilt;
    bool unbounded_in_tilt = false;
    for (int i = 0; i < req.dim; ++i) {
        if ((std::isinf(req.box.upper[i]) && t[i] > 0.0) ||
            (std::isinf(req.box.lower[i]) && t[i] < 0.0)) {
            unbounded_in_tilt = true;
        }
    }
    if (!unbounded_in_tilt) return;
    const Family f = req.kernel.family.tag;
    if (family_has_exponential_moments(f)) return;
    if (f == Family::Laplace) {
        if (t.norm() < 1.0) return;
        throw DomainError("divergent-tilt",
                          "Laplace tilted integral diverges: |tilt| >= 1 on an unbounded box");
    }
    throw DomainError("divergent-tilt",
                      "exponential moments do not exist for this family on an unbounded box");
}

BoxProbability product_engine(const RectangleRequest& req) {
    BoxProbability out;
    out.engine = BoxProbability::Used::product;
    double value = 1.0;
    double shift_norm2 = 0.0;
    for (int i = 0; i < req.dim; ++i) {
        const double t = req.tilt ? (*req.tilt)[i] : 0.0;
        shift_norm2 += t * t;
        const double hi = std::isinf(req.box.upper[i]) ? kInf : req.box.upper[i] - t;
        const double lo = std::isinf(req.box.lower[i]) ? -kInf : req.box.lower[i] - t;
        value *= special::norm_cdf(hi) - special::norm_cdf(lo);
        out.n_evals += 2;
    }
    out.value = value * std::exp(0.5 * shift_norm2);
    out.std_error = 0.0;
    return out;
}

struct ClampedBox {
    std::vector<double> lo, hi;
    bool empty = false;
};

// Truncate infinite edges so nested quadrature sees a finite box. The bound
// comes from the marginal tail, pushed outward under a tilt until the tilted
// radial tail is negligible.
ClampedBox clamp_box(const RectangleRequest& req, const Marginal1D& marg) {
    const double eps_edge = std::min(1e-12, 1e-4 * req.tol);
    double bound =
        std::min(marg.support_bound(),
                 std::max(std::abs(marg.quantile(std::max(eps_edge, 1e-15))),
                          std::abs(marg.quantile(std::min(1.0 - eps_edge, 1.0 - 1e-15)))));
    if (req.tilt && req.tilt->norm() > 0.0) {
        const double tn = req.tilt->norm();
        auto tail_weight = [&](double r) {
            auto f = [&](double s) {
                return std::pow(s, req.dim - 1.0) * kernel_eval(req.kernel, 0.5 * s * s) *
                       std::exp(tn * s);
            };
            return quad::integrate_exp_sinh(f, r, 1e-4).value;
        };
        const double ref = tail_weight(0.0);
        for (int it = 0; it < 200 && tail_weight(bound) > eps_edge * ref; ++it) bound *= 1.2;
    }
    ClampedBox out;
    out.lo.resize(req.dim);
    out.hi.resize(req.dim);
    for (int i = 0; i < req.dim; ++i) {
        out.lo[i] = std::max(req.box.lower[i], -bound);
        out.hi[i] = std::min(req.box.upper[i], bound);
        if (!(out.lo[i] < out.hi[i])) out.empty = true;
    }
    return out;
}

// Quantile-based segment boundaries. Wide (heavy-tail) integration ranges get
// pre-split so the adaptive rule cannot falsely converge on a panel that
// misses the concentrated mass.
std::vector<double> quantile_cuts(const Marginal1D& marg) {
    static const double kLevels[] = {1e-10, 1e-6, 1e-3, 0.05, 0.25, 0.5,
                                     0.75, 0.95, 1.0 - 1e-3, 1.0 - 1e-6, 1.0 - 1e-10};
    std::vector<double> cuts;
    for (double p : kLevels) cuts.push_back(marg.quantile(p));
    return cuts;
}

double segmented_integrate(const std::function<double(double)>& f, double lo, double hi,
                           const std::vector<double>& cuts, double rel_tol, double* err_acc) {
    double total = 0.0;
    double a = lo;
    for (double c : cuts) {
        if (c <= a) continue;
        if (c >= hi) break;
        quad::Result r = quad::integrate(f, a, c, 1e-14, rel_tol);
        total += r.value;
        if (err_acc) *err_acc += r.abs_error;
        a = c;
    }
    quad::Result r = quad::integrate(f, a, hi, 1e-14, rel_tol);
    total += r.value;
    if (err_acc) *err_acc += r.abs_error;
    return total;
}

BoxProbability quadrature_engine(const RectangleRequest& req) {
    BoxProbability out;
    out.engine = BoxProbability::Used::quadrature;
    const Marginal1D marg = Marginal1D::for_kernel(req.kernel, req.dim);
    const ClampedBox box = clamp_box(req, marg);
    if (box.empty) return out;
    const std::vector<double> cuts = quantile_cuts(marg);

    const double c = law_norm_constant(req.kernel, req.dim).value;
    const double level_rel = req.tol / (3.0 * req.dim);
    long n_evals = 0;
    double err_outer = 0.0;

    std::function<double(int, double, double)> rec = [&](int i, double ss, double td) -> double {
        if (i == req.dim) {
            ++n_evals;
            return c * kernel_eval(req.kernel, 0.5 * ss) * (td != 0.0 ? std::exp(td) : 1.0);
        }
        const double t = req.tilt ? (*req.tilt)[i] : 0.0;
        auto f = [&](double y) { return rec(i + 1, ss + y * y, td + t * y); };
        return segmented_integrate(f, box.lo[i], box.hi[i], cuts, level_rel,
                                   i == 0 ? &err_outer : nullptr);
    };
    out.value = rec(0, 0.0, 0.0);
    out.n_evals = n_evals;
    // Outer panel error plus the inner levels' relative budgets.
    out.std_error = err_outer + (req.dim - 1) * level_rel * std::abs(out.value);
    if (!(out.std_error <= 30.0 * req.tol * std::max(std::abs(out.value), 1e-300))) {
        throw IntegrationError("rectangle quadrature tolerance not reached", out.value,
                               out.std_error);
    }
    return out;
}

BoxProbability qmc_engine(const RectangleRequest& req) {
    BoxProbability out;
    out.engine = BoxProbability::Used::qmc;
    const Marginal1D marg = Marginal1D::for_kernel(req.kernel, req.dim);
    const TransportMap tmap(marg);
    const double c = law_norm_constant(req.kernel, req.dim).value;

    std::vector<double> vlo(req.dim), dv(req.dim);
    for (int i = 0; i < req.dim; ++i) {
        const double lo = req.box.lower[i];
        const double hi = req.box.upper[i];
        const double a = std::isinf(lo) ? tmap.inverse(-kInf) : tmap.inverse(lo);
        const double b = std::isinf(hi) ? tmap.inverse(kInf) : tmap.inverse(hi);
        vlo[i] = a;
        dv[i] = b - a;
        if (!(dv[i] > 0.0)) return out;
    }

    constexpr int kRand = 16;
    constexpr long kInitial = 1 << 14;
    constexpr long kBudget = 1 << 22;

    std::uint64_t seed_state = req.seed;
    std::vector<std::vector<std::uint32_t>> shifts(kRand, std::vector<std::uint32_t>(req.dim));
    for (int r = 0; r < kRand; ++r) {
        for (int j = 0; j < req.dim; ++j) {
            shifts[r][j] = static_cast<std::uint32_t>(qmc::splitmix64(seed_state) >> 32);
        }
    }

    std::vector<qmc::Sobol> seqs(kRand, qmc::Sobol(req.dim));
    std::vector<double> sums(kRand, 0.0);
    std::vector<std::uint32_t> pt(req.dim);
    std::vector<double> y(req.dim);

    long n = 0;
    long target = kInitial;
    const Eigen::VectorXd* tilt = req.tilt ? &*req.tilt : nullptr;
    while (true) {
        for (int r = 0; r < kRand; ++r) {
            qmc::Sobol& seq = seqs[r];
            double acc = 0.0;
            for (long i = n; i < target; ++i) {
                seq.next(pt.data());
                double jac = 1.0;
                double ss = 0.0, td = 0.0;
                for (int j = 0; j < req.dim; ++j) {
                    const double u = (static_cast<double>(pt[j] ^ shifts[r][j]) + 0.5) * 0x1p-32;
                    const double v = vlo[j] + dv[j] * u;
                    double dydv;
                    const double yy = tmap.map_with_derivative(v, &dydv);
                    y[j] = yy;
                    jac *= dv[j] * dydv;
                    ss += yy * yy;
                    if (tilt) td += (*tilt)[j] * yy;
                }
                acc += c * kernel_eval(req.kernel, 0.5 * ss) * (tilt ? std::exp(td) : 1.0) * jac;
            }
            sums[r] += acc;
        }
        out.n_evals += (target - n) * kRand;
        n = target;

        double mean = 0.0;
        for (int r = 0; r < kRand; ++r) mean += sums[r] / n;
        mean /= kRand;
        double var = 0.0;
        for (int r = 0; r < kRand; ++r) {
            const double d = sums[r] / n - mean;
            var += d * d;
        }
        out.value = mean;
        out.std_error = std::sqrt(var / (kRand * (kRand - 1.0)));
        const double goal = req.tol * std::max(std::abs(out.value), 1e-300);
        if (out.std_error <= goal) break;
        if (n * kRand >= kBudget) {
            if (out.std_error > 30.0 * req.tol * std::max(std::abs(out.value), 1e-300)) {
                throw IntegrationError("rectangle QMC tolerance not reached", out.value,
                                       out.std_error);
            }
            break;
        }
        target = n * 2;
    }
    return out;
}

}  // namespace

void EllipticalModel::validate() const {
    if (mu.size() < 1) throw DomainError("dimension", "model dimension must be >= 1");
    if (sigma.rows() != mu.size() || sigma.cols() != mu.size()) {
        throw DomainError("dimension", "sigma shape does not match mu");
    }
    if (!sigma.isApprox(sigma.transpose(), 1e-12)) {
        throw DomainError("not-positive-definite", "sigma must be symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma, Eigen::EigenvaluesOnly);
    const auto& ev = es.eigenvalues();
    if (ev(0) <= 1e-12 * ev(ev.size() - 1)) {
        throw DomainError("not-positive-definite", "sigma is not positive definite");
    }
}

void StandardBox::validate() const {
    if (upper.size() != lower.size()) throw DomainError("dimension", "box edge length mismatch");
    for (int i = 0; i < dim(); ++i) {
        if (!(lower[i] < upper[i])) {
            throw DomainError("degenerate-range", "box requires lower < upper elementwise");
        }
    }
}

StandardBox StandardBox::full(int n) {
    StandardBox b;
    b.lower = Eigen::VectorXd::Constant(n, -kInf);
    b.upper = Eigen::VectorXd::Constant(n, kInf);
    return b;
}

Eigen::MatrixXd sqrt_matrix(const Eigen::MatrixXd& sigma) {
    if (sigma.rows() != sigma.cols()) throw DomainError("dimension", "matrix must be square");
    if (!sigma.isApprox(sigma.transpose(), 1e-12)) {
        throw DomainError("not-positive-definite", "matrix must be symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma);
    const Eigen::VectorXd& ev = es.eigenvalues();
    if (ev(0) <= 1e-12 * ev(ev.size() - 1)) {
        throw DomainError("not-positive-definite", "matrix is not positive definite");
    }
    return es.eigenvectors() * ev.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

double marginal_var(const EllipticalModel& m, int k, double p) {
    m.validate();
    if (k < 0 || k >= m.dim()) throw DomainError("dimension", "component index out of range");
    if (p < 0.0 || p > 1.0) throw DomainError("probability-range", "p must lie in [0,1]");
    if (p == 0.0) return -kInf;
    if (p == 1.0) return kInf;
    const Marginal1D marg = Marginal1D::for_family(m.family, m.dim());
    return m.mu[k] + std::sqrt(m.sigma(k, k)) * marg.quantile(p);
}

Eigen::VectorXd marginal_var_vector(const EllipticalModel& m, const Eigen::VectorXd& p) {
    m.validate();
    if (p.size() != m.dim()) throw DomainError("dimension", "probability vector length mismatch");
    const Marginal1D marg = Marginal1D::for_family(m.family, m.dim());
    Eigen::VectorXd out(m.dim());
    for (int k = 0; k < m.dim(); ++k) {
        if (p[k] < 0.0 || p[k] > 1.0) throw DomainError("probability-range", "p must lie in [0,1]");
        if (p[k] == 0.0) {
            out[k] = -kInf;
        } else if (p[k] == 1.0) {
            out[k] = kInf;
        } else {
            out[k] = m.mu[k] + std::sqrt(m.sigma(k, k)) * marg.quantile(p[k]);
        }
    }
    return out;
}

BoxProbability rectangle_prob(const RectangleRequest& req) {
    if (req.dim < 1) throw DomainError("dimension", "rectangle dimension must be >= 1");
    if (req.box.dim() != req.dim) throw DomainError("dimension", "box dimension mismatch");
    req.box.validate();
    if (req.tilt && req.tilt->size() != req.dim) {
        throw DomainError("dimension", "tilt dimension mismatch");
    }
    check_tilt(req);

    Engine engine = req.engine;
    const bool tilted = req.tilt && req.tilt->norm() > 0.0;
    if (engine == Engine::Auto) {
        if (req.kernel.family.tag == Family::Normal) {
            engine = Engine::Product;
        } else if (req.dim <= 3) {
            engine = Engine::Quadrature;
        } else {
            engine = Engine::Qmc;
        }
    }
    if (engine == Engine::Product && req.kernel.family.tag != Family::Normal) {
        throw DomainError("engine", "product engine is exact only for the normal family");
    }
    if (engine == Engine::Qmc && tilted && req.kernel.family.tag != Family::Normal) {
        bool unbounded = false;
        for (int i = 0; i < req.dim; ++i) {
            unbounded = unbounded || std::isinf(req.box.lower[i]) || std::isinf(req.box.upper[i]);
        }
        if (unbounded) {
            if (req.dim > 4) {
                throw DomainError(
                    "engine", "tilted unbounded boxes require the quadrature engine (dim <= 4)");
            }
            engine = Engine::Quadrature;
        }
    }
    if (engine == Engine::Quadrature && req.dim > 4) {
        throw DomainError("engine", "quadrature engine supports dim <= 4");
    }

    switch (engine) {
        case Engine::Product:
            return product_engine(req);
        case Engine::Quadrature:
            return quadrature_engine(req);
        default:
            return qmc_engine(req);
    }
}

namespace {

BoxProbability correlated_quadrature(const CorrelatedBoxRequest& req, const Eigen::MatrixXd& corr,
                                     const StandardBox& zbox, const Marginal1D& marg) {
    const int d = static_cast<int>(req.loc.size());
    BoxProbability out;
    out.engine = BoxProbability::Used::quadrature;

    const double eps_edge = std::min(1e-12, 1e-4 * req.tol);
    double bound =
        std::min(marg.support_bound(),
                 std::max(std::abs(marg.quantile(std::max(eps_edge, 1e-15))),
                          std::abs(marg.quantile(std::min(1.0 - eps_edge, 1.0 - 1e-15)))));
    if (req.tilt && req.tilt->norm() > 0.0) {
        const double tn = req.tilt->norm();
        auto tail_weight = [&](double r) {
            auto f = [&](double s) {
                return std::pow(s, d - 1.0) * kernel_eval(req.kernel, 0.5 * s * s) *
                       std::exp(tn * s);
            };
            return quad::integrate_exp_sinh(f, r, 1e-4).value;
        };
        const double ref = tail_weight(0.0);
        for (int it = 0; it < 200 && tail_weight(bound) > eps_edge * ref; ++it) bound *= 1.2;
    }
    std::vector<double> lo(d), hi(d);
    for (int i = 0; i < d; ++i) {
        lo[i] = std::max(zbox.lower[i], -bound);
        hi[i] = std::min(zbox.upper[i], bound);
        if (!(lo[i] < hi[i])) return out;
    }

    const Eigen::MatrixXd prec = corr.llt().solve(Eigen::MatrixXd::Identity(d, d));
    const double log_det = Eigen::MatrixXd(corr.llt().matrixL()).diagonal().array().log().sum();
    const double c = law_norm_constant(req.kernel, d).value * std::exp(-log_det);
    const std::vector<double> cuts = quantile_cuts(marg);

    const double level_rel = req.tol / (3.0 * d);
    long n_evals = 0;
    double err_outer = 0.0;
    Eigen::VectorXd z(d);
    const Eigen::VectorXd* tilt = req.tilt ? &*req.tilt : nullptr;

    std::function<double(int)> rec = [&](int i) -> double {
        if (i == d) {
            ++n_evals;
            const double w = tilt ? std::exp(tilt->dot(z)) : 1.0;
            return w * c * kernel_eval(req.kernel, 0.5 * z.dot(prec * z));
        }
        auto f = [&](double y) {
            z[i] = y;
            return rec(i + 1);
        };
        return segmented_integrate(f, lo[i], hi[i], cuts, level_rel,
                                   i == 0 ? &err_outer : nullptr);
    };
    out.value = rec(0);
    out.n_evals = n_evals;
    out.std_error = err_outer + (d - 1) * level_rel * std::abs(out.value);
    if (!(out.std_error <= 30.0 * req.tol * std::max(std::abs(out.value), 1e-300))) {
        throw IntegrationError("correlated rectangle quadrature tolerance not reached", out.value,
                               out.std_error);
    }
    return out;
}

BoxProbability correlated_qmc(const CorrelatedBoxRequest& req, const Eigen::MatrixXd& corr,
                              const StandardBox& zbox, const Marginal1D& marg) {
    const int d = static_cast<int>(req.loc.size());
    BoxProbability out;
    out.engine = BoxProbability::Used::qmc;
    const TransportMap tmap(marg);

    const Eigen::MatrixXd prec = corr.llt().solve(Eigen::MatrixXd::Identity(d, d));
    const double log_det = Eigen::MatrixXd(corr.llt().matrixL()).diagonal().array().log().sum();
    const double c = law_norm_constant(req.kernel, d).value * std::exp(-log_det);

    std::vector<double> vlo(d), dv(d);
    for (int i = 0; i < d; ++i) {
        const double a = std::isinf(zbox.lower[i]) ? tmap.inverse(-kInf)
                                                   : tmap.inverse(zbox.lower[i]);
        const double b = std::isinf(zbox.upper[i]) ? tmap.inverse(kInf)
                                                   : tmap.inverse(zbox.upper[i]);
        vlo[i] = a;
        dv[i] = b - a;
        if (!(dv[i] > 0.0)) return out;
    }

    constexpr int kRand = 16;
    constexpr long kInitial = 1 << 14;
    constexpr long kBudget = 1 << 22;
    std::uint64_t seed_state = req.seed;
    std::vector<std::vector<std::uint32_t>> shifts(kRand, std::vector<std::uint32_t>(d));
    for (int r = 0; r < kRand; ++r) {
        for (int j = 0; j < d; ++j) {
            shifts[r][j] = static_cast<std::uint32_t>(qmc::splitmix64(seed_state) >> 32);
        }
    }
    std::vector<qmc::Sobol> seqs(kRand, qmc::Sobol(d));
    std::vector<double> sums(kRand, 0.0);
    std::vector<std::uint32_t> pt(d);
    Eigen::VectorXd z(d);
    const Eigen::VectorXd* tilt = req.tilt ? &*req.tilt : nullptr;

    long n = 0;
    long target = kInitial;
    while (true) {
        for (int r = 0; r < kRand; ++r) {
            qmc::Sobol& seq = seqs[r];
            double acc = 0.0;
            for (long i = n; i < target; ++i) {
                seq.next(pt.data());
                double jac = 1.0;
                for (int j = 0; j < d; ++j) {
                    const double u = (static_cast<double>(pt[j] ^ shifts[r][j]) + 0.5) * 0x1p-32;
                    const double v = vlo[j] + dv[j] * u;
                    double dydv;
                    z[j] = tmap.map_with_derivative(v, &dydv);
                    jac *= dv[j] * dydv;
                }
                const double w = tilt ? std::exp(tilt->dot(z)) : 1.0;
                acc += w * c * kernel_eval(req.kernel, 0.5 * z.dot(prec * z)) * jac;
            }
            sums[r] += acc;
        }
        out.n_evals += (target - n) * kRand;
        n = target;
        double mean = 0.0;
        for (int r = 0; r < kRand; ++r) mean += sums[r] / n;
        mean /= kRand;
        double var = 0.0;
        for (int r = 0; r < kRand; ++r) {
            const double dd = sums[r] / n - mean;
            var += dd * dd;
        }
        out.value = mean;
        out.std_error = std::sqrt(var / (kRand * (kRand - 1.0)));
        if (out.std_error <= req.tol * std::max(std::abs(out.value), 1e-300)) break;
        if (n * kRand >= kBudget) {
            if (out.std_error > 30.0 * req.tol * std::max(std::abs(out.value), 1e-300)) {
                throw IntegrationError("correlated rectangle QMC tolerance not reached", out.value,
                                       out.std_error);
            }
            break;
        }
        target = n * 2;
    }
    return out;
}

}  // namespace

BoxProbability elliptical_rectangle_prob(const CorrelatedBoxRequest& req) {
    const int d = static_cast<int>(req.loc.size());
    if (d < 1) throw DomainError("dimension", "law dimension must be >= 1");
    if (req.scale.rows() != d || req.scale.cols() != d || req.box.dim() != d) {
        throw DomainError("dimension", "scale/box shape mismatch");
    }
    req.box.validate();

    // Per-coordinate standardization z = D^{-1}(x - loc).
    Eigen::VectorXd droot = req.scale.diagonal().cwiseSqrt();
    StandardBox zbox;
    zbox.lower = Eigen::VectorXd(d);
    zbox.upper = Eigen::VectorXd(d);
    for (int i = 0; i < d; ++i) {
        zbox.lower[i] = std::isinf(req.box.lower[i]) ? -kInf
                                                     : (req.box.lower[i] - req.loc[i]) / droot[i];
        zbox.upper[i] = std::isinf(req.box.upper[i]) ? kInf
                                                     : (req.box.upper[i] - req.loc[i]) / droot[i];
    }
    Eigen::MatrixXd corr =
        droot.cwiseInverse().asDiagonal() * req.scale * droot.cwiseInverse().asDiagonal();

    // Tilt on x becomes tilt' z with tilt'_i = tilt_i sqrt(S_ii); the constant
    // exp(tilt'(x-loc)) offset is already relative to loc.
    std::optional<Eigen::VectorXd> ztilt;
    if (req.tilt && req.tilt->norm() > 0.0) {
        if (req.tilt->size() != d) throw DomainError("dimension", "tilt dimension mismatch");
        ztilt = req.tilt->cwiseProduct(droot);
        // Divergence rule in the correlation metric for unbounded boxes.
        bool unbounded = false;
        for (int i = 0; i < d; ++i) {
            if ((std::isinf(req.box.upper[i]) && (*req.tilt)[i] > 0.0) ||
                (std::isinf(req.box.lower[i]) && (*req.tilt)[i] < 0.0)) {
                unbounded = true;
            }
        }
        if (unbounded) {
            const Family fam = req.kernel.family.tag;
            if (fam == Family::StudentT || fam == Family::PearsonVII) {
                throw DomainError("divergent-tilt",
                                  "exponential moments do not exist for this family");
            }
            if (fam == Family::Laplace) {
                const double metric = std::sqrt(ztilt->dot(corr * *ztilt));
                if (metric >= 1.0) {
                    throw DomainError("divergent-tilt",
                                      "Laplace tilted integral diverges on an unbounded box");
                }
            }
        }
    }

    if ((corr - Eigen::MatrixXd::Identity(d, d)).cwiseAbs().maxCoeff() < 1e-13) {
        return rectangle_prob({req.kernel, d, std::move(zbox), std::move(ztilt), req.tol,
                               req.seed, req.engine});
    }

    CorrelatedBoxRequest zreq = req;
    zreq.tilt = ztilt;
    const Marginal1D marg = Marginal1D::for_kernel(req.kernel, d);
    Engine engine = req.engine;
    if (engine == Engine::Auto) engine = d <= 3 ? Engine::Quadrature : Engine::Qmc;
    if (engine == Engine::Product) {
        throw DomainError("engine", "product engine needs an identity correlation");
    }
    if (engine == Engine::Quadrature) {
        if (d > 4) throw DomainError("engine", "quadrature engine supports dim <= 4");
        return correlated_quadrature(zreq, corr, zbox, marg);
    }
    return correlated_qmc(zreq, corr, zbox, marg);
}

EllipticalSampler::EllipticalSampler(const GeneratorKernel& kernel, int dim)
    : kernel_(kernel), dim_(dim) {
    if (dim < 1) throw DomainError("dimension", "sampler dimension must be >= 1");
    if (kernel.family.tag == Family::Normal) {
        gaussian_shortcut_ = true;
        return;
    }
    // Radial density r^{d-1} kernel(r^2/2): cumulative table over Chebyshev
    // probabilities in [1e-9, 1-1e-9].
    auto rho = [&](double r) {
        return std::pow(r, dim_ - 1.0) * kernel_eval(kernel_, 0.5 * r * r);
    };
    const double total = quad::integrate_or_throw(rho, 0.0, 1.0, 1e-300, 1e-12) +
                         quad::integrate_exp_sinh(rho, 1.0, 1e-12).value;

    constexpr int kNodes = 4096;
    constexpr double kPlo = 1e-9, kPhi = 1.0 - 1e-9;
    probs_.resize(kNodes);
    radii_.resize(kNodes);
    for (int i = 0; i < kNodes; ++i) {
        const double theta = M_PI * i / (kNodes - 1);
        probs_[i] = 0.5 * (kPlo + kPhi) - 0.5 * (kPhi - kPlo) * std::cos(theta);
    }
    std::sort(probs_.begin(), probs_.end());

    // March outward: carry the cumulative mass and Newton-solve each target.
    double r = 0.0, cum = 0.0;
    for (int i = 0; i < kNodes; ++i) {
        const double target = probs_[i] * total;
        double step = r > 0.0 ? 0.1 * (1.0 + r) : 1e-3;
        double hi = r + step;
        double cum_hi = cum + quad::integrate(rho, r, hi, 1e-300, 1e-10).value;
        while (cum_hi < target) {
            r = hi;
            cum = cum_hi;
            step *= 2.0;
            hi = r + step;
            cum_hi = cum + quad::integrate(rho, r, hi, 1e-300, 1e-10).value;
        }
        double x = 0.5 * (r + hi);
        double lo_b = r, hi_b = hi;
        for (int it = 0; it < 60; ++it) {
            const double fx = cum + quad::integrate(rho, r, x, 1e-300, 1e-11).value;
            const double err = fx - target;
            if (std::abs(err) <= 1e-12 * total) break;
            if (err > 0)
                hi_b = x;
            else
                lo_b = x;
            const double dens = rho(x);
            double next = dens > 0 ? x - err / dens : 0.5 * (lo_b + hi_b);
            if (!(next > lo_b && next < hi_b)) next = 0.5 * (lo_b + hi_b);
            x = next;
        }
        cum += quad::integrate(rho, r, x, 1e-300, 1e-11).value;
        r = x;
        radii_[i] = x;
    }
    for (size_t i = 1; i < radii_.size(); ++i) {
        if (radii_[i] <= radii_[i - 1]) radii_[i] = std::nextafter(radii_[i - 1], kInf);
    }
    d_pr_ = pchip_slopes(probs_, radii_);
}

double EllipticalSampler::radial_quantile(double p) const {
    if (gaussian_shortcut_) {
        throw DomainError("engine", "gaussian sampler has no radial table");
    }
    const double pc = std::clamp(p, probs_.front(), probs_.back());
    return pchip_eval(probs_, radii_, d_pr_, pc).value;
}

double EllipticalSampler::radial_cdf(double r) const {
    auto rho = [&](double s) {
        return std::pow(s, dim_ - 1.0) * kernel_eval(kernel_, 0.5 * s * s);
    };
    const double total = quad::integrate_or_throw(rho, 0.0, 1.0, 1e-300, 1e-12) +
                         quad::integrate_exp_sinh(rho, 1.0, 1e-12).value;
    const double head = r <= 1.0 ? quad::integrate(rho, 0.0, r, 1e-300, 1e-11).value
                                 : quad::integrate(rho, 0.0, 1.0, 1e-300, 1e-11).value +
                                       quad::integrate(rho, 1.0, r, 1e-300, 1e-11).value;
    return head / total;
}

Eigen::MatrixXd EllipticalSampler::sample(long count, std::uint64_t seed) const {
    if (count < 1) throw DomainError("dimension", "sample count must be >= 1");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::MatrixXd out(count, dim_);
    if (gaussian_shortcut_) {
        for (long i = 0; i < count; ++i) {
            for (int j = 0; j < dim_; ++j) out(i, j) = gauss(rng);
        }
        return out;
    }
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Eigen::VectorXd dir(dim_);
    for (long i = 0; i < count; ++i) {
        double norm2 = 0.0;
        do {
            for (int j = 0; j < dim_; ++j) dir[j] = gauss(rng);
            norm2 = dir.squaredNorm();
        } while (norm2 == 0.0);
        const double r = radial_quantile(unif(rng));
        out.row(i) = (r / std::sqrt(norm2)) * dir.transpose();
    }
    return out;
}

}  // namespace rangerisk
