#include "rangerisk/riskmeasures.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rangerisk/qmc.hpp"
#include "rangerisk/special.hpp"

namespace rangerisk {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kEmptyRangeFloor = 1e-12;

bool is_diagonal(const Eigen::MatrixXd& s) {
    const double scale = s.diagonal().cwiseAbs().maxCoeff();
    for (int i = 0; i < s.rows(); ++i) {
        for (int j = 0; j < s.cols(); ++j) {
            if (i != j && std::abs(s(i, j)) > 1e-14 * scale) return false;
        }
    }
    return true;
}

// Standardized thresholds eta_v = Sigma^{-1/2}(VaR_v - mu). A probability
// vector must be all-interior or all-extreme unless Sigma is diagonal: for a
// non-diagonal root the affine transform couples components, so a mixed
// finite/infinite threshold vector has no consistent image.
Eigen::VectorXd standardized_thresholds(const EllipticalModel& m, const Eigen::MatrixXd& root,
                                        const Eigen::VectorXd& probs, const Marginal1D& marg) {
    const int n = m.dim();
    int n_extreme = 0;
    for (int k = 0; k < n; ++k) {
        if (probs[k] == 0.0 || probs[k] == 1.0) ++n_extreme;
    }
    Eigen::VectorXd eta(n);
    if (n_extreme == n) {
        for (int k = 0; k < n; ++k) eta[k] = probs[k] == 0.0 ? -kInf : kInf;
        return eta;
    }
    if (n_extreme == 0) {
        Eigen::VectorXd var(n);
        for (int k = 0; k < n; ++k) {
            var[k] = m.mu[k] + std::sqrt(m.sigma(k, k)) * marg.quantile(probs[k]);
        }
        return root.llt().solve(var - m.mu);
    }
    if (!is_diagonal(m.sigma)) {
        throw DomainError("mixed-infinite-range",
                          "a range vector mixing interior and 0/1 levels requires diagonal sigma");
    }
    for (int k = 0; k < n; ++k) {
        if (probs[k] == 0.0) {
            eta[k] = -kInf;
        } else if (probs[k] == 1.0) {
            eta[k] = kInf;
        } else {
            eta[k] = marg.quantile(probs[k]);
        }
    }
    return eta;
}

StandardBox drop_component(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi, int k,
                           double scale) {
    const int n = static_cast<int>(lo.size());
    StandardBox out;
    out.lower = Eigen::VectorXd(n - 1);
    out.upper = Eigen::VectorXd(n - 1);
    int j = 0;
    for (int i = 0; i < n; ++i) {
        if (i == k) continue;
        out.lower[j] = lo[i] / scale;
        out.upper[j] = hi[i] / scale;
        ++j;
    }
    return out;
}

StandardBox drop_two(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi, int a, int b,
                     double scale) {
    const int n = static_cast<int>(lo.size());
    StandardBox out;
    out.lower = Eigen::VectorXd(n - 2);
    out.upper = Eigen::VectorXd(n - 2);
    int j = 0;
    for (int i = 0; i < n; ++i) {
        if (i == a || i == b) continue;
        out.lower[j] = lo[i] / scale;
        out.upper[j] = hi[i] / scale;
        ++j;
    }
    return out;
}

struct TermValue {
    double value = 0.0;
    double variance = 0.0;  // squared std error
};

// weight * F(box) for a reduced law, with the empty-product convention F=1
// at dim 0 and analytic dropping of vanished terms.
TermValue reduced_term(const ReducedLaw& red, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                       int drop_a, int drop_b, double tol, std::uint64_t seed, Engine engine,
                       std::vector<BoxProbability>* diag) {
    TermValue out;
    if (red.vanishes || red.weight == 0.0) return out;
    if (red.dim == 0) {
        out.value = red.weight;
        return out;
    }
    StandardBox box = drop_b < 0 ? drop_component(lo, hi, drop_a, red.coord_scale)
                                 : drop_two(lo, hi, drop_a, drop_b, red.coord_scale);
    RectangleRequest req{red.kernel, red.dim, std::move(box), std::nullopt, tol, seed, engine};
    BoxProbability f = rectangle_prob(req);
    if (diag) diag->push_back(f);
    out.value = red.weight * f.value;
    const double se = red.weight * f.std_error;
    out.variance = se * se;
    return out;
}

struct Standardization {
    Eigen::MatrixXd root;
    Eigen::VectorXd eta_p, eta_q;
    BoxProbability denom;
};

Standardization standardize(const EllipticalModel& m, const RangeSpec& range, double tol,
                            std::uint64_t seed, Engine engine,
                            std::vector<BoxProbability>* diag) {
    m.validate();
    range.validate(m.dim());
    Standardization out;
    out.root = sqrt_matrix(m.sigma);
    const Marginal1D marg = Marginal1D::for_family(m.family, m.dim());
    out.eta_p = standardized_thresholds(m, out.root, range.p, marg);
    out.eta_q = standardized_thresholds(m, out.root, range.q, marg);
    for (int k = 0; k < m.dim(); ++k) {
        if (!(out.eta_p[k] < out.eta_q[k])) {
            throw DomainError("empty-range",
                              "standardized thresholds are not increasing; range is empty");
        }
    }
    GeneratorKernel kernel{m.family, m.dim(), Level::g, 0.0};
    StandardBox box{out.eta_p, out.eta_q};
    out.denom = rectangle_prob({kernel, m.dim(), std::move(box), std::nullopt, tol, seed, engine});
    if (diag) diag->push_back(out.denom);
    if (out.denom.value < kEmptyRangeFloor) {
        throw DomainError("empty-range", "range probability underflows");
    }
    return out;
}

// delta_k and its variance for all components; used by both MRVaR and MRCov.
void standardized_delta(const EllipticalModel& m, const Standardization& st, double tol,
                        std::uint64_t& seed_state, Engine engine,
                        std::vector<BoxProbability>* diag, Eigen::VectorXd* delta,
                        Eigen::VectorXd* delta_var) {
    const int n = m.dim();
    delta->resize(n);
    delta_var->resize(n);
    for (int k = 0; k < n; ++k) {
        const TermValue tp =
            reduced_term(reduce_once(m.family, n, st.eta_p[k]), st.eta_p, st.eta_q, k, -1, tol,
                         qmc::splitmix64(seed_state), engine, diag);
        const TermValue tq =
            reduced_term(reduce_once(m.family, n, st.eta_q[k]), st.eta_p, st.eta_q, k, -1, tol,
                         qmc::splitmix64(seed_state), engine, diag);
        (*delta)[k] = tp.value - tq.value;
        (*delta_var)[k] = tp.variance + tq.variance;
    }
}

void accumulate_jackknife(const std::vector<Eigen::VectorXd>& block_means,
                          const std::vector<Eigen::MatrixXd>& block_covs, OracleResult* out) {
    const int b = static_cast<int>(block_means.size());
    const int n = static_cast<int>(block_means.front().size());
    Eigen::VectorXd mean_bar = Eigen::VectorXd::Zero(n);
    Eigen::MatrixXd cov_bar = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < b; ++i) {
        mean_bar += block_means[i];
        cov_bar += block_covs[i];
    }
    mean_bar /= b;
    cov_bar /= b;
    Eigen::VectorXd mean_var = Eigen::VectorXd::Zero(n);
    Eigen::MatrixXd cov_var = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < b; ++i) {
        mean_var += (block_means[i] - mean_bar).array().square().matrix();
        cov_var += (block_covs[i] - cov_bar).array().square().matrix();
    }
    out->mrvar_std_error = (mean_var / (b * (b - 1.0))).cwiseSqrt();
    out->mrcov_std_error = (cov_var / (b * (b - 1.0))).cwiseSqrt();
}

}  // namespace

void RangeSpec::validate(int n) const {
    if (p.size() != n || q.size() != n) {
        throw DomainError("dimension", "range vectors must match the model dimension");
    }
    for (int k = 0; k < n; ++k) {
        if (!(p[k] >= 0.0 && q[k] <= 1.0)) {
            throw DomainError("probability-range", "range levels must lie in [0,1]");
        }
        if (!(p[k] < q[k])) {
            throw DomainError("degenerate-range", "ranges require p_k < q_k for every component");
        }
    }
}

double rvar(const EllipticalModel& m, double p, double q) {
    m.validate();
    if (m.dim() != 1) throw DomainError("dimension", "rvar expects a univariate model");
    RangeSpec range{Eigen::VectorXd::Constant(1, p), Eigen::VectorXd::Constant(1, q)};
    range.validate(1);
    const Marginal1D marg = Marginal1D::for_family(m.family, 1);
    const double eta_p = p == 0.0 ? -kInf : marg.quantile(p);
    const double eta_q = q == 1.0 ? kInf : marg.quantile(q);
    const double denom = marg.cdf(eta_q) - marg.cdf(eta_p);
    if (denom < kEmptyRangeFloor) throw DomainError("empty-range", "range probability underflows");
    const auto wp = reduce_once(m.family, 1, eta_p);
    const auto wq = reduce_once(m.family, 1, eta_q);
    const double delta = (wp.vanishes ? 0.0 : wp.weight) - (wq.vanishes ? 0.0 : wq.weight);
    return m.mu[0] + std::sqrt(m.sigma(0, 0)) * delta / denom;
}

double rv(const EllipticalModel& m, double p, double q) {
    m.validate();
    if (m.dim() != 1) throw DomainError("dimension", "rv expects a univariate model");
    RangeSpec range{Eigen::VectorXd::Constant(1, p), Eigen::VectorXd::Constant(1, q)};
    range.validate(1);
    const Marginal1D marg = Marginal1D::for_family(m.family, 1);
    const double eta_p = p == 0.0 ? -kInf : marg.quantile(p);
    const double eta_q = q == 1.0 ? kInf : marg.quantile(q);
    const double denom = marg.cdf(eta_q) - marg.cdf(eta_p);
    if (denom < kEmptyRangeFloor) throw DomainError("empty-range", "range probability underflows");

    const auto wp = reduce_once(m.family, 1, eta_p);
    const auto wq = reduce_once(m.family, 1, eta_q);
    const double delta = (wp.vanishes ? 0.0 : wp.weight) - (wq.vanishes ? 0.0 : wq.weight);
    // lambda = c1 [eta_p Gbar(eta_p^2/2) - eta_q Gbar(eta_q^2/2)], with the
    // infinite-threshold terms dropped analytically.
    const double lambda =
        (wp.vanishes ? 0.0 : eta_p * wp.weight) - (wq.vanishes ? 0.0 : eta_q * wq.weight);

    const auto star = associated_star_law(m.family, 1);
    const Marginal1D star_marg = Marginal1D::for_kernel(star.kernel, 1);
    const double f_star = star_marg.cdf(eta_q / star.coord_scale) -
                          star_marg.cdf(eta_p / star.coord_scale);
    const double second_moment = (lambda + star.weight * f_star) / denom;
    const double mean = delta / denom;
    return m.sigma(0, 0) * (second_moment - mean * mean);
}

VectorEstimate mrvar(const EllipticalModel& m, const RangeSpec& range, double tol,
                     std::uint64_t seed, Engine engine) {
    const int n = m.dim();
    if (n < 2) throw DomainError("dimension", "mrvar expects n >= 2 (use rvar)");
    VectorEstimate out;
    std::uint64_t seed_state = seed;
    const Standardization st =
        standardize(m, range, tol, qmc::splitmix64(seed_state), engine, &out.diagnostics);

    Eigen::VectorXd delta, delta_var;
    standardized_delta(m, st, tol, seed_state, engine, &out.diagnostics, &delta, &delta_var);

    const double d = st.denom.value;
    out.value = m.mu + st.root * delta / d;
    // First-order propagation: mrvar_i = mu_i + sum_k R_ik delta_k / D.
    const double denom_var = st.denom.std_error * st.denom.std_error;
    out.std_error.resize(n);
    for (int i = 0; i < n; ++i) {
        double v = 0.0;
        double num = 0.0;
        for (int k = 0; k < n; ++k) {
            v += st.root(i, k) * st.root(i, k) * delta_var[k];
            num += st.root(i, k) * delta[k];
        }
        out.std_error[i] = std::sqrt(v / (d * d) + num * num * denom_var / (d * d * d * d));
    }
    return out;
}

MatrixEstimate mrcov(const EllipticalModel& m, const RangeSpec& range, double tol,
                     std::uint64_t seed, Engine engine) {
    const int n = m.dim();
    if (n < 2) throw DomainError("dimension", "mrcov expects n >= 2 (use rv)");
    MatrixEstimate out;
    std::uint64_t seed_state = seed;
    const Standardization st =
        standardize(m, range, tol, qmc::splitmix64(seed_state), engine, &out.diagnostics);
    const double d = st.denom.value;
    const double denom_var = st.denom.std_error * st.denom.std_error;

    Eigen::VectorXd delta, delta_var;
    standardized_delta(m, st, tol, seed_state, engine, &out.diagnostics, &delta, &delta_var);
    const Eigen::VectorXd ymean = delta / d;
    Eigen::VectorXd ymean_var(n);
    for (int k = 0; k < n; ++k) {
        ymean_var[k] = delta_var[k] / (d * d) +
                       delta[k] * delta[k] * denom_var / (d * d * d * d);
    }

    // Y* term shared by every diagonal entry.
    const auto star = associated_star_law(m.family, n);
    StandardBox star_box{st.eta_p / star.coord_scale, st.eta_q / star.coord_scale};
    BoxProbability f_star = rectangle_prob({star.kernel, n, std::move(star_box), std::nullopt, tol,
                                            qmc::splitmix64(seed_state), engine});
    out.diagnostics.push_back(f_star);
    const double star_term = star.weight * f_star.value;
    const double star_var = star.weight * star.weight * f_star.std_error * f_star.std_error;

    Eigen::MatrixXd upsilon(n, n);
    Eigen::MatrixXd upsilon_var(n, n);
    for (int i = 0; i < n; ++i) {
        // eta-weighted one-pin terms.
        TermValue tp, tq;
        {
            const auto red_p = reduce_once(m.family, n, st.eta_p[i]);
            tp = reduced_term(red_p, st.eta_p, st.eta_q, i, -1, tol, qmc::splitmix64(seed_state),
                              engine, &out.diagnostics);
            tp.value *= st.eta_p[i] == -kInf ? 0.0 : st.eta_p[i];
            tp.variance *= st.eta_p[i] == -kInf ? 0.0 : st.eta_p[i] * st.eta_p[i];
            const auto red_q = reduce_once(m.family, n, st.eta_q[i]);
            tq = reduced_term(red_q, st.eta_p, st.eta_q, i, -1, tol, qmc::splitmix64(seed_state),
                              engine, &out.diagnostics);
            tq.value *= st.eta_q[i] == kInf ? 0.0 : st.eta_q[i];
            tq.variance *= st.eta_q[i] == kInf ? 0.0 : st.eta_q[i] * st.eta_q[i];
        }
        const double num = tp.value - tq.value + star_term;
        const double num_var = tp.variance + tq.variance + star_var;
        upsilon(i, i) = num / d - ymean[i] * ymean[i];
        upsilon_var(i, i) = num_var / (d * d) + num * num * denom_var / (d * d * d * d) +
                            4.0 * ymean[i] * ymean[i] * ymean_var[i];

        for (int j = i + 1; j < n; ++j) {
            const TermValue t_pp =
                reduced_term(reduce_twice(m.family, n, st.eta_p[i], st.eta_p[j]), st.eta_p,
                             st.eta_q, i, j, tol, qmc::splitmix64(seed_state), engine,
                             &out.diagnostics);
            const TermValue t_pq =
                reduced_term(reduce_twice(m.family, n, st.eta_p[i], st.eta_q[j]), st.eta_p,
                             st.eta_q, i, j, tol, qmc::splitmix64(seed_state), engine,
                             &out.diagnostics);
            const TermValue t_qq =
                reduced_term(reduce_twice(m.family, n, st.eta_q[i], st.eta_q[j]), st.eta_p,
                             st.eta_q, i, j, tol, qmc::splitmix64(seed_state), engine,
                             &out.diagnostics);
            const TermValue t_qp =
                reduced_term(reduce_twice(m.family, n, st.eta_p[j], st.eta_q[i]), st.eta_p,
                             st.eta_q, i, j, tol, qmc::splitmix64(seed_state), engine,
                             &out.diagnostics);
            const double cross = t_pp.value - t_pq.value + t_qq.value - t_qp.value;
            const double cross_var = t_pp.variance + t_pq.variance + t_qq.variance + t_qp.variance;
            upsilon(i, j) = cross / d - ymean[i] * ymean[j];
            upsilon_var(i, j) = cross_var / (d * d) + cross * cross * denom_var / (d * d * d * d) +
                                ymean[j] * ymean[j] * ymean_var[i] +
                                ymean[i] * ymean[i] * ymean_var[j];
            upsilon(j, i) = upsilon(i, j);
            upsilon_var(j, i) = upsilon_var(i, j);
        }
    }

    out.value = st.root * upsilon * st.root;
    out.std_error.resize(n, n);
    for (int a = 0; a < n; ++a) {
        for (int b = 0; b < n; ++b) {
            double v = 0.0;
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < n; ++j) {
                    const double w = st.root(a, i) * st.root(j, b);
                    v += w * w * upsilon_var(i, j);
                }
            }
            out.std_error(a, b) = std::sqrt(v);
        }
    }
    return out;
}

Eigen::MatrixXd mrcorr(const Eigen::MatrixXd& mrcov) {
    const int n = static_cast<int>(mrcov.rows());
    if (mrcov.cols() != n) throw DomainError("dimension", "mrcorr expects a square matrix");
    for (int i = 0; i < n; ++i) {
        if (!(mrcov(i, i) > 0.0)) {
            throw DomainError("nonpositive-diagonal", "mrcorr requires positive diagonal entries");
        }
    }
    Eigen::MatrixXd out(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            out(i, j) = i == j ? 1.0 : mrcov(i, j) / std::sqrt(mrcov(i, i) * mrcov(j, j));
        }
    }
    return out;
}

RiskReport risk_report(const EllipticalModel& m, const RangeSpec& range, double tol,
                       std::uint64_t seed, Engine engine) {
    RiskReport out;
    VectorEstimate v = mrvar(m, range, tol, seed, engine);
    MatrixEstimate c = mrcov(m, range, tol, seed, engine);
    out.mrvar = std::move(v.value);
    out.mrvar_std_error = std::move(v.std_error);
    out.mrcorr = mrcorr(c.value);
    out.mrcov = std::move(c.value);
    out.mrcov_std_error = std::move(c.std_error);
    out.diagnostics = std::move(v.diagnostics);
    out.diagnostics.insert(out.diagnostics.end(), c.diagnostics.begin(), c.diagnostics.end());
    return out;
}

namespace {

// A full elliptical law E_d(loc, scale, kernel) appearing in the x-box
// moment recursion.
struct Law {
    GeneratorKernel kernel;
    Eigen::VectorXd loc;
    Eigen::MatrixXd scale;

    int dim() const { return static_cast<int>(loc.size()); }
};

struct Face {
    bool vanishes = true;
    double weight = 0.0;  // c_d(kernel) / c_{d-1}(kernel+)
    Law reduced;          // dim d-1 (unused when d == 1)
    double point_eval = 0.0;  // d == 1: c_1(kernel) * kernel+(eta^2/2)
};

StandardBox drop_index(const StandardBox& box, int k) {
    const int n = box.dim();
    StandardBox out;
    out.lower = Eigen::VectorXd(n - 1);
    out.upper = Eigen::VectorXd(n - 1);
    int j = 0;
    for (int i = 0; i < n; ++i) {
        if (i == k) continue;
        out.lower[j] = box.lower[i];
        out.upper[j] = box.upper[i];
        ++j;
    }
    return out;
}

Eigen::VectorXd drop_entry(const Eigen::VectorXd& v, int k) {
    Eigen::VectorXd out(v.size() - 1);
    int j = 0;
    for (int i = 0; i < v.size(); ++i) {
        if (i != k) out[j++] = v[i];
    }
    return out;
}

// Pin coordinate k of the law at threshold t: conditional location, Schur
// complement scale, one generator level up with the eta^2/2 shift added.
Face pin_coordinate(const Law& law, int k, double t) {
    Face out;
    if (std::isinf(t)) return out;
    const int d = law.dim();
    const double skk = law.scale(k, k);
    const double eta2 = (t - law.loc[k]) * (t - law.loc[k]) / skk;
    GeneratorKernel up{law.kernel.family, law.kernel.ambient_n,
                       static_cast<Level>(static_cast<int>(law.kernel.level) + 1),
                       law.kernel.shift + 0.5 * eta2};
    out.vanishes = false;
    if (d == 1) {
        out.point_eval = law_norm_constant(law.kernel, 1).value * kernel_eval(up, 0.0);
        return out;
    }
    out.weight = law_norm_constant(law.kernel, d).value / law_norm_constant(up, d - 1).value;
    Eigen::VectorXd s_col = drop_entry(law.scale.col(k), k);
    out.reduced.kernel = up;
    out.reduced.loc = drop_entry(law.loc, k) + s_col * ((t - law.loc[k]) / skk);
    Eigen::MatrixXd s_rest(d - 1, d - 1);
    int a = 0;
    for (int i = 0; i < d; ++i) {
        if (i == k) continue;
        int b = 0;
        for (int j = 0; j < d; ++j) {
            if (j == k) continue;
            s_rest(a, b) = law.scale(i, j);
            ++b;
        }
        ++a;
    }
    out.reduced.scale = s_rest - s_col * s_col.transpose() / skk;
    return out;
}

BoxProbability law_prob(const Law& law, const StandardBox& box, double tol, std::uint64_t seed,
                        Engine engine, std::vector<BoxProbability>* diag) {
    BoxProbability f = elliptical_rectangle_prob(
        {law.kernel, law.loc, law.scale, box, std::nullopt, tol, seed, engine});
    if (diag) diag->push_back(f);
    return f;
}

// Unnormalized first moment U = int_box (x - loc) dens dx with first-order
// variance estimates, via the face reduction U = S * dvec.
void law_first_moment(const Law& law, const StandardBox& box, double tol,
                      std::uint64_t& seed_state, Engine engine,
                      std::vector<BoxProbability>* diag, Eigen::VectorXd* u,
                      Eigen::VectorXd* u_var) {
    const int d = law.dim();
    Eigen::VectorXd dvec = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd dvar = Eigen::VectorXd::Zero(d);
    for (int k = 0; k < d; ++k) {
        const double root_skk = std::sqrt(law.scale(k, k));
        for (int side = 0; side < 2; ++side) {
            const double t = side == 0 ? box.lower[k] : box.upper[k];
            const double sgn = side == 0 ? 1.0 : -1.0;
            const Face face = pin_coordinate(law, k, t);
            if (face.vanishes) continue;
            if (d == 1) {
                dvec[k] += sgn * face.point_eval / root_skk;
                continue;
            }
            const StandardBox sub = drop_index(box, k);
            BoxProbability f =
                law_prob(face.reduced, sub, tol, qmc::splitmix64(seed_state), engine, diag);
            dvec[k] += sgn * face.weight * f.value / root_skk;
            const double se = face.weight * f.std_error / root_skk;
            dvar[k] += se * se;
        }
    }
    *u = law.scale * dvec;
    u_var->resize(d);
    for (int i = 0; i < d; ++i) {
        double v = 0.0;
        for (int k = 0; k < d; ++k) v += law.scale(i, k) * law.scale(i, k) * dvar[k];
        (*u_var)[i] = v;
    }
}

// Unnormalized second moment U2 = int_box (x-loc)(x-loc)' dens dx through the
// T-matrix of face contributions: U2 = sym(T * S).
void law_second_moment(const Law& law, const StandardBox& box, double tol,
                       std::uint64_t& seed_state, Engine engine,
                       std::vector<BoxProbability>* diag, Eigen::MatrixXd* u2,
                       Eigen::MatrixXd* u2_var) {
    const int d = law.dim();
    Eigen::MatrixXd t_mat = Eigen::MatrixXd::Zero(d, d);
    Eigen::MatrixXd t_var = Eigen::MatrixXd::Zero(d, d);

    // Full-box one-level-up term shared by the diagonal.
    GeneratorKernel up{law.kernel.family, law.kernel.ambient_n,
                       static_cast<Level>(static_cast<int>(law.kernel.level) + 1),
                       law.kernel.shift};
    const double c_ratio =
        law_norm_constant(law.kernel, d).value / law_norm_constant(up, d).value;
    Law law_up{up, law.loc, law.scale};
    BoxProbability f_up = law_prob(law_up, box, tol, qmc::splitmix64(seed_state), engine, diag);
    for (int l = 0; l < d; ++l) {
        t_mat(l, l) += c_ratio * f_up.value;
        const double se = c_ratio * f_up.std_error;
        t_var(l, l) += se * se;
    }

    for (int l = 0; l < d; ++l) {
        const double root_sll = std::sqrt(law.scale(l, l));
        for (int side = 0; side < 2; ++side) {
            const double t = side == 0 ? box.lower[l] : box.upper[l];
            const double sgn = side == 0 ? 1.0 : -1.0;
            const Face face = pin_coordinate(law, l, t);
            if (face.vanishes) continue;
            if (d == 1) {
                t_mat(0, 0) += sgn * (t - law.loc[0]) * face.point_eval / root_sll;
                continue;
            }
            const StandardBox sub = drop_index(box, l);
            BoxProbability f =
                law_prob(face.reduced, sub, tol, qmc::splitmix64(seed_state), engine, diag);
            Eigen::VectorXd u_sub, u_sub_var;
            law_first_moment(face.reduced, sub, tol, seed_state, engine, diag, &u_sub,
                             &u_sub_var);
            const double w = sgn * face.weight / root_sll;
            // diagonal: (t - loc_l) times the plain face probability
            t_mat(l, l) += w * (t - law.loc[l]) * f.value;
            t_var(l, l) += w * w * (t - law.loc[l]) * (t - law.loc[l]) * f.std_error *
                           f.std_error;
            // off-diagonal: conditional-location offset plus the reduced first
            // moment
            int a = 0;
            for (int i = 0; i < d; ++i) {
                if (i == l) continue;
                const double offset = face.reduced.loc[a] - law.loc[i];
                t_mat(i, l) += w * (offset * f.value + u_sub[a]);
                t_var(i, l) += w * w * (offset * offset * f.std_error * f.std_error +
                                        u_sub_var[a]);
                ++a;
            }
        }
    }

    const Eigen::MatrixXd raw = t_mat * law.scale;
    *u2 = 0.5 * (raw + raw.transpose());
    u2_var->resize(d, d);
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
            double v = 0.0;
            for (int k = 0; k < d; ++k) {
                v += t_var(i, k) * law.scale(k, j) * law.scale(k, j);
            }
            (*u2_var)(i, j) = v;
        }
    }
}

StandardBox definition_event_box(const EllipticalModel& m, const RangeSpec& range) {
    StandardBox box;
    box.lower = marginal_var_vector(m, range.p);
    box.upper = marginal_var_vector(m, range.q);
    return box;
}

}  // namespace

VectorEstimate mrvar_xbox(const EllipticalModel& m, const RangeSpec& range, double tol,
                          std::uint64_t seed, Engine engine) {
    m.validate();
    range.validate(m.dim());
    VectorEstimate out;
    std::uint64_t seed_state = seed;
    const StandardBox box = definition_event_box(m, range);
    const Law law{{m.family, m.dim(), Level::g, 0.0}, m.mu, m.sigma};
    const BoxProbability f =
        law_prob(law, box, tol, qmc::splitmix64(seed_state), engine, &out.diagnostics);
    if (f.value < kEmptyRangeFloor) {
        throw DomainError("empty-range", "range probability underflows");
    }
    Eigen::VectorXd u, u_var;
    law_first_moment(law, box, tol, seed_state, engine, &out.diagnostics, &u, &u_var);
    out.value = m.mu + u / f.value;
    out.std_error.resize(m.dim());
    const double fv = f.value, f_var = f.std_error * f.std_error;
    for (int i = 0; i < m.dim(); ++i) {
        out.std_error[i] =
            std::sqrt(u_var[i] / (fv * fv) + u[i] * u[i] * f_var / (fv * fv * fv * fv));
    }
    return out;
}

MatrixEstimate mrcov_xbox(const EllipticalModel& m, const RangeSpec& range, double tol,
                          std::uint64_t seed, Engine engine) {
    m.validate();
    range.validate(m.dim());
    const int n = m.dim();
    MatrixEstimate out;
    std::uint64_t seed_state = seed;
    const StandardBox box = definition_event_box(m, range);
    const Law law{{m.family, n, Level::g, 0.0}, m.mu, m.sigma};
    const BoxProbability f =
        law_prob(law, box, tol, qmc::splitmix64(seed_state), engine, &out.diagnostics);
    if (f.value < kEmptyRangeFloor) {
        throw DomainError("empty-range", "range probability underflows");
    }
    Eigen::VectorXd u, u_var;
    law_first_moment(law, box, tol, seed_state, engine, &out.diagnostics, &u, &u_var);
    Eigen::MatrixXd u2, u2_var;
    law_second_moment(law, box, tol, seed_state, engine, &out.diagnostics, &u2, &u2_var);

    const double fv = f.value, f_var = f.std_error * f.std_error;
    const Eigen::VectorXd mean_c = u / fv;
    out.value = u2 / fv - mean_c * mean_c.transpose();
    out.std_error.resize(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            double v = u2_var(i, j) / (fv * fv) +
                       u2(i, j) * u2(i, j) * f_var / (fv * fv * fv * fv);
            v += mean_c[j] * mean_c[j] *
                     (u_var[i] / (fv * fv) + u[i] * u[i] * f_var / (fv * fv * fv * fv)) +
                 mean_c[i] * mean_c[i] *
                     (u_var[j] / (fv * fv) + u[j] * u[j] * f_var / (fv * fv * fv * fv));
            out.std_error(i, j) = std::sqrt(v);
        }
    }
    return out;
}

RiskReport risk_report_xbox(const EllipticalModel& m, const RangeSpec& range, double tol,
                            std::uint64_t seed, Engine engine) {
    RiskReport out;
    VectorEstimate v = mrvar_xbox(m, range, tol, seed, engine);
    MatrixEstimate c = mrcov_xbox(m, range, tol, seed, engine);
    out.mrvar = std::move(v.value);
    out.mrvar_std_error = std::move(v.std_error);
    out.mrcorr = mrcorr(c.value);
    out.mrcov = std::move(c.value);
    out.mrcov_std_error = std::move(c.std_error);
    out.diagnostics = std::move(v.diagnostics);
    out.diagnostics.insert(out.diagnostics.end(), c.diagnostics.begin(), c.diagnostics.end());
    return out;
}

LogEllipticalModel LogEllipticalModel::log_normal(Eigen::VectorXd mu, Eigen::MatrixXd sigma) {
    LogEllipticalModel m{std::move(mu), std::move(sigma), GeneratorFamily::normal(),
                         [](double u) { return std::exp(-u); }};
    m.validate();
    return m;
}

LogEllipticalModel LogEllipticalModel::log_laplace(Eigen::VectorXd mu, Eigen::MatrixXd sigma) {
    LogEllipticalModel m{std::move(mu), std::move(sigma), GeneratorFamily::laplace(),
                         [](double u) { return 1.0 / (1.0 + u); }};
    m.validate();
    return m;
}

void LogEllipticalModel::validate() const {
    EllipticalModel base{mu, sigma, family};
    base.validate();
    if (!psi) throw DomainError("divergent-psi", "log-elliptical model needs a psi handle");
    for (int k = 0; k < dim(); ++k) {
        const double v = psi(-0.5 * sigma(k, k));
        if (!std::isfinite(v) || v <= 0.0) {
            throw DomainError("divergent-psi", "psi(-sigma_kk/2) must be finite and positive");
        }
        for (int j = 0; j < dim(); ++j) {
            const double arg = -0.5 * (sigma(k, k) + 2.0 * sigma(k, j) + sigma(j, j));
            const double w = psi(arg);
            if (!std::isfinite(w) || w <= 0.0) {
                throw DomainError("divergent-psi",
                                  "psi(-(sigma_kk+2sigma_kj+sigma_jj)/2) must be finite");
            }
        }
    }
}

VectorEstimate log_mrvar(const LogEllipticalModel& m, const RangeSpec& range, double tol,
                         std::uint64_t seed, Engine engine) {
    m.validate();
    range.validate(m.dim());
    const int n = m.dim();
    VectorEstimate out;
    std::uint64_t seed_state = seed;
    EllipticalModel base{m.mu, m.sigma, m.family};
    StandardBox box;
    box.lower = marginal_var_vector(base, range.p);
    box.upper = marginal_var_vector(base, range.q);
    const GeneratorKernel kernel{m.family, n, Level::g, 0.0};

    const BoxProbability f = elliptical_rectangle_prob(
        {kernel, m.mu, m.sigma, box, std::nullopt, tol, qmc::splitmix64(seed_state), engine});
    out.diagnostics.push_back(f);
    if (f.value < kEmptyRangeFloor) {
        throw DomainError("empty-range", "range probability underflows");
    }
    const double d = f.value;
    const double denom_var = f.std_error * f.std_error;

    out.value.resize(n);
    out.std_error.resize(n);
    for (int k = 0; k < n; ++k) {
        Eigen::VectorXd tilt = Eigen::VectorXd::Zero(n);
        tilt[k] = 1.0;
        BoxProbability tk = elliptical_rectangle_prob(
            {kernel, m.mu, m.sigma, box, std::move(tilt), tol, qmc::splitmix64(seed_state),
             engine});
        out.diagnostics.push_back(tk);
        out.value[k] = std::exp(m.mu[k]) * tk.value / d;
        const double rel2 =
            tk.std_error * tk.std_error / std::max(tk.value * tk.value, 1e-300) +
            denom_var / (d * d);
        out.std_error[k] = std::abs(out.value[k]) * std::sqrt(rel2);
    }
    return out;
}

MatrixEstimate log_mrcov(const LogEllipticalModel& m, const RangeSpec& range, double tol,
                         std::uint64_t seed, Engine engine) {
    m.validate();
    range.validate(m.dim());
    const int n = m.dim();
    MatrixEstimate out;
    std::uint64_t seed_state = seed;
    EllipticalModel base{m.mu, m.sigma, m.family};
    StandardBox box;
    box.lower = marginal_var_vector(base, range.p);
    box.upper = marginal_var_vector(base, range.q);
    const GeneratorKernel kernel{m.family, n, Level::g, 0.0};

    const BoxProbability f = elliptical_rectangle_prob(
        {kernel, m.mu, m.sigma, box, std::nullopt, tol, qmc::splitmix64(seed_state), engine});
    out.diagnostics.push_back(f);
    if (f.value < kEmptyRangeFloor) {
        throw DomainError("empty-range", "range probability underflows");
    }
    const double d = f.value;
    const double denom_var = f.std_error * f.std_error;

    Eigen::VectorXd t1(n), t1_var(n);
    for (int k = 0; k < n; ++k) {
        Eigen::VectorXd tilt = Eigen::VectorXd::Zero(n);
        tilt[k] = 1.0;
        BoxProbability tk = elliptical_rectangle_prob(
            {kernel, m.mu, m.sigma, box, std::move(tilt), tol, qmc::splitmix64(seed_state),
             engine});
        out.diagnostics.push_back(tk);
        t1[k] = tk.value;
        t1_var[k] = tk.std_error * tk.std_error;
    }

    out.value.resize(n, n);
    out.std_error.resize(n, n);
    for (int k = 0; k < n; ++k) {
        for (int j = k; j < n; ++j) {
            Eigen::VectorXd tilt = Eigen::VectorXd::Zero(n);
            tilt[k] += 1.0;
            tilt[j] += 1.0;
            BoxProbability tkj = elliptical_rectangle_prob(
                {kernel, m.mu, m.sigma, box, std::move(tilt), tol, qmc::splitmix64(seed_state),
                 engine});
            out.diagnostics.push_back(tkj);
            const double scale = std::exp(m.mu[k] + m.mu[j]);
            const double second = tkj.value / d;
            const double cross = t1[k] * t1[j] / (d * d);
            out.value(k, j) = scale * (second - cross);
            double var = tkj.std_error * tkj.std_error / (d * d) +
                         tkj.value * tkj.value * denom_var / (d * d * d * d);
            var += (t1[j] * t1[j] * t1_var[k] + t1[k] * t1[k] * t1_var[j]) / (d * d * d * d);
            var += 4.0 * cross * cross * denom_var / (d * d);
            out.std_error(k, j) = scale * std::sqrt(var);
            out.value(j, k) = out.value(k, j);
            out.std_error(j, k) = out.std_error(k, j);
        }
    }
    return out;
}

OracleResult oracle_risk(const EllipticalModel& m, const RangeSpec& range, OracleMode mode,
                         long draws, std::uint64_t seed) {
    m.validate();
    range.validate(m.dim());
    if (draws < 10000) throw DomainError("dimension", "oracle needs at least 1e4 draws");
    const int n = m.dim();
    const Eigen::MatrixXd root = sqrt_matrix(m.sigma);
    const Marginal1D marg = Marginal1D::for_family(m.family, n);
    const Eigen::VectorXd eta_p = standardized_thresholds(m, root, range.p, marg);
    const Eigen::VectorXd eta_q = standardized_thresholds(m, root, range.q, marg);
    const Eigen::VectorXd var_p = marginal_var_vector(m, range.p);
    const Eigen::VectorXd var_q = marginal_var_vector(m, range.q);

    const EllipticalSampler sampler({m.family, n, Level::g, 0.0}, n);
    constexpr int kBlocks = 100;
    const long per_block = draws / kBlocks;
    std::uint64_t seed_state = seed;

    std::vector<Eigen::VectorXd> block_means;
    std::vector<Eigen::MatrixXd> block_covs;
    block_means.reserve(kBlocks);
    block_covs.reserve(kBlocks);
    long accepted_total = 0;

    Eigen::VectorXd sum = Eigen::VectorXd::Zero(n);
    Eigen::MatrixXd sum2 = Eigen::MatrixXd::Zero(n, n);
    for (int b = 0; b < kBlocks; ++b) {
        const Eigen::MatrixXd y = sampler.sample(per_block, qmc::splitmix64(seed_state));
        Eigen::VectorXd bsum = Eigen::VectorXd::Zero(n);
        Eigen::MatrixXd bsum2 = Eigen::MatrixXd::Zero(n, n);
        long baccept = 0;
        for (long i = 0; i < per_block; ++i) {
            bool in = true;
            Eigen::VectorXd x;
            if (mode == OracleMode::YBox) {
                for (int k = 0; k < n && in; ++k) {
                    in = y(i, k) >= eta_p[k] && y(i, k) <= eta_q[k];
                }
                if (!in) continue;
                x = m.mu + root * y.row(i).transpose();
            } else {
                x = m.mu + root * y.row(i).transpose();
                for (int k = 0; k < n && in; ++k) {
                    in = x[k] >= var_p[k] && x[k] <= var_q[k];
                }
                if (!in) continue;
            }
            ++baccept;
            bsum += x;
            bsum2 += x * x.transpose();
        }
        if (baccept == 0) {
            // Keep block counts aligned; an empty block contributes the
            // running global moments so the jackknife stays defined.
            continue;
        }
        accepted_total += baccept;
        sum += bsum;
        sum2 += bsum2;
        const Eigen::VectorXd bm = bsum / baccept;
        block_means.push_back(bm);
        block_covs.push_back(bsum2 / baccept - bm * bm.transpose());
    }
    if (accepted_total < 1000) {
        throw DomainError("too-few-accepted-samples",
                          "fewer than 1e3 samples landed in the range event");
    }

    OracleResult out;
    out.draws = per_block * kBlocks;
    out.accepted = accepted_total;
    const Eigen::VectorXd mean = sum / accepted_total;
    out.mrvar = mean;
    out.mrcov = sum2 / accepted_total - mean * mean.transpose();
    accumulate_jackknife(block_means, block_covs, &out);
    return out;
}

OracleResult oracle_log_risk(const LogEllipticalModel& m, const RangeSpec& range, long draws,
                             std::uint64_t seed) {
    m.validate();
    range.validate(m.dim());
    if (draws < 10000) throw DomainError("dimension", "oracle needs at least 1e4 draws");
    const int n = m.dim();
    EllipticalModel base{m.mu, m.sigma, m.family};
    const Eigen::MatrixXd root = sqrt_matrix(m.sigma);
    const Eigen::VectorXd var_p = marginal_var_vector(base, range.p);
    const Eigen::VectorXd var_q = marginal_var_vector(base, range.q);

    const EllipticalSampler sampler({m.family, n, Level::g, 0.0}, n);
    constexpr int kBlocks = 100;
    const long per_block = draws / kBlocks;
    std::uint64_t seed_state = seed;

    std::vector<Eigen::VectorXd> block_means;
    std::vector<Eigen::MatrixXd> block_covs;
    long accepted_total = 0;
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(n);
    Eigen::MatrixXd sum2 = Eigen::MatrixXd::Zero(n, n);

    for (int b = 0; b < kBlocks; ++b) {
        const Eigen::MatrixXd y = sampler.sample(per_block, qmc::splitmix64(seed_state));
        Eigen::VectorXd bsum = Eigen::VectorXd::Zero(n);
        Eigen::MatrixXd bsum2 = Eigen::MatrixXd::Zero(n, n);
        long baccept = 0;
        for (long i = 0; i < per_block; ++i) {
            const Eigen::VectorXd x = m.mu + root * y.row(i).transpose();
            bool in = true;
            for (int k = 0; k < n && in; ++k) in = x[k] >= var_p[k] && x[k] <= var_q[k];
            if (!in) continue;
            const Eigen::VectorXd z = x.array().exp().matrix();
            ++baccept;
            bsum += z;
            bsum2 += z * z.transpose();
        }
        if (baccept == 0) continue;
        accepted_total += baccept;
        sum += bsum;
        sum2 += bsum2;
        const Eigen::VectorXd bm = bsum / baccept;
        block_means.push_back(bm);
        block_covs.push_back(bsum2 / baccept - bm * bm.transpose());
    }
    if (accepted_total < 1000) {
        throw DomainError("too-few-accepted-samples",
                          "fewer than 1e3 samples landed in the range event");
    }
    OracleResult out;
    out.draws = per_block * kBlocks;
    out.accepted = accepted_total;
    const Eigen::VectorXd mean = sum / accepted_total;
    out.mrvar = mean;
    out.mrcov = sum2 / accepted_total - mean * mean.transpose();
    accumulate_jackknife(block_means, block_covs, &out);
    return out;
}

}  // namespace rangerisk
