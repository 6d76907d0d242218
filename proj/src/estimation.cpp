#include "rangerisk/estimation.hpp"

#include <cmath>

namespace rangerisk {
namespace {

constexpr double kDofLo = 2.1;
constexpr double kDofHi = 100.0;
constexpr int kMaxIter = 500;
constexpr double kLoglikTol = 1e-9;

Eigen::MatrixXd centered(const ReturnPanel& panel, const Eigen::VectorXd& mu) {
    return panel.observations.rowwise() - mu.transpose();
}

struct EmRun {
    Eigen::VectorXd mu;
    Eigen::MatrixXd sigma;
    double loglik = -std::numeric_limits<double>::infinity();
    int iterations = 0;
    bool converged = false;
};

// One EM pass at fixed dof. Monotone in the log-likelihood; asserts it.
EmRun em_fixed_dof(const ReturnPanel& panel, double dof) {
    const long t_obs = panel.rows();
    const int n = panel.assets();

    EmRun run;
    run.mu = panel.observations.colwise().mean();
    {
        const Eigen::MatrixXd c = centered(panel, run.mu);
        run.sigma = c.transpose() * c / static_cast<double>(t_obs);
    }

    double prev = -std::numeric_limits<double>::infinity();
    Eigen::VectorXd w(t_obs);
    for (int it = 0; it < kMaxIter; ++it) {
        run.iterations = it + 1;
        Eigen::LLT<Eigen::MatrixXd> llt(run.sigma);
        if (llt.info() != Eigen::Success) {
            throw DomainError("rank-deficient", "scatter matrix lost positive definiteness");
        }
        const Eigen::MatrixXd c = centered(panel, run.mu);
        const Eigen::MatrixXd solved = llt.solve(c.transpose());
        double loglik = 0.0;
        const double logdet = 2.0 * Eigen::MatrixXd(llt.matrixL()).diagonal().array().log().sum();
        const double lognorm = std::lgamma(0.5 * (dof + n)) - std::lgamma(0.5 * dof) -
                               0.5 * n * std::log(dof * M_PI) - 0.5 * logdet;
        for (long i = 0; i < t_obs; ++i) {
            const double d2 = c.row(i).dot(solved.col(i));
            w[i] = (dof + n) / (dof + d2);
            loglik += lognorm - 0.5 * (dof + n) * std::log1p(d2 / dof);
        }
        if (loglik + 1e-8 * (1.0 + std::abs(loglik)) < prev) {
            throw DomainError("em-monotonicity", "EM log-likelihood decreased");
        }
        run.loglik = loglik;
        if (loglik - prev < kLoglikTol && it > 0) {
            run.converged = true;
            break;
        }
        prev = loglik;

        const double wsum = w.sum();
        const Eigen::VectorXd mu_new = (panel.observations.transpose() * w) / wsum;
        const Eigen::MatrixXd c_new = centered(panel, mu_new);
        Eigen::MatrixXd scatter = Eigen::MatrixXd::Zero(n, n);
        for (long i = 0; i < t_obs; ++i) {
            scatter.noalias() += w[i] * c_new.row(i).transpose() * c_new.row(i);
        }
        run.mu = mu_new;
        run.sigma = scatter / static_cast<double>(t_obs);
    }
    return run;
}

}  // namespace

void ReturnPanel::validate() const {
    if (rows() <= assets()) {
        throw DomainError("rank-deficient", "panel needs more rows than assets");
    }
    if (!observations.allFinite()) {
        throw DomainError("missing-values", "panel contains non-finite entries");
    }
}

FitResult fit_normal(const ReturnPanel& panel) {
    panel.validate();
    const long t_obs = panel.rows();
    FitResult out;
    out.model.mu = panel.observations.colwise().mean();
    const Eigen::MatrixXd c = centered(panel, out.model.mu);
    out.model.sigma = c.transpose() * c / static_cast<double>(t_obs);
    out.model.family = GeneratorFamily::normal();
    out.iterations = 1;
    out.converged = true;

    Eigen::LLT<Eigen::MatrixXd> llt(out.model.sigma);
    if (llt.info() != Eigen::Success) {
        throw DomainError("rank-deficient", "sample covariance is singular");
    }
    const double logdet = 2.0 * Eigen::MatrixXd(llt.matrixL()).diagonal().array().log().sum();
    const Eigen::MatrixXd solved = llt.solve(c.transpose());
    double quad = 0.0;
    for (long i = 0; i < t_obs; ++i) quad += c.row(i).dot(solved.col(i));
    out.loglik = -0.5 * t_obs * (panel.assets() * std::log(2.0 * M_PI) + logdet) - 0.5 * quad;
    return out;
}

double student_t_loglik(const ReturnPanel& panel, const Eigen::VectorXd& mu,
                        const Eigen::MatrixXd& sigma, double dof) {
    const long t_obs = panel.rows();
    const int n = panel.assets();
    Eigen::LLT<Eigen::MatrixXd> llt(sigma);
    if (llt.info() != Eigen::Success) {
        throw DomainError("rank-deficient", "sigma not positive definite");
    }
    const double logdet = 2.0 * Eigen::MatrixXd(llt.matrixL()).diagonal().array().log().sum();
    const double lognorm = std::lgamma(0.5 * (dof + n)) - std::lgamma(0.5 * dof) -
                           0.5 * n * std::log(dof * M_PI) - 0.5 * logdet;
    const Eigen::MatrixXd c = panel.observations.rowwise() - mu.transpose();
    const Eigen::MatrixXd solved = llt.solve(c.transpose());
    double loglik = 0.0;
    for (long i = 0; i < t_obs; ++i) {
        loglik += lognorm - 0.5 * (dof + n) * std::log1p(c.row(i).dot(solved.col(i)) / dof);
    }
    return loglik;
}

FitResult fit_student_t(const ReturnPanel& panel, DofMode dof_mode, double fixed_dof) {
    panel.validate();
    if (panel.rows() <= panel.assets() + 4) {
        throw DomainError("rank-deficient", "panel too short for a Student-t fit");
    }

    auto finish = [&](const EmRun& run, double dof) {
        FitResult out;
        out.model.mu = run.mu;
        out.model.sigma = run.sigma;
        out.model.family = GeneratorFamily::student_t(dof);
        out.loglik = run.loglik;
        out.iterations = run.iterations;
        out.converged = run.converged;
        out.model.validate();
        return out;
    };

    if (dof_mode == DofMode::Fixed) {
        if (!(fixed_dof > 0.0)) throw DomainError("moment-condition", "dof must be positive");
        return finish(em_fixed_dof(panel, fixed_dof), fixed_dof);
    }

    // Golden-section search on the profile likelihood over the dof bracket.
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double lo = kDofLo, hi = kDofHi;
    double x1 = hi - gr * (hi - lo);
    double x2 = lo + gr * (hi - lo);
    double f1 = em_fixed_dof(panel, x1).loglik;
    double f2 = em_fixed_dof(panel, x2).loglik;
    for (int it = 0; it < 60 && hi - lo > 1e-4 * (1.0 + lo); ++it) {
        if (f1 < f2) {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + gr * (hi - lo);
            f2 = em_fixed_dof(panel, x2).loglik;
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - gr * (hi - lo);
            f1 = em_fixed_dof(panel, x1).loglik;
        }
    }
    const double dof = 0.5 * (lo + hi);
    return finish(em_fixed_dof(panel, dof), dof);
}

}  // namespace rangerisk
