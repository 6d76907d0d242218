#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "rangerisk/distributions.hpp"

namespace rangerisk {

// Probability ranges: 0 <= p_k < q_k <= 1; endpoints 0/1 encode -inf/+inf
// VaR thresholds.
struct RangeSpec {
    Eigen::VectorXd p;
    Eigen::VectorXd q;

    int dim() const { return static_cast<int>(p.size()); }
    void validate(int n) const;
};

struct VectorEstimate {
    Eigen::VectorXd value;
    Eigen::VectorXd std_error;
    std::vector<BoxProbability> diagnostics;
};

struct MatrixEstimate {
    Eigen::MatrixXd value;
    Eigen::MatrixXd std_error;
    std::vector<BoxProbability> diagnostics;
};

struct RiskReport {
    Eigen::VectorXd mrvar;
    Eigen::MatrixXd mrcov;
    Eigen::MatrixXd mrcorr;
    Eigen::VectorXd mrvar_std_error;
    Eigen::MatrixXd mrcov_std_error;
    std::vector<BoxProbability> diagnostics;
};

// Univariate range measures.
double rvar(const EllipticalModel& m, double p, double q);
double rv(const EllipticalModel& m, double p, double q);

// Multivariate range measures on an elliptical model (n >= 2).
VectorEstimate mrvar(const EllipticalModel& m, const RangeSpec& range, double tol = 1e-7,
                     std::uint64_t seed = 42, Engine engine = Engine::Auto);
MatrixEstimate mrcov(const EllipticalModel& m, const RangeSpec& range, double tol = 1e-7,
                     std::uint64_t seed = 42, Engine engine = Engine::Auto);
Eigen::MatrixXd mrcorr(const Eigen::MatrixXd& mrcov);

RiskReport risk_report(const EllipticalModel& m, const RangeSpec& range, double tol = 1e-7,
                       std::uint64_t seed = 42, Engine engine = Engine::Auto);

// Conditional mean / covariance on the literal componentwise VaR event
// {VaR_p <= X <= VaR_q} in X space. For diagonal scale matrices these agree
// with mrvar/mrcov; for non-diagonal ones they condition on the definition
// event rather than on the transformed coordinate box. Computed by the same
// integration-by-parts reduction threaded through conditional locations and
// Schur-complement scales.
VectorEstimate mrvar_xbox(const EllipticalModel& m, const RangeSpec& range, double tol = 1e-7,
                          std::uint64_t seed = 42, Engine engine = Engine::Auto);
MatrixEstimate mrcov_xbox(const EllipticalModel& m, const RangeSpec& range, double tol = 1e-7,
                          std::uint64_t seed = 42, Engine engine = Engine::Auto);

RiskReport risk_report_xbox(const EllipticalModel& m, const RangeSpec& range, double tol = 1e-7,
                            std::uint64_t seed = 42, Engine engine = Engine::Auto);

// Log-elliptical model: Z with ln Z ~ E_n(mu, Sigma, g_n). psi is the
// characteristic generator handle used for validity checks; the moment
// formulas are evaluated through tilted rectangle integrals in which the psi
// normalization cancels.
struct LogEllipticalModel {
    Eigen::VectorXd mu;
    Eigen::MatrixXd sigma;
    GeneratorFamily family;
    std::function<double(double)> psi;

    static LogEllipticalModel log_normal(Eigen::VectorXd mu, Eigen::MatrixXd sigma);
    static LogEllipticalModel log_laplace(Eigen::VectorXd mu, Eigen::MatrixXd sigma);

    int dim() const { return static_cast<int>(mu.size()); }
    void validate() const;
};

VectorEstimate log_mrvar(const LogEllipticalModel& m, const RangeSpec& range, double tol = 1e-7,
                         std::uint64_t seed = 42, Engine engine = Engine::Auto);
MatrixEstimate log_mrcov(const LogEllipticalModel& m, const RangeSpec& range, double tol = 1e-7,
                         std::uint64_t seed = 42, Engine engine = Engine::Auto);

// Monte-Carlo oracle. y_box conditions on eta_p <= Sigma^{-1/2}(X-mu) <= eta_q
// (the coordinate box used by the closed formulas); x_box conditions on the
// literal componentwise VaR event in X space. The two differ for non-diagonal
// scale matrices.
enum class OracleMode { YBox, XBox };

struct OracleResult {
    Eigen::VectorXd mrvar;
    Eigen::VectorXd mrvar_std_error;
    Eigen::MatrixXd mrcov;
    Eigen::MatrixXd mrcov_std_error;
    long draws = 0;
    long accepted = 0;
};

OracleResult oracle_risk(const EllipticalModel& m, const RangeSpec& range, OracleMode mode,
                         long draws, std::uint64_t seed);

// Conditional moments of exp(X) for ln Z elliptical; the log-elliptical check.
OracleResult oracle_log_risk(const LogEllipticalModel& m, const RangeSpec& range, long draws,
                             std::uint64_t seed);

}  // namespace rangerisk
