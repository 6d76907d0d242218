#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "rangerisk/distributions.hpp"

namespace rangerisk {

// T x n panel of log-returns. Rows with gaps are rejected at ingestion.
struct ReturnPanel {
    Eigen::MatrixXd observations;
    std::vector<std::string> asset_labels;

    int assets() const { return static_cast<int>(observations.cols()); }
    long rows() const { return observations.rows(); }
    void validate() const;
};

struct FitResult {
    EllipticalModel model;
    double loglik = 0.0;
    int iterations = 0;
    bool converged = false;
};

enum class DofMode { Fixed, Profile };

// Sample mean and T-denominator covariance.
FitResult fit_normal(const ReturnPanel& panel);

// EM for the multivariate Student-t scale form St_n(mu, Sigma, m). With
// DofMode::Profile the dof maximizes the profile likelihood over
// m in [2.1, 100] by golden-section search.
FitResult fit_student_t(const ReturnPanel& panel, DofMode dof_mode, double fixed_dof = 6.0);

// Log-likelihood of a Student-t model on a panel (exposed for tests).
double student_t_loglik(const ReturnPanel& panel, const Eigen::VectorXd& mu,
                        const Eigen::MatrixXd& sigma, double dof);

}  // namespace rangerisk
