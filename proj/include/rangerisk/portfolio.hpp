#pragma once

#include <Eigen/Dense>
#include <vector>

#include "rangerisk/errors.hpp"

namespace rangerisk {

// Inputs of the range-based mean-variance problem: minimize w' C w subject to
// 1'w = 1 and m'w = mu0, with m the MRVaR vector and C the MRCov matrix.
struct FrontierInput {
    Eigen::VectorXd mrvar;
    Eigen::MatrixXd mrcov;

    void validate() const;
};

struct FrontierPoint {
    double mu0 = 0.0;
    Eigen::VectorXd weights;
    double variance = 0.0;
    double a = 0.0, b = 0.0, c = 0.0, d = 0.0;
};

// Closed-form optimal weights:
// w* = (1/d) { a C^{-1}1 - b C^{-1}m + mu0 (c C^{-1}m - b C^{-1}1) },
// a = m'C^{-1}m, b = 1'C^{-1}m, c = 1'C^{-1}1, d = ac - b^2.
FrontierPoint optimal_weights(const FrontierInput& input, double mu0);

std::vector<FrontierPoint> frontier(const FrontierInput& input,
                                    const std::vector<double>& targets);

}  // namespace rangerisk
