#include "rangerisk/portfolio.hpp"

#include <cmath>

namespace rangerisk {

void FrontierInput::validate() const {
    const int n = static_cast<int>(mrvar.size());
    if (n < 2) throw DomainError("dimension", "portfolio needs at least two assets");
    if (mrcov.rows() != n || mrcov.cols() != n) {
        throw DomainError("dimension", "mrcov shape does not match mrvar");
    }
    if (!mrcov.isApprox(mrcov.transpose(), 1e-10)) {
        throw DomainError("not-positive-definite", "mrcov must be symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(mrcov, Eigen::EigenvaluesOnly);
    const auto& ev = es.eigenvalues();
    if (!(ev(0) > 0.0) || ev(ev.size() - 1) / ev(0) > 1e12) {
        throw DomainError("singular-mrcov", "mrcov is singular or too ill-conditioned");
    }
}

FrontierPoint optimal_weights(const FrontierInput& input, double mu0) {
    input.validate();
    const int n = static_cast<int>(input.mrvar.size());
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);

    const Eigen::LLT<Eigen::MatrixXd> llt(input.mrcov);
    if (llt.info() != Eigen::Success) {
        throw DomainError("singular-mrcov", "mrcov factorization failed");
    }
    const Eigen::VectorXd cim = llt.solve(input.mrvar);
    const Eigen::VectorXd ci1 = llt.solve(ones);

    FrontierPoint out;
    out.mu0 = mu0;
    out.a = input.mrvar.dot(cim);
    out.b = ones.dot(cim);
    out.c = ones.dot(ci1);
    out.d = out.a * out.c - out.b * out.b;
    if (std::abs(out.d) < 1e-12 * std::abs(out.a * out.c)) {
        throw DomainError("degenerate-frontier",
                          "mrvar is proportional to the ones vector (d = ac - b^2 ~ 0)");
    }
    out.weights = ((out.a * ci1 - out.b * cim) + mu0 * (out.c * cim - out.b * ci1)) / out.d;
    out.variance = (out.c * mu0 * mu0 - 2.0 * out.b * mu0 + out.a) / out.d;
    return out;
}

std::vector<FrontierPoint> frontier(const FrontierInput& input,
                                    const std::vector<double>& targets) {
    if (targets.empty()) throw DomainError("dimension", "frontier needs at least one target");
    std::vector<FrontierPoint> out;
    out.reserve(targets.size());
    for (double mu0 : targets) out.push_back(optimal_weights(input, mu0));
    return out;
}

}  // namespace rangerisk
