#include <cmath>
#include <random>

#include "doctest.h"
#include "rangerisk/portfolio.hpp"

using namespace rangerisk;

namespace {

// Independent oracle: the equality-constrained QP solved via its KKT system.
Eigen::VectorXd kkt_oracle(const Eigen::MatrixXd& cov, const Eigen::VectorXd& mean, double mu0) {
    const int n = static_cast<int>(mean.size());
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + 2, n + 2);
    kkt.topLeftCorner(n, n) = 2.0 * cov;
    kkt.block(0, n, n, 1) = Eigen::VectorXd::Ones(n);
    kkt.block(0, n + 1, n, 1) = mean;
    kkt.block(n, 0, 1, n) = Eigen::RowVectorXd::Ones(n);
    kkt.block(n + 1, 0, 1, n) = mean.transpose();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + 2);
    rhs[n] = 1.0;
    rhs[n + 1] = mu0;
    return kkt.fullPivLu().solve(rhs).head(n);
}

Eigen::MatrixXd random_spd(int n, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    Eigen::MatrixXd a(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) a(i, j) = g(rng);
    }
    return a * a.transpose() + 0.5 * static_cast<double>(n) * Eigen::MatrixXd::Identity(n, n);
}

}  // namespace

TEST_SUITE_BEGIN("portfolio");

TEST_CASE("two-asset symmetric case") {
    FrontierInput in;
    in.mrcov = Eigen::MatrixXd::Identity(2, 2);
    in.mrvar = Eigen::Vector2d(1.0, 2.0);
    const auto pt = optimal_weights(in, 1.5);
    CHECK(pt.weights[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(pt.weights[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("global minimum variance under identity covariance") {
    FrontierInput in;
    in.mrcov = Eigen::MatrixXd::Identity(4, 4);
    in.mrvar = Eigen::Vector4d(0.3, 0.9, -0.2, 0.5);
    const auto pt = optimal_weights(in, in.mrvar.mean());  // mu0 = b/c under identity
    for (int k = 0; k < 4; ++k) CHECK(pt.weights[k] == doctest::Approx(0.25).epsilon(1e-10));
    CHECK(pt.variance == doctest::Approx(1.0 / pt.c).epsilon(1e-10));
}

TEST_CASE("hand-solved two-asset frontier") {
    FrontierInput in;
    in.mrcov = Eigen::MatrixXd::Identity(2, 2);
    in.mrvar = Eigen::Vector2d(1.0, 2.0);
    const auto pts = frontier(in, {1.0, 1.5, 2.0});
    CHECK(pts[0].variance == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(pts[1].variance == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(pts[2].variance == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("matches the KKT oracle on random instances") {
    std::mt19937_64 rng(417);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_int_distribution<int> dim(2, 8);
    for (int rep = 0; rep < 50; ++rep) {
        const int n = dim(rng);
        FrontierInput in;
        in.mrcov = random_spd(n, rng);
        in.mrvar = Eigen::VectorXd(n);
        for (int k = 0; k < n; ++k) in.mrvar[k] = u(rng);
        const double mu0 = u(rng);
        const auto pt = optimal_weights(in, mu0);
        const Eigen::VectorXd oracle = kkt_oracle(in.mrcov, in.mrvar, mu0);
        for (int k = 0; k < n; ++k) {
            CHECK(pt.weights[k] == doctest::Approx(oracle[k]).epsilon(1e-8).scale(1.0));
        }
        // constraints at 1e-10
        CHECK(std::abs(pt.weights.sum() - 1.0) < 1e-10);
        CHECK(std::abs(pt.weights.dot(in.mrvar) - mu0) < 1e-10);
        // achieved variance identity
        CHECK(pt.weights.dot(in.mrcov * pt.weights) ==
              doctest::Approx(pt.variance).epsilon(1e-8));
    }
}

TEST_CASE("perturbations in the constraint null space cannot do better") {
    std::mt19937_64 rng(99);
    std::normal_distribution<double> g(0.0, 1.0);
    FrontierInput in;
    in.mrcov = random_spd(5, rng);
    in.mrvar = Eigen::VectorXd(5);
    for (int k = 0; k < 5; ++k) in.mrvar[k] = g(rng);
    const auto pt = optimal_weights(in, 0.4);
    // null-space basis of [1'; m']
    Eigen::MatrixXd a(2, 5);
    a.row(0).setOnes();
    a.row(1) = in.mrvar.transpose();
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
    const Eigen::MatrixXd null_basis = lu.kernel();
    for (int rep = 0; rep < 100; ++rep) {
        Eigen::VectorXd coef(null_basis.cols());
        for (int j = 0; j < coef.size(); ++j) coef[j] = g(rng);
        Eigen::VectorXd v = null_basis * coef;
        if (v.norm() == 0.0) continue;
        v /= v.norm();
        const Eigen::VectorXd w = pt.weights + 1e-3 * v;
        CHECK(w.dot(in.mrcov * w) >= pt.variance - 1e-12);
    }
}

TEST_CASE("frontier is a convex quadratic in the target") {
    std::mt19937_64 rng(7);
    FrontierInput in;
    in.mrcov = random_spd(4, rng);
    in.mrvar = Eigen::Vector4d(0.1, 0.5, 0.3, 0.8);
    std::vector<double> targets;
    for (int i = 0; i <= 30; ++i) targets.push_back(-0.5 + i * 0.05);
    const auto pts = frontier(in, targets);
    for (size_t i = 1; i + 1 < pts.size(); ++i) {
        const double second_diff =
            pts[i + 1].variance - 2.0 * pts[i].variance + pts[i - 1].variance;
        CHECK(second_diff >= -1e-10);
    }
    // variance at mu0 = b/c equals 1/c
    const auto gmv = optimal_weights(in, pts[0].b / pts[0].c);
    CHECK(gmv.variance == doctest::Approx(1.0 / gmv.c).epsilon(1e-10));
}

TEST_CASE("degenerate and singular inputs are rejected") {
    FrontierInput in;
    in.mrcov = Eigen::MatrixXd::Identity(3, 3);
    in.mrvar = Eigen::VectorXd::Constant(3, 0.7);  // proportional to ones
    CHECK_THROWS_AS(optimal_weights(in, 0.7), DomainError);
    in.mrvar = Eigen::Vector3d(0.1, 0.2, 0.3);
    in.mrcov(2, 2) = -1.0;
    CHECK_THROWS_AS(optimal_weights(in, 0.2), DomainError);
}

TEST_SUITE_END();
