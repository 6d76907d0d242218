#include <cmath>

#include "doctest.h"
#include "rangerisk/quadrature.hpp"
#include "rangerisk/riskmeasures.hpp"
#include "rangerisk/special.hpp"

using namespace rangerisk;

namespace {

RangeSpec uniform_range(int n, double p, double q) {
    return {Eigen::VectorXd::Constant(n, p), Eigen::VectorXd::Constant(n, q)};
}

}  // namespace

TEST_SUITE_BEGIN("logelliptical");

TEST_CASE("univariate lognormal mean and variance over the full range") {
    auto m = LogEllipticalModel::log_normal(Eigen::VectorXd::Zero(1),
                                            Eigen::MatrixXd::Identity(1, 1));
    const auto mean = log_mrvar(m, uniform_range(1, 0.0, 1.0), 1e-9, 42);
    CHECK(mean.value[0] == doctest::Approx(std::exp(0.5)).epsilon(1e-9));
    const auto cov = log_mrcov(m, uniform_range(1, 0.0, 1.0), 1e-9, 42);
    CHECK(cov.value(0, 0) == doctest::Approx(M_E * (M_E - 1.0)).epsilon(1e-9));
}

TEST_CASE("diagonal lognormal equals 1-d quadrature oracles") {
    Eigen::VectorXd mu(2);
    mu << 0.1, -0.3;
    Eigen::MatrixXd sig = Eigen::Vector2d(0.49, 0.81).asDiagonal();
    auto m = LogEllipticalModel::log_normal(mu, sig);
    const RangeSpec r = uniform_range(2, 0.1, 0.9);
    const auto mean = log_mrvar(m, r, 1e-9, 42);
    const auto cov = log_mrcov(m, r, 1e-9, 42);
    for (int k = 0; k < 2; ++k) {
        const double s = std::sqrt(sig(k, k));
        const double a = mu[k] + s * special::norm_quantile(0.1);
        const double b = mu[k] + s * special::norm_quantile(0.9);
        // direct truncated-lognormal moments by quadrature of exp(kx) phi(x)
        auto mom = [&](int pow) {
            return quad::integrate_or_throw(
                       [&](double x) {
                           return std::exp(pow * x) *
                                  special::norm_pdf((x - mu[k]) / s) / s;
                       },
                       a, b, 1e-14, 1e-11) /
                   0.8;
        };
        CHECK(mean.value[k] == doctest::Approx(mom(1)).epsilon(1e-6));
        CHECK(cov.value(k, k) ==
              doctest::Approx(mom(2) - mom(1) * mom(1)).epsilon(1e-6));
    }
    // independent components: zero off-diagonal covariance
    CHECK(std::abs(cov.value(0, 1)) < 1e-8);
}

TEST_CASE("non-diagonal lognormal matches the sampling oracle") {
    Eigen::VectorXd mu(2);
    mu << 0.2, 0.0;
    Eigen::MatrixXd sig(2, 2);
    sig << 0.36, 0.15, 0.15, 0.49;
    auto m = LogEllipticalModel::log_normal(mu, sig);
    const RangeSpec r = uniform_range(2, 0.2, 0.8);
    const auto mean = log_mrvar(m, r, 1e-8, 42);
    const auto cov = log_mrcov(m, r, 1e-8, 42);
    const auto mc = oracle_log_risk(m, r, 2000000, 11);
    for (int k = 0; k < 2; ++k) {
        CHECK(std::abs(mean.value[k] - mc.mrvar[k]) <=
              3.5 * (mc.mrvar_std_error[k] + mean.std_error[k]) + 1e-6);
    }
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
            CHECK(std::abs(cov.value(i, j) - mc.mrcov(i, j)) <=
                  3.5 * (mc.mrcov_std_error(i, j) + cov.std_error(i, j)) + 1e-6);
        }
    }
}

TEST_CASE("log-laplace diagonal matches 1-d quadrature, non-diagonal the sampler") {
    Eigen::VectorXd mu(2);
    mu << 0.0, 0.1;
    {
        // Uncorrelated Laplace components are still dependent, so the oracle
        // is a direct 2-D quadrature of the joint density over the box.
        Eigen::MatrixXd sig = Eigen::Vector2d(0.25, 0.16).asDiagonal();
        auto m = LogEllipticalModel::log_laplace(mu, sig);
        const RangeSpec r = uniform_range(2, 0.1, 0.9);
        const auto mean = log_mrvar(m, r, 1e-9, 42);
        const Marginal1D marg = Marginal1D::for_family(GeneratorFamily::laplace(), 2);
        const double a = marg.quantile(0.1), b = marg.quantile(0.9);
        const double c2 = 1.0 / (2.0 * M_PI);  // Gamma(1)/(2 pi Gamma(2))
        auto box_integral = [&](double w0, double w1) {
            return quad::integrate_or_throw(
                [&](double y0) {
                    return quad::integrate(
                               [&](double y1) {
                                   const double rr = std::hypot(y0, y1);
                                   return std::exp(w0 * y0 + w1 * y1 - rr) * c2;
                               },
                               a, b, 1e-14, 1e-9)
                        .value;
                },
                a, b, 1e-14, 1e-8);
        };
        const double f = box_integral(0.0, 0.0);
        for (int k = 0; k < 2; ++k) {
            const double s = std::sqrt(sig(k, k));
            const double num =
                std::exp(mu[k]) * (k == 0 ? box_integral(s, 0.0) : box_integral(0.0, s));
            CHECK(mean.value[k] == doctest::Approx(num / f).epsilon(1e-6));
        }
    }
    {
        Eigen::MatrixXd sig(2, 2);
        sig << 0.20, 0.06, 0.06, 0.15;
        auto m = LogEllipticalModel::log_laplace(mu, sig);
        const RangeSpec r = uniform_range(2, 0.2, 0.8);
        const auto mean = log_mrvar(m, r, 1e-8, 42);
        const auto cov = log_mrcov(m, r, 1e-8, 42);
        const auto mc = oracle_log_risk(m, r, 2000000, 13);
        for (int k = 0; k < 2; ++k) {
            CHECK(std::abs(mean.value[k] - mc.mrvar[k]) <=
                  3.5 * (mc.mrvar_std_error[k] + mean.std_error[k]) + 1e-6);
        }
        for (int i = 0; i < 2; ++i) {
            for (int j = 0; j < 2; ++j) {
                CHECK(std::abs(cov.value(i, j) - mc.mrcov(i, j)) <=
                      3.5 * (mc.mrcov_std_error(i, j) + cov.std_error(i, j)) + 1e-6);
            }
        }
    }
}

TEST_CASE("divergent psi configurations are rejected") {
    // StudentT log-elliptical: exponential moments do not exist on unbounded
    // ranges.
    LogEllipticalModel m{Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 2),
                         GeneratorFamily::student_t(5.0), [](double) { return 1.0; }};
    CHECK_THROWS_AS(log_mrvar(m, uniform_range(2, 0.1, 1.0), 1e-7, 42), DomainError);
    // Laplace psi pole: sigma_kk >= 2.
    Eigen::MatrixXd big = Eigen::MatrixXd::Identity(2, 2) * 2.5;
    CHECK_THROWS_AS(LogEllipticalModel::log_laplace(Eigen::VectorXd::Zero(2), big), DomainError);
}

TEST_SUITE_END();
