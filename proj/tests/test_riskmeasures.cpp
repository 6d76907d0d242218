#include <cmath>
#include <random>

#include "doctest.h"
#include "rangerisk/riskmeasures.hpp"
#include "rangerisk/special.hpp"

using namespace rangerisk;

namespace {

EllipticalModel reference_model(GeneratorFamily fam) {
    EllipticalModel m;
    m.mu = Eigen::VectorXd(3);
    m.mu << 1.4, 1.1, 3.4;
    m.sigma = Eigen::MatrixXd(3, 3);
    m.sigma << 1.33, -0.067, 0.83, -0.067, 0.25, -0.50, 0.83, -0.50, 5.76;
    m.family = fam;
    return m;
}

RangeSpec uniform_range(int n, double p, double q) {
    return {Eigen::VectorXd::Constant(n, p), Eigen::VectorXd::Constant(n, q)};
}

EllipticalModel univariate(GeneratorFamily fam, double mu, double sigma2) {
    EllipticalModel m;
    m.mu = Eigen::VectorXd::Constant(1, mu);
    m.sigma = Eigen::MatrixXd::Constant(1, 1, sigma2);
    m.family = fam;
    return m;
}

}  // namespace

TEST_SUITE_BEGIN("riskmeasures");

TEST_CASE("rvar closed cases") {
    const auto normal = univariate(GeneratorFamily::normal(), 0.7, 2.25);
    CHECK(rvar(normal, 0.0, 1.0) == doctest::Approx(0.7).epsilon(1e-10));
    CHECK(rvar(univariate(GeneratorFamily::normal(), 0.0, 1.0), 0.3, 0.7) ==
          doctest::Approx(0.0).scale(1).epsilon(1e-10));
    // q = 1 limit: the classical tail conditional expectation.
    const double tce = special::norm_pdf(special::norm_quantile(0.95)) / 0.05;
    CHECK(rvar(univariate(GeneratorFamily::normal(), 0.0, 1.0), 0.95, 1.0) ==
          doctest::Approx(tce).epsilon(1e-8));
}

TEST_CASE("rv closed and oracle cases") {
    CHECK(rv(univariate(GeneratorFamily::normal(), 0.0, 1.0), 0.0, 1.0) ==
          doctest::Approx(1.0).epsilon(1e-9));
    // Lower-half normal: E[Y^2|Y<0] = 1, mean = -2 phi(0).
    const double mean = -2.0 * special::norm_pdf(0.0);
    CHECK(rv(univariate(GeneratorFamily::normal(), 0.0, 1.0), 0.0, 0.5) ==
          doctest::Approx(1.0 - mean * mean).epsilon(1e-9));

    // Truncated-sample oracle for a symmetric range, normal and student.
    std::mt19937_64 rng(21);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int fam_i = 0; fam_i < 2; ++fam_i) {
        const bool student = fam_i == 1;
        const auto m = student ? univariate(GeneratorFamily::student_t(4.0), 0.0, 1.0)
                               : univariate(GeneratorFamily::normal(), 0.0, 1.0);
        const Marginal1D marg = Marginal1D::for_family(m.family, 1);
        const double lo = marg.quantile(0.3), hi = marg.quantile(0.7);
        double s1 = 0.0, s2 = 0.0;
        long kept = 0;
        std::chi_squared_distribution<double> chi(4.0);
        for (long i = 0; i < 2000000; ++i) {
            double x = gauss(rng);
            if (student) x *= std::sqrt(4.0 / chi(rng));
            if (x < lo || x > hi) continue;
            ++kept;
            s1 += x;
            s2 += x * x;
        }
        const double mean_mc = s1 / kept;
        const double var_mc = s2 / kept - mean_mc * mean_mc;
        const double se = var_mc * std::sqrt(2.0 / kept) * 3.0 + 3e-4;
        CHECK(std::abs(rv(m, 0.3, 0.7) - var_mc) <= se);
    }
}

TEST_CASE("degenerate range is rejected") {
    const auto m = reference_model(GeneratorFamily::normal());
    RangeSpec r = uniform_range(3, 0.3, 0.7);
    r.q[1] = 0.3;
    CHECK_THROWS_AS(mrvar(m, r), DomainError);
}

TEST_CASE("mrvar reproduces the reference normal rows") {
    const auto m = reference_model(GeneratorFamily::normal());
    auto row1 = mrvar_xbox(m, uniform_range(3, 0.0, 0.10), 1e-7, 42);
    CHECK(std::abs(row1.value[0] - (-0.702948)) < 5e-4);
    CHECK(std::abs(row1.value[1] - 0.296865) < 5e-4);
    CHECK(std::abs(row1.value[2] - (-0.553282)) < 5e-4);
    auto row2 = mrvar_xbox(m, uniform_range(3, 0.30, 0.70), 1e-7, 42);
    CHECK(std::abs(row2.value[0] - 1.4) < 5e-4);
    CHECK(std::abs(row2.value[1] - 1.1) < 5e-4);
    CHECK(std::abs(row2.value[2] - 3.4) < 5e-4);
    auto row4 = mrvar_xbox(m, uniform_range(3, 0.95, 1.0), 1e-7, 42);
    CHECK(std::abs(row4.value[0] - 3.858560) < 5e-4);
    CHECK(std::abs(row4.value[1] - 2.061853) < 5e-4);
    CHECK(std::abs(row4.value[2] - 8.104730) < 5e-4);
}

TEST_CASE("mrvar reproduces the reference student rows") {
    const auto m = reference_model(GeneratorFamily::student_t(4.0));
    auto row4 = mrvar_xbox(m, uniform_range(3, 0.95, 1.0), 1e-7, 42);
    CHECK(std::abs(row4.value[0] - 6.867393) < 5e-4);
    CHECK(std::abs(row4.value[1] - 3.048464) < 5e-4);
    CHECK(std::abs(row4.value[2] - 13.211250) < 5e-4);
    auto row1 = mrvar_xbox(m, uniform_range(3, 0.0, 0.10), 1e-7, 42);
    CHECK(std::abs(row1.value[0] - (-2.703324)) < 5e-4);
    CHECK(std::abs(row1.value[2] - (-3.940607)) < 5e-4);
}

TEST_CASE("mrvar reproduces the reference laplace rows") {
    const auto m = reference_model(GeneratorFamily::laplace());
    auto row1 = mrvar_xbox(m, uniform_range(3, 0.0, 0.10), 1e-7, 42);
    CHECK(std::abs(row1.value[0] - (-3.448572)) < 5e-4);
    CHECK(std::abs(row1.value[1] - (-0.679482)) < 5e-4);
    CHECK(std::abs(row1.value[2] - (-5.466375)) < 5e-4);
    auto row3 = mrvar_xbox(m, uniform_range(3, 0.30, 0.80), 1e-7, 42);
    CHECK(std::abs(row3.value[0] - 1.641988) < 5e-4);
    CHECK(std::abs(row3.value[1] - 1.184636) < 5e-4);
    CHECK(std::abs(row3.value[2] - 3.837478) < 5e-4);
}

TEST_CASE("mrcov reproduces reference entries") {
    {
        const auto m = reference_model(GeneratorFamily::normal());
        auto cov = mrcov_xbox(m, uniform_range(3, 0.30, 0.70), 1e-7, 42);
        CHECK(cov.value(0, 0) == doctest::Approx(0.1171168).epsilon(2e-3));
        CHECK(std::abs(cov.value(0, 1) - (-1.4123580e-5)) < 1e-5);
    }
    {
        const auto m = reference_model(GeneratorFamily::student_t(4.0));
        auto cov = mrcov_xbox(m, uniform_range(3, 0.0, 0.10), 1e-7, 42);
        CHECK(cov.value(0, 0) == doctest::Approx(7.5413450).epsilon(2e-3));
        CHECK(cov.value(0, 2) == doctest::Approx(5.3625440).epsilon(2e-3));
        const auto corr = mrcorr(cov.value);
        CHECK(corr(0, 1) == doctest::Approx(0.3520923).epsilon(3e-3));
        CHECK(corr(0, 0) == 1.0);
    }
    {
        const auto m = reference_model(GeneratorFamily::laplace());
        auto cov = mrcov_xbox(m, uniform_range(3, 0.30, 0.80), 1e-7, 42);
        CHECK(cov.value(1, 1) == doctest::Approx(0.0933769).epsilon(2e-3));
    }
}

TEST_CASE("positive homogeneity and translation invariance") {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (auto fam : {GeneratorFamily::normal(), GeneratorFamily::student_t(5.0),
                     GeneratorFamily::logistic(), GeneratorFamily::laplace(),
                     GeneratorFamily::pearson_vii(4.5)}) {
        const auto m = reference_model(fam);
        const RangeSpec r = uniform_range(3, 0.2, 0.75);
        const auto base = mrvar(m, r, 1e-8, 42);
        for (double c : {0.5, 2.0, 10.0}) {
            EllipticalModel scaled = m;
            scaled.mu *= c;
            scaled.sigma *= c * c;
            const auto got = mrvar(scaled, r, 1e-8, 42);
            for (int k = 0; k < 3; ++k) {
                CHECK(got.value[k] == doctest::Approx(c * base.value[k]).epsilon(1e-6));
            }
        }
        Eigen::VectorXd gamma(3);
        gamma << u(rng), u(rng), u(rng);
        EllipticalModel shifted = m;
        shifted.mu += gamma;
        const auto got = mrvar(shifted, r, 1e-8, 42);
        for (int k = 0; k < 3; ++k) {
            CHECK(got.value[k] == doctest::Approx(base.value[k] + gamma[k]).epsilon(1e-6));
        }
    }
}

TEST_CASE("independence reduction for diagonal normal") {
    EllipticalModel m;
    m.mu = Eigen::VectorXd(3);
    m.mu << 0.3, -0.2, 1.7;
    m.sigma = Eigen::Vector3d(0.8, 1.7, 0.4).asDiagonal();
    m.family = GeneratorFamily::normal();
    RangeSpec r{Eigen::Vector3d(0.1, 0.25, 0.0), Eigen::Vector3d(0.8, 0.9, 0.65)};
    const auto got = mrvar(m, r, 1e-9, 42);
    const auto cov = mrcov(m, r, 1e-9, 42);
    for (int k = 0; k < 3; ++k) {
        const auto uni = univariate(GeneratorFamily::normal(), m.mu[k], m.sigma(k, k));
        CHECK(got.value[k] == doctest::Approx(rvar(uni, r.p[k], r.q[k])).epsilon(1e-8));
        CHECK(cov.value(k, k) == doctest::Approx(rv(uni, r.p[k], r.q[k])).epsilon(1e-8));
    }
    CHECK(std::abs(cov.value(0, 1)) < 1e-8);
    CHECK(std::abs(cov.value(1, 2)) < 1e-8);
}

TEST_CASE("mrcov standardization, homogeneity, translation") {
    const auto m = reference_model(GeneratorFamily::student_t(5.0));
    const RangeSpec r = uniform_range(3, 0.15, 0.8);
    const auto base = mrcov(m, r, 1e-8, 42);
    EllipticalModel scaled = m;
    scaled.mu *= 2.0;
    scaled.sigma *= 4.0;
    const auto sc = mrcov(scaled, r, 1e-8, 42);
    EllipticalModel shifted = m;
    shifted.mu.array() += 0.37;
    const auto sh = mrcov(shifted, r, 1e-8, 42);
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            CHECK(sc.value(i, j) == doctest::Approx(4.0 * base.value(i, j)).epsilon(1e-6));
            CHECK(sh.value(i, j) == doctest::Approx(base.value(i, j)).epsilon(1e-6).scale(1.0));
        }
    }
    CHECK((base.value - base.value.transpose()).cwiseAbs().maxCoeff() < 1e-10);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(base.value, Eigen::EigenvaluesOnly);
    CHECK(es.eigenvalues()(0) >= -1e-8 * base.value.trace());
}

TEST_CASE("MTCE limit at q = 1 matches the normal closed form") {
    const auto m = reference_model(GeneratorFamily::normal());
    const RangeSpec r = uniform_range(3, 0.9, 1.0);
    const auto got = mrvar(m, r, 1e-10, 42);

    const Eigen::MatrixXd root = sqrt_matrix(m.sigma);
    Eigen::VectorXd var_p = marginal_var_vector(m, r.p);
    Eigen::VectorXd eta = root.llt().solve(var_p - m.mu);
    double f_n = 1.0;
    for (int k = 0; k < 3; ++k) f_n *= 1.0 - special::norm_cdf(eta[k]);
    Eigen::VectorXd delta(3);
    for (int k = 0; k < 3; ++k) {
        double f_rest = 1.0;
        for (int j = 0; j < 3; ++j) {
            if (j != k) f_rest *= 1.0 - special::norm_cdf(eta[j]);
        }
        delta[k] = special::norm_pdf(eta[k]) * f_rest;
    }
    const Eigen::VectorXd expect = m.mu + root * delta / f_n;
    for (int k = 0; k < 3; ++k) {
        CHECK(got.value[k] == doctest::Approx(expect[k]).epsilon(1e-8));
    }
}

TEST_CASE("symmetric ranges recover the location vector") {
    for (auto fam : {GeneratorFamily::normal(), GeneratorFamily::student_t(4.0),
                     GeneratorFamily::logistic(), GeneratorFamily::laplace(),
                     GeneratorFamily::pearson_vii(4.0)}) {
        const auto m = reference_model(fam);
        const auto got = mrvar(m, uniform_range(3, 0.25, 0.75), 1e-8, 42);
        for (int k = 0; k < 3; ++k) {
            CHECK(got.value[k] == doctest::Approx(m.mu[k]).epsilon(1e-5));
        }
    }
}

TEST_CASE("oracle agreement in y-box mode") {
    for (auto fam : {GeneratorFamily::normal(), GeneratorFamily::student_t(4.0)}) {
        const auto m = reference_model(fam);
        const RangeSpec r = uniform_range(3, 0.3, 0.7);
        const auto ana = mrvar(m, r, 1e-8, 42);
        const auto cov = mrcov(m, r, 1e-8, 42);
        const auto mc = oracle_risk(m, r, OracleMode::YBox, 600000, 99);
        for (int k = 0; k < 3; ++k) {
            CHECK(std::abs(ana.value[k] - mc.mrvar[k]) <=
                  3.5 * (mc.mrvar_std_error[k] + ana.std_error[k]) + 2e-5);
        }
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) {
                CHECK(std::abs(cov.value(i, j) - mc.mrcov(i, j)) <=
                      3.5 * (mc.mrcov_std_error(i, j) + cov.std_error(i, j)) + 1e-5);
            }
        }
    }
}

TEST_CASE("x-box mode agrees for diagonal scale and is reported otherwise") {
    EllipticalModel m;
    m.mu = Eigen::VectorXd(3);
    m.mu << 0.5, -0.1, 1.0;
    m.sigma = Eigen::Vector3d(1.2, 0.5, 2.0).asDiagonal();
    m.family = GeneratorFamily::normal();
    const RangeSpec r = uniform_range(3, 0.2, 0.8);
    const auto a = oracle_risk(m, r, OracleMode::YBox, 400000, 7);
    const auto b = oracle_risk(m, r, OracleMode::XBox, 400000, 7);
    for (int k = 0; k < 3; ++k) {
        CHECK(std::abs(a.mrvar[k] - b.mrvar[k]) <=
              3.0 * (a.mrvar_std_error[k] + b.mrvar_std_error[k]) + 1e-8);
    }
    const auto m2 = reference_model(GeneratorFamily::normal());
    const auto c = oracle_risk(m2, r, OracleMode::XBox, 100000, 7);
    CHECK(c.accepted > 1000);
}

TEST_SUITE_END();

TEST_SUITE_BEGIN("riskmeasures");

TEST_CASE("xbox path equals the coordinate-box path for diagonal sigma") {
    EllipticalModel m;
    m.mu = Eigen::VectorXd(3);
    m.mu << 0.4, -0.6, 1.2;
    m.sigma = Eigen::Vector3d(1.1, 0.6, 2.3).asDiagonal();
    for (auto fam : {GeneratorFamily::normal(), GeneratorFamily::student_t(5.0),
                     GeneratorFamily::laplace()}) {
        m.family = fam;
        RangeSpec r{Eigen::Vector3d(0.15, 0.0, 0.3), Eigen::Vector3d(0.9, 0.7, 1.0)};
        const auto a = mrvar(m, r, 1e-8, 42);
        const auto b = mrvar_xbox(m, r, 1e-8, 42);
        for (int k = 0; k < 3; ++k) {
            CHECK(b.value[k] == doctest::Approx(a.value[k]).epsilon(2e-6));
        }
        const auto ca = mrcov(m, r, 1e-8, 42);
        const auto cb = mrcov_xbox(m, r, 1e-8, 42);
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) {
                CHECK(cb.value(i, j) ==
                      doctest::Approx(ca.value(i, j)).epsilon(2e-5).scale(1.0));
            }
        }
    }
}

TEST_CASE("xbox path matches the x-box monte carlo oracle") {
    const auto m = reference_model(GeneratorFamily::student_t(4.0));
    const RangeSpec r = uniform_range(3, 0.1, 0.8);
    const auto ana = mrvar_xbox(m, r, 1e-7, 42);
    const auto cov = mrcov_xbox(m, r, 1e-7, 42);
    const auto mc = oracle_risk(m, r, OracleMode::XBox, 800000, 3);
    for (int k = 0; k < 3; ++k) {
        CHECK(std::abs(ana.value[k] - mc.mrvar[k]) <=
              3.5 * (mc.mrvar_std_error[k] + ana.std_error[k]) + 2e-5);
    }
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            CHECK(std::abs(cov.value(i, j) - mc.mrcov(i, j)) <=
                  3.5 * (mc.mrcov_std_error(i, j) + cov.std_error(i, j)) + 1e-4);
        }
    }
}

TEST_SUITE_END();
