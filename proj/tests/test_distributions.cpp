#include <cmath>
#include <random>

#include "doctest.h"
#include "rangerisk/distributions.hpp"
#include "rangerisk/special.hpp"

using namespace rangerisk;

namespace {

Eigen::MatrixXd paper_sigma() {
    Eigen::MatrixXd s(3, 3);
    s << 1.33, -0.067, 0.83, -0.067, 0.25, -0.50, 0.83, -0.50, 5.76;
    return s;
}

Eigen::VectorXd paper_mu() {
    Eigen::VectorXd m(3);
    m << 1.4, 1.1, 3.4;
    return m;
}

StandardBox make_box(std::initializer_list<double> lo, std::initializer_list<double> hi) {
    StandardBox b;
    b.lower = Eigen::VectorXd(static_cast<long>(lo.size()));
    b.upper = Eigen::VectorXd(static_cast<long>(hi.size()));
    int i = 0;
    for (double v : lo) b.lower[i++] = v;
    i = 0;
    for (double v : hi) b.upper[i++] = v;
    return b;
}

}  // namespace

TEST_SUITE_BEGIN("distributions");

TEST_CASE("symmetric matrix square root") {
    CHECK(sqrt_matrix(Eigen::MatrixXd::Identity(3, 3)).isApprox(Eigen::MatrixXd::Identity(3, 3)));
    Eigen::MatrixXd d = Eigen::Vector2d(4.0, 9.0).asDiagonal();
    CHECK(sqrt_matrix(d).isApprox(Eigen::MatrixXd(Eigen::Vector2d(2.0, 3.0).asDiagonal())));

    const Eigen::MatrixXd s = paper_sigma();
    const Eigen::MatrixXd r = sqrt_matrix(s);
    CHECK((r - r.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((r * r - s).cwiseAbs().maxCoeff() < 1e-10 * s.cwiseAbs().maxCoeff());

    Eigen::MatrixXd bad(2, 2);
    bad << 1.0, 2.0, 2.0, 1.0;  // eigenvalues 3, -1
    CHECK_THROWS_AS(sqrt_matrix(bad), DomainError);
}

TEST_CASE("marginal VaR reproduces reference quantiles") {
    EllipticalModel normal{paper_mu(), paper_sigma(), GeneratorFamily::normal()};
    CHECK(marginal_var(normal, 0, 0.30) == doctest::Approx(0.795232).epsilon(5e-5));
    CHECK(marginal_var(normal, 1, 0.10) == doctest::Approx(0.459224).epsilon(5e-5));

    EllipticalModel student{paper_mu(), paper_sigma(), GeneratorFamily::student_t(4.0)};
    CHECK(marginal_var(student, 2, 0.95) == doctest::Approx(8.516429).epsilon(5e-5));

    EllipticalModel laplace{paper_mu(), paper_sigma(), GeneratorFamily::laplace()};
    CHECK(marginal_var(laplace, 0, 0.30) == doctest::Approx(0.393145).epsilon(2e-4));
    CHECK(std::isinf(marginal_var(laplace, 0, 0.0)));
    CHECK(std::isinf(marginal_var(laplace, 2, 1.0)));
}

TEST_CASE("normal rectangle probabilities: trivial cases") {
    GeneratorKernel k{GeneratorFamily::normal(), 3, Level::g, 0.0};
    auto full = rectangle_prob({k, 3, StandardBox::full(3), std::nullopt, 1e-9, 42});
    CHECK(full.value == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(full.engine == BoxProbability::Used::product);

    GeneratorKernel k2{GeneratorFamily::normal(), 2, Level::g, 0.0};
    const double inf = std::numeric_limits<double>::infinity();
    auto orthant = rectangle_prob({k2, 2, make_box({0.0, 0.0}, {inf, inf}), std::nullopt, 1e-9, 42});
    CHECK(orthant.value == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("product and quadrature engines agree for normal boxes") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int n : {2, 3}) {
        GeneratorKernel k{GeneratorFamily::normal(), n, Level::g, 0.0};
        for (int rep = 0; rep < 25; ++rep) {
            StandardBox box;
            box.lower = Eigen::VectorXd(n);
            box.upper = Eigen::VectorXd(n);
            for (int i = 0; i < n; ++i) {
                const double a = u(rng), b = u(rng);
                box.lower[i] = std::min(a, b);
                box.upper[i] = std::max(a, b) + 0.05;
            }
            auto prod = rectangle_prob({k, n, box, std::nullopt, 1e-9, 1, Engine::Product});
            auto quadr = rectangle_prob({k, n, box, std::nullopt, 1e-9, 1, Engine::Quadrature});
            CHECK(quadr.value == doctest::Approx(prod.value).epsilon(1e-8));
        }
    }
}

TEST_CASE("qmc engine agrees with the product engine on normal boxes") {
    GeneratorKernel k{GeneratorFamily::normal(), 5, Level::g, 0.0};
    StandardBox box = make_box({-1.0, -0.5, 0.0, -2.0, 0.3}, {1.2, 0.8, 1.5, 0.4, 2.0});
    auto prod = rectangle_prob({k, 5, box, std::nullopt, 1e-9, 7, Engine::Product});
    auto qmc = rectangle_prob({k, 5, box, std::nullopt, 2e-5, 7, Engine::Qmc});
    CHECK(std::abs(qmc.value - prod.value) <=
          doctest::Approx(3.0 * qmc.std_error + 1e-6 * prod.value));
}

TEST_CASE("qmc and quadrature agree for a student-t box") {
    GeneratorKernel k{GeneratorFamily::student_t(5.0), 3, Level::g, 0.0};
    StandardBox box = make_box({-1.0, -0.8, -0.6}, {0.9, 1.4, 2.0});
    auto quadr = rectangle_prob({k, 3, box, std::nullopt, 1e-8, 3, Engine::Quadrature});
    auto qmc = rectangle_prob({k, 3, box, std::nullopt, 1e-4, 3, Engine::Qmc});
    CHECK(std::abs(qmc.value - quadr.value) <= 3.0 * qmc.std_error + 1e-7);
}

TEST_CASE("rectangle probability is monotone under box growth") {
    GeneratorKernel k{GeneratorFamily::laplace(), 2, Level::g, 0.0};
    StandardBox small = make_box({-0.5, -0.5}, {0.5, 0.5});
    StandardBox big = make_box({-1.0, -0.8}, {0.9, 0.7});
    auto ps = rectangle_prob({k, 2, small, std::nullopt, 1e-7, 3});
    auto pb = rectangle_prob({k, 2, big, std::nullopt, 1e-7, 3});
    CHECK(pb.value + 3.0 * (pb.std_error + ps.std_error) >= ps.value);
}

TEST_CASE("divergent tilt raises a domain error") {
    GeneratorKernel k{GeneratorFamily::student_t(5.0), 2, Level::g, 0.0};
    StandardBox b = StandardBox::full(2);
    Eigen::VectorXd t(2);
    t << 0.4, 0.1;
    CHECK_THROWS_AS(rectangle_prob({k, 2, b, t, 1e-7, 3}), DomainError);

    GeneratorKernel kl{GeneratorFamily::laplace(), 2, Level::g, 0.0};
    Eigen::VectorXd heavy(2);
    heavy << 0.9, 0.9;  // norm > 1
    CHECK_THROWS_AS(rectangle_prob({kl, 2, b, heavy, 1e-7, 3}), DomainError);
}

TEST_CASE("tilted normal product engine matches the shifted closed form") {
    GeneratorKernel k{GeneratorFamily::normal(), 2, Level::g, 0.0};
    Eigen::VectorXd t(2);
    t << 0.7, -0.4;
    StandardBox box = make_box({-0.3, -1.0}, {1.5, 0.8});
    auto got = rectangle_prob({k, 2, box, t, 1e-9, 3});
    const double expect = std::exp(0.5 * t.squaredNorm()) *
                          (special::norm_cdf(1.5 - 0.7) - special::norm_cdf(-0.3 - 0.7)) *
                          (special::norm_cdf(0.8 + 0.4) - special::norm_cdf(-1.0 + 0.4));
    CHECK(got.value == doctest::Approx(expect).epsilon(1e-12));
    // quadrature engine on the same tilted box
    auto quadr = rectangle_prob({k, 2, box, t, 1e-9, 3, Engine::Quadrature});
    CHECK(quadr.value == doctest::Approx(expect).epsilon(1e-7));
}

TEST_CASE("sampler moments: normal and student") {
    const long n_draws = 200000;
    {
        EllipticalSampler s({GeneratorFamily::normal(), 3, Level::g, 0.0}, 3);
        Eigen::MatrixXd draws = s.sample(n_draws, 11);
        const Eigen::VectorXd mean = draws.colwise().mean();
        for (int j = 0; j < 3; ++j) CHECK(std::abs(mean[j]) < 4.0 / std::sqrt((double)n_draws));
    }
    {
        EllipticalSampler s({GeneratorFamily::student_t(4.0), 3, Level::g, 0.0}, 3);
        Eigen::MatrixXd draws = s.sample(n_draws, 13);
        Eigen::MatrixXd centered = draws.rowwise() - draws.colwise().mean();
        Eigen::MatrixXd cov = centered.transpose() * centered / (double)n_draws;
        // elliptical St(0, I, m) has covariance m/(m-2) I = 2 I
        for (int j = 0; j < 3; ++j) CHECK(cov(j, j) == doctest::Approx(2.0).epsilon(0.05));
    }
}

TEST_CASE("laplace radial fractions match the radial cdf") {
    EllipticalSampler s({GeneratorFamily::laplace(), 3, Level::g, 0.0}, 3);
    const long n_draws = 200000;
    Eigen::MatrixXd draws = s.sample(n_draws, 17);
    for (double r0 : {1.0, 2.5, 5.0}) {
        long cnt = 0;
        for (long i = 0; i < n_draws; ++i) {
            if (draws.row(i).norm() <= r0) ++cnt;
        }
        const double frac = static_cast<double>(cnt) / n_draws;
        const double expect = s.radial_cdf(r0);
        const double se = std::sqrt(expect * (1.0 - expect) / n_draws);
        CHECK(std::abs(frac - expect) <= 4.0 * se);
    }
}

TEST_CASE("sampling oracle vs rectangle_prob across families") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.5, 1.5);
    for (auto fam : {GeneratorFamily::student_t(4.0), GeneratorFamily::logistic(),
                     GeneratorFamily::laplace(), GeneratorFamily::pearson_vii(4.0)}) {
        GeneratorKernel k{fam, 3, Level::g, 0.0};
        EllipticalSampler s(k, 3);
        const long n_draws = 120000;
        Eigen::MatrixXd draws = s.sample(n_draws, 23);
        for (int rep = 0; rep < 6; ++rep) {
            StandardBox box;
            box.lower = Eigen::VectorXd(3);
            box.upper = Eigen::VectorXd(3);
            for (int i = 0; i < 3; ++i) {
                const double a = u(rng), b = u(rng);
                box.lower[i] = std::min(a, b) - 0.3;
                box.upper[i] = std::max(a, b) + 0.3;
            }
            long cnt = 0;
            for (long i = 0; i < n_draws; ++i) {
                bool in = true;
                for (int j = 0; j < 3; ++j) {
                    in = in && draws(i, j) >= box.lower[j] && draws(i, j) <= box.upper[j];
                }
                cnt += in ? 1 : 0;
            }
            const double mc = static_cast<double>(cnt) / n_draws;
            const double mc_se = std::sqrt(std::max(mc * (1.0 - mc), 1e-12) / n_draws);
            auto exact = rectangle_prob({k, 3, box, std::nullopt, 1e-7, 3});
            CHECK(std::abs(mc - exact.value) <= 4.0 * (mc_se + exact.std_error) + 1e-4);
        }
    }
}

TEST_SUITE_END();
