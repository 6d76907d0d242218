#include <cmath>

#include "doctest.h"
#include "rangerisk/quadrature.hpp"

using namespace rangerisk;

TEST_SUITE_BEGIN("quadrature");

TEST_CASE("polynomial and finite intervals") {
    auto r = quad::integrate([](double x) { return x * x; }, 0.0, 1.0);
    CHECK(r.converged);
    CHECK(r.value == doctest::Approx(1.0 / 3.0).epsilon(1e-13));

    r = quad::integrate([](double x) { return std::sin(x); }, 0.0, M_PI);
    CHECK(r.value == doctest::Approx(2.0).epsilon(1e-13));
}

TEST_CASE("semi-infinite with exponential decay") {
    auto r = quad::integrate_zero_inf([](double s) { return std::exp(-s); });
    CHECK(r.converged);
    CHECK(r.value == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("sqrt cusp at origin") {
    // int_0^inf e^{-sqrt(2s)} ds = 1 (substitute w = sqrt(2s)).
    auto r = quad::integrate_zero_inf([](double s) { return std::exp(-std::sqrt(2.0 * s)); });
    CHECK(r.converged);
    CHECK(r.value == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("integrable endpoint singularity") {
    // int_0^inf s^{-1/2} e^{-s} ds = sqrt(pi)
    auto r = quad::integrate_zero_inf(
        [](double s) { return s > 0 ? std::exp(-s) / std::sqrt(s) : 0.0; }, 1e-14, 1e-9);
    CHECK(r.value == doctest::Approx(std::sqrt(M_PI)).epsilon(1e-8));
}

TEST_SUITE_END();
