#pragma once

#include <functional>

namespace rangerisk::quad {

struct Result {
    double value = 0.0;
    double abs_error = 0.0;
    long n_evals = 0;
    bool converged = false;
};

// Adaptive Gauss-Kronrod (7-15) on a finite interval. Stops when the summed
// error estimate satisfies abs_err <= max(abs_tol, rel_tol*|value|).
Result integrate(const std::function<double(double)>& f, double a, double b,
                 double abs_tol = 1e-14, double rel_tol = 1e-10,
                 int max_panels = 4000);

// Integral over [0, inf): adaptive Gauss-Kronrod on [0,1] (with an explicit
// split at `cusp` so sqrt-cusped kernels keep their convergence order) plus a
// double-exponential rule on [1, inf) that copes with both exponential and
// algebraic tails.
Result integrate_zero_inf(const std::function<double(double)>& f,
                          double abs_tol = 1e-14, double rel_tol = 1e-10,
                          double cusp = 1e-3);

// Double-exponential (exp-sinh) rule on [lo, inf). The integrand must be
// smooth and decaying.
Result integrate_exp_sinh(const std::function<double(double)>& f, double lo,
                          double rel_tol = 1e-10);

// Same as integrate() but throws IntegrationError when not converged.
double integrate_or_throw(const std::function<double(double)>& f, double a, double b,
                          double abs_tol = 1e-14, double rel_tol = 1e-10);

double integrate_zero_inf_or_throw(const std::function<double(double)>& f,
                                   double abs_tol = 1e-14, double rel_tol = 1e-10);

}  // namespace rangerisk::quad
