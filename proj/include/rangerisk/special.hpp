#pragma once

namespace rangerisk::special {

// Standard normal density, CDF and quantile. norm_quantile(0) = -inf,
// norm_quantile(1) = +inf.
double norm_pdf(double x);
double norm_cdf(double x);
double norm_quantile(double p);

// Regularized incomplete beta I_x(a, b).
double inc_beta(double a, double b, double x);

// log Beta(a, b).
double lbeta(double a, double b);

// Classical Student-t CDF/quantile with dof nu (any real nu > 0).
double student_t_cdf(double x, double nu);
double student_t_quantile(double p, double nu);

// Generalized Hurwitz-Lerch zeta Psi*_kappa(z, s, a) =
//   (1/Gamma(kappa)) sum_{n>=0} Gamma(kappa+n)/n! z^n / (n+a)^s,
// real arguments, |z| <= 1. Series for |z| <= 1/2, integral representation
// otherwise; relative accuracy ~1e-12.
double hurwitz_lerch_psi(double kappa, double z, double s, double a);

}  // namespace rangerisk::special
