#pragma once

#include <string>
#include <vector>

#include "rangerisk/errors.hpp"
#include "rangerisk/quadrature.hpp"

namespace rangerisk {

enum class Family { Normal, StudentT, Logistic, Laplace, PearsonVII };

// One of the five density-generator families with its shape parameter.
struct GeneratorFamily {
    Family tag = Family::Normal;
    double dof_m = 0.0;    // StudentT only
    double shape_t = 0.0;  // PearsonVII only

    static GeneratorFamily normal() { return {Family::Normal, 0.0, 0.0}; }
    static GeneratorFamily student_t(double m);
    static GeneratorFamily logistic() { return {Family::Logistic, 0.0, 0.0}; }
    static GeneratorFamily laplace() { return {Family::Laplace, 0.0, 0.0}; }
    static GeneratorFamily pearson_vii(double t);

    bool operator==(const GeneratorFamily&) const = default;
};

std::string family_name(Family f);
GeneratorFamily family_from_name(const std::string& name, double param);

// Generator level: 0 = g_n, 1 = Gbar_n, 2 = GGbar_n (successive tail
// integrals). Levels above 2 arise in marginal generators of high ambient
// dimension.
enum class Level : int { g = 0, Gbar = 1, GGbar = 2 };

// kernel(u) = L_level(u + shift) for the family's generator indexed by
// ambient_n. StudentT and PearsonVII generators depend on the ambient
// dimension, so the kernel carries it.
struct GeneratorKernel {
    GeneratorFamily family;
    int ambient_n = 1;
    Level level = Level::g;
    double shift = 0.0;

    bool operator==(const GeneratorKernel&) const = default;
};

enum class ConstLevel { c, c_star, c_star_star };

struct NormConstant {
    double value = 0.0;
    enum class Method { closed_form, quadrature } method = Method::closed_form;
    double abs_error = 0.0;
};

// Iterated tail integral of the density generator: level 0 is g_n itself,
// level j is the tail integral of level j-1. Throws DomainError when the
// family's parameters do not keep the requested level finite.
double generator_level(const GeneratorFamily& f, int ambient_n, int level, double u);

double kernel_eval(const GeneratorKernel& k, double u);

// Normalizing constants c_n, c*_n, c**_n with the families' closed forms.
NormConstant norm_constant(const GeneratorFamily& f, int n, ConstLevel level);

// Normalizing constant of the law E_dim(0, I, kernel):
//   Gamma(dim/2)/(2pi)^{dim/2} / int_0^inf s^{dim/2-1} kernel(s) ds.
// Closed forms for Normal/StudentT/PearsonVII/Logistic at any shift;
// adaptive quadrature otherwise (relative error <= 1e-10).
NormConstant law_norm_constant(const GeneratorKernel& k, int dim);

// Shifted constants c*_{n-1,v,k} (one shift) and c**_{n-2,ur,vl} (two
// shifts): n_reduced is the reduced dimension, shifts are the additive
// offsets (each one eta^2/2).
NormConstant shifted_constant(const GeneratorFamily& f, int n_reduced,
                              const std::vector<double>& shifts, ConstLevel level);

// Marginal generator g_{k,n}(u) = int_0^inf s^{(n-k)/2-1} g_n(s+u) ds.
double marginal_generator(const GeneratorFamily& f, int n, int k, double u);

// int_0^inf s^{dim/2-1} kernel(s) ds by adaptive quadrature, split at s = 1
// with the endpoint power substituted away.
quad::Result radial_integral(const GeneratorKernel& k, int dim, double rel_tol = 1e-11);

// A reduced law appearing in the moment formulas: E_dim(0, I, kernel) after
// rescaling coordinates by coord_scale. `weight` is the ratio c_n/c_reduced
// multiplying its rectangle probability; when an eta is infinite the term
// vanishes and weight is 0. dim == 0 encodes the empty reduction whose
// rectangle probability is 1 by convention.
struct ReducedLaw {
    double weight = 0.0;
    int dim = 0;
    GeneratorKernel kernel;
    double coord_scale = 1.0;
    bool vanishes = false;
};

// Pin one coordinate of E_n(0, I, g_n) at threshold eta: the g -> Gbar step.
ReducedLaw reduce_once(const GeneratorFamily& f, int n, double eta);

// Pin two coordinates: the Gbar -> GGbar step.
ReducedLaw reduce_twice(const GeneratorFamily& f, int n, double eta_a, double eta_b);

// The associated law Y* ~ E_n(0, I, Gbar_n) with weight c_n/c*_n.
ReducedLaw associated_star_law(const GeneratorFamily& f, int n);

}  // namespace rangerisk
