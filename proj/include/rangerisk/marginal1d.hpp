#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "rangerisk/generators.hpp"

namespace rangerisk {

// Standardized 1-D marginal of a spherical law: either the k=1 marginal of
// E_n(0, I, g_n) or of a kernel law E_dim(0, I, kernel). Closed forms for
// normal and Student-t shapes; otherwise a tabulated density with monotone
// cubic cdf/quantile splines and Newton-polished exact evaluations.
class Marginal1D {
public:
    static Marginal1D for_family(const GeneratorFamily& f, int ambient_n);
    static Marginal1D for_kernel(const GeneratorKernel& k, int dim);

    double pdf(double y) const;
    // Exact-to-~1e-12; tabulated kinds refine the spline value by local
    // quadrature from the nearest grid node.
    double cdf(double y) const;
    // Probability tolerance 1e-11 (bisection-safeguarded Newton); p = 0 or 1
    // give -inf / +inf.
    double quantile(double p) const;

    // Spline transport map for QMC: y(v) for v in (0,1) and its derivative.
    // For closed kinds these are the exact quantile and 1/pdf.
    double map(double v) const;
    double map_derivative(double v) const;
    // Exact preimage of y under map(): closed kinds use the cdf; tabulated
    // kinds invert the quantile spline itself so map(map_inverse(y)) == y.
    double map_inverse(double y) const;

    // Edge used to truncate infinite box edges for tabulated kinds (the mass
    // beyond it is below 1e-14); +inf for closed kinds.
    double support_bound() const;

private:
    enum class Kind { NormalClosed, StudentClosed, Tabulated };

    struct Table;

    Marginal1D() = default;
    static Marginal1D student(double dof, double scale);
    static Marginal1D tabulated(std::function<double(double)> h);

    Kind kind_ = Kind::NormalClosed;
    double dof_ = 0.0;
    double scale_ = 1.0;
    std::shared_ptr<const Table> table_;
};

}  // namespace rangerisk
