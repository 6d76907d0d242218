#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>

#include "rangerisk/generators.hpp"
#include "rangerisk/marginal1d.hpp"

namespace rangerisk {

// The elliptical law E_n(mu, Sigma, g_n).
struct EllipticalModel {
    Eigen::VectorXd mu;
    Eigen::MatrixXd sigma;
    GeneratorFamily family;

    int dim() const { return static_cast<int>(mu.size()); }
    void validate() const;
};

// Axis-aligned box with extended-real edges (+-inf allowed).
struct StandardBox {
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;

    int dim() const { return static_cast<int>(lower.size()); }
    void validate() const;
    static StandardBox full(int n);
};

enum class Engine { Auto, Product, Quadrature, Qmc };

struct BoxProbability {
    double value = 0.0;
    double std_error = 0.0;
    enum class Used { product, quadrature, qmc } engine = Used::product;
    long n_evals = 0;
};

// Unique symmetric PSD root of a symmetric positive definite matrix.
Eigen::MatrixXd sqrt_matrix(const Eigen::MatrixXd& sigma);

// Marginal VaR of component k at level p (p = 0 -> -inf, p = 1 -> +inf):
// mu_k + sqrt(sigma_kk) * Q(p) with Q the standardized g_{1,n} quantile.
double marginal_var(const EllipticalModel& m, int k, double p);
Eigen::VectorXd marginal_var_vector(const EllipticalModel& m, const Eigen::VectorXd& p);

// int_box w(y) c kernel(y'y/2) dy for the law E_dim(0, I, kernel), with
// w = exp(tilt'y) or 1. tol is a relative target on the estimate.
struct RectangleRequest {
    GeneratorKernel kernel;
    int dim = 1;
    StandardBox box;
    std::optional<Eigen::VectorXd> tilt;
    double tol = 1e-6;
    std::uint64_t seed = 42;
    Engine engine = Engine::Auto;
};

BoxProbability rectangle_prob(const RectangleRequest& req);

// Rectangle probability of a full elliptical law E_dim(loc, scale, kernel)
// with a general SPD scale matrix. Delegates to the spherical engines when
// the correlation is the identity; otherwise integrates the correlated
// density directly (nested quadrature for dim <= 4, transported QMC above).
struct CorrelatedBoxRequest {
    GeneratorKernel kernel;
    Eigen::VectorXd loc;
    Eigen::MatrixXd scale;
    StandardBox box;
    std::optional<Eigen::VectorXd> tilt;  // weight exp(tilt'(x - loc))
    double tol = 1e-6;
    std::uint64_t seed = 42;
    Engine engine = Engine::Auto;
};

BoxProbability elliptical_rectangle_prob(const CorrelatedBoxRequest& req);

// Exact sampler for E_dim(0, I, kernel) via the radial representation
// Y = R * S: S uniform on the sphere, R from a 4096-node Chebyshev-spaced
// inverse-CDF table (monotone cubic), covering probabilities
// [1e-9, 1 - 1e-9].
class EllipticalSampler {
public:
    EllipticalSampler(const GeneratorKernel& kernel, int dim);

    // count x dim matrix of i.i.d. draws; deterministic per seed.
    Eigen::MatrixXd sample(long count, std::uint64_t seed) const;

    double radial_quantile(double p) const;
    double radial_cdf(double r) const;

private:
    GeneratorKernel kernel_;
    int dim_;
    bool gaussian_shortcut_ = false;
    std::vector<double> probs_, radii_;  // monotone table
    std::vector<double> d_pr_;           // PCHIP slopes for prob -> radius
};

}  // namespace rangerisk
