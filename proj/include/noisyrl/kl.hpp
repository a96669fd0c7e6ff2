#ifndef NOISYRL_KL_HPP
#define NOISYRL_KL_HPP

#include "noisyrl/meanfield.hpp"

namespace nrl {

enum class KlMode { two_class, full_reverse };

struct KlConfig {
    double beta = 0.0;
    double p_ref = 0.5;
    Vec y_ref;  // only read in full_reverse mode
    Vec z_ref;
    KlMode mode = KlMode::two_class;

    double logit_ref() const;
    void validate(std::size_t K, std::size_t M) const;
};

BlockDrift kl_drift(const BlockState &s, const KlConfig &cfg);
BlockDrift regularized_drift(const BlockState &s, const NoiseSpec &spec, double eta, const KlConfig &cfg);

Trajectory integrate_regularized(const BlockState &initial, const NoiseSpec &spec, const KlConfig &kl,
                                 const OdeConfig &cfg);

struct FixedPoint {
    double p_star = 0.0;
    double offset = 0.0;  // p_star - p_ref without cancellation
    double u = 0.0;       // logit(p_star) - logit(p_ref)
    int iterations = 0;
};

// Bisection in u on beta u + eta C J p(1-p)/sigma(p) = 0 with the shape frozen at (s2, t2).
FixedPoint solve_fixed_point(const NoiseSpec &spec, double eta, const KlConfig &cfg, double s2, double t2);
double interior_fixed_point(const NoiseSpec &spec, double eta, const KlConfig &cfg, double s2, double t2);

// d(pdot)/dp of the frozen-shape two-class ODE at p.
double fixed_point_derivative(double p, const NoiseSpec &spec, double eta, const KlConfig &cfg, double s2, double t2);
int fixed_point_stability(double p_star, const NoiseSpec &spec, double eta, const KlConfig &cfg, double s2,
                          double t2);

// Leading-order p_star for large beta.
double strong_kl_prediction(const NoiseSpec &spec, double eta, const KlConfig &cfg, double s2, double t2);
// Leading-order p_star for small beta: 1 - (beta/c) log(c/beta) for J < 0, (beta/c) log(c/beta) for J > 0.
// NaN when the boundary variance vanishes or c/beta <= 1.
double weak_kl_prediction(const NoiseSpec &spec, double eta, const KlConfig &cfg, double s2, double t2);

}  // namespace nrl

#endif
