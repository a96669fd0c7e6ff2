#include "noisyrl/kl.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace nrl {

namespace {

double block_kl(const Vec &a, const Vec &ref) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i] > 0.0) s += a[i] * std::log(a[i] / ref[i]);
    return s;
}

Vec kl_pull(const Vec &a, const Vec &ref, double beta) {
    const double mean = block_kl(a, ref);
    Vec d(a.size(), 0.0);
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i] > 0.0) d[i] = -beta * a[i] * (std::log(a[i] / ref[i]) - mean);
    return d;
}

double logit_of(double p) { return std::log(p) - std::log1p(-p); }

struct Point {
    double p, one_minus_p, offset;
};

Point from_u(double p_ref, double u) {
    const double E = std::expm1(u);
    const double den = 1.0 + p_ref * E;
    Point pt;
    pt.offset = p_ref * (1.0 - p_ref) * E / den;
    pt.p = p_ref + pt.offset;
    pt.one_minus_p = (1.0 - p_ref) / den;
    if (u > 0.0) pt.p = 1.0 - pt.one_minus_p;
    return pt;
}

double residual(const NoiseSpec &spec, double eta, double beta, double C, double p_ref, double u) {
    const Point pt = from_u(p_ref, u);
    return beta * u + eta * C * signal_gain(spec, pt.p);
}

}  // namespace

double KlConfig::logit_ref() const { return logit_of(p_ref); }

void KlConfig::validate(std::size_t K, std::size_t M) const {
    if (!(beta >= 0.0)) throw std::invalid_argument("KlConfig: beta must be >= 0");
    if (!(p_ref > 0.0 && p_ref < 1.0)) throw std::invalid_argument("KlConfig: p_ref must be interior");
    if (mode == KlMode::full_reverse) {
        if (y_ref.size() != K || z_ref.size() != M) throw std::invalid_argument("KlConfig: reference sizes");
        for (double v : y_ref)
            if (!(v > 0.0)) throw std::domain_error("KlConfig: y_ref must be strictly positive");
        for (double v : z_ref)
            if (!(v > 0.0)) throw std::domain_error("KlConfig: z_ref must be strictly positive");
    }
}

BlockDrift kl_drift(const BlockState &s, const KlConfig &cfg) {
    cfg.validate(s.K(), s.M());
    BlockDrift d;
    d.dy.assign(s.K(), 0.0);
    d.dz.assign(s.M(), 0.0);
    if (cfg.beta == 0.0 || s.p <= 0.0 || s.p >= 1.0) return d;
    double gap = logit_of(s.p) - cfg.logit_ref();
    if (cfg.mode == KlMode::full_reverse) {
        gap += -block_kl(s.y.values(), cfg.y_ref) + block_kl(s.z.values(), cfg.z_ref);
        d.dy = kl_pull(s.y.values(), cfg.y_ref, cfg.beta);
        d.dz = kl_pull(s.z.values(), cfg.z_ref, cfg.beta);
    }
    d.dp = -cfg.beta * s.p * (1.0 - s.p) * gap;
    return d;
}

BlockDrift regularized_drift(const BlockState &s, const NoiseSpec &spec, double eta, const KlConfig &cfg) {
    BlockDrift a = coupled_drift(s, spec, eta);
    const BlockDrift b = kl_drift(s, cfg);
    for (std::size_t i = 0; i < a.dy.size(); ++i) a.dy[i] += b.dy[i];
    for (std::size_t i = 0; i < a.dz.size(); ++i) a.dz[i] += b.dz[i];
    a.dp += b.dp;
    return a;
}

Trajectory integrate_regularized(const BlockState &initial, const NoiseSpec &spec, const KlConfig &kl,
                                 const OdeConfig &cfg) {
    kl.validate(initial.K(), initial.M());
    return integrate_flow(
        initial, [&](const BlockState &s) { return regularized_drift(s, spec, cfg.eta, kl); }, spec, cfg);
}

FixedPoint solve_fixed_point(const NoiseSpec &spec, double eta, const KlConfig &cfg, double s2, double t2) {
    if (!(cfg.beta > 0.0)) throw std::domain_error("interior_fixed_point: beta = 0 has no interior fixed point");
    if (!(cfg.p_ref > 0.0 && cfg.p_ref < 1.0)) throw std::invalid_argument("interior_fixed_point: p_ref");
    const double C = s2 + t2;
    double lo = -40.0, hi = 40.0;
    const double rlo = residual(spec, eta, cfg.beta, C, cfg.p_ref, lo);
    const double rhi = residual(spec, eta, cfg.beta, C, cfg.p_ref, hi);
    if (!(rlo < 0.0 && rhi > 0.0)) throw std::runtime_error("interior_fixed_point: no sign change in bracket");
    FixedPoint fp;
    if (spec.J() == 0.0) {
        lo = hi = 0.0;
    }
    while (true) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        ++fp.iterations;
        const double r = residual(spec, eta, cfg.beta, C, cfg.p_ref, mid);
        if (r == 0.0) {
            lo = hi = mid;
            break;
        }
        (r < 0.0 ? lo : hi) = mid;
    }
    fp.u = std::abs(residual(spec, eta, cfg.beta, C, cfg.p_ref, lo)) <=
                   std::abs(residual(spec, eta, cfg.beta, C, cfg.p_ref, hi))
               ? lo
               : hi;
    const Point pt = from_u(cfg.p_ref, fp.u);
    fp.p_star = pt.p;
    fp.offset = pt.offset;
    return fp;
}

double interior_fixed_point(const NoiseSpec &spec, double eta, const KlConfig &cfg, double s2, double t2) {
    return solve_fixed_point(spec, eta, cfg, s2, t2).p_star;
}

double fixed_point_derivative(double p, const NoiseSpec &spec, double eta, const KlConfig &cfg, double s2,
                              double t2) {
    const double C = s2 + t2;
    const double w = p * (1.0 - p);
    const double u = logit_of(p) - cfg.logit_ref();
    const double R = cfg.beta * u + eta * C * signal_gain(spec, p);
    double dgain = 0.0;
    const double sig = reward_sigma(spec, p);
    if (sig > 0.0 && spec.J() != 0.0) {
        const double J = spec.J();
        const double q = mean_reward(spec, p);
        dgain = J * ((1.0 - 2.0 * p) / sig + w * J * (1.0 - 2.0 * q) / (2.0 * sig * sig * sig));
    }
    // pdot = -w R(u(p)), du/dp = 1/w
    return -(1.0 - 2.0 * p) * R - (cfg.beta + eta * C * dgain * w);
}

int fixed_point_stability(double p_star, const NoiseSpec &spec, double eta, const KlConfig &cfg, double s2,
                          double t2) {
    const double d = fixed_point_derivative(p_star, spec, eta, cfg, s2, t2);
    return (d > 0.0) - (d < 0.0);
}

double strong_kl_prediction(const NoiseSpec &spec, double eta, const KlConfig &cfg, double s2, double t2) {
    const double pr = cfg.p_ref;
    const double sig = reward_sigma(spec, pr);
    const double w = pr * (1.0 - pr);
    return pr - (eta * spec.J() / cfg.beta) * w * w / sig * (s2 + t2);
}

double weak_kl_prediction(const NoiseSpec &spec, double eta, const KlConfig &cfg, double s2, double t2) {
    const double J = spec.J();
    const double nan = std::numeric_limits<double>::quiet_NaN();
    if (J == 0.0) return cfg.p_ref;
    const double sig = reward_sigma(spec, J < 0.0 ? 1.0 : 0.0);
    if (sig == 0.0) return nan;
    const double c = eta * std::abs(J) * (s2 + t2) / sig;
    if (!(c > cfg.beta)) return nan;
    const double edge = (cfg.beta / c) * std::log(c / cfg.beta);
    return J < 0.0 ? 1.0 - edge : edge;
}

}  // namespace nrl
